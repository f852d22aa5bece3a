//! Packs a stream of CAM extracts into batch envelopes, writes them as a
//! `.ksb` file and reads them back.

use std::error::Error;

use situfuse::geo::{haversine_distance, CourseDeg, GeoPosition};
use situfuse::messages::{CamExtract, ObjectClassification, Record, StationId};
use situfuse::wire::{decode_records, encode_batch, naive_encoded_len, plan_batches, read_ksb, write_ksb};

fn main() -> Result<(), Box<dyn Error>> {
    let start = GeoPosition::new(49.2339, 6.9826)?;
    let records: Vec<Record> = (0..120u64)
        .map(|i| {
            Record::cam(CamExtract {
                originator: StationId(200 + (i % 4) as u32),
                generation_time: 1_700_000_000_000 + i * 100,
                position: GeoPosition {
                    lat: start.lat + 2e-6 * i as f64,
                    lon: start.lon - 1e-6 * i as f64,
                },
                speed: 8.5,
                course: CourseDeg::wrapped(335.0),
                classification: ObjectClassification::PassengerCar,
            })
        })
        .collect();

    let batches = plan_batches(&records, StationId(1000))?;
    for b in &batches {
        let packed = encode_batch(b)?.len();
        let naive = naive_encoded_len(b);
        println!(
            "envelope: {} records, {packed} bytes ({:.2} of {naive} bytes with absolute fields)",
            b.records.len(),
            packed as f64 / naive as f64
        );
    }

    let dir = std::env::temp_dir().join("situfuse-wire-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("station_1000.ksb");
    write_ksb(&path, &batches)?;
    let back = read_ksb(&path)?;
    assert_eq!(back, batches);
    let decoded: Vec<Record> = back.iter().map(decode_records).collect::<Result<Vec<_>, _>>()?.concat();
    let worst = decoded
        .iter()
        .zip(&records)
        .map(|(a, b)| haversine_distance(a.position, b.position))
        .fold(0.0, f64::max);
    assert_eq!(decoded.len(), records.len());
    println!("largest position change after quantisation: {worst:.3} m");
    println!("{} records read back from {}", decoded.len(), path.display());
    Ok(())
}
