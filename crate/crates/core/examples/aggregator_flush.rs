//! Ten seconds of one test vehicle: sensor groups sampled at their own
//! periods, V2X messages heard on the road, driver ratings, all flushed to
//! `.ksb` files.

use std::error::Error;

use situfuse::aggregators::{Dda, FileTransport, Tdac, TransmitSchedule, V2xMessage, Vda};
use situfuse::geo::{CourseDeg, GeoPosition};
use situfuse::messages::{CamExtract, DriverStateSample, ObjectClassification, SensorGroup, StationId, VutSensorExtract};
use situfuse::wire::{decode_records, read_ksb};

fn main() -> Result<(), Box<dyn Error>> {
    let vut = StationId(100);
    let dir = std::env::temp_dir().join("situfuse-aggregator-example");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir)?;
    let mut vehicle_link = FileTransport::new(dir.join("vda.ksb"));
    let mut v2x_link = FileTransport::new(dir.join("tdac.ksb"));
    let mut driver_link = FileTransport::new(dir.join("dda.ksb"));

    // lateral dynamics every 100 ms, wiper state every 5 s
    let schedule = TransmitSchedule::new([(SensorGroup::Dynamics, 100), (SensorGroup::Rain, 5000)])?;
    let mut vda = Vda::new(vut, schedule);
    let mut tdac = Tdac::new(vut);
    let mut dda = Dda::new(vut);

    let t0 = 1_700_000_000_000u64;
    for step in 0..1000u64 {
        let now = t0 + step * 10;
        let gnss = GeoPosition {
            lat: 49.2339 + 1e-7 * step as f64,
            lon: 6.9826,
        };
        let sensors = VutSensorExtract {
            timestamp: now,
            gnss,
            gnss_course: CourseDeg::wrapped(0.0),
            speed: 11.0,
            accel_lateral: 0.3 * (step as f64 / 50.0).sin(),
            rain_intensity: 2,
            wiper_active: true,
            ..Default::default()
        };
        vda.tick(now, &sensors);
        if step % 10 == 0 {
            tdac.ingest(V2xMessage::Cam(CamExtract {
                originator: StationId(201),
                generation_time: now,
                position: GeoPosition { lat: gnss.lat + 0.0003, lon: gnss.lon },
                speed: 9.0,
                course: CourseDeg::wrapped(180.0),
                classification: ObjectClassification::PassengerCar,
            }))?;
        }
        if step % 300 == 0 {
            let rating = DriverStateSample {
                timestamp: now,
                valence: 2,
                arousal: 4,
                heart_rate_bpm: Some(72),
                self_reported: true,
            };
            dda.record(rating, gnss);
        }
        if vda.timer.due(now) {
            println!("vda flush at +{} ms: {:?}", now - t0, vda.flush(now, &mut vehicle_link));
        }
        if tdac.timer.due(now) {
            tdac.flush(now, &mut v2x_link);
        }
    }
    let end = t0 + 10_000;
    println!("final vda flush: {:?}", vda.flush(end, &mut vehicle_link));
    println!("tdac flush: {:?}", tdac.flush(end, &mut v2x_link));
    println!("dda flush: {:?}", dda.flush(end, &mut driver_link));

    for name in ["vda.ksb", "tdac.ksb", "dda.ksb"] {
        let batches = read_ksb(&dir.join(name))?;
        let records: usize = batches.iter().map(|b| decode_records(b).map(|r| r.len())).sum::<Result<_, _>>()?;
        println!("{name}: {} batches, {records} records", batches.len());
    }
    Ok(())
}
