//! The reference intersection situation: extracts go through the wire codec
//! into the store, get fused around the test vehicle and evaluated.

use std::error::Error;

use situfuse::aggregators::receive;
use situfuse::fixtures::{table2, table2_records, TABLE2_VUT};
use situfuse::fusion::{fuse_situation, FusionConfig};
use situfuse::metrics::{evaluate_situation, handover_summary, to_csv, trilaterate, MetricConfig};
use situfuse::store::Store;
use situfuse::stressmap::StressMatrix;
use situfuse::wire::plan_batches;

fn main() -> Result<(), Box<dyn Error>> {
    let t = 1_700_000_000_000;
    let mut store = Store::open_in_memory()?;
    let mut records = table2_records(t);
    records.sort_by_key(|r| r.time);
    for batch in plan_batches(&records, TABLE2_VUT)? {
        store.insert_raw(&receive(&batch)?)?;
    }

    let situation = fuse_situation(TABLE2_VUT, t, &mut store, &FusionConfig::default())?;
    println!("situation {} with {} objects", situation.situation_id, situation.objects.len());

    let cfg = MetricConfig::default();
    let rows = evaluate_situation(&situation, &cfg)?;
    print!("{}", to_csv(&rows));
    println!(
        "{}",
        handover_summary(&rows, situation.driver.as_ref(), &situation.hazards, &cfg, &StressMatrix::default())
    );

    let ranges: Vec<_> = table2().into_iter().map(|r| (r.position, r.distance_m)).collect();
    let fit = trilaterate(&ranges)?;
    println!(
        "VUT position from the distance column: {:.7}, {:.7} (rms {:.3} m over {} ranges)",
        fit.position.lat,
        fit.position.lon,
        fit.rms,
        fit.residuals.len()
    );
    Ok(())
}
