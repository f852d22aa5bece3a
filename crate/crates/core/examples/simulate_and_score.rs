//! Generates noisy intersection scenarios, fuses them and scores the result
//! against ground truth.

use std::error::Error;

use situfuse::aggregators::receive;
use situfuse::fusion::{build_situation, FusionConfig};
use situfuse::simgen::{generate, score, ScenarioConfig};
use situfuse::store::MemoryRaw;

fn main() -> Result<(), Box<dyn Error>> {
    let fusion = FusionConfig::default();
    println!("seed  fused  truth  precision  recall  duplicates");
    for seed in 0..8 {
        let cfg = ScenarioConfig {
            seed,
            vehicles: 30,
            cooperative_fraction: 2.0 / 3.0,
            pedestrians: 6,
            ..ScenarioConfig::default()
        };
        let scenario = generate(&cfg)?;
        let raw = MemoryRaw {
            records: scenario.batches.iter().map(receive).collect::<Result<Vec<_>, _>>()?.concat(),
            topologies: vec![scenario.map.clone()],
        };
        let t = cfg.start_ms + cfg.duration_ms() / 2;
        let situation = build_situation(cfg.vut, t, &raw, &fusion)?;
        let s = score(&scenario.truth, &situation, 3.0);
        println!(
            "{seed:>4}  {:>5}  {:>5}  {:>9.3}  {:>6.3}  {:>10.3}",
            s.fused, s.truths, s.precision, s.recall, s.duplicate_rate
        );
    }
    Ok(())
}
