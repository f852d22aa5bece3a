//! Driver ratings collected along a few drives, aggregated in a quad tree
//! and written as colored GeoJSON cells.

use std::error::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use situfuse::geo::GeoPosition;
use situfuse::stressmap::{build, export_geojson, StressMatrix, StressSample, TreeConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut samples = Vec::new();
    for drive in 0..20 {
        let mut p = GeoPosition { lat: 49.225, lon: 6.97 };
        for k in 0..300u64 {
            p.lat += rng.random_range(0.0..0.0002);
            p.lon += rng.random_range(0.0..0.0002);
            // calmer at the start of the route, tense near the busy junction
            let busy = (p.lat - 49.24).abs() < 0.004 && (p.lon - 6.985).abs() < 0.004;
            let (v, a) = if busy { (4, 2) } else { (2, 4) };
            samples.push(StressSample {
                position: p,
                timestamp: drive * 1_000_000 + k * 1000,
                valence: (v + rng.random_range(-1..=1)).clamp(1, 5) as u8,
                arousal: (a + rng.random_range(-1..=1)).clamp(1, 5) as u8,
            });
        }
    }
    let tree = build(&samples, TreeConfig { capacity: 32, max_depth: 8 })?;
    let matrix = StressMatrix::default();
    let cells = tree.cells(5, &matrix);
    let neutral = cells.iter().filter(|c| c.color.color == matrix.neutral()).count();
    println!("{} samples, {} nodes, {} cells with at least 5 samples ({neutral} neutral)", tree.len(), tree.node_count(), cells.len());
    let path = std::env::temp_dir().join("stress_map.geojson");
    std::fs::write(&path, export_geojson(&cells))?;
    println!("wrote {}", path.display());
    Ok(())
}
