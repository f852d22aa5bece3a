//! Driver stress aggregated over space in a quad tree, colored through a
//! 5x5 valence/arousal matrix.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::geo::GeoPosition;
use crate::messages::{DriverStateSample, TimestampMs};

#[derive(Debug, Error, PartialEq)]
pub enum StressError {
    #[error("sample at ({lat}, {lon}) is outside the tree bounds")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("scale value {0} is outside 1..=5")]
    InvalidScale(u8),
    #[error("invalid stress matrix: {0}")]
    Matrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressSample {
    pub position: GeoPosition,
    pub timestamp: TimestampMs,
    /// 1 pleasant .. 5 unpleasant
    pub valence: u8,
    /// 1 excited .. 5 calm
    pub arousal: u8,
}

impl StressSample {
    pub fn from_driver(d: &DriverStateSample, position: GeoPosition) -> Self {
        StressSample {
            position,
            timestamp: d.timestamp,
            valence: d.valence,
            arousal: d.arousal,
        }
    }
}

/// Lat/lon rectangle. Nodes own `[south, north) x [west, east)`; the root
/// additionally owns its north and east edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl Bounds {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Self {
        Bounds { south, west, north, east }
    }

    /// Smallest rectangle around the positions, or `None` if there are none.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a GeoPosition>) -> Option<Self> {
        points.into_iter().fold(None, |acc, p| {
            Some(match acc {
                None => Bounds::new(p.lat, p.lon, p.lat, p.lon),
                Some(b) => Bounds::new(b.south.min(p.lat), b.west.min(p.lon), b.north.max(p.lat), b.east.max(p.lon)),
            })
        })
    }

    pub fn contains(&self, p: GeoPosition) -> bool {
        (self.south..=self.north).contains(&p.lat) && (self.west..=self.east).contains(&p.lon)
    }

    /// Membership of a cell inside a tree rooted at `root`.
    pub fn owns(&self, p: GeoPosition, root: &Bounds) -> bool {
        let lat_ok = p.lat >= self.south && (p.lat < self.north || (self.north == root.north && p.lat <= root.north));
        let lon_ok = p.lon >= self.west && (p.lon < self.east || (self.east == root.east && p.lon <= root.east));
        lat_ok && lon_ok
    }

    fn mid(&self) -> (f64, f64) {
        (self.south + (self.north - self.south) / 2.0, self.west + (self.east - self.west) / 2.0)
    }

    /// Quadrants in Z-order: SW, SE, NW, NE.
    fn quadrants(&self) -> [Bounds; 4] {
        let (mlat, mlon) = self.mid();
        [
            Bounds::new(self.south, self.west, mlat, mlon),
            Bounds::new(self.south, mlon, mlat, self.east),
            Bounds::new(mlat, self.west, self.north, mlon),
            Bounds::new(mlat, mlon, self.north, self.east),
        ]
    }

    fn quadrant_of(&self, p: GeoPosition) -> usize {
        let (mlat, mlon) = self.mid();
        usize::from(p.lat >= mlat) * 2 + usize::from(p.lon >= mlon)
    }

    /// Closed polygon ring, counter-clockwise, as `[lon, lat]` pairs.
    pub fn ring(&self) -> [[f64; 2]; 5] {
        [
            [self.west, self.south],
            [self.east, self.south],
            [self.east, self.north],
            [self.west, self.north],
            [self.west, self.south],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub capacity: usize,
    pub max_depth: u32,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            capacity: 16,
            max_depth: 12,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Bounds,
    depth: u32,
    count: u64,
    sum_valence: u64,
    sum_arousal: u64,
    /// Index of the first of four consecutive children.
    children: Option<usize>,
    /// Leaf samples, kept only for redistribution on split.
    samples: Vec<(GeoPosition, u8, u8)>,
}

impl Node {
    fn leaf(bounds: Bounds, depth: u32) -> Self {
        Node {
            bounds,
            depth,
            count: 0,
            sum_valence: 0,
            sum_arousal: 0,
            children: None,
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StressQuadTree {
    nodes: Vec<Node>,
    cfg: TreeConfig,
}

/// One leaf of the tree with its mean stress.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressCell {
    pub bounds: Bounds,
    pub count: u64,
    pub mean_valence: f64,
    pub mean_arousal: f64,
    pub color: CellColor,
}

impl StressQuadTree {
    pub fn new(bounds: Bounds, cfg: TreeConfig) -> Self {
        StressQuadTree {
            nodes: vec![Node::leaf(bounds, 0)],
            cfg,
        }
    }

    pub fn bounds(&self) -> Bounds {
        self.nodes[0].bounds
    }

    pub fn len(&self) -> u64 {
        self.nodes[0].count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn insert(&mut self, s: &StressSample) -> Result<(), StressError> {
        for v in [s.valence, s.arousal] {
            if !(1..=5).contains(&v) {
                return Err(StressError::InvalidScale(v));
            }
        }
        if !self.bounds().contains(s.position) {
            return Err(StressError::OutOfBounds {
                lat: s.position.lat,
                lon: s.position.lon,
            });
        }
        let mut at = 0;
        loop {
            let node = &mut self.nodes[at];
            node.count += 1;
            node.sum_valence += u64::from(s.valence);
            node.sum_arousal += u64::from(s.arousal);
            match node.children {
                Some(first) => at = first + node.bounds.quadrant_of(s.position),
                None => {
                    node.samples.push((s.position, s.valence, s.arousal));
                    if node.samples.len() > self.cfg.capacity && node.depth < self.cfg.max_depth {
                        self.split(at);
                    }
                    return Ok(());
                }
            }
        }
    }

    fn split(&mut self, at: usize) {
        let first = self.nodes.len();
        let depth = self.nodes[at].depth + 1;
        let bounds = self.nodes[at].bounds;
        self.nodes.extend(bounds.quadrants().map(|b| Node::leaf(b, depth)));
        let samples = std::mem::take(&mut self.nodes[at].samples);
        self.nodes[at].children = Some(first);
        for (p, v, a) in samples {
            let child = first + bounds.quadrant_of(p);
            let n = &mut self.nodes[child];
            n.count += 1;
            n.sum_valence += u64::from(v);
            n.sum_arousal += u64::from(a);
            n.samples.push((p, v, a));
        }
        for child in first..first + 4 {
            if self.nodes[child].samples.len() > self.cfg.capacity && depth < self.cfg.max_depth {
                self.split(child);
            }
        }
    }

    /// Leaves holding at least `min_count` samples, in Z-order.
    pub fn cells(&self, min_count: u64, matrix: &StressMatrix) -> Vec<StressCell> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            let n = &self.nodes[i];
            match n.children {
                Some(first) => stack.extend((first..first + 4).rev()),
                None if n.count >= min_count.max(1) => {
                    let mean_valence = n.sum_valence as f64 / n.count as f64;
                    let mean_arousal = n.sum_arousal as f64 / n.count as f64;
                    out.push(StressCell {
                        bounds: n.bounds,
                        count: n.count,
                        mean_valence,
                        mean_arousal,
                        color: matrix.color_for(mean_valence, mean_arousal),
                    });
                }
                None => {}
            }
        }
        out
    }

    /// Checks the structural invariants; returns the first violation found.
    pub fn audit(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            match n.children {
                Some(first) => {
                    let kids = &self.nodes[first..first + 4];
                    let sum = |f: fn(&Node) -> u64| kids.iter().map(f).sum::<u64>();
                    if sum(|k| k.count) != n.count
                        || sum(|k| k.sum_valence) != n.sum_valence
                        || sum(|k| k.sum_arousal) != n.sum_arousal
                    {
                        return Err(format!("node {i}: children do not add up"));
                    }
                    if !n.samples.is_empty() {
                        return Err(format!("node {i}: inner node holds samples"));
                    }
                }
                None => {
                    if n.samples.len() as u64 != n.count {
                        return Err(format!("node {i}: leaf count mismatch"));
                    }
                    if n.samples.len() > self.cfg.capacity && n.depth < self.cfg.max_depth {
                        return Err(format!("node {i}: leaf over capacity"));
                    }
                    if let Some((p, _, _)) = n.samples.iter().find(|(p, _, _)| !n.bounds.owns(*p, &self.bounds())) {
                        return Err(format!("node {i}: sample {p:?} outside bounds"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row/column of the color matrix and the color found there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellColor {
    pub valence: u8,
    pub arousal: u8,
    pub color: String,
}

/// Rounds a scale mean to 1..=5, halves away from the neutral 3.
pub fn round_scale(x: f64) -> u8 {
    let d = x - 3.0;
    (3.0 + d.signum() * d.abs().round()).clamp(1.0, 5.0) as u8
}

const GREEN: [u8; 3] = [0x1a, 0x98, 0x50];
const GRAY: [u8; 3] = [0xbd, 0xbd, 0xbd];
const RED: [u8; 3] = [0xd7, 0x30, 0x27];

fn blend(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    std::array::from_fn(|i| (f64::from(a[i]) + (f64::from(b[i]) - f64::from(a[i])) * t).round() as u8)
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit())
}

/// Colors indexed by `[valence - 1][arousal - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StressMatrix {
    pub matrix: Vec<Vec<String>>,
}

impl Default for StressMatrix {
    /// Green for pleasant and calm (1, 5), gray for neutral (3, 3), red for
    /// unpleasant and excited (5, 1), linear in between.
    fn default() -> Self {
        let matrix = (1..=5)
            .map(|v| {
                (1..=5)
                    .map(|a| {
                        let stress = f64::from((v - 1) + (5 - a)) / 8.0;
                        hex(if stress <= 0.5 {
                            blend(GREEN, GRAY, stress * 2.0)
                        } else {
                            blend(GRAY, RED, stress * 2.0 - 1.0)
                        })
                    })
                    .collect()
            })
            .collect();
        StressMatrix { matrix }
    }
}

impl StressMatrix {
    pub fn from_toml(text: &str) -> Result<Self, StressError> {
        let m: StressMatrix = toml::from_str(text).map_err(|e| StressError::Matrix(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("matrix serializes")
    }

    pub fn validate(&self) -> Result<(), StressError> {
        if self.matrix.len() != 5 || self.matrix.iter().any(|r| r.len() != 5) {
            return Err(StressError::Matrix("expected 5 rows of 5 colors".into()));
        }
        if let Some(bad) = self.matrix.iter().flatten().find(|c| !is_hex_color(c)) {
            return Err(StressError::Matrix(format!("not a #rrggbb color: {bad}")));
        }
        Ok(())
    }

    pub fn color_for(&self, mean_valence: f64, mean_arousal: f64) -> CellColor {
        let (v, a) = (round_scale(mean_valence), round_scale(mean_arousal));
        CellColor {
            valence: v,
            arousal: a,
            color: self.matrix[usize::from(v - 1)][usize::from(a - 1)].clone(),
        }
    }

    pub fn neutral(&self) -> &str {
        &self.matrix[2][2]
    }
}

/// Builds a tree around all samples.
pub fn build(samples: &[StressSample], cfg: TreeConfig) -> Result<StressQuadTree, StressError> {
    let bounds = Bounds::enclosing(samples.iter().map(|s| &s.position)).unwrap_or(Bounds::new(0.0, 0.0, 0.0, 0.0));
    let mut tree = StressQuadTree::new(bounds, cfg);
    for s in samples {
        tree.insert(s)?;
    }
    Ok(tree)
}

/// FeatureCollection with one rectangle per cell, in the given order.
pub fn export_geojson(cells: &[StressCell]) -> String {
    let features: Vec<_> = cells
        .iter()
        .map(|c| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [c.bounds.ring()] },
                "properties": {
                    "count": c.count,
                    "mean_valence": c.mean_valence,
                    "mean_arousal": c.mean_arousal,
                    "valence_cell": c.color.valence,
                    "arousal_cell": c.color.arousal,
                    "color": c.color.color,
                },
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({ "type": "FeatureCollection", "features": features })).expect("json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(lat: f64, lon: f64, v: u8, a: u8) -> StressSample {
        StressSample {
            position: GeoPosition { lat, lon },
            timestamp: 0,
            valence: v,
            arousal: a,
        }
    }

    fn unit() -> Bounds {
        Bounds::new(49.0, 7.0, 49.01, 7.01)
    }

    fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<StressSample> {
        (0..n)
            .map(|_| {
                sample(
                    rng.random_range(49.0..=49.01),
                    rng.random_range(7.0..=7.01),
                    rng.random_range(1..=5),
                    rng.random_range(1..=5),
                )
            })
            .collect()
    }

    #[test]
    fn rounding_goes_away_from_neutral() {
        assert_eq!(round_scale(3.0), 3);
        assert_eq!(round_scale(2.5), 2);
        assert_eq!(round_scale(3.5), 4);
        assert_eq!(round_scale(3.49), 3);
        assert_eq!(round_scale(2.51), 3);
        assert_eq!(round_scale(1.0), 1);
        assert_eq!(round_scale(1.5), 1);
        assert_eq!(round_scale(4.5), 5);
        assert_eq!(round_scale(5.0), 5);
    }

    #[test]
    fn default_matrix() {
        let m = StressMatrix::default();
        m.validate().unwrap();
        let neutral = m.color_for(3.0, 3.0);
        assert_eq!((neutral.valence, neutral.arousal), (3, 3));
        assert_eq!(neutral.color, hex(GRAY));
        assert_eq!(m.color_for(1.0, 5.0).color, hex(GREEN));
        assert_eq!(m.color_for(5.0, 1.0).color, hex(RED));
        let corner = m.color_for(1.0, 1.0);
        assert_eq!((corner.valence, corner.arousal), (1, 1));
        let reported = m.color_for(2.0, 3.0);
        assert_eq!((reported.valence, reported.arousal), (2, 3));
        assert_ne!(reported.color, neutral.color);
    }

    #[test]
    fn color_for_is_total() {
        let m = StressMatrix::default();
        for i in 0..=400 {
            for j in 0..=40 {
                let c = m.color_for(1.0 + f64::from(i) / 100.0, 1.0 + f64::from(j) / 10.0);
                assert!((1..=5).contains(&c.valence) && (1..=5).contains(&c.arousal));
            }
        }
    }

    #[test]
    fn matrix_toml_round_trip() {
        let m = StressMatrix::default();
        assert_eq!(StressMatrix::from_toml(&m.to_toml()).unwrap(), m);
        assert!(StressMatrix::from_toml("matrix = [[\"#000000\"]]").is_err());
        let mut bad = m.clone();
        bad.matrix[1][1] = "red".into();
        assert!(StressMatrix::from_toml(&bad.to_toml()).is_err());
    }

    #[test]
    fn single_sample_stays_in_root() {
        let mut t = StressQuadTree::new(unit(), TreeConfig::default());
        t.insert(&sample(49.005, 7.005, 2, 3)).unwrap();
        assert_eq!(t.node_count(), 1);
        let cells = t.cells(1, &StressMatrix::default());
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].count, 1);
        assert_eq!((cells[0].mean_valence, cells[0].mean_arousal), (2.0, 3.0));
    }

    #[test]
    fn rejects_bad_samples() {
        let mut t = StressQuadTree::new(unit(), TreeConfig::default());
        assert!(matches!(t.insert(&sample(48.0, 7.0, 3, 3)), Err(StressError::OutOfBounds { .. })));
        assert_eq!(t.insert(&sample(49.0, 7.0, 0, 3)), Err(StressError::InvalidScale(0)));
        assert_eq!(t.insert(&sample(49.0, 7.0, 3, 6)), Err(StressError::InvalidScale(6)));
        assert!(t.is_empty());
        t.insert(&sample(49.01, 7.01, 3, 3)).unwrap();
    }

    #[test]
    fn depth_cap_stops_splitting() {
        let cfg = TreeConfig {
            capacity: 4,
            max_depth: 3,
        };
        let mut t = StressQuadTree::new(unit(), cfg);
        for _ in 0..5 {
            t.insert(&sample(49.001, 7.001, 1, 1)).unwrap();
        }
        t.audit().unwrap();
        assert_eq!(t.node_count(), 1 + 4 * 3);
        let cells = t.cells(1, &StressMatrix::default());
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].count, 5);
        let mut flat = StressQuadTree::new(unit(), TreeConfig { capacity: 16, max_depth: 0 });
        for _ in 0..17 {
            flat.insert(&sample(49.001, 7.001, 1, 1)).unwrap();
        }
        assert_eq!(flat.node_count(), 1);
        assert_eq!(flat.len(), 17);
    }

    #[test]
    fn uniform_samples_give_uniform_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = StressQuadTree::new(unit(), TreeConfig::default());
        for mut s in random_samples(&mut rng, 2000) {
            s.valence = 2;
            s.arousal = 3;
            t.insert(&s).unwrap();
        }
        let cells = t.cells(1, &StressMatrix::default());
        assert!(cells.len() > 1);
        assert!(cells.iter().all(|c| c.mean_valence == 2.0 && c.mean_arousal == 3.0));
        assert!(StressQuadTree::new(unit(), TreeConfig::default()).cells(1, &StressMatrix::default()).is_empty());
    }

    #[test]
    fn cells_match_flat_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = random_samples(&mut rng, 10_000);
        let tree = build(&samples, TreeConfig::default()).unwrap();
        tree.audit().unwrap();
        let root = tree.bounds();
        let cells = tree.cells(1, &StressMatrix::default());
        let mut total = 0;
        for c in &cells {
            let inside: Vec<_> = samples.iter().filter(|s| c.bounds.owns(s.position, &root)).collect();
            let n = inside.len() as u64;
            let v: u64 = inside.iter().map(|s| u64::from(s.valence)).sum();
            let a: u64 = inside.iter().map(|s| u64::from(s.arousal)).sum();
            assert_eq!(c.count, n);
            assert_eq!(c.mean_valence, v as f64 / n as f64);
            assert_eq!(c.mean_arousal, a as f64 / n as f64);
            total += n;
        }
        assert_eq!(total, 10_000);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut samples = random_samples(&mut rng, 3000);
        let m = StressMatrix::default();
        let reference = build(&samples, TreeConfig::default()).unwrap().cells(1, &m);
        for _ in 0..10 {
            samples.shuffle(&mut rng);
            assert_eq!(build(&samples, TreeConfig::default()).unwrap().cells(1, &m), reference);
        }
    }

    #[test]
    fn min_count_filters_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tree = build(&random_samples(&mut rng, 500), TreeConfig::default()).unwrap();
        let m = StressMatrix::default();
        let all = tree.cells(1, &m);
        let big = tree.cells(10, &m);
        assert!(big.len() < all.len());
        assert!(big.iter().all(|c| c.count >= 10));
    }

    #[test]
    fn geojson_shape() {
        let empty: geojson::GeoJson = export_geojson(&[]).parse().unwrap();
        match empty {
            geojson::GeoJson::FeatureCollection(fc) => assert!(fc.features.is_empty()),
            other => panic!("{other:?}"),
        }
        let mut t = StressQuadTree::new(unit(), TreeConfig::default());
        t.insert(&sample(49.005, 7.005, 2, 3)).unwrap();
        let text = export_geojson(&t.cells(1, &StressMatrix::default()));
        let fc = match text.parse::<geojson::GeoJson>().unwrap() {
            geojson::GeoJson::FeatureCollection(fc) => fc,
            other => panic!("{other:?}"),
        };
        assert_eq!(fc.features.len(), 1);
        let f = &fc.features[0];
        match &f.geometry.as_ref().unwrap().value {
            geojson::GeometryValue::Polygon { coordinates: rings } => {
                assert_eq!(rings.len(), 1);
                assert_eq!(rings[0].len(), 5);
                assert_eq!(rings[0][0], rings[0][4]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(f.property("count").unwrap(), 1);
        assert!(f.property("color").unwrap().is_string());
    }
}
