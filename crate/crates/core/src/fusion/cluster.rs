//! Course-binned duplicate detection.
//!
//! Observations are binned by course with a bin width that shrinks as speed
//! grows. Two bins are only compared when the angular gap between their
//! arcs is within the course threshold, so no similar pair is ever skipped
//! and the grouping equals the all-pairs connected components.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geo::{angular_difference, haversine_distance};
use crate::messages::{ObjectClassification, TrafficObjectObservation};

/// Slack for floating point noise when deciding whether two bins may hold a similar pair.
const ARC_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassificationRule {
    /// Classes must be equal unless either one is unknown.
    #[default]
    MatchOrUnknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityThresholds {
    pub max_position_m: f64,
    pub max_course_deg: f64,
    pub max_speed_ms: f64,
    pub classification_rule: ClassificationRule,
}

impl Default for SimilarityThresholds {
    fn default() -> Self {
        SimilarityThresholds {
            max_position_m: 2.5,
            max_course_deg: 15.0,
            max_speed_ms: 1.5,
            classification_rule: ClassificationRule::MatchOrUnknown,
        }
    }
}

impl SimilarityThresholds {
    pub fn is_valid(&self) -> bool {
        [self.max_position_m, self.max_course_deg, self.max_speed_ms]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CourseClusterConfig {
    /// Below this speed the course is unreliable and the object joins the slow cluster.
    pub speed_floor_ms: f64,
    /// Bin width is `width_scale / speed`, clamped to the limits below.
    pub width_scale: f64,
    pub min_width_deg: f64,
    pub max_width_deg: f64,
}

impl Default for CourseClusterConfig {
    fn default() -> Self {
        CourseClusterConfig {
            speed_floor_ms: 1.5,
            width_scale: 450.0,
            min_width_deg: 10.0,
            max_width_deg: 45.0,
        }
    }
}

/// Integer divisors of 360; bin widths snap down to one of these so bins tile the circle.
const WIDTHS: [u16; 24] = [
    1, 2, 3, 4, 5, 6, 8, 9, 10, 12, 15, 18, 20, 24, 30, 36, 40, 45, 60, 72, 90, 120, 180, 360,
];

impl CourseClusterConfig {
    pub fn is_valid(&self) -> bool {
        self.speed_floor_ms >= 0.0
            && self.width_scale > 0.0
            && self.min_width_deg >= 1.0
            && self.min_width_deg <= self.max_width_deg
            && self.max_width_deg <= 360.0
    }

    /// Bin width in degrees for an object moving at `speed`; 360 for slow objects.
    pub fn width_for(&self, speed: f64) -> u16 {
        if speed < self.speed_floor_ms {
            return 360;
        }
        let w = (self.width_scale / speed).clamp(self.min_width_deg, self.max_width_deg);
        WIDTHS.iter().copied().rev().find(|&d| f64::from(d) <= w).unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CourseBin {
    /// Objects below the speed floor; compared against every bin.
    Slow,
    /// Courses in `[index * width, (index + 1) * width)`.
    Range { width: u16, index: u16 },
}

impl CourseBin {
    fn arc(self) -> Option<(f64, f64)> {
        match self {
            CourseBin::Slow => None,
            CourseBin::Range { width, index } => {
                let lo = f64::from(width) * f64::from(index);
                Some((lo, lo + f64::from(width)))
            }
        }
    }

    /// Whether some pair of courses from the two bins can be within `max_course_deg`.
    pub fn may_pair_with(self, other: CourseBin, max_course_deg: f64) -> bool {
        let (Some((a0, a1)), Some((b0, b1))) = (self.arc(), other.arc()) else {
            return true;
        };
        if a0 < b1 && b0 < a1 {
            return true;
        }
        let gap = |x: f64, y: f64| {
            let d = (x - y).abs();
            d.min(360.0 - d)
        };
        let g = gap(a1, b0).min(gap(b1, a0)).min(gap(a0, b0)).min(gap(a1, b1));
        g <= max_course_deg + ARC_EPS_DEG
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CourseCluster {
    pub bin: CourseBin,
    /// Indices into the clustered observation list, ascending.
    pub members: Vec<usize>,
}

pub fn course_bin(o: &TrafficObjectObservation, cfg: &CourseClusterConfig) -> CourseBin {
    let width = cfg.width_for(o.speed);
    if width == 360 && o.speed < cfg.speed_floor_ms {
        return CourseBin::Slow;
    }
    let bins = 360 / width;
    let index = ((o.course.value() / f64::from(width)).floor() as u16).min(bins - 1);
    CourseBin::Range { width, index }
}

/// Partitions observation indices by course bin. Clusters come out in bin order.
pub fn cluster_by_course(obs: &[TrafficObjectObservation], cfg: &CourseClusterConfig) -> Vec<CourseCluster> {
    let mut bins: BTreeMap<CourseBin, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        bins.entry(course_bin(o, cfg)).or_default().push(i);
    }
    bins.into_iter().map(|(bin, members)| CourseCluster { bin, members }).collect()
}

pub fn classes_compatible(a: ObjectClassification, b: ObjectClassification, rule: ClassificationRule) -> bool {
    match rule {
        ClassificationRule::MatchOrUnknown => {
            a == b || a == ObjectClassification::Unknown || b == ObjectClassification::Unknown
        }
    }
}

pub fn is_similar(a: &TrafficObjectObservation, b: &TrafficObjectObservation, th: &SimilarityThresholds) -> bool {
    (a.speed - b.speed).abs() <= th.max_speed_ms
        && classes_compatible(a.classification, b.classification, th.classification_rule)
        && angular_difference(a.course, b.course) <= th.max_course_deg
        && haversine_distance(a.position, b.position) <= th.max_position_m
}

/// Connected components of the similarity relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    /// Each group ascending; groups ordered by their smallest index.
    pub groups: Vec<Vec<usize>>,
    /// Number of pairwise similarity checks performed.
    pub comparisons: u64,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn groups(mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = by_root.into_values().collect();
        groups.sort_by_key(|g| g[0]);
        groups
    }
}

/// Groups duplicates, comparing only pairs from bins that can hold similar courses.
pub fn similarity_groups(
    obs: &[TrafficObjectObservation],
    th: &SimilarityThresholds,
    cfg: &CourseClusterConfig,
) -> Grouping {
    let clusters = cluster_by_course(obs, cfg);
    let mut set = DisjointSet::new(obs.len());
    let mut comparisons = 0u64;
    for (ci, a) in clusters.iter().enumerate() {
        for b in &clusters[ci..] {
            if !a.bin.may_pair_with(b.bin, th.max_course_deg) {
                continue;
            }
            let same = a.bin == b.bin;
            for (k, &i) in a.members.iter().enumerate() {
                let others = if same { &b.members[k + 1..] } else { &b.members[..] };
                for &j in others {
                    comparisons += 1;
                    if is_similar(&obs[i], &obs[j], th) {
                        set.union(i, j);
                    }
                }
            }
        }
    }
    Grouping {
        groups: set.groups(),
        comparisons,
    }
}

/// Pair count an unclustered all-pairs check needs.
pub fn brute_force_comparisons(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}
