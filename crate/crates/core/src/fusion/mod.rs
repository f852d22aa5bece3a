//! Situation fusion for one vehicle under test at one point in time.
//!
//! The raw data around the VUT is queried, turned into observations at the
//! requested time, grouped into duplicates and merged. Topology, signal
//! phases, VUT sensors, driver state, hazards and weather are linked as-is.

mod cluster;
mod topology;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregators::{backend_dedup, environment_for, ReceivedRecord};
use crate::geo::{course_to_unit_vector, from_local_enu, haversine_distance, project, CourseDeg, GeoPosition, LocalPoint};
use crate::messages::{
    observation_from_cam, observation_from_detection, DriverStateSample, EnvironmentSample, HazardEvent,
    ObjectClassification, ObservationSource, RecordBody, RecordKind, SensorGroup, StationId, TimestampMs,
    TrafficObjectObservation, VutReading, VutSensorExtract,
};
use crate::store::{RawQuery, RawSource, Store, StoreError};

pub use cluster::{
    brute_force_comparisons, classes_compatible, cluster_by_course, course_bin, is_similar, similarity_groups,
    ClassificationRule, CourseBin, CourseCluster, CourseClusterConfig, Grouping, SimilarityThresholds,
};
pub use topology::{join_topology, lane_distance, link_lanes, PhasedLane, SituationTopology};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("NoVutFix: no GNSS fix of VUT {vut} within the tolerance around {t}")]
    NoVutFix { vut: StationId, t: TimestampMs },
    #[error("cannot merge an empty group")]
    EmptyGroup,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub thresholds: SimilarityThresholds,
    pub cluster: CourseClusterConfig,
    /// Half width of the query time window.
    pub window_ms: u64,
    pub radius_m: f64,
    /// How far from the requested time a VUT GNSS fix may be.
    pub vut_fix_tolerance_ms: u64,
    /// How far back driver state and slow sensor groups are looked up.
    pub lookback_ms: u64,
    pub max_lateral_m: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            thresholds: SimilarityThresholds::default(),
            cluster: CourseClusterConfig::default(),
            window_ms: 500,
            radius_m: 300.0,
            vut_fix_tolerance_ms: 2000,
            lookback_ms: 60_000,
            max_lateral_m: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source: ObservationSource,
    pub reporter: StationId,
    pub object_id: u32,
}

impl Provenance {
    pub fn of(o: &TrafficObjectObservation) -> Self {
        Provenance {
            source: o.source,
            reporter: o.reporter,
            object_id: o.object_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedObject {
    /// Object id of the representative observation (`provenance[0]`).
    pub fused_id: u32,
    pub classification: ObjectClassification,
    pub position: GeoPosition,
    pub speed: f64,
    pub course: CourseDeg,
    /// Representative first, then the other members.
    pub provenance: Vec<Provenance>,
    pub lane_id: Option<u32>,
}

impl FusedObject {
    /// Whether the vehicle's own sensors contributed to this object.
    pub fn is_vut(&self, vut: StationId) -> bool {
        self.provenance
            .iter()
            .any(|p| p.source == ObservationSource::VutLocalSensor && p.reporter == vut)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationRecord {
    pub situation_id: u64,
    pub center: GeoPosition,
    pub radius_m: f64,
    pub timestamp: TimestampMs,
    pub vut: StationId,
    pub objects: Vec<FusedObject>,
    pub topology: Option<SituationTopology>,
    pub vut_sensor: Option<VutSensorExtract>,
    pub driver: Option<DriverStateSample>,
    pub hazards: Vec<HazardEvent>,
    pub environment: Option<EnvironmentSample>,
}

impl SituationRecord {
    pub fn vut_object(&self) -> Option<&FusedObject> {
        self.objects.iter().find(|o| o.is_vut(self.vut))
    }
}

/// GNSS fix of the VUT with the speed reported closest to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VutFix {
    pub time: TimestampMs,
    pub position: GeoPosition,
    pub course: CourseDeg,
    pub speed: f64,
}

impl VutFix {
    pub fn observation(&self, vut: StationId) -> TrafficObjectObservation {
        TrafficObjectObservation {
            object_id: vut.0,
            classification: ObjectClassification::PassengerCar,
            position: self.position,
            speed: self.speed,
            course: self.course,
            timestamp: self.time,
            source: ObservationSource::VutLocalSensor,
            reporter: vut,
        }
    }
}

/// Raw data around the VUT at the requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSlice {
    pub fix: VutFix,
    pub records: Vec<ReceivedRecord>,
}

fn nearest<T>(items: impl Iterator<Item = (TimestampMs, T)>, t: TimestampMs) -> Option<(TimestampMs, T)> {
    // earlier item wins a tie
    items.min_by_key(|(time, _)| (time.abs_diff(t), *time))
}

fn vut_readings(records: &[ReceivedRecord]) -> impl Iterator<Item = (TimestampMs, &VutReading)> {
    records.iter().filter_map(|r| match &r.record.body {
        RecordBody::VutSensor(v) => Some((r.record.time, v)),
        _ => None,
    })
}

/// The VUT fix nearest to `t`, then everything within the window and radius around it.
pub fn query_window(
    vut: StationId,
    t: TimestampMs,
    src: &impl RawSource,
    cfg: &FusionConfig,
) -> Result<WindowSlice, FusionError> {
    let tol = cfg.vut_fix_tolerance_ms;
    let own = src.query_raw(&RawQuery {
        t_min: t.saturating_sub(tol),
        t_max: t.saturating_add(tol),
        area: None,
        kinds: BTreeSet::from([RecordKind::VutSensor]),
        reporter: Some(vut),
    })?;
    let gnss = vut_readings(&own.records).filter_map(|(time, v)| match v {
        VutReading::Gnss { position, course } => Some((time, (*position, *course))),
        _ => None,
    });
    let (time, (position, course)) = nearest(gnss, t).ok_or(FusionError::NoVutFix { vut, t })?;
    let speeds = vut_readings(&own.records).filter_map(|(time, v)| match v {
        VutReading::Dynamics { speed, .. } => Some((time, *speed)),
        _ => None,
    });
    let speed = nearest(speeds, time).map_or(0.0, |(_, s)| s);
    let fix = VutFix {
        time,
        position,
        course,
        speed,
    };
    let slice = src.query_raw(&RawQuery {
        t_min: t.saturating_sub(cfg.window_ms),
        t_max: t.saturating_add(cfg.window_ms),
        area: Some((position, cfg.radius_m)),
        kinds: BTreeSet::from([RecordKind::Cam, RecordKind::CpmDetection, RecordKind::Spat, RecordKind::Hazard]),
        reporter: None,
    })?;
    Ok(WindowSlice {
        fix,
        records: slice.records,
    })
}

/// Moves a position `meters` along `course`.
pub fn advance(p: GeoPosition, course: CourseDeg, meters: f64) -> GeoPosition {
    from_local_enu(p, course_to_unit_vector(course).scale(meters))
}

/// Observation dead-reckoned to time `t` at constant velocity.
pub fn extrapolate(o: &TrafficObjectObservation, t: TimestampMs) -> TrafficObjectObservation {
    if o.timestamp == t {
        return *o;
    }
    let dt = (t as f64 - o.timestamp as f64) / 1000.0;
    TrafficObjectObservation {
        position: advance(o.position, o.course, o.speed * dt),
        timestamp: t,
        ..*o
    }
}

/// Traffic object observations at time `t`: repeated messages are dropped,
/// each (source, reporter, object) keeps the observation nearest to `t` and
/// is extrapolated to `t`. Output is sorted by provenance.
pub fn normalize(
    records: &[ReceivedRecord],
    vut: Option<TrafficObjectObservation>,
    t: TimestampMs,
) -> Vec<TrafficObjectObservation> {
    let unique = backend_dedup(records.to_vec());
    let mut best: BTreeMap<Provenance, TrafficObjectObservation> = BTreeMap::new();
    let candidates = unique
        .iter()
        .filter_map(|r| match &r.record.body {
            RecordBody::Cam(c) => Some(observation_from_cam(c)),
            RecordBody::CpmDetection { originator, detection } => {
                Some(observation_from_detection(*originator, r.record.time, detection))
            }
            _ => None,
        })
        .chain(vut);
    for o in candidates {
        let key = Provenance::of(&o);
        let closer = |kept: &TrafficObjectObservation| {
            (o.timestamp.abs_diff(t), o.timestamp) < (kept.timestamp.abs_diff(t), kept.timestamp)
        };
        if best.get(&key).is_none_or(closer) {
            best.insert(key, o);
        }
    }
    best.values().map(|o| extrapolate(o, t)).collect()
}

fn source_rank(s: ObservationSource) -> u8 {
    match s {
        ObservationSource::CamSelfReport => 0,
        ObservationSource::VutLocalSensor => 1,
        ObservationSource::CpmDetection => 2,
    }
}

/// Most frequent known class; lowest code on ties; unknown only if nothing else is known.
fn merged_class(group: &[TrafficObjectObservation]) -> ObjectClassification {
    let mut counts: BTreeMap<u8, (usize, ObjectClassification)> = BTreeMap::new();
    for o in group.iter().filter(|o| o.classification != ObjectClassification::Unknown) {
        counts.entry(o.classification.code()).or_insert((0, o.classification)).0 += 1;
    }
    counts
        .values()
        .fold(None, |best: Option<(usize, ObjectClassification)>, &(n, c)| match best {
            Some((m, _)) if m >= n => best,
            _ => Some((n, c)),
        })
        .map_or(ObjectClassification::Unknown, |(_, c)| c)
}

/// Merges duplicate observations of one road user.
///
/// A CAM self-report provides the kinematics if present, else the VUT's own
/// sensors, else the mean of the camera detections.
pub fn merge_group(group: &[TrafficObjectObservation]) -> Result<FusedObject, FusionError> {
    let mut members: Vec<&TrafficObjectObservation> = group.iter().collect();
    members.sort_by_key(|o| (source_rank(o.source), o.reporter, o.object_id, o.timestamp));
    let rep = *members.first().ok_or(FusionError::EmptyGroup)?;
    let provenance: Vec<Provenance> = members.iter().map(|o| Provenance::of(o)).collect();
    let classification = merged_class(group);
    let (position, speed, course) = if rep.source != ObservationSource::CpmDetection || members.len() == 1 {
        (rep.position, rep.speed, rep.course)
    } else {
        let n = members.len() as f64;
        let origin = rep.position;
        let mut sum = LocalPoint::new(0.0, 0.0);
        let mut heading = LocalPoint::new(0.0, 0.0);
        let mut speed = 0.0;
        for o in &members {
            sum = sum + project(origin, o.position);
            heading = heading + course_to_unit_vector(o.course);
            speed += o.speed;
        }
        let course = if heading.norm() > 1e-9 { CourseDeg::from_vector(heading) } else { rep.course };
        (from_local_enu(origin, sum.scale(1.0 / n)), speed / n, course)
    };
    Ok(FusedObject {
        fused_id: rep.object_id,
        classification,
        position,
        speed,
        course,
        provenance,
        lane_id: None,
    })
}

fn fused_order(a: &FusedObject, b: &FusedObject) -> std::cmp::Ordering {
    a.position
        .lat
        .total_cmp(&b.position.lat)
        .then(a.position.lon.total_cmp(&b.position.lon))
        .then(a.course.value().total_cmp(&b.course.value()))
        .then(a.provenance.cmp(&b.provenance))
}

/// Duplicate-free objects plus the number of pairwise checks it took.
pub fn dedup_with_stats(
    obs: &[TrafficObjectObservation],
    th: &SimilarityThresholds,
    cfg: &CourseClusterConfig,
) -> (Vec<FusedObject>, u64) {
    let grouping = similarity_groups(obs, th, cfg);
    let mut fused: Vec<FusedObject> = grouping
        .groups
        .iter()
        .map(|g| {
            let members: Vec<_> = g.iter().map(|&i| obs[i]).collect();
            merge_group(&members).expect("components are nonempty")
        })
        .collect();
    fused.sort_by(fused_order);
    (fused, grouping.comparisons)
}

pub fn dedup(obs: &[TrafficObjectObservation], th: &SimilarityThresholds, cfg: &CourseClusterConfig) -> Vec<FusedObject> {
    dedup_with_stats(obs, th, cfg).0
}

/// Latest reading of every sensor group nearest to `t`, assembled into one extract.
fn vut_snapshot(records: &[ReceivedRecord], t: TimestampMs) -> Option<VutSensorExtract> {
    let mut by_group: BTreeMap<SensorGroup, (TimestampMs, VutReading)> = BTreeMap::new();
    for (time, v) in vut_readings(records) {
        let better = by_group
            .get(&v.group())
            .is_none_or(|(kept, _)| (time.abs_diff(t), time) < (kept.abs_diff(t), *kept));
        if better {
            by_group.insert(v.group(), (time, *v));
        }
    }
    if by_group.is_empty() {
        return None;
    }
    let mut s = VutSensorExtract {
        timestamp: t,
        ..Default::default()
    };
    by_group.values().for_each(|(_, v)| v.apply_to(&mut s));
    Some(s)
}

/// Assembles the situation without persisting it; `situation_id` is left at 0.
pub fn build_situation(
    vut: StationId,
    t: TimestampMs,
    src: &impl RawSource,
    cfg: &FusionConfig,
) -> Result<SituationRecord, FusionError> {
    let window = query_window(vut, t, src, cfg)?;
    let center = window.fix.position;
    let obs = normalize(&window.records, Some(window.fix.observation(vut)), t);
    let mut objects = dedup(&obs, &cfg.thresholds, &cfg.cluster);

    let unique = backend_dedup(window.records.clone());
    let spat: Vec<_> = unique
        .iter()
        .filter_map(|r| match r.record.body {
            RecordBody::Spat(s) => Some(s),
            _ => None,
        })
        .collect();
    let mut hazards: Vec<HazardEvent> = unique
        .iter()
        .filter_map(|r| match r.record.body {
            RecordBody::Hazard(h) => Some(h),
            _ => None,
        })
        .collect();
    hazards.sort_by_key(|h| (h.timestamp, h.source, h.kind.code()));

    let map = src
        .topologies()?
        .into_iter()
        .filter_map(|m| m.anchor().map(|a| (haversine_distance(a, center), m)))
        .filter(|(d, _)| *d <= cfg.radius_m)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.intersection_id.cmp(&b.1.intersection_id)))
        .map(|(_, m)| m);
    let topology = map.map(|m| {
        link_lanes(&mut objects, &m, cfg.max_lateral_m);
        join_topology(&m, &spat, t)
    });

    let own = src.query_raw(&RawQuery {
        t_min: t.saturating_sub(cfg.lookback_ms),
        t_max: t.saturating_add(cfg.window_ms),
        area: None,
        kinds: BTreeSet::from([RecordKind::VutSensor]),
        reporter: Some(vut),
    })?;
    let vut_sensor = vut_snapshot(&own.records, t);

    let driver = src
        .query_raw(&RawQuery {
            t_min: t.saturating_sub(cfg.lookback_ms),
            t_max: t,
            area: None,
            kinds: BTreeSet::from([RecordKind::DriverState]),
            reporter: Some(vut),
        })?
        .records
        .iter()
        .filter_map(|r| match r.record.body {
            RecordBody::DriverState(d) => Some(d),
            _ => None,
        })
        .max_by_key(|d| d.timestamp);

    let environment = environment_for(t, center, &src.environment_at(t)?).copied();

    Ok(SituationRecord {
        situation_id: 0,
        center,
        radius_m: cfg.radius_m,
        timestamp: t,
        vut,
        objects,
        topology,
        vut_sensor,
        driver,
        hazards,
        environment,
    })
}

/// Builds the situation and stores it; the returned record carries its new id.
pub fn fuse_situation(
    vut: StationId,
    t: TimestampMs,
    store: &mut Store,
    cfg: &FusionConfig,
) -> Result<SituationRecord, FusionError> {
    let mut s = build_situation(vut, t, store, cfg)?;
    s.situation_id = store.persist_situation(&s)?;
    Ok(s)
}

#[cfg(test)]
mod tests;
