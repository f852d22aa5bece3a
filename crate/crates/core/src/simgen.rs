//! Synthetic intersection scenarios with known ground truth.
//!
//! Road users move at constant velocity along four approaches with two lanes
//! each, or along the sidewalks. Cooperative vehicles send CAMs, a roadside
//! camera reports everything within its range as CPM detections, and the
//! vehicle under test reports its sensors and driver state. All streams run
//! on fixed clocks aligned to the 10 ms wire grid, so record counts follow
//! directly from the rates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregators::{vda_tick, LocalStore, TransmitSchedule};
use crate::fusion::{advance, SituationRecord};
use crate::geo::{haversine_distance, CourseDeg, GeoPosition};
use crate::messages::{
    CamExtract, CpmDetection, DriverStateSample, MapLane, MapTopology, ObjectClassification, Record, SignalPhase,
    SpatExtract, StationId, TimestampMs, VutSensorExtract,
};
use crate::wire::{plan_batches, BatchEnvelope, WireError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceNoise {
    pub position_m: f64,
    pub course_deg: f64,
    pub speed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub cam: SourceNoise,
    pub cpm: SourceNoise,
    pub vut: SourceNoise,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            cam: SourceNoise {
                position_m: 0.5,
                course_deg: 2.0,
                speed_ms: 0.2,
            },
            cpm: SourceNoise {
                position_m: 0.5,
                course_deg: 3.0,
                speed_ms: 0.3,
            },
            vut: SourceNoise {
                position_m: 0.3,
                course_deg: 1.0,
                speed_ms: 0.1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub cam_hz: f64,
    pub cpm_hz: f64,
    pub vut_hz: f64,
    pub driver_hz: f64,
    pub spat_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            cam_hz: 10.0,
            cpm_hz: 10.0,
            vut_hz: 10.0,
            driver_hz: 1.0,
            spat_hz: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Scenario clock origin, a multiple of 10 ms.
    pub start_ms: TimestampMs,
    pub center: GeoPosition,
    pub vehicles: usize,
    pub pedestrians: usize,
    /// Share of the vehicles that send CAMs.
    pub cooperative_fraction: f64,
    pub camera_radius_m: f64,
    pub vut: StationId,
    pub rsu: StationId,
    pub intersection_id: u32,
    /// Batches are cut at this interval per station.
    pub flush_interval_ms: u64,
    pub noise: NoiseConfig,
    pub rates: Rates,
    pub schedule: TransmitSchedule,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            duration_s: 20.0,
            start_ms: 1_700_000_000_000,
            center: GeoPosition {
                lat: 49.2339,
                lon: 6.9826,
            },
            vehicles: 20,
            pedestrians: 10,
            cooperative_fraction: 1.0,
            camera_radius_m: 250.0,
            vut: StationId(100),
            rsu: StationId(1000),
            intersection_id: 1,
            flush_interval_ms: 5000,
            noise: NoiseConfig::default(),
            rates: Rates::default(),
            schedule: TransmitSchedule::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if !self.start_ms.is_multiple_of(10) {
            return bad("start_ms must be a multiple of 10");
        }
        if !(0.0..=1.0).contains(&self.cooperative_fraction) {
            return bad("cooperative_fraction must be within [0, 1]");
        }
        if !(self.camera_radius_m > 0.0) {
            return bad("camera_radius_m must be positive");
        }
        let r = &self.rates;
        if [r.cam_hz, r.cpm_hz, r.vut_hz, r.driver_hz, r.spat_hz].iter().any(|h| !(*h > 0.0) || *h > 100.0) {
            return bad("rates must be within (0, 100] Hz");
        }
        let n = &self.noise;
        if [n.cam, n.cpm, n.vut]
            .iter()
            .flat_map(|s| [s.position_m, s.course_deg, s.speed_ms])
            .any(|x| !(x >= 0.0))
        {
            return bad("noise must be non-negative");
        }
        if self.flush_interval_ms == 0 {
            return bad("flush_interval_ms must be positive");
        }
        if GeoPosition::new(self.center.lat, self.center.lon).is_err() {
            return bad("center out of range");
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        (self.duration_s * 1000.0).round() as u64
    }

    pub fn cooperative_count(&self) -> usize {
        (self.cooperative_fraction * self.vehicles as f64).round() as usize
    }
}

/// Emission period on the wire grid for a rate.
pub fn period_ms(hz: f64) -> u64 {
    (((1000.0 / hz) / 10.0).round() as u64).max(1) * 10
}

/// Emission times `start + phase + k * period` before the end of the scenario.
pub fn emission_times(start: TimestampMs, duration_ms: u64, period: u64, phase: u64) -> impl Iterator<Item = TimestampMs> {
    (phase..duration_ms).step_by(period as usize).map(move |dt| start + dt)
}

/// Constant-velocity piece of a trajectory, valid on `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: TimestampMs,
    pub t_end: TimestampMs,
    pub start: GeoPosition,
    pub speed: f64,
    pub course: CourseDeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub id: u32,
    pub classification: ObjectClassification,
    /// CAM station of a cooperative vehicle.
    pub station: Option<StationId>,
    /// Track id the roadside camera uses for this object.
    pub camera_id: u32,
    pub is_vut: bool,
    pub segments: Vec<Segment>,
}

impl TruthObject {
    fn segment_at(&self, t: TimestampMs) -> &Segment {
        self.segments
            .iter()
            .find(|s| t <= s.t_end)
            .unwrap_or_else(|| self.segments.last().expect("at least one segment"))
    }

    /// True state at `t`; extrapolated beyond the first and last segment.
    pub fn state_at(&self, t: TimestampMs) -> (GeoPosition, f64, CourseDeg) {
        let s = self.segment_at(t);
        let dt = (t as f64 - s.t_start as f64) / 1000.0;
        (advance(s.start, s.course, s.speed * dt), s.speed, s.course)
    }

    pub fn position_at(&self, t: TimestampMs) -> GeoPosition {
        self.state_at(t).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub objects: Vec<TruthObject>,
    pub vut: StationId,
    pub rsu: StationId,
    pub camera_center: GeoPosition,
    pub camera_radius_m: f64,
    pub start_ms: TimestampMs,
    pub end_ms: TimestampMs,
}

impl GroundTruth {
    pub fn vut_object(&self) -> Option<&TruthObject> {
        self.objects.iter().find(|o| o.is_vut)
    }

    /// Whether any source reports the object at `t`.
    pub fn observable(&self, o: &TruthObject, t: TimestampMs) -> bool {
        o.station.is_some() || o.is_vut || haversine_distance(self.camera_center, o.position_at(t)) <= self.camera_radius_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: GroundTruth,
    pub map: MapTopology,
    /// In flush order; within a flush window ordered by station.
    pub batches: Vec<BatchEnvelope>,
}

const LANE_WIDTH_M: f64 = 3.5;
const SIDEWALK_OFFSET_M: f64 = 9.0;
const APPROACH_LEN_M: f64 = 150.0;

/// Travel direction of each approach, toward the center.
const HEADINGS: [f64; 4] = [0.0, 90.0, 180.0, 270.0];

/// A point `along` meters past the stop line of a path with `heading`,
/// shifted `right` meters to the right of the intersection center line.
fn path_point(center: GeoPosition, heading: f64, along: f64, right: f64) -> GeoPosition {
    let back = advance(center, CourseDeg::wrapped(heading), along);
    advance(back, CourseDeg::wrapped(heading + 90.0), right)
}

fn lane_offset(lane: usize) -> f64 {
    LANE_WIDTH_M * (lane as f64 + 0.5)
}

/// Four approaches with two ingress lanes each; lane `2a + l + 1`, signal group `a + 1`.
pub fn intersection_map(cfg: &ScenarioConfig) -> MapTopology {
    let mut lanes = Vec::new();
    for (a, &h) in HEADINGS.iter().enumerate() {
        for l in 0..2 {
            lanes.push(MapLane {
                lane_id: (2 * a + l + 1) as u32,
                signal_group: (a + 1) as u16,
                polyline: vec![
                    path_point(cfg.center, h, -APPROACH_LEN_M, lane_offset(l)),
                    path_point(cfg.center, h, 0.0, lane_offset(l)),
                ],
                ingress: true,
            });
        }
    }
    MapTopology {
        intersection_id: cfg.intersection_id,
        lanes,
    }
}

/// Fixed 60 s cycle; north-south and east-west approaches alternate.
pub fn signal_phase(group: u16, t: TimestampMs) -> SignalPhase {
    let shift = if group % 2 == 1 { 0 } else { 30_000 };
    match (t + shift) % 60_000 {
        0..25_000 => SignalPhase::Green,
        25_000..28_000 => SignalPhase::Amber,
        28_000..58_000 => SignalPhase::Red,
        _ => SignalPhase::RedAmber,
    }
}

fn noisy_course(rng: &mut ChaCha8Rng, c: CourseDeg, sigma: f64) -> CourseDeg {
    CourseDeg::wrapped(c.value() + gauss(rng, sigma))
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    }
}

fn noisy_position(rng: &mut ChaCha8Rng, p: GeoPosition, sigma: f64) -> GeoPosition {
    let east = gauss(rng, sigma);
    let north = gauss(rng, sigma);
    crate::geo::from_local_enu(p, crate::geo::LocalPoint::new(east, north))
}

/// Places road users so that no two of them are ever near-identical in
/// position, course and speed: users sharing a path share its speed and
/// keep their spacing.
fn ground_truth(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> GroundTruth {
    let start = cfg.start_ms;
    let end = start + cfg.duration_ms();
    let mut objects = Vec::new();
    let segment = |p: GeoPosition, speed: f64, heading: f64| Segment {
        t_start: start,
        t_end: end,
        start: p,
        speed,
        course: CourseDeg::wrapped(heading),
    };

    // per path: speed and the next free slot upstream
    let mut lanes: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for a in 0..4 {
        for l in 0..2 {
            lanes.insert((a, l), (rng.random_range(6.0..12.0), rng.random_range(0.0..5.0)));
        }
    }
    let mut take_slot = |key: (usize, usize), gap: f64, rng: &mut ChaCha8Rng| {
        let entry = lanes.get_mut(&key).expect("lane");
        let along = -(entry.1 + 10.0);
        entry.1 += gap + rng.random_range(0.0..5.0);
        (entry.0, along)
    };

    // the VUT leads the first lane
    let (speed, along) = take_slot((0, 0), 20.0, rng);
    objects.push(TruthObject {
        id: cfg.vut.0,
        classification: ObjectClassification::PassengerCar,
        station: None,
        camera_id: 1,
        is_vut: true,
        segments: vec![segment(path_point(cfg.center, HEADINGS[0], along - 20.0, lane_offset(0)), speed, HEADINGS[0])],
    });

    let cooperative = cfg.cooperative_count();
    for i in 0..cfg.vehicles {
        let key = (rng.random_range(0..4), rng.random_range(0..2));
        let (speed, along) = take_slot(key, 20.0, rng);
        let classification = if i < cooperative {
            ObjectClassification::PassengerCar
        } else {
            [ObjectClassification::PassengerCar, ObjectClassification::Bus, ObjectClassification::LightTruck][rng.random_range(0..3)]
        };
        // start so the vehicle is mid-way through the intersection around the middle of the run
        let along = along - speed * cfg.duration_s / 2.0 + 20.0;
        objects.push(TruthObject {
            id: 2000 + i as u32,
            classification,
            station: (i < cooperative).then_some(StationId(200 + i as u32)),
            camera_id: objects.len() as u32 + 1,
            is_vut: false,
            segments: vec![segment(
                path_point(cfg.center, HEADINGS[key.0], along, lane_offset(key.1)),
                speed,
                HEADINGS[key.0],
            )],
        });
    }

    let mut walks: BTreeMap<(usize, bool), (f64, f64)> = BTreeMap::new();
    for i in 0..cfg.pedestrians {
        let key = (rng.random_range(0..4), rng.random_bool(0.5));
        let (speed, next) = *walks
            .entry(key)
            .or_insert_with(|| (rng.random_range(0.8..1.8), rng.random_range(0.0..5.0)));
        walks.insert(key, (speed, next + 6.0 + rng.random_range(0.0..3.0)));
        let side = if key.1 { SIDEWALK_OFFSET_M } else { -SIDEWALK_OFFSET_M };
        objects.push(TruthObject {
            id: 3000 + i as u32,
            classification: ObjectClassification::Pedestrian,
            station: None,
            camera_id: objects.len() as u32 + 1,
            is_vut: false,
            segments: vec![segment(
                path_point(cfg.center, HEADINGS[key.0], -(next + 5.0), side),
                speed,
                HEADINGS[key.0],
            )],
        });
    }

    GroundTruth {
        objects,
        vut: cfg.vut,
        rsu: cfg.rsu,
        camera_center: cfg.center,
        camera_radius_m: cfg.camera_radius_m,
        start_ms: start,
        end_ms: end,
    }
}

fn phase_for(rng: &mut ChaCha8Rng, period: u64) -> u64 {
    rng.random_range(0..period / 10) * 10
}

/// Generates ground truth, topology and the batches every station would send.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = ground_truth(cfg, &mut rng);
    let batches = emit(cfg, &truth, &mut rng)?;
    Ok(Scenario {
        truth,
        map: intersection_map(cfg),
        batches,
    })
}

/// Observes a given ground truth with the sources of `cfg`.
pub fn observe(cfg: &ScenarioConfig, truth: GroundTruth) -> Result<Scenario, SimError> {
    cfg.validate()?;
    if truth.vut_object().is_none() {
        return Err(SimError::Invalid("ground truth has no VUT".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batches = emit(cfg, &truth, &mut rng)?;
    Ok(Scenario {
        truth,
        map: intersection_map(cfg),
        batches,
    })
}

fn emit(cfg: &ScenarioConfig, truth: &GroundTruth, rng: &mut ChaCha8Rng) -> Result<Vec<BatchEnvelope>, SimError> {
    let (start, dur) = (cfg.start_ms, cfg.duration_ms());
    let n = &cfg.noise;

    // records per receiving station
    let mut by_station: BTreeMap<StationId, Vec<Record>> = BTreeMap::new();

    let cam_period = period_ms(cfg.rates.cam_hz);
    for o in &truth.objects {
        let Some(station) = o.station else { continue };
        let phase = phase_for(rng, cam_period);
        for t in emission_times(start, dur, cam_period, phase) {
            let (p, v, c) = o.state_at(t);
            let cam = Record::cam(CamExtract {
                originator: station,
                generation_time: t,
                position: noisy_position(rng, p, n.cam.position_m),
                speed: (v + gauss(rng, n.cam.speed_ms)).max(0.0),
                course: noisy_course(rng, c, n.cam.course_deg),
                classification: o.classification,
            });
            // heard by the roadside unit and by the VUT
            by_station.entry(cfg.rsu).or_default().push(cam);
            by_station.entry(cfg.vut).or_default().push(cam);
        }
    }

    let cpm_period = period_ms(cfg.rates.cpm_hz);
    let cpm_phase = phase_for(rng, cpm_period);
    for t in emission_times(start, dur, cpm_period, cpm_phase) {
        for o in &truth.objects {
            let (p, v, c) = o.state_at(t);
            if haversine_distance(cfg.center, p) > cfg.camera_radius_m {
                continue;
            }
            let d = CpmDetection {
                object_id: o.camera_id,
                classification: o.classification,
                position: noisy_position(rng, p, n.cpm.position_m),
                speed: (v + gauss(rng, n.cpm.speed_ms)).max(0.0),
                course: noisy_course(rng, c, n.cpm.course_deg),
            };
            by_station
                .entry(cfg.rsu)
                .or_default()
                .push(Record::cpm_detection(cfg.rsu, t, d));
        }
    }

    let spat_period = period_ms(cfg.rates.spat_hz);
    let spat_phase = phase_for(rng, spat_period);
    for t in emission_times(start, dur, spat_period, spat_phase) {
        for group in 1..=4 {
            let s = SpatExtract {
                intersection_id: cfg.intersection_id,
                signal_group: group,
                phase: signal_phase(group, t),
                change_time: t,
            };
            by_station.entry(cfg.rsu).or_default().push(Record::spat(s, cfg.center));
        }
    }

    let vut = truth.vut_object().expect("scenario has a VUT");
    let vut_period = period_ms(cfg.rates.vut_hz);
    let vut_phase = phase_for(rng, vut_period);
    let mut local = LocalStore::new();
    let mut last_emit = BTreeMap::new();
    for t in emission_times(start, dur, vut_period, vut_phase) {
        let (p, v, c) = vut.state_at(t);
        let sensors = VutSensorExtract {
            timestamp: t,
            gnss: noisy_position(rng, p, n.vut.position_m),
            gnss_course: noisy_course(rng, c, n.vut.course_deg),
            speed: (v + gauss(rng, n.vut.speed_ms)).max(0.0),
            accel_longitudinal: gauss(rng, 0.1),
            accel_lateral: gauss(rng, 0.05),
            yaw_rate: gauss(rng, 0.2),
            gear: 3,
            ..Default::default()
        };
        vda_tick(t, &sensors, &cfg.schedule, &mut last_emit, &mut local);
    }
    by_station.entry(cfg.vut).or_default().extend(local.records().iter().copied());

    let driver_period = period_ms(cfg.rates.driver_hz);
    let driver_phase = phase_for(rng, driver_period);
    let (mut valence, mut arousal) = (3i8, 3i8);
    for t in emission_times(start, dur, driver_period, driver_phase) {
        valence = (valence + rng.random_range(-1..=1)).clamp(1, 5);
        arousal = (arousal + rng.random_range(-1..=1)).clamp(1, 5);
        let sample = DriverStateSample {
            timestamp: t,
            valence: valence as u8,
            arousal: arousal as u8,
            heart_rate_bpm: Some(rng.random_range(60..100)),
            self_reported: false,
        };
        by_station
            .entry(cfg.vut)
            .or_default()
            .push(Record::driver(sample, vut.position_at(t)));
    }

    let mut batches = Vec::new();
    let windows = dur.div_ceil(cfg.flush_interval_ms);
    for records in by_station.values_mut() {
        records.sort_by_key(|r| r.time);
    }
    for w in 0..windows {
        let (lo, hi) = (start + w * cfg.flush_interval_ms, start + (w + 1) * cfg.flush_interval_ms);
        for (station, records) in &by_station {
            let slice: Vec<Record> = records.iter().filter(|r| (lo..hi).contains(&r.time)).copied().collect();
            batches.extend(plan_batches(&slice, *station)?);
        }
    }

    Ok(batches)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub duplicate_rate: f64,
    pub fused: usize,
    pub truths: usize,
    pub matched: usize,
}

/// Greedy nearest-first one-to-one matching of fused objects to the true
/// positions of observable road users inside the situation circle.
pub fn score(gt: &GroundTruth, fused: &SituationRecord, match_radius_m: f64) -> Score {
    let t = fused.timestamp;
    let truths: Vec<GeoPosition> = gt
        .objects
        .iter()
        .filter(|o| gt.observable(o, t))
        .map(|o| o.position_at(t))
        .filter(|p| haversine_distance(*p, fused.center) <= fused.radius_m)
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, f) in fused.objects.iter().enumerate() {
        for (j, p) in truths.iter().enumerate() {
            let d = haversine_distance(f.position, *p);
            if d <= match_radius_m {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut fused_used = vec![false; fused.objects.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !fused_used[i] && !truth_used[j] {
            fused_used[i] = true;
            truth_used[j] = true;
            matched += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let n_fused = fused.objects.len();
    Score {
        precision: ratio(matched, n_fused),
        recall: ratio(matched, truths.len()),
        duplicate_rate: if truths.is_empty() {
            0.0
        } else {
            n_fused.saturating_sub(matched) as f64 / truths.len() as f64
        },
        fused: n_fused,
        truths: truths.len(),
        matched,
    }
}
