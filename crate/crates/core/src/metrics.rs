//! Per-object evaluation of a fused situation relative to the VUT.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FusedObject, SituationRecord};
use crate::geo::{course_to_unit_vector, from_local_enu, haversine_distance, project, CourseDeg, GeoPosition, LocalPoint};
use crate::messages::{DriverStateSample, HazardEvent, HazardKind, ObjectClassification};
use crate::stressmap::{CellColor, StressMatrix};

pub const CSV_HEADER: &str = "ID,Classification,Lat,Lon,Speed,Course,Distance,TTI_OBJ,TTI_VUT,RU";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("situation {0} has no VUT object")]
    MissingVutState(u64),
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("trilateration needs at least 3 ranges, got {0}")]
    TooFewRanges(usize),
    #[error("trilateration geometry is degenerate")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: GeoPosition,
    pub speed: f64,
    pub course: CourseDeg,
}

impl From<&FusedObject> for KinematicState {
    fn from(o: &FusedObject) -> Self {
        KinematicState {
            position: o.position,
            speed: o.speed,
            course: o.course,
        }
    }
}

impl KinematicState {
    fn velocity(&self) -> LocalPoint {
        course_to_unit_vector(self.course).scale(self.speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Objects slower than this never reach an intersection point.
    pub tti_speed_floor: f64,
    /// Closing rates at or below this count as not approaching.
    pub ru_closing_floor: f64,
    pub unsuitable_tti_ms: i64,
    pub near_distance_m: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            tti_speed_floor: 0.1,
            ru_closing_floor: 0.05,
            unsuitable_tti_ms: 3000,
            near_distance_m: 25.0,
        }
    }
}

/// Milliseconds until object and VUT reach the crossing point of their
/// forward paths, `(tti_obj, tti_vut)`, or `(-1, -1)` if there is none.
pub fn compute_tti(vut: &KinematicState, obj: &KinematicState, cfg: &MetricConfig) -> (i64, i64) {
    const NONE: (i64, i64) = (-1, -1);
    if vut.speed < cfg.tti_speed_floor || obj.speed < cfg.tti_speed_floor {
        return NONE;
    }
    let u = course_to_unit_vector(vut.course);
    let w = course_to_unit_vector(obj.course);
    let p = project(vut.position, obj.position);
    let denom = u.cross(&w);
    if denom.abs() < 1e-9 {
        return NONE;
    }
    let s_vut = p.cross(&w) / denom;
    let s_obj = p.cross(&u) / denom;
    if s_vut < 0.0 || s_obj < 0.0 {
        return NONE;
    }
    let ms = |s: f64, v: f64| (1000.0 * s / v).round() as i64;
    (ms(s_obj, obj.speed), ms(s_vut, vut.speed))
}

/// Relative urgency: time to contact at the current closing rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ru {
    Finite(u64),
    Max,
}

impl fmt::Display for Ru {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ru::Finite(v) => write!(f, "{v}"),
            Ru::Max => f.write_str("MAX"),
        }
    }
}

impl std::str::FromStr for Ru {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "MAX" {
            Ok(Ru::Max)
        } else {
            s.parse().map(Ru::Finite)
        }
    }
}

pub fn compute_ru(vut: &KinematicState, obj: &KinematicState, cfg: &MetricConfig) -> Ru {
    let d = project(vut.position, obj.position);
    let dist = d.norm();
    if dist == 0.0 {
        return Ru::Finite(1);
    }
    let rel = obj.velocity() - vut.velocity();
    let closing = -d.dot(&rel) / dist;
    if closing <= cfg.ru_closing_floor {
        return Ru::Max;
    }
    Ru::Finite(((1000.0 * dist / closing).round() as u64).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub object_id: u32,
    pub classification: ObjectClassification,
    pub lat: f64,
    pub lon: f64,
    pub speed: f64,
    pub course: f64,
    pub distance_m: f64,
    pub tti_obj_ms: i64,
    pub tti_vut_ms: i64,
    pub ru: Ru,
}

impl EvaluationRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.2},{:.1},{:.2},{},{},{}",
            self.object_id,
            self.classification.label(),
            self.lat,
            self.lon,
            self.speed,
            self.course,
            self.distance_m,
            self.tti_obj_ms,
            self.tti_vut_ms,
            self.ru
        )
    }
}

/// One row per object other than the VUT, ordered by object id.
pub fn evaluate_situation(s: &SituationRecord, cfg: &MetricConfig) -> Result<Vec<EvaluationRow>, MetricsError> {
    let vut_obj = s.vut_object().ok_or(MetricsError::MissingVutState(s.situation_id))?;
    let vut = KinematicState::from(vut_obj);
    let mut rows: Vec<EvaluationRow> = s
        .objects
        .iter()
        .filter(|o| !o.is_vut(s.vut))
        .map(|o| {
            let obj = KinematicState::from(o);
            let (tti_obj_ms, tti_vut_ms) = compute_tti(&vut, &obj, cfg);
            EvaluationRow {
                object_id: o.fused_id,
                classification: o.classification,
                lat: o.position.lat,
                lon: o.position.lon,
                speed: o.speed,
                course: o.course.value(),
                distance_m: haversine_distance(vut.position, o.position),
                tti_obj_ms,
                tti_vut_ms,
                ru: compute_ru(&vut, &obj, cfg),
            }
        })
        .collect();
    rows.sort_by_key(|r| r.object_id);
    Ok(rows)
}

pub fn to_csv(rows: &[EvaluationRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<EvaluationRow>, MetricsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => {
            return Err(MetricsError::Csv {
                line: 1,
                reason: "missing header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |reason: &str| MetricsError::Csv {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = l.trim_end().split(',').collect();
            if f.len() != 10 {
                return Err(bad("expected 10 fields"));
            }
            fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
                s.parse().map_err(|_| format!("bad {what}: {s}"))
            }
            let row = (|| -> Result<EvaluationRow, String> {
                Ok(EvaluationRow {
                    object_id: num(f[0], "ID")?,
                    classification: ObjectClassification::from_label(f[1]).ok_or(format!("bad class: {}", f[1]))?,
                    lat: num(f[2], "Lat")?,
                    lon: num(f[3], "Lon")?,
                    speed: num(f[4], "Speed")?,
                    course: num(f[5], "Course")?,
                    distance_m: num(f[6], "Distance")?,
                    tti_obj_ms: num(f[7], "TTI_OBJ")?,
                    tti_vut_ms: num(f[8], "TTI_VUT")?,
                    ru: num(f[9], "RU")?,
                })
            })();
            row.map_err(|e| bad(&e))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandoverSummary {
    /// Smallest non-negative TTI of either party.
    pub min_tti_ms: Option<i64>,
    pub near_objects: usize,
    pub hazard_count: usize,
    pub driver_stress: Option<CellColor>,
    pub suitable: bool,
}

impl fmt::Display for HandoverSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tti = self.min_tti_ms.map_or("none".to_string(), |t| format!("{t} ms"));
        write!(
            f,
            "{}: min TTI {tti}, {} near objects, {} hazards",
            if self.suitable { "SUITABLE" } else { "UNSUITABLE" },
            self.near_objects,
            self.hazard_count
        )?;
        if let Some(s) = &self.driver_stress {
            write!(f, ", driver stress cell ({}, {})", s.valence, s.arousal)?;
        }
        Ok(())
    }
}

pub fn handover_summary(
    rows: &[EvaluationRow],
    driver: Option<&DriverStateSample>,
    hazards: &[HazardEvent],
    cfg: &MetricConfig,
    matrix: &StressMatrix,
) -> HandoverSummary {
    let min_tti_ms = rows
        .iter()
        .flat_map(|r| [r.tti_obj_ms, r.tti_vut_ms])
        .filter(|t| *t >= 0)
        .min();
    let near_objects = rows.iter().filter(|r| r.distance_m < cfg.near_distance_m).count();
    let panic = hazards.iter().any(|h| h.kind == HazardKind::PanicBraking);
    HandoverSummary {
        min_tti_ms,
        near_objects,
        hazard_count: hazards.len(),
        driver_stress: driver.map(|d| matrix.color_for(f64::from(d.valence), f64::from(d.arousal))),
        suitable: !panic && min_tti_ms.is_none_or(|t| t >= cfg.unsuitable_tti_ms),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trilateration {
    pub position: GeoPosition,
    /// Fitted minus given range, per input.
    pub residuals: Vec<f64>,
    pub rms: f64,
    pub max_abs: f64,
    pub iterations: usize,
}

/// Least-squares position from known points and ranges (Gauss-Newton on the local plane).
pub fn trilaterate(ranges: &[(GeoPosition, f64)]) -> Result<Trilateration, MetricsError> {
    if ranges.len() < 3 {
        return Err(MetricsError::TooFewRanges(ranges.len()));
    }
    let n = ranges.len() as f64;
    let origin = GeoPosition {
        lat: ranges.iter().map(|r| r.0.lat).sum::<f64>() / n,
        lon: ranges.iter().map(|r| r.0.lon).sum::<f64>() / n,
    };
    let pts: Vec<(LocalPoint, f64)> = ranges.iter().map(|(p, d)| (project(origin, *p), *d)).collect();
    let residuals_at = |x: LocalPoint| pts.iter().map(|(p, d)| (x - *p).norm() - d).collect::<Vec<_>>();
    let mut x = LocalPoint::new(0.0, 0.0);
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, d) in &pts {
            let diff = x - *p;
            let r = diff.norm();
            if r < 1e-12 {
                continue;
            }
            let (je, jn) = (diff.east / r, diff.north / r);
            let res = r - d;
            a11 += je * je;
            a12 += je * jn;
            a22 += jn * jn;
            b1 += je * res;
            b2 += jn * res;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-12 {
            return Err(MetricsError::Degenerate);
        }
        let step = LocalPoint::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
        x = x - step;
        if step.norm() < 1e-10 {
            break;
        }
    }
    let residuals = residuals_at(x);
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let max_abs = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(Trilateration {
        position: from_local_enu(origin, x),
        residuals,
        rms,
        max_abs,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::table2;
    use crate::messages::StationId;
    use proptest::prelude::*;

    fn p0() -> GeoPosition {
        GeoPosition { lat: 49.2339, lon: 6.9822 }
    }

    fn state(p: GeoPosition, speed: f64, course: f64) -> KinematicState {
        KinematicState {
            position: p,
            speed,
            course: CourseDeg::wrapped(course),
        }
    }

    fn offset(east: f64, north: f64) -> GeoPosition {
        from_local_enu(p0(), LocalPoint::new(east, north))
    }

    #[test]
    fn crossing_paths() {
        let cfg = MetricConfig::default();
        let vut = state(offset(0.0, -100.0), 10.0, 0.0);
        let obj = state(offset(-50.0, 0.0), 5.0, 90.0);
        let (a, b) = compute_tti(&vut, &obj, &cfg);
        assert!((a - 10_000).abs() <= 1 && (b - 10_000).abs() <= 1, "{a} {b}");
    }

    #[test]
    fn no_future_intersection() {
        let cfg = MetricConfig::default();
        let vut = state(p0(), 10.0, 0.0);
        assert_eq!(compute_tti(&vut, &state(offset(5.0, 0.0), 10.0, 0.0), &cfg), (-1, -1));
        assert_eq!(compute_tti(&vut, &state(offset(5.0, 30.0), 10.0, 180.0), &cfg), (-1, -1));
        assert_eq!(compute_tti(&vut, &state(offset(0.0, 30.0), 10.0, 0.0), &cfg), (-1, -1));
        // crossing point behind the object
        assert_eq!(compute_tti(&vut, &state(offset(-20.0, 50.0), 5.0, 270.0), &cfg), (-1, -1));
        // crossing point behind the VUT
        assert_eq!(compute_tti(&vut, &state(offset(-20.0, -50.0), 5.0, 90.0), &cfg), (-1, -1));
        assert_eq!(compute_tti(&vut, &state(offset(-50.0, 100.0), 0.0, 90.0), &cfg), (-1, -1));
        assert_eq!(compute_tti(&vut, &state(offset(-50.0, 100.0), 0.09, 90.0), &cfg), (-1, -1));
        assert_eq!(compute_tti(&state(p0(), 0.0, 0.0), &state(offset(-50.0, 100.0), 5.0, 90.0), &cfg), (-1, -1));
    }

    #[test]
    fn ru_examples() {
        let cfg = MetricConfig::default();
        let vut = state(p0(), 6.0, 0.0);
        let ahead = state(offset(0.0, 50.0), 4.0, 180.0);
        assert_eq!(compute_ru(&vut, &ahead, &cfg), Ru::Finite(5000));
        let receding = state(offset(0.0, 50.0), 8.0, 0.0);
        assert_eq!(compute_ru(&vut, &receding, &cfg), Ru::Max);
        let same = state(offset(0.0, 50.0), 6.0, 0.0);
        assert_eq!(compute_ru(&vut, &same, &cfg), Ru::Max);
        assert_eq!(compute_ru(&vut, &state(p0(), 3.0, 90.0), &cfg), Ru::Finite(1));
        assert_eq!(Ru::Max.to_string(), "MAX");
        assert_eq!("MAX".parse::<Ru>().unwrap(), Ru::Max);
        assert_eq!("893".parse::<Ru>().unwrap(), Ru::Finite(893));
    }

    #[test]
    fn ru_decreases_with_closing_rate() {
        let cfg = MetricConfig::default();
        let vut = state(p0(), 5.0, 0.0);
        let mut last = Ru::Max;
        for k in 1..100 {
            let obj = state(offset(10.0, 60.0), f64::from(k) * 0.3, 200.0);
            let ru = compute_ru(&vut, &obj, &cfg);
            if let (Ru::Finite(a), Ru::Finite(b)) = (last, ru) {
                assert!(b < a, "{k}: {b} !< {a}");
            }
            last = ru;
        }
        assert!(matches!(last, Ru::Finite(_)));
    }

    proptest! {
        #[test]
        fn tti_pairs_and_scales(
            e in -200.0..200.0f64, n in -200.0..200.0f64,
            c1 in 0.0..360.0f64, c2 in 0.0..360.0f64,
            v1 in 0.0..30.0f64, v2 in 0.0..30.0f64,
        ) {
            let cfg = MetricConfig::default();
            let vut = state(p0(), v1, c1);
            let obj = state(offset(e, n), v2, c2);
            let (a, b) = compute_tti(&vut, &obj, &cfg);
            prop_assert_eq!(a == -1, b == -1);
            prop_assert!(a >= -1 && b >= -1);
            let fast = compute_tti(&state(p0(), 2.0 * v1, c1), &state(offset(e, n), 2.0 * v2, c2), &cfg);
            if a >= 0 && v1 >= cfg.tti_speed_floor && v2 >= cfg.tti_speed_floor {
                prop_assert!((2 * fast.0 - a).abs() <= 1 && (2 * fast.1 - b).abs() <= 1);
            }
        }

        #[test]
        fn translation_invariance(
            e in -200.0..200.0f64, n in -200.0..200.0f64,
            shift in -0.01..0.01f64,
            c1 in 0.0..360.0f64, c2 in 0.0..360.0f64,
            v1 in 0.2..30.0f64, v2 in 0.2..30.0f64,
        ) {
            let cfg = MetricConfig::default();
            let moved = |p: GeoPosition| GeoPosition { lat: p.lat, lon: p.lon + shift };
            let a = (state(p0(), v1, c1), state(offset(e, n), v2, c2));
            let b = (state(moved(p0()), v1, c1), state(moved(offset(e, n)), v2, c2));
            let ta = compute_tti(&a.0, &a.1, &cfg);
            let tb = compute_tti(&b.0, &b.1, &cfg);
            prop_assert_eq!(ta.0 == -1, tb.0 == -1);
            prop_assert!((ta.0 - tb.0).abs() <= 1 && (ta.1 - tb.1).abs() <= 1);
            match (compute_ru(&a.0, &a.1, &cfg), compute_ru(&b.0, &b.1, &cfg)) {
                (Ru::Finite(x), Ru::Finite(y)) => prop_assert!(x.abs_diff(y) <= 1),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    fn vut_object(p: GeoPosition, speed: f64, course: f64) -> FusedObject {
        FusedObject {
            fused_id: 100,
            classification: ObjectClassification::PassengerCar,
            position: p,
            speed,
            course: CourseDeg::wrapped(course),
            provenance: vec![crate::fusion::Provenance {
                source: crate::messages::ObservationSource::VutLocalSensor,
                reporter: StationId(100),
                object_id: 100,
            }],
            lane_id: None,
        }
    }

    fn situation(objects: Vec<FusedObject>) -> SituationRecord {
        SituationRecord {
            situation_id: 4,
            center: p0(),
            radius_m: 300.0,
            timestamp: 0,
            vut: StationId(100),
            objects,
            topology: None,
            vut_sensor: None,
            driver: None,
            hazards: vec![],
            environment: None,
        }
    }

    fn other(id: u32, p: GeoPosition, speed: f64, course: f64) -> FusedObject {
        FusedObject {
            fused_id: id,
            provenance: vec![crate::fusion::Provenance {
                source: crate::messages::ObservationSource::CpmDetection,
                reporter: StationId(1000),
                object_id: id,
            }],
            ..vut_object(p, speed, course)
        }
    }

    #[test]
    fn evaluation_rows() {
        let cfg = MetricConfig::default();
        assert_eq!(evaluate_situation(&situation(vec![]), &cfg), Err(MetricsError::MissingVutState(4)));
        assert!(evaluate_situation(&situation(vec![vut_object(p0(), 5.0, 0.0)]), &cfg).unwrap().is_empty());
        let s = situation(vec![
            other(9, offset(-50.0, 100.0), 5.0, 90.0),
            vut_object(p0(), 10.0, 0.0),
            other(3, offset(30.0, 0.0), 5.0, 90.0),
        ]);
        let rows = evaluate_situation(&s, &cfg).unwrap();
        assert_eq!(rows.iter().map(|r| r.object_id).collect::<Vec<_>>(), vec![3, 9]);
        assert_eq!((rows[0].tti_obj_ms, rows[0].tti_vut_ms), (-1, -1));
        assert_eq!(rows[0].ru, Ru::Max);
        assert!((rows[1].tti_obj_ms - 10_000).abs() <= 1 && (rows[1].tti_vut_ms - 10_000).abs() <= 1);
        assert!((rows[0].distance_m - 30.0).abs() < 1e-3);
    }

    #[test]
    fn csv_matches_fixture_layout() {
        let rows: Vec<EvaluationRow> = table2()
            .into_iter()
            .map(|r| EvaluationRow {
                object_id: r.id,
                classification: r.classification,
                lat: r.position.lat,
                lon: r.position.lon,
                speed: r.speed,
                course: r.course.value(),
                distance_m: r.distance_m,
                tti_obj_ms: r.tti_obj_ms,
                tti_vut_ms: r.tti_vut_ms,
                ru: r.ru.map_or(Ru::Max, Ru::Finite),
            })
            .collect();
        let csv = to_csv(&rows);
        assert_eq!(csv, crate::fixtures::TABLE2_CSV);
        assert_eq!(parse_csv(&csv).unwrap(), rows);
        assert!(parse_csv("ID,Other\n").is_err());
        assert!(matches!(parse_csv(&format!("{CSV_HEADER}\n1,CAR,1,2\n")), Err(MetricsError::Csv { line: 2, .. })));
    }

    #[test]
    fn handover_rules() {
        let cfg = MetricConfig::default();
        let m = StressMatrix::default();
        let s = handover_summary(&[], None, &[], &cfg, &m);
        assert!(s.suitable);
        assert_eq!(s.min_tti_ms, None);
        let row = |tti_obj, tti_vut, d| EvaluationRow {
            object_id: 1,
            classification: ObjectClassification::Pedestrian,
            lat: 0.0,
            lon: 0.0,
            speed: 1.0,
            course: 0.0,
            distance_m: d,
            tti_obj_ms: tti_obj,
            tti_vut_ms: tti_vut,
            ru: Ru::Max,
        };
        let rows = [row(-1, -1, 11.27), row(1639, 1315, 15.59), row(3720, 3089, 35.52)];
        let s = handover_summary(&rows, None, &[], &cfg, &m);
        assert!(!s.suitable);
        assert_eq!(s.min_tti_ms, Some(1315));
        assert_eq!(s.near_objects, 2);
        let calm = handover_summary(&rows[2..], None, &[], &cfg, &m);
        assert!(calm.suitable);
        let hazard = HazardEvent {
            kind: HazardKind::PanicBraking,
            timestamp: 0,
            position: p0(),
            source: StationId(1),
        };
        let driver = DriverStateSample {
            timestamp: 0,
            valence: 2,
            arousal: 3,
            heart_rate_bpm: None,
            self_reported: true,
        };
        let s = handover_summary(&rows[2..], Some(&driver), &[hazard], &cfg, &m);
        assert!(!s.suitable);
        assert_eq!(s.hazard_count, 1);
        let stress = s.driver_stress.clone().unwrap();
        assert_eq!((stress.valence, stress.arousal), (2, 3));
        assert!(s.to_string().starts_with("UNSUITABLE"));
        let other = HazardEvent {
            kind: HazardKind::EmergencyVehicleWarning,
            ..hazard
        };
        assert!(handover_summary(&rows[2..], None, &[other], &cfg, &m).suitable);
    }

    #[test]
    fn trilateration_recovers_exact_ranges() {
        let truth = offset(12.0, -7.0);
        let ranges: Vec<_> = [(0.0, 40.0), (30.0, 0.0), (-25.0, 10.0), (5.0, -30.0)]
            .into_iter()
            .map(|(e, n)| {
                let p = offset(e, n);
                (p, haversine_distance(truth, p))
            })
            .collect();
        let fit = trilaterate(&ranges).unwrap();
        assert!(haversine_distance(fit.position, truth) < 1e-3);
        assert!(fit.rms < 1e-3);
        assert_eq!(trilaterate(&ranges[..2]), Err(MetricsError::TooFewRanges(2)));
    }

    #[test]
    fn trilateration_of_fixture() {
        let ranges: Vec<_> = table2().into_iter().map(|r| (r.position, r.distance_m)).collect();
        let fit = trilaterate(&ranges).unwrap();
        let expected = GeoPosition { lat: 49.2339667, lon: 6.9822499 };
        assert!(haversine_distance(fit.position, expected) < 0.05, "{:?}", fit.position);
        assert!((fit.rms - 0.0177).abs() < 1e-3, "{}", fit.rms);
        assert!((fit.max_abs - 0.053).abs() < 2e-3, "{}", fit.max_abs);
    }
}
