//! Shared example data: the published evaluation table of one intersection
//! situation, a record of every kind and random situations.

use rand::Rng;

use crate::fusion::{FusedObject, PhasedLane, Provenance, SituationRecord, SituationTopology};
use crate::geo::{CourseDeg, GeoPosition};
use crate::messages::{
    CamExtract, CpmDetection, CpmExtract, DoorPosition, DriverStateSample, EnvironmentSample, ExteriorLights,
    HazardEvent, HazardKind, MapLane, ObjectClassification, ObservationSource, Record, RecordBody, SignalPhase,
    SpatExtract, StationId, VutReading, VutSensorExtract,
};

/// Evaluation table of the reference situation, as CSV with the evaluation header.
pub const TABLE2_CSV: &str = include_str!("../data/table2.csv");

/// Station ids in the table that are cooperative vehicles sending CAMs;
/// all other rows are camera detections.
pub const TABLE2_CAM_STATIONS: [u32; 2] = [200, 201];

/// Roadside unit whose camera produced the detections.
pub const TABLE2_RSU: StationId = StationId(1000);

/// Vehicle under test of the reference situation.
pub const TABLE2_VUT: StationId = StationId(100);

/// Least-squares position of the VUT from the table's distance column.
pub const TABLE2_VUT_POSITION: GeoPosition = GeoPosition { lat: 49.2339667, lon: 6.9822499 };

/// Kinematics assumed for the VUT; the table does not list them.
pub const TABLE2_VUT_SPEED: f64 = 9.0;
pub const TABLE2_VUT_COURSE: f64 = 95.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    pub id: u32,
    pub classification: ObjectClassification,
    pub position: GeoPosition,
    pub speed: f64,
    pub course: CourseDeg,
    pub distance_m: f64,
    pub tti_obj_ms: i64,
    pub tti_vut_ms: i64,
    /// `None` for `MAX`.
    pub ru: Option<u64>,
}

fn field<T: std::str::FromStr>(s: &str) -> T
where
    T::Err: std::fmt::Debug,
{
    s.parse().expect("well-formed fixture")
}

pub fn table2() -> Vec<Table2Row> {
    TABLE2_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Table2Row {
                id: field(f[0]),
                classification: ObjectClassification::from_label(f[1]).expect("known label"),
                position: GeoPosition {
                    lat: field(f[2]),
                    lon: field(f[3]),
                },
                speed: field(f[4]),
                course: CourseDeg::wrapped(field(f[5])),
                distance_m: field(f[6]),
                tti_obj_ms: field(f[7]),
                tti_vut_ms: field(f[8]),
                ru: (f[9] != "MAX").then(|| field(f[9])),
            }
        })
        .collect()
}

/// The table as V2X extracts generated at `t`: CAMs of the cooperative
/// vehicles plus one CPM of the roadside camera with all other rows.
pub fn table2_extracts(t: u64) -> (Vec<CamExtract>, CpmExtract) {
    let mut cams = Vec::new();
    let mut detections = Vec::new();
    for r in table2() {
        if TABLE2_CAM_STATIONS.contains(&r.id) {
            cams.push(CamExtract {
                originator: StationId(r.id),
                generation_time: t,
                position: r.position,
                speed: r.speed,
                course: r.course,
                classification: r.classification,
            });
        } else {
            detections.push(CpmDetection {
                object_id: r.id,
                classification: r.classification,
                position: r.position,
                speed: r.speed,
                course: r.course,
            });
        }
    }
    let cpm = CpmExtract {
        originator: TABLE2_RSU,
        generation_time: t,
        detections,
    };
    (cams, cpm)
}

/// Everything needed to fuse the reference situation at `t`: the table as
/// extracts plus a GNSS fix and a speed reading of [`TABLE2_VUT`].
pub fn table2_records(t: u64) -> Vec<Record> {
    let (cams, cpm) = table2_extracts(t);
    let mut out: Vec<Record> = cams.into_iter().map(Record::cam).collect();
    out.extend(Record::from_cpm(&cpm));
    out.push(Record::vut_sensor(
        t,
        TABLE2_VUT_POSITION,
        VutReading::Gnss {
            position: TABLE2_VUT_POSITION,
            course: CourseDeg::wrapped(TABLE2_VUT_COURSE),
        },
    ));
    out.push(Record::vut_sensor(
        t,
        TABLE2_VUT_POSITION,
        VutReading::Dynamics {
            speed: TABLE2_VUT_SPEED,
            accel_longitudinal: 0.0,
            accel_lateral: 0.0,
            yaw_rate: 0.0,
            steering_wheel_angle: 0.0,
            steering_wheel_velocity: 0.0,
        },
    ));
    out
}

/// One record of every kind, all VUT sensor groups included, within 100 ms.
pub fn every_kind() -> Vec<Record> {
    let t0 = 1_600_000_000_000;
    let p = GeoPosition { lat: 49.2339473, lon: 6.9828387 };
    vec![
        Record::cam(CamExtract {
            originator: StationId(201),
            generation_time: t0,
            position: p,
            speed: 10.33,
            course: CourseDeg::wrapped(90.0),
            classification: ObjectClassification::PassengerCar,
        }),
        Record::cpm_detection(
            StationId(9000),
            t0 + 20,
            CpmDetection {
                object_id: 47,
                classification: ObjectClassification::Pedestrian,
                position: GeoPosition { lat: 49.2339251, lon: 6.9826933 },
                speed: 1.48,
                course: CourseDeg::wrapped(270.8),
            },
        ),
        Record::spat(
            SpatExtract {
                intersection_id: 12,
                signal_group: 3,
                phase: SignalPhase::Green,
                change_time: t0 + 40,
            },
            p,
        ),
        Record::vut_sensor(
            t0 + 50,
            p,
            VutReading::Dynamics {
                speed: 8.5,
                accel_longitudinal: -1.25,
                accel_lateral: 0.4,
                yaw_rate: -3.5,
                steering_wheel_angle: -45.5,
                steering_wheel_velocity: 120.0,
            },
        ),
        Record::vut_sensor(
            t0 + 50,
            GeoPosition { lat: 49.2339, lon: 6.98227 },
            VutReading::Gnss {
                position: GeoPosition { lat: 49.2339, lon: 6.98227 },
                course: CourseDeg::wrapped(92.5),
            },
        ),
        Record::vut_sensor(
            t0 + 60,
            p,
            VutReading::Body {
                clutch_pressed: true,
                gear: -1,
                door_positions: [DoorPosition::Closed, DoorPosition::Ajar, DoorPosition::Open, DoorPosition::Closed],
                exterior_lights: ExteriorLights(ExteriorLights::LOW_BEAM | ExteriorLights::HAZARD),
            },
        ),
        Record::vut_sensor(
            t0 + 60,
            p,
            VutReading::Brake {
                brake_actuated: true,
                abs_active: false,
                panic_braking: true,
            },
        ),
        Record::vut_sensor(
            t0 + 70,
            p,
            VutReading::Rain {
                rain_intensity: 7,
                wiper_active: true,
            },
        ),
        Record::driver(
            DriverStateSample {
                timestamp: t0 + 80,
                valence: 2,
                arousal: 3,
                heart_rate_bpm: Some(72),
                self_reported: true,
            },
            p,
        ),
        Record::environment(EnvironmentSample {
            timestamp: t0 + 90,
            validity_duration: 3600,
            area_center: p,
            area_radius: 2500.0,
            temperature_c: -3.5,
            precipitation_mm_h: 1.2,
            wind_speed_ms: 4.25,
            wind_direction: CourseDeg::wrapped(225.0),
            illuminance_lux: 12000.5,
            visibility_m: 850.0,
            pressure_hpa: 1013.2,
            humidity_pct: 87.5,
            cloudiness_pct: 100.0,
        }),
        Record::hazard(HazardEvent {
            kind: HazardKind::PanicBraking,
            timestamp: t0 + 100,
            position: p,
            source: StationId(201),
        }),
    ]
}

/// Arbitrary situation with every optional part present at random.
pub fn random_situation(rng: &mut impl Rng) -> SituationRecord {
    let pos = |rng: &mut dyn rand::RngCore| GeoPosition {
        lat: rng.random_range(-89.0..89.0),
        lon: rng.random_range(-179.0..179.0),
    };
    let objects = (0..rng.random_range(0..6))
        .map(|_| FusedObject {
            fused_id: rng.random(),
            classification: ObjectClassification::ALL[rng.random_range(0..10)],
            position: pos(rng),
            speed: rng.random_range(0.0..60.0),
            course: CourseDeg::wrapped(rng.random_range(0.0..360.0)),
            provenance: (0..rng.random_range(1..4))
                .map(|_| Provenance {
                    source: ObservationSource::from_code(rng.random_range(1..=3)).unwrap(),
                    reporter: StationId(rng.random()),
                    object_id: rng.random(),
                })
                .collect(),
            lane_id: rng.random_bool(0.5).then(|| rng.random()),
        })
        .collect();
    let topology = rng.random_bool(0.5).then(|| SituationTopology {
        intersection_id: rng.random(),
        lanes: (0..rng.random_range(0..4))
            .map(|_| PhasedLane {
                lane: MapLane {
                    lane_id: rng.random(),
                    signal_group: rng.random(),
                    polyline: (0..rng.random_range(2..5)).map(|_| pos(rng)).collect(),
                    ingress: rng.random(),
                },
                phase: SignalPhase::from_code(rng.random_range(0..4)),
            })
            .collect(),
    });
    let kinds = every_kind();
    let mut vut = VutSensorExtract {
        timestamp: rng.random_range(0..1 << 50),
        gnss: pos(rng),
        speed: rng.random_range(0.0..50.0),
        ..Default::default()
    };
    for r in &kinds {
        if let RecordBody::VutSensor(v) = r.body {
            if rng.random_bool(0.7) {
                v.apply_to(&mut vut);
            }
        }
    }
    let env = kinds.iter().find_map(|r| match r.body {
        RecordBody::Environment(e) => Some(e),
        _ => None,
    });
    SituationRecord {
        situation_id: 0,
        center: pos(rng),
        radius_m: rng.random_range(1.0..1000.0),
        timestamp: rng.random_range(0..1 << 50),
        vut: StationId(rng.random()),
        objects,
        topology,
        vut_sensor: rng.random_bool(0.7).then_some(vut),
        driver: rng.random_bool(0.7).then(|| DriverStateSample {
            timestamp: rng.random_range(0..1 << 50),
            valence: rng.random_range(1..=5),
            arousal: rng.random_range(1..=5),
            heart_rate_bpm: rng.random_bool(0.5).then(|| rng.random_range(40..200)),
            self_reported: rng.random(),
        }),
        hazards: (0..rng.random_range(0..3))
            .map(|_| HazardEvent {
                kind: HazardKind::from_code(rng.random_range(0..3)),
                timestamp: rng.random_range(0..1 << 50),
                position: pos(rng),
                source: StationId(rng.random()),
            })
            .collect(),
        environment: env.filter(|_| rng.random_bool(0.5)),
    }
}
