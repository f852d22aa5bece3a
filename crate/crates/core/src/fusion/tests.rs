use super::*;
use crate::fixtures::{table2, table2_records, TABLE2_VUT, TABLE2_VUT_POSITION};
use crate::messages::{CamExtract, CpmDetection, HazardKind, MapLane, MapTopology, Record, SignalPhase, SpatExtract};
use crate::store::MemoryRaw;

const T: u64 = 1_700_000_000_000;
const VUT: StationId = StationId(100);

fn at(records: Vec<Record>, reporter: u32) -> Vec<ReceivedRecord> {
    records
        .into_iter()
        .map(|record| ReceivedRecord {
            record,
            reporter: StationId(reporter),
            received_at: record.time + 5,
        })
        .collect()
}

fn vut_fix(t: u64, p: GeoPosition) -> Vec<Record> {
    vec![
        Record::vut_sensor(
            t,
            p,
            VutReading::Gnss {
                position: p,
                course: CourseDeg::wrapped(90.0),
            },
        ),
        Record::vut_sensor(
            t,
            p,
            VutReading::Dynamics {
                speed: 10.0,
                accel_longitudinal: 0.0,
                accel_lateral: 0.0,
                yaw_rate: 0.0,
                steering_wheel_angle: 0.0,
                steering_wheel_velocity: 0.0,
            },
        ),
    ]
}

fn origin() -> GeoPosition {
    GeoPosition { lat: 49.0, lon: 7.0 }
}

fn cam_at(station: u32, t: u64, p: GeoPosition) -> Record {
    Record::cam(CamExtract {
        originator: StationId(station),
        generation_time: t,
        position: p,
        speed: 0.0,
        course: CourseDeg::wrapped(0.0),
        classification: ObjectClassification::PassengerCar,
    })
}

fn obs(source: ObservationSource, reporter: u32, id: u32, p: GeoPosition, speed: f64, course: f64) -> TrafficObjectObservation {
    TrafficObjectObservation {
        object_id: id,
        classification: ObjectClassification::PassengerCar,
        position: p,
        speed,
        course: CourseDeg::wrapped(course),
        timestamp: T,
        source,
        reporter: StationId(reporter),
    }
}

fn memory(records: Vec<ReceivedRecord>) -> MemoryRaw {
    MemoryRaw {
        records,
        topologies: vec![],
    }
}

#[test]
fn no_fix_is_an_error() {
    let src = memory(vec![]);
    let err = query_window(VUT, T, &src, &FusionConfig::default()).unwrap_err();
    assert!(err.to_string().starts_with("NoVutFix"));
    let far = memory(at(vut_fix(T - 2001, origin()), VUT.0));
    assert!(matches!(
        build_situation(VUT, T, &far, &FusionConfig::default()),
        Err(FusionError::NoVutFix { .. })
    ));
    let edge = memory(at(vut_fix(T - 2000, origin()), VUT.0));
    assert!(query_window(VUT, T, &edge, &FusionConfig::default()).is_ok());
}

#[test]
fn fix_of_another_vehicle_is_ignored() {
    let src = memory(at(vut_fix(T, origin()), 7));
    assert!(query_window(VUT, T, &src, &FusionConfig::default()).is_err());
}

#[test]
fn window_limits() {
    let p = origin();
    let mut records = at(vut_fix(T, p), VUT.0);
    records.extend(at(
        vec![
            cam_at(1, T + 400, advance(p, CourseDeg::wrapped(0.0), 100.0)),
            cam_at(2, T + 600, advance(p, CourseDeg::wrapped(0.0), 100.0)),
            cam_at(3, T, advance(p, CourseDeg::wrapped(0.0), 301.0)),
            cam_at(4, T - 500, advance(p, CourseDeg::wrapped(180.0), 299.0)),
        ],
        50,
    ));
    let w = query_window(VUT, T, &memory(records), &FusionConfig::default()).unwrap();
    let ids: BTreeSet<u32> = w
        .records
        .iter()
        .filter_map(|r| match r.record.body {
            RecordBody::Cam(c) => Some(c.originator.0),
            _ => None,
        })
        .collect();
    assert_eq!(ids, BTreeSet::from([1, 4]));
    assert_eq!(w.fix.time, T);
    assert_eq!(w.fix.speed, 10.0);
}

#[test]
fn nearest_fix_wins_and_ties_go_earlier() {
    let a = GeoPosition { lat: 49.0, lon: 7.0 };
    let b = GeoPosition { lat: 49.001, lon: 7.0 };
    let c = GeoPosition { lat: 49.002, lon: 7.0 };
    let mut records = at(vut_fix(T - 300, a), VUT.0);
    records.extend(at(vut_fix(T + 300, b), VUT.0));
    records.extend(at(vut_fix(T + 900, c), VUT.0));
    let w = query_window(VUT, T, &memory(records), &FusionConfig::default()).unwrap();
    assert_eq!(w.fix.position, a);
}

#[test]
fn only_vut_fix_gives_one_object() {
    let s = build_situation(VUT, T, &memory(at(vut_fix(T, origin()), VUT.0)), &FusionConfig::default()).unwrap();
    assert_eq!(s.objects.len(), 1);
    let o = &s.objects[0];
    assert!(o.is_vut(VUT));
    assert_eq!(o.fused_id, VUT.0);
    assert_eq!(o.position, origin());
    assert_eq!(o.speed, 10.0);
    assert_eq!(s.vut_object(), Some(o));
    assert_eq!(s.center, origin());
    assert!(s.topology.is_none() && s.driver.is_none() && s.environment.is_none() && s.hazards.is_empty());
    let snap = s.vut_sensor.unwrap();
    assert_eq!(snap.gnss, origin());
    assert_eq!(snap.speed, 10.0);
}

#[test]
fn extrapolation_moves_along_course() {
    let o = obs(ObservationSource::CpmDetection, 1, 1, origin(), 10.0, 90.0);
    assert_eq!(extrapolate(&o, T), o);
    let later = extrapolate(&o, T + 500);
    assert_eq!(later.timestamp, T + 500);
    let d = haversine_distance(origin(), later.position);
    assert!((d - 5.0).abs() < 1e-6, "{d}");
    assert!(later.position.lon > origin().lon);
    let earlier = extrapolate(&o, T - 500);
    assert!(earlier.position.lon < origin().lon);
}

#[test]
fn normalize_keeps_nearest_per_source_object() {
    let p = origin();
    let mut records = at(vec![cam_at(1, T - 300, p), cam_at(1, T + 100, p), cam_at(1, T - 100, p)], 50);
    // the same CAM relayed by a second station
    records.extend(at(vec![cam_at(1, T + 100, p)], 51));
    let out = normalize(&records, None, T);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].timestamp, T);
    assert_eq!(out[0].reporter, StationId(1));
}

#[test]
fn merge_single_observation() {
    let o = obs(ObservationSource::CpmDetection, 1000, 47, origin(), 1.5, 270.0);
    let f = merge_group(&[o]).unwrap();
    assert_eq!(f.position, o.position);
    assert_eq!(f.speed, 1.5);
    assert_eq!(f.course, o.course);
    assert_eq!(f.fused_id, 47);
    assert_eq!(f.provenance, vec![Provenance::of(&o)]);
    assert!(matches!(merge_group(&[]), Err(FusionError::EmptyGroup)));
}

#[test]
fn cam_kinematics_win() {
    let cpm = obs(ObservationSource::CpmDetection, 1000, 5, origin(), 8.0, 92.0);
    let cam = obs(
        ObservationSource::CamSelfReport,
        201,
        201,
        advance(origin(), CourseDeg::wrapped(0.0), 1.0),
        9.0,
        90.0,
    );
    let vut = obs(ObservationSource::VutLocalSensor, 100, 100, origin(), 7.0, 91.0);
    let f = merge_group(&[cpm, cam]).unwrap();
    assert_eq!((f.position, f.speed, f.course), (cam.position, cam.speed, cam.course));
    assert_eq!(f.fused_id, 201);
    assert_eq!(f.provenance, vec![Provenance::of(&cam), Provenance::of(&cpm)]);
    let f = merge_group(&[cpm, vut]).unwrap();
    assert_eq!((f.position, f.speed), (vut.position, vut.speed));
    let f = merge_group(&[vut, cpm, cam]).unwrap();
    assert_eq!(f.speed, cam.speed);
}

#[test]
fn detections_are_averaged() {
    let a = obs(ObservationSource::CpmDetection, 1000, 1, origin(), 4.0, 350.0);
    let b = obs(
        ObservationSource::CpmDetection,
        1001,
        9,
        advance(origin(), CourseDeg::wrapped(90.0), 2.0),
        6.0,
        10.0,
    );
    let f = merge_group(&[b, a]).unwrap();
    let mid = advance(origin(), CourseDeg::wrapped(90.0), 1.0);
    assert!(haversine_distance(f.position, mid) < 1e-6);
    assert_eq!(f.speed, 5.0);
    assert!(f.course.value() < 1e-9 || f.course.value() > 360.0 - 1e-9, "{}", f.course.value());
    assert_eq!(f.fused_id, 1);
}

#[test]
fn merged_classification() {
    let mut a = obs(ObservationSource::CpmDetection, 1, 1, origin(), 1.0, 0.0);
    let mut b = a;
    let mut c = a;
    a.classification = ObjectClassification::Unknown;
    b.classification = ObjectClassification::Unknown;
    c.classification = ObjectClassification::Bus;
    assert_eq!(merge_group(&[a, b, c]).unwrap().classification, ObjectClassification::Bus);
    assert_eq!(merge_group(&[a, b]).unwrap().classification, ObjectClassification::Unknown);
    b.classification = ObjectClassification::HeavyTruck;
    let lower = if ObjectClassification::Bus.code() < ObjectClassification::HeavyTruck.code() {
        ObjectClassification::Bus
    } else {
        ObjectClassification::HeavyTruck
    };
    assert_eq!(merge_group(&[b, c]).unwrap().classification, lower);
    a.classification = ObjectClassification::HeavyTruck;
    assert_eq!(merge_group(&[a, b, c]).unwrap().classification, ObjectClassification::HeavyTruck);
}

#[test]
fn dedup_merges_close_matching_observations() {
    let th = SimilarityThresholds::default();
    let cfg = CourseClusterConfig::default();
    let a = obs(ObservationSource::CpmDetection, 1000, 1, origin(), 10.0, 90.0);
    let b = obs(
        ObservationSource::CamSelfReport,
        7,
        7,
        advance(origin(), CourseDeg::wrapped(0.0), 2.0),
        10.5,
        95.0,
    );
    assert_eq!(dedup(&[a, b], &th, &cfg).len(), 1);
    let far = TrafficObjectObservation {
        position: advance(origin(), CourseDeg::wrapped(0.0), 3.0),
        ..b
    };
    assert_eq!(dedup(&[a, far], &th, &cfg).len(), 2);
    let turned = TrafficObjectObservation {
        course: CourseDeg::wrapped(110.0),
        ..b
    };
    assert_eq!(dedup(&[a, turned], &th, &cfg).len(), 2);
    let faster = TrafficObjectObservation { speed: 12.0, ..b };
    assert_eq!(dedup(&[a, faster], &th, &cfg).len(), 2);
    let person = TrafficObjectObservation {
        classification: ObjectClassification::Pedestrian,
        ..b
    };
    assert_eq!(dedup(&[a, person], &th, &cfg).len(), 2);
    let unknown = TrafficObjectObservation {
        classification: ObjectClassification::Unknown,
        ..b
    };
    assert_eq!(dedup(&[a, unknown], &th, &cfg).len(), 1);
}

#[test]
fn dedup_chains_transitively() {
    let th = SimilarityThresholds::default();
    let cfg = CourseClusterConfig::default();
    let chain: Vec<_> = (0..4)
        .map(|i| {
            obs(
                ObservationSource::CpmDetection,
                1000 + i,
                i,
                advance(origin(), CourseDeg::wrapped(90.0), 2.0 * f64::from(i)),
                5.0,
                45.0,
            )
        })
        .collect();
    let out = dedup(&chain, &th, &cfg);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].provenance.len(), 4);
}

fn table2_situation() -> SituationRecord {
    let src = memory(at(table2_records(T), TABLE2_VUT.0));
    build_situation(TABLE2_VUT, T, &src, &FusionConfig::default()).unwrap()
}

#[test]
fn table2_objects_survive_fusion() {
    let s = table2_situation();
    assert_eq!(s.center, TABLE2_VUT_POSITION);
    let others: Vec<&FusedObject> = s.objects.iter().filter(|o| !o.is_vut(TABLE2_VUT)).collect();
    assert_eq!(others.len(), 14);
    assert_eq!(s.objects.len(), 15);
    for row in table2() {
        let o = others.iter().find(|o| o.fused_id == row.id).expect("row present");
        assert_eq!(o.classification, row.classification);
        assert_eq!(o.position, row.position);
        assert_eq!(o.speed, row.speed);
        assert_eq!(o.course, row.course);
        assert_eq!(o.provenance.len(), 1);
    }
}

#[test]
fn fusion_is_deterministic() {
    let a = table2_situation();
    let mut records = at(table2_records(T), TABLE2_VUT.0);
    records.reverse();
    let b = build_situation(TABLE2_VUT, T, &memory(records), &FusionConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fused_situation_is_stored() {
    let mut store = Store::open_in_memory().unwrap();
    store.insert_raw(&at(table2_records(T), TABLE2_VUT.0)).unwrap();
    let from_store = build_situation(TABLE2_VUT, T, &store, &FusionConfig::default()).unwrap();
    assert_eq!(from_store, table2_situation());
    let s = fuse_situation(TABLE2_VUT, T, &mut store, &FusionConfig::default()).unwrap();
    assert!(s.situation_id > 0);
    assert_eq!(store.load_situation(s.situation_id).unwrap(), Some(s));
}

#[test]
fn context_is_attached() {
    let p = origin();
    let lane = MapLane {
        lane_id: 3,
        signal_group: 2,
        polyline: vec![p, advance(p, CourseDeg::wrapped(90.0), 50.0)],
        ingress: true,
    };
    let map = MapTopology {
        intersection_id: 12,
        lanes: vec![lane],
    };
    let mut records = at(vut_fix(T, p), VUT.0);
    let v2x = vec![
        Record::spat(
            SpatExtract {
                intersection_id: 12,
                signal_group: 2,
                phase: SignalPhase::Red,
                change_time: T - 200,
            },
            p,
        ),
        Record::hazard(crate::messages::HazardEvent {
            kind: HazardKind::PanicBraking,
            timestamp: T + 100,
            position: p,
            source: StationId(5),
        }),
        Record::cpm_detection(
            StationId(1000),
            T,
            CpmDetection {
                object_id: 9,
                classification: ObjectClassification::Pedestrian,
                position: advance(p, CourseDeg::wrapped(90.0), 20.0),
                speed: 0.0,
                course: CourseDeg::wrapped(0.0),
            },
        ),
    ];
    records.extend(at(v2x, 1000));
    let mut own = fixtures_driver_and_env(p);
    records.append(&mut own);
    let src = MemoryRaw {
        records,
        topologies: vec![map],
    };
    let s = build_situation(VUT, T, &src, &FusionConfig::default()).unwrap();
    let topo = s.topology.unwrap();
    assert_eq!(topo.intersection_id, 12);
    assert_eq!(topo.lanes[0].phase, SignalPhase::Red);
    assert_eq!(s.hazards.len(), 1);
    assert!(s.objects.iter().all(|o| o.lane_id == Some(3)));
    assert_eq!(s.driver.unwrap().valence, 2);
    assert!(s.environment.is_some());
}

fn fixtures_driver_and_env(p: GeoPosition) -> Vec<ReceivedRecord> {
    let mut out = Vec::new();
    for r in crate::fixtures::every_kind() {
        match r.body {
            RecordBody::DriverState(mut d) => {
                d.timestamp = T - 10_000;
                out.push(Record::driver(d, p));
            }
            RecordBody::Environment(mut e) => {
                e.timestamp = T - 60_000;
                e.area_center = p;
                out.push(Record::environment(e));
            }
            _ => {}
        }
    }
    at(out, VUT.0)
}
