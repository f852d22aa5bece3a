//! Raw table rows <-> records.

use rusqlite::{params, Connection, Row, ToSql};

use crate::aggregators::ReceivedRecord;
use crate::geo::{CourseDeg, GeoPosition};
use crate::messages::{
    CamExtract, CpmDetection, DoorPosition, DriverStateSample, EnvironmentSample, ExteriorLights, HazardEvent,
    HazardKind, ObjectClassification, Record, RecordBody, RecordKind, SensorGroup, SignalPhase, SpatExtract,
    StationId, VutReading, DOOR_COUNT,
};

use super::StoreError;

pub(crate) fn table(kind: RecordKind) -> &'static str {
    match kind {
        RecordKind::Cam => "raw_cam",
        RecordKind::CpmDetection => "raw_cpm_detection",
        RecordKind::Spat => "raw_spat",
        RecordKind::VutSensor => "raw_vut_sensor",
        RecordKind::DriverState => "raw_driver",
        RecordKind::Environment => "raw_environment",
        RecordKind::Hazard => "raw_hazard",
    }
}

/// Columns after the common `reporter, receive_time, time, lat, lon` prefix.
fn columns(kind: RecordKind) -> &'static str {
    match kind {
        RecordKind::Cam => "originator, classification, speed, course",
        RecordKind::CpmDetection => "originator, object_id, classification, speed, course",
        RecordKind::Spat => "intersection_id, signal_group, phase",
        RecordKind::VutSensor => {
            "sensor_group, speed, accel_longitudinal, accel_lateral, yaw_rate, steering_wheel_angle, \
             steering_wheel_velocity, brake_actuated, abs_active, panic_braking, course, clutch_pressed, gear, \
             doors, exterior_lights, rain_intensity, wiper_active"
        }
        RecordKind::DriverState => "valence, arousal, heart_rate, self_reported",
        RecordKind::Environment => {
            "valid_until, validity_s, radius_m, temperature_c, precipitation_mm_h, wind_speed_ms, wind_direction, \
             illuminance_lux, visibility_m, pressure_hpa, humidity_pct, cloudiness_pct"
        }
        RecordKind::Hazard => "kind, source",
    }
}

pub(crate) fn select_sql(kind: RecordKind) -> String {
    format!(
        "SELECT reporter, receive_time, time, lat, lon, {} FROM {}",
        columns(kind),
        table(kind)
    )
}

pub(crate) fn pack_doors(doors: &[DoorPosition; DOOR_COUNT]) -> i64 {
    doors
        .iter()
        .enumerate()
        .fold(0, |acc, (i, d)| acc | (i64::from(d.code()) << (2 * i)))
}

pub(crate) fn unpack_doors(v: i64) -> [DoorPosition; DOOR_COUNT] {
    std::array::from_fn(|i| DoorPosition::from_code(((v >> (2 * i)) & 0b11) as u8))
}

pub(crate) fn ms(t: u64) -> i64 {
    i64::try_from(t).unwrap_or(i64::MAX)
}

type Value = Box<dyn ToSql>;

fn body_values(record: &Record) -> Vec<Value> {
    match record.body {
        RecordBody::Cam(c) => vec![
            Box::new(c.originator.0),
            Box::new(c.classification.code()),
            Box::new(c.speed),
            Box::new(c.course.value()),
        ],
        RecordBody::CpmDetection { originator, detection: d } => vec![
            Box::new(originator.0),
            Box::new(d.object_id),
            Box::new(d.classification.code()),
            Box::new(d.speed),
            Box::new(d.course.value()),
        ],
        RecordBody::Spat(s) => vec![
            Box::new(s.intersection_id),
            Box::new(s.signal_group),
            Box::new(s.phase.code()),
        ],
        RecordBody::VutSensor(v) => vut_values(&v),
        RecordBody::DriverState(d) => vec![
            Box::new(d.valence),
            Box::new(d.arousal),
            Box::new(d.heart_rate_bpm),
            Box::new(d.self_reported),
        ],
        RecordBody::Environment(e) => vec![
            Box::new(ms(e.valid_until())),
            Box::new(e.validity_duration),
            Box::new(e.area_radius),
            Box::new(e.temperature_c),
            Box::new(e.precipitation_mm_h),
            Box::new(e.wind_speed_ms),
            Box::new(e.wind_direction.value()),
            Box::new(e.illuminance_lux),
            Box::new(e.visibility_m),
            Box::new(e.pressure_hpa),
            Box::new(e.humidity_pct),
            Box::new(e.cloudiness_pct),
        ],
        RecordBody::Hazard(h) => vec![Box::new(h.kind.code()), Box::new(h.source.0)],
    }
}

fn vut_values(v: &VutReading) -> Vec<Value> {
    let mut out: Vec<Value> = vec![Box::new(v.group().code())];
    let nulls = |n: usize, out: &mut Vec<Value>| (0..n).for_each(|_| out.push(Box::new(None::<i64>)));
    match *v {
        VutReading::Dynamics {
            speed,
            accel_longitudinal,
            accel_lateral,
            yaw_rate,
            steering_wheel_angle,
            steering_wheel_velocity,
        } => {
            for x in [speed, accel_longitudinal, accel_lateral, yaw_rate, steering_wheel_angle, steering_wheel_velocity] {
                out.push(Box::new(x));
            }
            nulls(10, &mut out);
        }
        VutReading::Brake {
            brake_actuated,
            abs_active,
            panic_braking,
        } => {
            nulls(6, &mut out);
            out.push(Box::new(brake_actuated));
            out.push(Box::new(abs_active));
            out.push(Box::new(panic_braking));
            nulls(7, &mut out);
        }
        VutReading::Gnss { course, .. } => {
            nulls(9, &mut out);
            out.push(Box::new(course.value()));
            nulls(6, &mut out);
        }
        VutReading::Body {
            clutch_pressed,
            gear,
            door_positions,
            exterior_lights,
        } => {
            nulls(10, &mut out);
            out.push(Box::new(clutch_pressed));
            out.push(Box::new(gear));
            out.push(Box::new(pack_doors(&door_positions)));
            out.push(Box::new(exterior_lights.0));
            nulls(2, &mut out);
        }
        VutReading::Rain {
            rain_intensity,
            wiper_active,
        } => {
            nulls(14, &mut out);
            out.push(Box::new(rain_intensity));
            out.push(Box::new(wiper_active));
        }
    }
    out
}

/// Inserts unless the message key is already present. Returns 1 if a row was added.
pub(crate) fn insert(conn: &Connection, r: &ReceivedRecord) -> Result<usize, StoreError> {
    let kind = r.record.kind();
    let body = body_values(&r.record);
    let placeholders = vec!["?"; 5 + body.len()].join(", ");
    let sql = format!(
        "INSERT OR IGNORE INTO {} (reporter, receive_time, time, lat, lon, {}) VALUES ({placeholders})",
        table(kind),
        columns(kind)
    );
    let mut stmt = conn.prepare_cached(&sql)?;
    let head: [&dyn ToSql; 5] = [
        &r.reporter.0,
        &ms(r.received_at),
        &ms(r.record.time),
        &r.record.position.lat,
        &r.record.position.lon,
    ];
    let all: Vec<&dyn ToSql> = head.into_iter().chain(body.iter().map(|b| b.as_ref())).collect();
    Ok(stmt.execute(all.as_slice())?)
}

fn course(v: f64) -> CourseDeg {
    CourseDeg::wrapped(v)
}

fn corrupt(what: &str) -> StoreError {
    StoreError::Corrupt(what.to_string())
}

/// Reads a row produced by [`select_sql`].
pub(crate) fn read_row(kind: RecordKind, row: &Row) -> Result<ReceivedRecord, StoreError> {
    let reporter = StationId(row.get(0)?);
    let received_at = row.get::<_, i64>(1)? as u64;
    let time = row.get::<_, i64>(2)? as u64;
    let position = GeoPosition {
        lat: row.get(3)?,
        lon: row.get(4)?,
    };
    let record = match kind {
        RecordKind::Cam => Record::cam(CamExtract {
            originator: StationId(row.get(5)?),
            generation_time: time,
            position,
            speed: row.get(7)?,
            course: course(row.get(8)?),
            classification: ObjectClassification::from_code(row.get(6)?),
        }),
        RecordKind::CpmDetection => Record::cpm_detection(
            StationId(row.get(5)?),
            time,
            CpmDetection {
                object_id: row.get(6)?,
                classification: ObjectClassification::from_code(row.get(7)?),
                position,
                speed: row.get(8)?,
                course: course(row.get(9)?),
            },
        ),
        RecordKind::Spat => Record::spat(
            SpatExtract {
                intersection_id: row.get(5)?,
                signal_group: row.get(6)?,
                phase: SignalPhase::from_code(row.get(7)?),
                change_time: time,
            },
            position,
        ),
        RecordKind::VutSensor => {
            let group = SensorGroup::from_code(row.get(5)?).ok_or_else(|| corrupt("sensor group"))?;
            let reading = match group {
                SensorGroup::Dynamics => VutReading::Dynamics {
                    speed: row.get(6)?,
                    accel_longitudinal: row.get(7)?,
                    accel_lateral: row.get(8)?,
                    yaw_rate: row.get(9)?,
                    steering_wheel_angle: row.get(10)?,
                    steering_wheel_velocity: row.get(11)?,
                },
                SensorGroup::Brake => VutReading::Brake {
                    brake_actuated: row.get(12)?,
                    abs_active: row.get(13)?,
                    panic_braking: row.get(14)?,
                },
                SensorGroup::Gnss => VutReading::Gnss {
                    position,
                    course: course(row.get(15)?),
                },
                SensorGroup::Body => VutReading::Body {
                    clutch_pressed: row.get(16)?,
                    gear: row.get(17)?,
                    door_positions: unpack_doors(row.get(18)?),
                    exterior_lights: ExteriorLights(row.get(19)?),
                },
                SensorGroup::Rain => VutReading::Rain {
                    rain_intensity: row.get(20)?,
                    wiper_active: row.get(21)?,
                },
            };
            Record::vut_sensor(time, position, reading)
        }
        RecordKind::DriverState => Record::driver(
            DriverStateSample {
                timestamp: time,
                valence: row.get(5)?,
                arousal: row.get(6)?,
                heart_rate_bpm: row.get(7)?,
                self_reported: row.get(8)?,
            },
            position,
        ),
        RecordKind::Environment => Record::environment(EnvironmentSample {
            timestamp: time,
            validity_duration: row.get(6)?,
            area_center: position,
            area_radius: row.get(7)?,
            temperature_c: row.get(8)?,
            precipitation_mm_h: row.get(9)?,
            wind_speed_ms: row.get(10)?,
            wind_direction: course(row.get(11)?),
            illuminance_lux: row.get(12)?,
            visibility_m: row.get(13)?,
            pressure_hpa: row.get(14)?,
            humidity_pct: row.get(15)?,
            cloudiness_pct: row.get(16)?,
        }),
        RecordKind::Hazard => Record::hazard(HazardEvent {
            kind: HazardKind::from_code(row.get(5)?),
            timestamp: time,
            position,
            source: StationId(row.get(6)?),
        }),
    };
    Ok(ReceivedRecord {
        record,
        reporter,
        received_at,
    })
}

pub(crate) fn count(conn: &Connection, kind: RecordKind) -> Result<u64, StoreError> {
    let n: i64 = conn.query_row(&format!("SELECT COUNT(*) FROM {}", table(kind)), params![], |r| r.get(0))?;
    Ok(n as u64)
}
