//! Situation tables: one parent row plus linked child rows.

use rusqlite::{params, OptionalExtension, Transaction};

use crate::fusion::{FusedObject, PhasedLane, Provenance, SituationRecord, SituationTopology};
use crate::geo::{CourseDeg, GeoPosition};
use crate::messages::{
    DriverStateSample, EnvironmentSample, ExteriorLights, HazardEvent, HazardKind, MapLane, ObjectClassification,
    ObservationSource, SignalPhase, StationId, VutSensorExtract,
};

use super::raw::{ms, pack_doors, unpack_doors};
use super::StoreError;

pub(crate) fn encode_polyline(points: &[GeoPosition]) -> Vec<u8> {
    points
        .iter()
        .flat_map(|p| p.lat.to_le_bytes().into_iter().chain(p.lon.to_le_bytes()))
        .collect()
}

pub(crate) fn decode_polyline(bytes: &[u8]) -> Result<Vec<GeoPosition>, StoreError> {
    if !bytes.len().is_multiple_of(16) {
        return Err(StoreError::Corrupt("polyline blob length".into()));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| GeoPosition {
            lat: f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
            lon: f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
        })
        .collect())
}

/// Counts child-row writes and fails once the configured budget is spent.
pub(crate) struct FaultBudget(pub Option<usize>);

impl FaultBudget {
    fn step(&mut self) -> Result<(), StoreError> {
        match &mut self.0 {
            Some(0) => Err(StoreError::InjectedFault),
            Some(n) => {
                *n -= 1;
                Ok(())
            }
            None => Ok(()),
        }
    }
}

pub(crate) fn insert(tx: &Transaction, s: &SituationRecord, fault: &mut FaultBudget) -> Result<u64, StoreError> {
    tx.execute(
        "INSERT INTO situation (vut_station, timestamp_ms, center_lat, center_lon, radius_m, intersection_id)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![
            s.vut.0,
            ms(s.timestamp),
            s.center.lat,
            s.center.lon,
            s.radius_m,
            s.topology.as_ref().map(|t| t.intersection_id)
        ],
    )?;
    let id = tx.last_insert_rowid();
    fault.step()?;

    for (seq, o) in s.objects.iter().enumerate() {
        tx.execute(
            "INSERT INTO fused_object (situation_id, seq, fused_id, classification, lat, lon, speed, course, lane_id)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                id,
                seq as i64,
                o.fused_id,
                o.classification.code(),
                o.position.lat,
                o.position.lon,
                o.speed,
                o.course.value(),
                o.lane_id
            ],
        )?;
        fault.step()?;
        for (member, p) in o.provenance.iter().enumerate() {
            tx.execute(
                "INSERT INTO provenance (situation_id, seq, member, source, reporter, source_object_id)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![id, seq as i64, member as i64, p.source.code(), p.reporter.0, p.object_id],
            )?;
            fault.step()?;
        }
    }

    if let Some(t) = &s.topology {
        for (ordinal, l) in t.lanes.iter().enumerate() {
            tx.execute(
                "INSERT INTO topology_lane (situation_id, ordinal, lane_id, signal_group, phase, ingress, polyline)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![
                    id,
                    ordinal as i64,
                    l.lane.lane_id,
                    l.lane.signal_group,
                    l.phase.code(),
                    l.lane.ingress,
                    encode_polyline(&l.lane.polyline)
                ],
            )?;
            fault.step()?;
        }
    }

    if let Some(v) = &s.vut_sensor {
        tx.execute(
            "INSERT INTO vut_sensor (situation_id, timestamp_ms, brake_actuated, abs_active, panic_braking,
                 clutch_pressed, gear, doors, exterior_lights, gnss_lat, gnss_lon, gnss_course, speed,
                 accel_longitudinal, accel_lateral, rain_intensity, wiper_active, yaw_rate, steering_wheel_angle,
                 steering_wheel_velocity)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, ?17, ?18, ?19, ?20)",
            params![
                id,
                ms(v.timestamp),
                v.brake_actuated,
                v.abs_active,
                v.panic_braking,
                v.clutch_pressed,
                v.gear,
                pack_doors(&v.door_positions),
                v.exterior_lights.0,
                v.gnss.lat,
                v.gnss.lon,
                v.gnss_course.value(),
                v.speed,
                v.accel_longitudinal,
                v.accel_lateral,
                v.rain_intensity,
                v.wiper_active,
                v.yaw_rate,
                v.steering_wheel_angle,
                v.steering_wheel_velocity
            ],
        )?;
        fault.step()?;
    }

    if let Some(d) = &s.driver {
        tx.execute(
            "INSERT INTO driver_state (situation_id, timestamp_ms, valence, arousal, heart_rate, self_reported)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![id, ms(d.timestamp), d.valence, d.arousal, d.heart_rate_bpm, d.self_reported],
        )?;
        fault.step()?;
    }

    for (ordinal, h) in s.hazards.iter().enumerate() {
        tx.execute(
            "INSERT INTO hazard (situation_id, ordinal, kind, timestamp_ms, lat, lon, source)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                id,
                ordinal as i64,
                h.kind.code(),
                ms(h.timestamp),
                h.position.lat,
                h.position.lon,
                h.source.0
            ],
        )?;
        fault.step()?;
    }

    if let Some(e) = &s.environment {
        tx.execute(
            "INSERT INTO environment (situation_id, timestamp_ms, validity_s, center_lat, center_lon, radius_m,
                 temperature_c, precipitation_mm_h, wind_speed_ms, wind_direction, illuminance_lux, visibility_m,
                 pressure_hpa, humidity_pct, cloudiness_pct)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15)",
            params![
                id,
                ms(e.timestamp),
                e.validity_duration,
                e.area_center.lat,
                e.area_center.lon,
                e.area_radius,
                e.temperature_c,
                e.precipitation_mm_h,
                e.wind_speed_ms,
                e.wind_direction.value(),
                e.illuminance_lux,
                e.visibility_m,
                e.pressure_hpa,
                e.humidity_pct,
                e.cloudiness_pct
            ],
        )?;
        fault.step()?;
    }
    Ok(id as u64)
}

fn source(code: u8) -> Result<ObservationSource, StoreError> {
    ObservationSource::from_code(code).ok_or_else(|| StoreError::Corrupt(format!("observation source {code}")))
}

pub(crate) fn load(tx: &Transaction, id: u64) -> Result<Option<SituationRecord>, StoreError> {
    let id = id as i64;
    let head = tx
        .query_row(
            "SELECT vut_station, timestamp_ms, center_lat, center_lon, radius_m, intersection_id
             FROM situation WHERE situation_id = ?1",
            params![id],
            |r| {
                Ok((
                    StationId(r.get(0)?),
                    r.get::<_, i64>(1)? as u64,
                    GeoPosition {
                        lat: r.get(2)?,
                        lon: r.get(3)?,
                    },
                    r.get::<_, f64>(4)?,
                    r.get::<_, Option<u32>>(5)?,
                ))
            },
        )
        .optional()?;
    let Some((vut, timestamp, center, radius_m, intersection)) = head else {
        return Ok(None);
    };

    let mut objects = Vec::new();
    {
        let mut stmt = tx.prepare_cached(
            "SELECT seq, fused_id, classification, lat, lon, speed, course, lane_id
             FROM fused_object WHERE situation_id = ?1 ORDER BY seq",
        )?;
        let mut prov = tx.prepare_cached(
            "SELECT source, reporter, source_object_id FROM provenance
             WHERE situation_id = ?1 AND seq = ?2 ORDER BY member",
        )?;
        let mut rows = stmt.query(params![id])?;
        while let Some(r) = rows.next()? {
            let seq: i64 = r.get(0)?;
            let mut provenance = Vec::new();
            let mut prow = prov.query(params![id, seq])?;
            while let Some(p) = prow.next()? {
                provenance.push(Provenance {
                    source: source(p.get(0)?)?,
                    reporter: StationId(p.get(1)?),
                    object_id: p.get(2)?,
                });
            }
            objects.push(FusedObject {
                fused_id: r.get(1)?,
                classification: ObjectClassification::from_code(r.get(2)?),
                position: GeoPosition {
                    lat: r.get(3)?,
                    lon: r.get(4)?,
                },
                speed: r.get(5)?,
                course: CourseDeg::wrapped(r.get(6)?),
                provenance,
                lane_id: r.get(7)?,
            });
        }
    }

    let topology = match intersection {
        None => None,
        Some(intersection_id) => {
            let mut stmt = tx.prepare_cached(
                "SELECT lane_id, signal_group, phase, ingress, polyline FROM topology_lane
                 WHERE situation_id = ?1 ORDER BY ordinal",
            )?;
            let mut lanes = Vec::new();
            let mut rows = stmt.query(params![id])?;
            while let Some(r) = rows.next()? {
                lanes.push(PhasedLane {
                    lane: MapLane {
                        lane_id: r.get(0)?,
                        signal_group: r.get(1)?,
                        polyline: decode_polyline(&r.get::<_, Vec<u8>>(4)?)?,
                        ingress: r.get(3)?,
                    },
                    phase: SignalPhase::from_code(r.get(2)?),
                });
            }
            Some(SituationTopology { intersection_id, lanes })
        }
    };

    let vut_sensor = tx
        .query_row(
            "SELECT timestamp_ms, brake_actuated, abs_active, panic_braking, clutch_pressed, gear, doors,
                 exterior_lights, gnss_lat, gnss_lon, gnss_course, speed, accel_longitudinal, accel_lateral,
                 rain_intensity, wiper_active, yaw_rate, steering_wheel_angle, steering_wheel_velocity
             FROM vut_sensor WHERE situation_id = ?1",
            params![id],
            |r| {
                Ok(VutSensorExtract {
                    timestamp: r.get::<_, i64>(0)? as u64,
                    brake_actuated: r.get(1)?,
                    abs_active: r.get(2)?,
                    panic_braking: r.get(3)?,
                    clutch_pressed: r.get(4)?,
                    gear: r.get(5)?,
                    door_positions: unpack_doors(r.get(6)?),
                    exterior_lights: ExteriorLights(r.get(7)?),
                    gnss: GeoPosition {
                        lat: r.get(8)?,
                        lon: r.get(9)?,
                    },
                    gnss_course: CourseDeg::wrapped(r.get(10)?),
                    speed: r.get(11)?,
                    accel_longitudinal: r.get(12)?,
                    accel_lateral: r.get(13)?,
                    rain_intensity: r.get(14)?,
                    wiper_active: r.get(15)?,
                    yaw_rate: r.get(16)?,
                    steering_wheel_angle: r.get(17)?,
                    steering_wheel_velocity: r.get(18)?,
                })
            },
        )
        .optional()?;

    let driver = tx
        .query_row(
            "SELECT timestamp_ms, valence, arousal, heart_rate, self_reported FROM driver_state
             WHERE situation_id = ?1",
            params![id],
            |r| {
                Ok(DriverStateSample {
                    timestamp: r.get::<_, i64>(0)? as u64,
                    valence: r.get(1)?,
                    arousal: r.get(2)?,
                    heart_rate_bpm: r.get(3)?,
                    self_reported: r.get(4)?,
                })
            },
        )
        .optional()?;

    let hazards = {
        let mut stmt = tx.prepare_cached(
            "SELECT kind, timestamp_ms, lat, lon, source FROM hazard WHERE situation_id = ?1 ORDER BY ordinal",
        )?;
        let rows = stmt.query_map(params![id], |r| {
            Ok(HazardEvent {
                kind: HazardKind::from_code(r.get(0)?),
                timestamp: r.get::<_, i64>(1)? as u64,
                position: GeoPosition {
                    lat: r.get(2)?,
                    lon: r.get(3)?,
                },
                source: StationId(r.get(4)?),
            })
        })?;
        rows.collect::<Result<Vec<_>, _>>()?
    };

    let environment = tx
        .query_row(
            "SELECT timestamp_ms, validity_s, center_lat, center_lon, radius_m, temperature_c, precipitation_mm_h,
                 wind_speed_ms, wind_direction, illuminance_lux, visibility_m, pressure_hpa, humidity_pct,
                 cloudiness_pct
             FROM environment WHERE situation_id = ?1",
            params![id],
            |r| {
                Ok(EnvironmentSample {
                    timestamp: r.get::<_, i64>(0)? as u64,
                    validity_duration: r.get(1)?,
                    area_center: GeoPosition {
                        lat: r.get(2)?,
                        lon: r.get(3)?,
                    },
                    area_radius: r.get(4)?,
                    temperature_c: r.get(5)?,
                    precipitation_mm_h: r.get(6)?,
                    wind_speed_ms: r.get(7)?,
                    wind_direction: CourseDeg::wrapped(r.get(8)?),
                    illuminance_lux: r.get(9)?,
                    visibility_m: r.get(10)?,
                    pressure_hpa: r.get(11)?,
                    humidity_pct: r.get(12)?,
                    cloudiness_pct: r.get(13)?,
                })
            },
        )
        .optional()?;

    Ok(Some(SituationRecord {
        situation_id: id as u64,
        center,
        radius_m,
        timestamp,
        vut,
        objects,
        topology,
        vut_sensor,
        driver,
        hazards,
        environment,
    }))
}
