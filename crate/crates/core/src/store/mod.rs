//! Situation database on an embedded SQLite file.
//!
//! Raw tables receive decoded batches and ignore records whose message key
//! is already stored. Fused situations are written in one transaction over
//! the parent and all child tables. The DDL is in `schema.sql`.

mod raw;
mod situation;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rusqlite::{params, Connection, TransactionBehavior};
use serde::Serialize;
use thiserror::Error;

use crate::aggregators::ReceivedRecord;
use crate::fusion::SituationRecord;
use crate::geo::{haversine_distance, GeoPosition, EARTH_RADIUS_M};
use crate::messages::{EnvironmentSample, MapLane, MapTopology, RecordBody, RecordKind, StationId, TimestampMs};

use situation::FaultBudget;

pub const SCHEMA: &str = include_str!("schema.sql");

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] rusqlite::Error),
    #[error("injected fault")]
    InjectedFault,
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

/// Filter for [`RawSource::query_raw`]. Both time bounds are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuery {
    pub t_min: TimestampMs,
    pub t_max: TimestampMs,
    /// Center and radius in meters.
    pub area: Option<(GeoPosition, f64)>,
    pub kinds: BTreeSet<RecordKind>,
    /// Forwarding station.
    pub reporter: Option<StationId>,
}

impl RawQuery {
    pub fn new(t_min: TimestampMs, t_max: TimestampMs, kinds: impl IntoIterator<Item = RecordKind>) -> Self {
        RawQuery {
            t_min,
            t_max,
            area: None,
            kinds: kinds.into_iter().collect(),
            reporter: None,
        }
    }

    pub fn within(mut self, center: GeoPosition, radius_m: f64) -> Self {
        self.area = Some((center, radius_m));
        self
    }

    pub fn from_reporter(mut self, reporter: StationId) -> Self {
        self.reporter = Some(reporter);
        self
    }

    pub fn matches(&self, r: &ReceivedRecord) -> bool {
        self.kinds.contains(&r.record.kind())
            && (self.t_min..=self.t_max).contains(&r.record.time)
            && self.reporter.is_none_or(|s| s == r.reporter)
            && self
                .area
                .is_none_or(|(c, radius)| haversine_distance(c, r.record.position) <= radius)
    }
}

/// Raw rows in ascending time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawSlice {
    pub records: Vec<ReceivedRecord>,
}

impl RawSlice {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Read access to raw data, implemented by [`Store`] and [`MemoryRaw`].
pub trait RawSource {
    fn query_raw(&self, q: &RawQuery) -> Result<RawSlice, StoreError>;
    /// Environment samples whose validity window contains `t`.
    fn environment_at(&self, t: TimestampMs) -> Result<Vec<EnvironmentSample>, StoreError>;
    fn topologies(&self) -> Result<Vec<MapTopology>, StoreError>;
}

/// In-memory raw source that filters by full scan.
#[derive(Debug, Clone, Default)]
pub struct MemoryRaw {
    pub records: Vec<ReceivedRecord>,
    pub topologies: Vec<MapTopology>,
}

impl RawSource for MemoryRaw {
    fn query_raw(&self, q: &RawQuery) -> Result<RawSlice, StoreError> {
        let mut records: Vec<_> = self.records.iter().filter(|r| q.matches(r)).copied().collect();
        records.sort_by_key(|r| r.record.time);
        Ok(RawSlice { records })
    }

    fn environment_at(&self, t: TimestampMs) -> Result<Vec<EnvironmentSample>, StoreError> {
        Ok(self
            .records
            .iter()
            .filter_map(|r| match r.record.body {
                RecordBody::Environment(e) if e.timestamp <= t && t <= e.valid_until() => Some(e),
                _ => None,
            })
            .collect())
    }

    fn topologies(&self) -> Result<Vec<MapTopology>, StoreError> {
        Ok(self.topologies.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SituationSummary {
    pub situation_id: u64,
    pub vut: StationId,
    pub timestamp: TimestampMs,
    pub center: GeoPosition,
    pub object_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub raw: BTreeMap<RecordKind, u64>,
    pub situations: u64,
    pub map_lanes: u64,
}

impl StoreStats {
    pub fn raw_total(&self) -> u64 {
        self.raw.values().sum()
    }
}

pub struct Store {
    conn: Connection,
    fault: Option<usize>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.conn.path()).finish()
    }
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.busy_timeout(std::time::Duration::from_secs(10))?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn, fault: None })
    }

    /// Makes the next situation write fail after `writes` successful row inserts.
    /// Used to check that failed writes leave nothing behind.
    pub fn inject_fault_after(&mut self, writes: Option<usize>) {
        self.fault = writes;
    }

    /// Stores raw records; those whose message key is present are skipped.
    /// Returns the number of new rows.
    pub fn insert_raw(&mut self, records: &[ReceivedRecord]) -> Result<usize, StoreError> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let mut added = 0;
        for r in records {
            added += raw::insert(&tx, r)?;
        }
        tx.commit()?;
        Ok(added)
    }

    /// Replaces the stored topology of `map.intersection_id`.
    pub fn put_topology(&mut self, map: &MapTopology) -> Result<(), StoreError> {
        let tx = self.conn.transaction()?;
        tx.execute("DELETE FROM map_lane WHERE intersection_id = ?1", params![map.intersection_id])?;
        for (ordinal, l) in map.lanes.iter().enumerate() {
            tx.execute(
                "INSERT INTO map_lane (intersection_id, ordinal, lane_id, signal_group, ingress, polyline)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    map.intersection_id,
                    ordinal as i64,
                    l.lane_id,
                    l.signal_group,
                    l.ingress,
                    situation::encode_polyline(&l.polyline)
                ],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    /// Writes the situation and all linked rows atomically; `s.situation_id`
    /// is ignored and a fresh ascending id is returned.
    pub fn persist_situation(&mut self, s: &SituationRecord) -> Result<u64, StoreError> {
        let mut budget = FaultBudget(self.fault.take());
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let id = situation::insert(&tx, s, &mut budget)?;
        tx.commit()?;
        Ok(id)
    }

    pub fn load_situation(&mut self, id: u64) -> Result<Option<SituationRecord>, StoreError> {
        let tx = self.conn.transaction()?;
        let s = situation::load(&tx, id)?;
        tx.commit()?;
        Ok(s)
    }

    /// Situations ordered by timestamp, then id; bounds inclusive.
    pub fn list_situations(
        &self,
        vut: Option<StationId>,
        t_min: Option<TimestampMs>,
        t_max: Option<TimestampMs>,
    ) -> Result<Vec<SituationSummary>, StoreError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT s.situation_id, s.vut_station, s.timestamp_ms, s.center_lat, s.center_lon,
                    (SELECT COUNT(*) FROM fused_object f WHERE f.situation_id = s.situation_id)
             FROM situation s
             WHERE (?1 IS NULL OR s.vut_station = ?1)
               AND (?2 IS NULL OR s.timestamp_ms >= ?2)
               AND (?3 IS NULL OR s.timestamp_ms <= ?3)
             ORDER BY s.timestamp_ms, s.situation_id",
        )?;
        let rows = stmt.query_map(
            params![vut.map(|v| v.0), t_min.map(raw::ms), t_max.map(raw::ms)],
            |r| {
                Ok(SituationSummary {
                    situation_id: r.get::<_, i64>(0)? as u64,
                    vut: StationId(r.get(1)?),
                    timestamp: r.get::<_, i64>(2)? as u64,
                    center: GeoPosition {
                        lat: r.get(3)?,
                        lon: r.get(4)?,
                    },
                    object_count: r.get::<_, i64>(5)? as usize,
                })
            },
        )?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn stats(&self) -> Result<StoreStats, StoreError> {
        let mut raw = BTreeMap::new();
        for kind in RecordKind::ALL {
            raw.insert(kind, raw::count(&self.conn, kind)?);
        }
        let count = |sql: &str| -> Result<u64, StoreError> {
            Ok(self.conn.query_row(sql, [], |r| r.get::<_, i64>(0))? as u64)
        };
        Ok(StoreStats {
            raw,
            situations: count("SELECT COUNT(*) FROM situation")?,
            map_lanes: count("SELECT COUNT(*) FROM map_lane")?,
        })
    }

    /// Child rows whose situation (or fused object) no longer exists.
    pub fn orphan_rows(&self) -> Result<u64, StoreError> {
        let mut total = 0u64;
        for t in ["fused_object", "topology_lane", "vut_sensor", "driver_state", "hazard", "environment"] {
            let sql = format!("SELECT COUNT(*) FROM {t} WHERE situation_id NOT IN (SELECT situation_id FROM situation)");
            total += self.conn.query_row(&sql, [], |r| r.get::<_, i64>(0))? as u64;
        }
        total += self.conn.query_row(
            "SELECT COUNT(*) FROM provenance p WHERE NOT EXISTS
                 (SELECT 1 FROM fused_object f WHERE f.situation_id = p.situation_id AND f.seq = p.seq)",
            [],
            |r| r.get::<_, i64>(0),
        )? as u64;
        Ok(total)
    }

    /// Total row count over all situation tables.
    pub fn situation_rows(&self) -> Result<u64, StoreError> {
        let mut total = 0u64;
        for t in [
            "situation",
            "fused_object",
            "provenance",
            "topology_lane",
            "vut_sensor",
            "driver_state",
            "hazard",
            "environment",
        ] {
            total += self.conn.query_row(&format!("SELECT COUNT(*) FROM {t}"), [], |r| r.get::<_, i64>(0))? as u64;
        }
        Ok(total)
    }
}

/// Conservative lat/lon box around a circle.
fn bounding_box(center: GeoPosition, radius_m: f64) -> (f64, f64, f64, f64) {
    let dlat = (radius_m / EARTH_RADIUS_M).to_degrees() * 1.01 + 1e-9;
    let cos = (center.lat.abs() + dlat).min(90.0).to_radians().cos();
    let dlon = if cos > 1e-6 { (dlat / cos).min(360.0) } else { 360.0 };
    let (lon0, lon1) = (center.lon - dlon, center.lon + dlon);
    if lon0 < -180.0 || lon1 > 180.0 {
        return (center.lat - dlat, center.lat + dlat, -180.0, 180.0);
    }
    (center.lat - dlat, center.lat + dlat, lon0, lon1)
}

impl RawSource for Store {
    fn query_raw(&self, q: &RawQuery) -> Result<RawSlice, StoreError> {
        let mut records = Vec::new();
        let (lat0, lat1, lon0, lon1) = match q.area {
            Some((c, r)) => bounding_box(c, r),
            None => (-90.0, 90.0, -180.0, 180.0),
        };
        for &kind in &q.kinds {
            let sql = format!(
                "{} WHERE time BETWEEN ?1 AND ?2 AND (?3 IS NULL OR reporter = ?3)
                   AND lat BETWEEN ?4 AND ?5 AND lon BETWEEN ?6 AND ?7
                 ORDER BY time, id",
                raw::select_sql(kind)
            );
            let mut stmt = self.conn.prepare_cached(&sql)?;
            let mut rows = stmt.query(params![
                raw::ms(q.t_min),
                raw::ms(q.t_max),
                q.reporter.map(|s| s.0),
                lat0,
                lat1,
                lon0,
                lon1
            ])?;
            while let Some(row) = rows.next()? {
                let r = raw::read_row(kind, row)?;
                if q.matches(&r) {
                    records.push(r);
                }
            }
        }
        records.sort_by_key(|r| r.record.time);
        Ok(RawSlice { records })
    }

    fn environment_at(&self, t: TimestampMs) -> Result<Vec<EnvironmentSample>, StoreError> {
        let sql = format!(
            "{} WHERE time <= ?1 AND valid_until >= ?1 ORDER BY time, id",
            raw::select_sql(RecordKind::Environment)
        );
        let mut stmt = self.conn.prepare_cached(&sql)?;
        let mut rows = stmt.query(params![raw::ms(t)])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            if let RecordBody::Environment(e) = raw::read_row(RecordKind::Environment, row)?.record.body {
                out.push(e);
            }
        }
        Ok(out)
    }

    fn topologies(&self) -> Result<Vec<MapTopology>, StoreError> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT intersection_id, lane_id, signal_group, ingress, polyline FROM map_lane
             ORDER BY intersection_id, ordinal",
        )?;
        let mut rows = stmt.query([])?;
        let mut out: Vec<MapTopology> = Vec::new();
        while let Some(r) = rows.next()? {
            let id: u32 = r.get(0)?;
            let lane = MapLane {
                lane_id: r.get(1)?,
                signal_group: r.get(2)?,
                polyline: situation::decode_polyline(&r.get::<_, Vec<u8>>(4)?)?,
                ingress: r.get(3)?,
            };
            match out.last_mut() {
                Some(m) if m.intersection_id == id => m.lanes.push(lane),
                _ => out.push(MapTopology {
                    intersection_id: id,
                    lanes: vec![lane],
                }),
            }
        }
        Ok(out)
    }
}
