//! Client-side aggregators and the backend duplicate filter.
//!
//! Each client aggregator owns a [`LocalStore`] of pending records for one
//! station. [`flush`] packs the store into batches and hands them to a
//! [`Transport`]; only acknowledged batches leave the store, so a failed
//! link never loses data. Retransmissions are harmless because the backend
//! drops repeated [`MessageKey`]s.

mod transport;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, GeoPosition};
use crate::messages::{
    CamExtract, CpmExtract, DriverStateSample, EnvironmentSample, HazardEvent, MapTopology, Record, RecordBody,
    RecordKind, SensorGroup, SpatExtract, StationId, TimestampMs, VutReading, VutSensorExtract,
};
use crate::wire::{decode_records, encode_batch, plan_batches, BatchEnvelope, WireError};

pub use transport::{FileTransport, TcpTransport, Transport, TransportError, ACK, NAK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregatorError {
    #[error("transmit period for {0:?} must be positive")]
    NonPositivePeriod(SensorGroup),
    #[error("collective perception extract carries no detections")]
    EmptyDetectionList,
}

/// Transmit period per sensor field group, in milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitSchedule {
    periods: BTreeMap<SensorGroup, u64>,
}

impl Default for TransmitSchedule {
    fn default() -> Self {
        let periods = BTreeMap::from([
            (SensorGroup::Dynamics, 100),
            (SensorGroup::Brake, 100),
            (SensorGroup::Gnss, 200),
            (SensorGroup::Body, 1000),
            (SensorGroup::Rain, 5000),
        ]);
        TransmitSchedule { periods }
    }
}

impl TransmitSchedule {
    /// Groups missing from `periods` keep their default period.
    pub fn new(periods: impl IntoIterator<Item = (SensorGroup, u64)>) -> Result<Self, AggregatorError> {
        let mut schedule = TransmitSchedule::default();
        for (group, period) in periods {
            if period == 0 {
                return Err(AggregatorError::NonPositivePeriod(group));
            }
            schedule.periods.insert(group, period);
        }
        Ok(schedule)
    }

    pub fn period(&self, group: SensorGroup) -> u64 {
        self.periods[&group]
    }

    pub fn iter(&self) -> impl Iterator<Item = (SensorGroup, u64)> + '_ {
        self.periods.iter().map(|(g, p)| (*g, *p))
    }
}

/// Pending records of one station, ordered by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalStore {
    pending: Vec<Record>,
    high_water: TimestampMs,
}

impl LocalStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Record) {
        // stable for equal times: new records go after existing ones
        let at = self.pending.partition_point(|r| r.time <= record.time);
        self.pending.insert(at, record);
        self.high_water = self.high_water.max(record.time);
    }

    pub fn records(&self) -> &[Record] {
        &self.pending
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Latest record time ever queued.
    pub fn high_water(&self) -> TimestampMs {
        self.high_water
    }

    fn drop_front(&mut self, n: usize) {
        self.pending.drain(..n);
    }
}

/// Identity of a logical message, independent of who forwarded it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageKey {
    pub generation_time: TimestampMs,
    pub originator: StationId,
    pub kind: RecordKind,
    /// Detection id for CPM, signal group for SPAT, sensor group for VUT
    /// readings, hazard kind for hazards; zero otherwise.
    pub object_id: u32,
}

impl MessageKey {
    /// `reporter` stands in as originator for data that has none of its own
    /// (VUT sensors, driver state, environment).
    pub fn of(record: &Record, reporter: StationId) -> Self {
        let (originator, object_id) = match &record.body {
            RecordBody::Cam(c) => (c.originator, 0),
            RecordBody::CpmDetection { originator, detection } => (*originator, detection.object_id),
            RecordBody::Spat(s) => (StationId(s.intersection_id), u32::from(s.signal_group)),
            RecordBody::VutSensor(r) => (reporter, u32::from(r.group().code())),
            RecordBody::DriverState(_) | RecordBody::Environment(_) => (reporter, 0),
            RecordBody::Hazard(h) => (h.source, u32::from(h.kind.code())),
        };
        MessageKey {
            generation_time: record.time,
            originator,
            kind: record.kind(),
            object_id,
        }
    }
}

/// A record as it arrived at the backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceivedRecord {
    pub record: Record,
    /// Station whose aggregator forwarded the record.
    pub reporter: StationId,
    pub received_at: TimestampMs,
}

impl ReceivedRecord {
    pub fn key(&self) -> MessageKey {
        MessageKey::of(&self.record, self.reporter)
    }
}

/// Records of a batch as the backend sees them. The sending station is the
/// reporter; the batch counts as received at the time of its newest record.
pub fn receive(e: &BatchEnvelope) -> Result<Vec<ReceivedRecord>, WireError> {
    let records = decode_records(e)?;
    let received_at = records.iter().map(|r| r.time).max().unwrap_or(e.meta.ref_time);
    Ok(records
        .into_iter()
        .map(|record| ReceivedRecord {
            record,
            reporter: e.meta.station,
            received_at,
        })
        .collect())
}

/// V2X input of a traffic data aggregator client.
#[derive(Debug, Clone, PartialEq)]
pub enum V2xMessage {
    Cam(CamExtract),
    Cpm(CpmExtract),
    Spat { spat: SpatExtract, observed_at: GeoPosition },
    Denm(HazardEvent),
    Map(MapTopology),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Queued(usize),
    /// Topology goes to the static store, never into a batch.
    StaticTopology,
}

/// Outcome of one flush attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum FlushOutcome {
    Success { batches: usize, records: usize },
    /// Batches before the failing one were acknowledged and removed; the rest stay queued.
    Failed {
        delivered_batches: usize,
        delivered_records: usize,
        error: TransportError,
    },
}

impl FlushOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, FlushOutcome::Success { .. })
    }
}

/// Packs `local` into batches and sends them in order. Acknowledged records
/// are removed; the first failure stops the flush and leaves the remaining
/// records untouched.
pub fn flush(local: &mut LocalStore, station: StationId, transport: &mut dyn Transport) -> FlushOutcome {
    if local.is_empty() {
        return FlushOutcome::Success { batches: 0, records: 0 };
    }
    let batches = match plan_batches(local.records(), station) {
        Ok(b) => b,
        Err(e) => return wire_failure(e),
    };
    let mut sent_records = 0;
    for (i, batch) in batches.iter().enumerate() {
        let bytes = match encode_batch(batch) {
            Ok(b) => b,
            Err(e) => {
                local.drop_front(sent_records);
                return FlushOutcome::Failed {
                    delivered_batches: i,
                    delivered_records: sent_records,
                    error: TransportError::Encoding(e.to_string()),
                };
            }
        };
        if let Err(error) = transport.send(&bytes) {
            local.drop_front(sent_records);
            return FlushOutcome::Failed {
                delivered_batches: i,
                delivered_records: sent_records,
                error,
            };
        }
        sent_records += batch.records.len();
    }
    local.drop_front(sent_records);
    FlushOutcome::Success {
        batches: batches.len(),
        records: sent_records,
    }
}

fn wire_failure(e: WireError) -> FlushOutcome {
    FlushOutcome::Failed {
        delivered_batches: 0,
        delivered_records: 0,
        error: TransportError::Encoding(e.to_string()),
    }
}

/// Periodic flushing shared by all client aggregators.
#[derive(Debug, Clone)]
pub struct FlushTimer {
    /// May be changed at any time, e.g. on poor reception.
    pub interval_ms: u64,
    last_flush: Option<TimestampMs>,
}

impl FlushTimer {
    pub fn new(interval_ms: u64) -> Self {
        FlushTimer {
            interval_ms,
            last_flush: None,
        }
    }

    pub fn due(&self, now: TimestampMs) -> bool {
        self.last_flush.is_none_or(|t| now >= t + self.interval_ms)
    }

    pub fn mark(&mut self, now: TimestampMs) {
        self.last_flush = Some(now);
    }
}

/// Traffic data aggregator client: V2X messages sent or received by one station.
#[derive(Debug, Clone)]
pub struct Tdac {
    pub station: StationId,
    pub store: LocalStore,
    pub timer: FlushTimer,
    topologies: BTreeMap<u32, MapTopology>,
}

impl Tdac {
    pub fn new(station: StationId) -> Self {
        Tdac {
            station,
            store: LocalStore::new(),
            timer: FlushTimer::new(1000),
            topologies: BTreeMap::new(),
        }
    }

    pub fn ingest(&mut self, msg: V2xMessage) -> Result<IngestOutcome, AggregatorError> {
        tdac_ingest(msg, &mut self.store, &mut self.topologies)
    }

    pub fn topologies(&self) -> impl Iterator<Item = &MapTopology> {
        self.topologies.values()
    }

    pub fn flush(&mut self, now: TimestampMs, transport: &mut dyn Transport) -> FlushOutcome {
        self.timer.mark(now);
        flush(&mut self.store, self.station, transport)
    }
}

/// Queues a received V2X extract. The receiving station is the store's owner
/// and becomes the batch's station identity.
pub fn tdac_ingest(
    msg: V2xMessage,
    local: &mut LocalStore,
    topologies: &mut BTreeMap<u32, MapTopology>,
) -> Result<IngestOutcome, AggregatorError> {
    let queued = match msg {
        V2xMessage::Cam(c) => {
            local.push(Record::cam(c));
            1
        }
        V2xMessage::Cpm(c) => {
            if c.detections.is_empty() {
                return Err(AggregatorError::EmptyDetectionList);
            }
            let records = Record::from_cpm(&c);
            let n = records.len();
            records.into_iter().for_each(|r| local.push(r));
            n
        }
        V2xMessage::Spat { spat, observed_at } => {
            local.push(Record::spat(spat, observed_at));
            1
        }
        V2xMessage::Denm(h) => {
            local.push(Record::hazard(h));
            1
        }
        V2xMessage::Map(m) => {
            topologies.insert(m.intersection_id, m);
            return Ok(IngestOutcome::StaticTopology);
        }
    };
    Ok(IngestOutcome::Queued(queued))
}

/// Vehicle data aggregator: samples sensor groups at their own periods.
#[derive(Debug, Clone)]
pub struct Vda {
    pub station: StationId,
    pub schedule: TransmitSchedule,
    pub store: LocalStore,
    pub timer: FlushTimer,
    last_emit: BTreeMap<SensorGroup, TimestampMs>,
}

impl Vda {
    pub fn new(station: StationId, schedule: TransmitSchedule) -> Self {
        Vda {
            station,
            schedule,
            store: LocalStore::new(),
            timer: FlushTimer::new(5000),
            last_emit: BTreeMap::new(),
        }
    }

    /// Returns the number of group samples queued by this tick.
    pub fn tick(&mut self, now: TimestampMs, sensors: &VutSensorExtract) -> usize {
        vda_tick(now, sensors, &self.schedule, &mut self.last_emit, &mut self.store)
    }

    pub fn flush(&mut self, now: TimestampMs, transport: &mut dyn Transport) -> FlushOutcome {
        self.timer.mark(now);
        flush(&mut self.store, self.station, transport)
    }
}

/// Samples each group whose period has elapsed since its last emission
/// (boundary inclusive; the first tick emits every group).
pub fn vda_tick(
    now: TimestampMs,
    sensors: &VutSensorExtract,
    schedule: &TransmitSchedule,
    last_emit: &mut BTreeMap<SensorGroup, TimestampMs>,
    local: &mut LocalStore,
) -> usize {
    let mut emitted = 0;
    for (group, period) in schedule.iter() {
        let due = last_emit.get(&group).is_none_or(|&last| now >= last + period);
        if due {
            local.push(Record::vut_sensor(now, sensors.gnss, VutReading::sample(group, sensors)));
            last_emit.insert(group, now);
            emitted += 1;
        }
    }
    emitted
}

/// Driver-related data aggregator.
#[derive(Debug, Clone)]
pub struct Dda {
    pub station: StationId,
    pub store: LocalStore,
    pub timer: FlushTimer,
}

impl Dda {
    pub fn new(station: StationId) -> Self {
        Dda {
            station,
            store: LocalStore::new(),
            timer: FlushTimer::new(5000),
        }
    }

    /// `position` is the vehicle position at sampling time.
    pub fn record(&mut self, sample: DriverStateSample, position: GeoPosition) {
        self.store.push(Record::driver(sample, position));
    }

    pub fn flush(&mut self, now: TimestampMs, transport: &mut dyn Transport) -> FlushOutcome {
        self.timer.mark(now);
        flush(&mut self.store, self.station, transport)
    }
}

/// Environment data aggregator (weather, mostly).
#[derive(Debug, Clone, Default)]
pub struct EnvironmentAggregator {
    pub samples: Vec<EnvironmentSample>,
}

impl EnvironmentAggregator {
    pub fn add(&mut self, s: EnvironmentSample) {
        self.samples.push(s);
    }

    pub fn lookup(&self, time: TimestampMs, position: GeoPosition) -> Option<&EnvironmentSample> {
        environment_for(time, position, &self.samples)
    }
}

/// The sample valid at `time` whose area contains `position`; the most
/// recent one wins when several apply.
pub fn environment_for(
    time: TimestampMs,
    position: GeoPosition,
    samples: &[EnvironmentSample],
) -> Option<&EnvironmentSample> {
    samples
        .iter()
        .filter(|s| s.timestamp <= time && time <= s.valid_until())
        .filter(|s| haversine_distance(s.area_center, position) <= s.area_radius)
        .fold(None, |best: Option<&EnvironmentSample>, s| match best {
            Some(b) if b.timestamp >= s.timestamp => Some(b),
            _ => Some(s),
        })
}

/// Drops repeated messages forwarded by several stations, keeping the copy
/// received first. Output is ordered by generation time, then originator.
pub fn backend_dedup(messages: Vec<ReceivedRecord>) -> Vec<ReceivedRecord> {
    let mut best: HashMap<MessageKey, ReceivedRecord> = HashMap::with_capacity(messages.len());
    for m in messages {
        let key = m.key();
        match best.get(&key) {
            Some(kept) if kept.received_at <= m.received_at => {}
            _ => {
                best.insert(key, m);
            }
        }
    }
    let mut out: Vec<(MessageKey, ReceivedRecord)> = best.into_iter().collect();
    out.sort_by_key(|(k, _)| *k);
    out.into_iter().map(|(_, r)| r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::CourseDeg;
    use crate::messages::ObjectClassification;
    use std::collections::BTreeSet;

    fn pos(lat: f64, lon: f64) -> GeoPosition {
        GeoPosition::new(lat, lon).unwrap()
    }

    fn cam(station: u32, t: u64) -> CamExtract {
        CamExtract {
            originator: StationId(station),
            generation_time: t,
            position: pos(49.2339473, 6.9828387),
            speed: 10.33,
            course: CourseDeg::new(90.0).unwrap(),
            classification: ObjectClassification::PassengerCar,
        }
    }

    struct Recorder(Vec<Vec<u8>>);
    impl Transport for Recorder {
        fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
            self.0.push(frame.to_vec());
            Ok(())
        }
    }

    struct Down;
    impl Transport for Down {
        fn send(&mut self, _: &[u8]) -> Result<(), TransportError> {
            Err(TransportError::Rejected)
        }
    }

    #[test]
    fn tdac_queues_cam_with_receiver_identity() {
        let mut rsu = Tdac::new(StationId(7));
        assert_eq!(rsu.ingest(V2xMessage::Cam(cam(201, 1000))).unwrap(), IngestOutcome::Queued(1));
        let mut t = Recorder(vec![]);
        assert!(rsu.flush(1000, &mut t).is_success());
        let env = crate::wire::decode_batch(&t.0[0]).unwrap();
        assert_eq!(env.meta.station, StationId(7));
    }

    #[test]
    fn tdac_keeps_map_out_of_the_queue() {
        let mut rsu = Tdac::new(StationId(7));
        let map = MapTopology {
            intersection_id: 1,
            lanes: vec![],
        };
        assert_eq!(rsu.ingest(V2xMessage::Map(map)).unwrap(), IngestOutcome::StaticTopology);
        assert!(rsu.store.is_empty());
        assert_eq!(rsu.topologies().count(), 1);
    }

    #[test]
    fn same_cam_at_two_receivers_is_queued_twice() {
        let mut a = Tdac::new(StationId(7));
        let mut b = Tdac::new(StationId(8));
        a.ingest(V2xMessage::Cam(cam(201, 1000))).unwrap();
        b.ingest(V2xMessage::Cam(cam(201, 1000))).unwrap();
        assert_eq!(a.store.len() + b.store.len(), 2);
    }

    #[test]
    fn vda_respects_periods() {
        let mut vda = Vda::new(StationId(1), TransmitSchedule::default());
        let s = VutSensorExtract::default();
        assert_eq!(vda.tick(0, &s), 5);
        assert_eq!(vda.tick(50, &s), 0);
        // boundary inclusive
        assert_eq!(vda.tick(100, &s), 2);
        let dynamics = vda
            .store
            .records()
            .iter()
            .filter(|r| matches!(r.body, RecordBody::VutSensor(VutReading::Dynamics { .. })))
            .count();
        assert_eq!(dynamics, 2);
    }

    #[test]
    fn vda_sixty_second_drive_counts() {
        let mut vda = Vda::new(StationId(1), TransmitSchedule::default());
        let s = VutSensorExtract::default();
        let duration = 60_000;
        for now in (0..=duration).step_by(10) {
            vda.tick(now, &s);
        }
        for (group, period) in TransmitSchedule::default().iter() {
            let n = vda
                .store
                .records()
                .iter()
                .filter(|r| matches!(r.body, RecordBody::VutSensor(v) if v.group() == group))
                .count() as u64;
            assert_eq!(n, duration / period + 1, "{group:?}");
        }
    }

    #[test]
    fn zero_period_rejected() {
        assert_eq!(
            TransmitSchedule::new([(SensorGroup::Rain, 0)]),
            Err(AggregatorError::NonPositivePeriod(SensorGroup::Rain))
        );
    }

    #[test]
    fn empty_flush_sends_nothing() {
        let mut store = LocalStore::new();
        let mut t = Recorder(vec![]);
        assert_eq!(
            flush(&mut store, StationId(1), &mut t),
            FlushOutcome::Success { batches: 0, records: 0 }
        );
        assert!(t.0.is_empty());
    }

    #[test]
    fn failed_flush_keeps_store() {
        let mut store = LocalStore::new();
        for t in 0..10 {
            store.push(Record::cam(cam(201, 1000 + t * 100)));
        }
        let before = store.clone();
        let outcome = flush(&mut store, StationId(1), &mut Down);
        assert!(!outcome.is_success());
        assert_eq!(store, before);
    }

    #[test]
    fn environment_selection() {
        let base = EnvironmentSample {
            timestamp: 1_000,
            validity_duration: 60,
            area_center: pos(49.0, 7.0),
            area_radius: 1000.0,
            temperature_c: 10.0,
            precipitation_mm_h: 0.0,
            wind_speed_ms: 1.0,
            wind_direction: CourseDeg::default(),
            illuminance_lux: 1000.0,
            visibility_m: 10_000.0,
            pressure_hpa: 1013.0,
            humidity_pct: 50.0,
            cloudiness_pct: 20.0,
        };
        let newer = EnvironmentSample {
            timestamp: 30_000,
            temperature_c: 12.0,
            ..base
        };
        let samples = [base, newer];
        let p = pos(49.001, 7.0);
        assert_eq!(environment_for(500, p, &samples), None);
        assert_eq!(environment_for(10_000, p, &samples), Some(&base));
        assert_eq!(environment_for(40_000, p, &samples), Some(&newer));
        assert_eq!(environment_for(40_000, pos(49.1, 7.0), &samples), None);
        assert_eq!(environment_for(61_000, p, &samples[..1]), Some(&base));
        assert_eq!(environment_for(61_001, p, &samples[..1]), None);
        assert_eq!(environment_for(90_001, p, &samples), None);
    }

    fn received(station: u32, t: u64, via: u32, at: u64) -> ReceivedRecord {
        ReceivedRecord {
            record: Record::cam(cam(station, t)),
            reporter: StationId(via),
            received_at: at,
        }
    }

    #[test]
    fn dedup_multi_reception() {
        let out = backend_dedup(vec![received(201, 1000, 7, 5), received(201, 1000, 8, 3), received(201, 1000, 9, 4)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].reporter, StationId(8));
    }

    #[test]
    fn dedup_keeps_distinct_generation_times() {
        let out = backend_dedup(vec![received(201, 1100, 7, 1), received(201, 1000, 7, 1)]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].record.time, 1000);
    }

    #[test]
    fn dedup_matches_key_set_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let msgs: Vec<ReceivedRecord> = (0..2000)
            .map(|_| {
                received(
                    rng.random_range(1..20),
                    rng.random_range(0..30) * 100,
                    rng.random_range(1..5),
                    rng.random_range(0..100),
                )
            })
            .collect();
        let keys: BTreeSet<MessageKey> = msgs.iter().map(|m| m.key()).collect();
        let out = backend_dedup(msgs.clone());
        let out_keys: Vec<MessageKey> = out.iter().map(|m| m.key()).collect();
        assert_eq!(out_keys, keys.into_iter().collect::<Vec<_>>());
        for kept in &out {
            let earliest = msgs.iter().filter(|m| m.key() == kept.key()).map(|m| m.received_at).min();
            assert_eq!(Some(kept.received_at), earliest);
        }
        assert_eq!(backend_dedup(out.clone()), out);
    }
}
