//! Domain records for every aggregated data class.
//!
//! These are the reduced extracts the aggregators forward, not full ITS
//! message bodies. [`Record`] wraps any of them with the absolute time and
//! position used for batch packing and storage queries.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{CourseDeg, GeoPosition};

/// Milliseconds since the Unix epoch.
pub type TimestampMs = u64;

/// Temporary ITS station identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u32);

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessageError {
    #[error("collective perception extract carries no detections")]
    EmptyDetectionList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectClassification {
    #[default]
    Unknown,
    Pedestrian,
    Cyclist,
    Moped,
    Motorcycle,
    PassengerCar,
    Bus,
    LightTruck,
    HeavyTruck,
    Tram,
}

impl ObjectClassification {
    pub const ALL: [ObjectClassification; 10] = [
        ObjectClassification::Unknown,
        ObjectClassification::Pedestrian,
        ObjectClassification::Cyclist,
        ObjectClassification::Moped,
        ObjectClassification::Motorcycle,
        ObjectClassification::PassengerCar,
        ObjectClassification::Bus,
        ObjectClassification::LightTruck,
        ObjectClassification::HeavyTruck,
        ObjectClassification::Tram,
    ];

    /// Station-type style numeric code.
    pub fn code(self) -> u8 {
        match self {
            ObjectClassification::Unknown => 0,
            ObjectClassification::Pedestrian => 1,
            ObjectClassification::Cyclist => 2,
            ObjectClassification::Moped => 3,
            ObjectClassification::Motorcycle => 4,
            ObjectClassification::PassengerCar => 5,
            ObjectClassification::Bus => 6,
            ObjectClassification::LightTruck => 7,
            ObjectClassification::HeavyTruck => 8,
            ObjectClassification::Tram => 11,
        }
    }

    /// Total decoder: codes without a member map to `Unknown`.
    pub fn from_code(code: u32) -> Self {
        match code {
            1 => ObjectClassification::Pedestrian,
            2 => ObjectClassification::Cyclist,
            3 => ObjectClassification::Moped,
            4 => ObjectClassification::Motorcycle,
            5 => ObjectClassification::PassengerCar,
            6 => ObjectClassification::Bus,
            7 => ObjectClassification::LightTruck,
            8 => ObjectClassification::HeavyTruck,
            11 => ObjectClassification::Tram,
            _ => ObjectClassification::Unknown,
        }
    }

    /// Inverse of [`label`](Self::label).
    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    /// Human-readable label as used in evaluation tables, e.g. `PASSENGER CAR`.
    pub fn label(self) -> &'static str {
        match self {
            ObjectClassification::Unknown => "UNKNOWN",
            ObjectClassification::Pedestrian => "PEDESTRIAN",
            ObjectClassification::Cyclist => "CYCLIST",
            ObjectClassification::Moped => "MOPED",
            ObjectClassification::Motorcycle => "MOTORCYCLE",
            ObjectClassification::PassengerCar => "PASSENGER CAR",
            ObjectClassification::Bus => "BUS",
            ObjectClassification::LightTruck => "LIGHT TRUCK",
            ObjectClassification::HeavyTruck => "HEAVY TRUCK",
            ObjectClassification::Tram => "TRAM",
        }
    }
}

/// Where a traffic object observation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObservationSource {
    CamSelfReport,
    CpmDetection,
    VutLocalSensor,
}

impl ObservationSource {
    pub fn code(self) -> u8 {
        match self {
            ObservationSource::CamSelfReport => 1,
            ObservationSource::CpmDetection => 2,
            ObservationSource::VutLocalSensor => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ObservationSource::CamSelfReport),
            2 => Some(ObservationSource::CpmDetection),
            3 => Some(ObservationSource::VutLocalSensor),
            _ => None,
        }
    }
}

/// One road user as seen by one source, in the common fusion format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficObjectObservation {
    /// Identifier scoped to the source (station id for self reports).
    pub object_id: u32,
    pub classification: ObjectClassification,
    pub position: GeoPosition,
    /// m/s, never negative.
    pub speed: f64,
    pub course: CourseDeg,
    pub timestamp: TimestampMs,
    pub source: ObservationSource,
    pub reporter: StationId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamExtract {
    pub originator: StationId,
    pub generation_time: TimestampMs,
    pub position: GeoPosition,
    pub speed: f64,
    pub course: CourseDeg,
    pub classification: ObjectClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpmDetection {
    pub object_id: u32,
    pub classification: ObjectClassification,
    pub position: GeoPosition,
    pub speed: f64,
    pub course: CourseDeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpmExtract {
    /// The sensing station.
    pub originator: StationId,
    pub generation_time: TimestampMs,
    pub detections: Vec<CpmDetection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignalPhase {
    Red,
    RedAmber,
    Green,
    Amber,
    #[default]
    Unknown,
}

impl SignalPhase {
    pub fn code(self) -> u8 {
        match self {
            SignalPhase::Red => 0,
            SignalPhase::RedAmber => 1,
            SignalPhase::Green => 2,
            SignalPhase::Amber => 3,
            SignalPhase::Unknown => 255,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            0 => SignalPhase::Red,
            1 => SignalPhase::RedAmber,
            2 => SignalPhase::Green,
            3 => SignalPhase::Amber,
            _ => SignalPhase::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatExtract {
    pub intersection_id: u32,
    pub signal_group: u16,
    pub phase: SignalPhase,
    pub change_time: TimestampMs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLane {
    pub lane_id: u32,
    pub signal_group: u16,
    /// Centerline with at least two points.
    pub polyline: Vec<GeoPosition>,
    pub ingress: bool,
}

/// Static intersection topology. Kept by the backend, never batched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTopology {
    pub intersection_id: u32,
    pub lanes: Vec<MapLane>,
}

impl MapTopology {
    /// First point of the first lane; good enough as a locator for area queries.
    pub fn anchor(&self) -> Option<GeoPosition> {
        self.lanes.first().and_then(|l| l.polyline.first().copied())
    }

    pub fn is_well_formed(&self) -> bool {
        self.lanes.iter().all(|l| l.polyline.len() >= 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HazardKind {
    PanicBraking,
    EmergencyVehicleWarning,
    Other,
}

impl HazardKind {
    pub fn code(self) -> u8 {
        match self {
            HazardKind::PanicBraking => 1,
            HazardKind::EmergencyVehicleWarning => 2,
            HazardKind::Other => 0,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            1 => HazardKind::PanicBraking,
            2 => HazardKind::EmergencyVehicleWarning,
            _ => HazardKind::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardEvent {
    pub kind: HazardKind,
    pub timestamp: TimestampMs,
    pub position: GeoPosition,
    pub source: StationId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DoorPosition {
    #[default]
    Closed,
    Ajar,
    Open,
}

impl DoorPosition {
    pub fn code(self) -> u8 {
        match self {
            DoorPosition::Closed => 0,
            DoorPosition::Ajar => 1,
            DoorPosition::Open => 2,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            1 => DoorPosition::Ajar,
            2 => DoorPosition::Open,
            _ => DoorPosition::Closed,
        }
    }
}

/// Exterior light bit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExteriorLights(pub u8);

impl ExteriorLights {
    pub const LOW_BEAM: u8 = 1 << 0;
    pub const HIGH_BEAM: u8 = 1 << 1;
    pub const FOG: u8 = 1 << 2;
    pub const HAZARD: u8 = 1 << 3;
    pub const TURN_LEFT: u8 = 1 << 4;
    pub const TURN_RIGHT: u8 = 1 << 5;
    pub const MASK: u8 = 0b0011_1111;

    pub fn contains(self, flag: u8) -> bool {
        self.0 & flag == flag
    }
}

/// Number of doors carried in a sensor extract.
pub const DOOR_COUNT: usize = 4;

/// Snapshot of the vehicle-under-test sensor values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VutSensorExtract {
    pub timestamp: TimestampMs,
    pub brake_actuated: bool,
    pub abs_active: bool,
    pub panic_braking: bool,
    pub clutch_pressed: bool,
    /// -1 is reverse, 0 neutral.
    pub gear: i8,
    pub door_positions: [DoorPosition; DOOR_COUNT],
    pub exterior_lights: ExteriorLights,
    pub gnss: GeoPosition,
    /// Course over ground reported with the GNSS fix.
    pub gnss_course: CourseDeg,
    pub speed: f64,
    pub accel_longitudinal: f64,
    pub accel_lateral: f64,
    /// 0..=7
    pub rain_intensity: u8,
    pub wiper_active: bool,
    /// deg/s
    pub yaw_rate: f64,
    pub steering_wheel_angle: f64,
    pub steering_wheel_velocity: f64,
}

impl Default for GeoPosition {
    fn default() -> Self {
        GeoPosition { lat: 0.0, lon: 0.0 }
    }
}

/// Field groups of the vehicle data aggregator, each with its own transmit period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorGroup {
    /// speed, accelerations, yaw rate, steering wheel
    Dynamics,
    Brake,
    Gnss,
    /// lights, doors, gear, clutch
    Body,
    /// rain sensor and wiper
    Rain,
}

impl SensorGroup {
    pub const ALL: [SensorGroup; 5] = [
        SensorGroup::Dynamics,
        SensorGroup::Brake,
        SensorGroup::Gnss,
        SensorGroup::Body,
        SensorGroup::Rain,
    ];

    pub fn code(self) -> u8 {
        match self {
            SensorGroup::Dynamics => 1,
            SensorGroup::Brake => 2,
            SensorGroup::Gnss => 3,
            SensorGroup::Body => 4,
            SensorGroup::Rain => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        SensorGroup::ALL.into_iter().find(|g| g.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorGroup::Dynamics => "dynamics",
            SensorGroup::Brake => "brake",
            SensorGroup::Gnss => "gnss",
            SensorGroup::Body => "body",
            SensorGroup::Rain => "rain",
        }
    }
}

/// One field group sampled out of a [`VutSensorExtract`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case")]
pub enum VutReading {
    Dynamics {
        speed: f64,
        accel_longitudinal: f64,
        accel_lateral: f64,
        yaw_rate: f64,
        steering_wheel_angle: f64,
        steering_wheel_velocity: f64,
    },
    Brake {
        brake_actuated: bool,
        abs_active: bool,
        panic_braking: bool,
    },
    Gnss {
        position: GeoPosition,
        course: CourseDeg,
    },
    Body {
        clutch_pressed: bool,
        gear: i8,
        door_positions: [DoorPosition; DOOR_COUNT],
        exterior_lights: ExteriorLights,
    },
    Rain {
        rain_intensity: u8,
        wiper_active: bool,
    },
}

impl VutReading {
    pub fn group(&self) -> SensorGroup {
        match self {
            VutReading::Dynamics { .. } => SensorGroup::Dynamics,
            VutReading::Brake { .. } => SensorGroup::Brake,
            VutReading::Gnss { .. } => SensorGroup::Gnss,
            VutReading::Body { .. } => SensorGroup::Body,
            VutReading::Rain { .. } => SensorGroup::Rain,
        }
    }

    pub fn sample(group: SensorGroup, s: &VutSensorExtract) -> Self {
        match group {
            SensorGroup::Dynamics => VutReading::Dynamics {
                speed: s.speed,
                accel_longitudinal: s.accel_longitudinal,
                accel_lateral: s.accel_lateral,
                yaw_rate: s.yaw_rate,
                steering_wheel_angle: s.steering_wheel_angle,
                steering_wheel_velocity: s.steering_wheel_velocity,
            },
            SensorGroup::Brake => VutReading::Brake {
                brake_actuated: s.brake_actuated,
                abs_active: s.abs_active,
                panic_braking: s.panic_braking,
            },
            SensorGroup::Gnss => VutReading::Gnss {
                position: s.gnss,
                course: s.gnss_course,
            },
            SensorGroup::Body => VutReading::Body {
                clutch_pressed: s.clutch_pressed,
                gear: s.gear,
                door_positions: s.door_positions,
                exterior_lights: s.exterior_lights,
            },
            SensorGroup::Rain => VutReading::Rain {
                rain_intensity: s.rain_intensity,
                wiper_active: s.wiper_active,
            },
        }
    }

    /// Writes this group's fields into a snapshot.
    pub fn apply_to(&self, s: &mut VutSensorExtract) {
        match *self {
            VutReading::Dynamics {
                speed,
                accel_longitudinal,
                accel_lateral,
                yaw_rate,
                steering_wheel_angle,
                steering_wheel_velocity,
            } => {
                s.speed = speed;
                s.accel_longitudinal = accel_longitudinal;
                s.accel_lateral = accel_lateral;
                s.yaw_rate = yaw_rate;
                s.steering_wheel_angle = steering_wheel_angle;
                s.steering_wheel_velocity = steering_wheel_velocity;
            }
            VutReading::Brake {
                brake_actuated,
                abs_active,
                panic_braking,
            } => {
                s.brake_actuated = brake_actuated;
                s.abs_active = abs_active;
                s.panic_braking = panic_braking;
            }
            VutReading::Gnss { position, course } => {
                s.gnss = position;
                s.gnss_course = course;
            }
            VutReading::Body {
                clutch_pressed,
                gear,
                door_positions,
                exterior_lights,
            } => {
                s.clutch_pressed = clutch_pressed;
                s.gear = gear;
                s.door_positions = door_positions;
                s.exterior_lights = exterior_lights;
            }
            VutReading::Rain {
                rain_intensity,
                wiper_active,
            } => {
                s.rain_intensity = rain_intensity;
                s.wiper_active = wiper_active;
            }
        }
    }
}

/// Self-Assessment-Manikin style driver state on two 1..=5 scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverStateSample {
    pub timestamp: TimestampMs,
    /// 1 = pleased, 5 = unhappy
    pub valence: u8,
    /// 1 = excited, 5 = calm
    pub arousal: u8,
    pub heart_rate_bpm: Option<u16>,
    pub self_reported: bool,
}

impl DriverStateSample {
    pub fn is_valid(&self) -> bool {
        (1..=5).contains(&self.valence)
            && (1..=5).contains(&self.arousal)
            && self.heart_rate_bpm != Some(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSample {
    pub timestamp: TimestampMs,
    /// Seconds after `timestamp` for which the sample holds.
    pub validity_duration: u32,
    pub area_center: GeoPosition,
    pub area_radius: f64,
    pub temperature_c: f64,
    pub precipitation_mm_h: f64,
    pub wind_speed_ms: f64,
    pub wind_direction: CourseDeg,
    pub illuminance_lux: f64,
    pub visibility_m: f64,
    pub pressure_hpa: f64,
    pub humidity_pct: f64,
    pub cloudiness_pct: f64,
}

impl EnvironmentSample {
    pub fn valid_until(&self) -> TimestampMs {
        self.timestamp + u64::from(self.validity_duration) * 1000
    }
}

/// Record kinds as numbered on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Cam = 1,
    CpmDetection = 2,
    Spat = 3,
    VutSensor = 4,
    DriverState = 5,
    Environment = 6,
    Hazard = 7,
}

impl RecordKind {
    pub const ALL: [RecordKind; 7] = [
        RecordKind::Cam,
        RecordKind::CpmDetection,
        RecordKind::Spat,
        RecordKind::VutSensor,
        RecordKind::DriverState,
        RecordKind::Environment,
        RecordKind::Hazard,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        RecordKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

/// Payload of a [`Record`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    Cam(CamExtract),
    CpmDetection {
        originator: StationId,
        detection: CpmDetection,
    },
    Spat(SpatExtract),
    VutSensor(VutReading),
    DriverState(DriverStateSample),
    Environment(EnvironmentSample),
    Hazard(HazardEvent),
}

/// Any aggregated datum with its absolute time and position.
///
/// For bodies that carry their own time or position (CAM, CPM, GNSS, hazard,
/// environment) the outer fields equal the inner ones; the constructors keep
/// them in sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: TimestampMs,
    pub position: GeoPosition,
    pub body: RecordBody,
}

impl Record {
    pub fn cam(c: CamExtract) -> Self {
        Record {
            time: c.generation_time,
            position: c.position,
            body: RecordBody::Cam(c),
        }
    }

    pub fn cpm_detection(originator: StationId, generation_time: TimestampMs, d: CpmDetection) -> Self {
        Record {
            time: generation_time,
            position: d.position,
            body: RecordBody::CpmDetection {
                originator,
                detection: d,
            },
        }
    }

    /// Splits a CPM into one record per detection.
    pub fn from_cpm(c: &CpmExtract) -> Vec<Record> {
        c.detections
            .iter()
            .map(|d| Record::cpm_detection(c.originator, c.generation_time, *d))
            .collect()
    }

    /// `position` is where the phase information was observed (usually the RSU).
    pub fn spat(s: SpatExtract, position: GeoPosition) -> Self {
        Record {
            time: s.change_time,
            position,
            body: RecordBody::Spat(s),
        }
    }

    pub fn vut_sensor(time: TimestampMs, position: GeoPosition, reading: VutReading) -> Self {
        let position = match reading {
            VutReading::Gnss { position, .. } => position,
            _ => position,
        };
        Record {
            time,
            position,
            body: RecordBody::VutSensor(reading),
        }
    }

    pub fn driver(d: DriverStateSample, position: GeoPosition) -> Self {
        Record {
            time: d.timestamp,
            position,
            body: RecordBody::DriverState(d),
        }
    }

    pub fn environment(e: EnvironmentSample) -> Self {
        Record {
            time: e.timestamp,
            position: e.area_center,
            body: RecordBody::Environment(e),
        }
    }

    pub fn hazard(h: HazardEvent) -> Self {
        Record {
            time: h.timestamp,
            position: h.position,
            body: RecordBody::Hazard(h),
        }
    }

    pub fn kind(&self) -> RecordKind {
        match self.body {
            RecordBody::Cam(_) => RecordKind::Cam,
            RecordBody::CpmDetection { .. } => RecordKind::CpmDetection,
            RecordBody::Spat(_) => RecordKind::Spat,
            RecordBody::VutSensor(_) => RecordKind::VutSensor,
            RecordBody::DriverState(_) => RecordKind::DriverState,
            RecordBody::Environment(_) => RecordKind::Environment,
            RecordBody::Hazard(_) => RecordKind::Hazard,
        }
    }

    /// Rewrites time and position (e.g. after wire quantization), keeping
    /// embedded copies consistent.
    pub fn with_time_position(mut self, time: TimestampMs, position: GeoPosition) -> Self {
        self.time = time;
        self.position = position;
        match &mut self.body {
            RecordBody::Cam(c) => {
                c.generation_time = time;
                c.position = position;
            }
            RecordBody::CpmDetection { detection, .. } => detection.position = position,
            RecordBody::Spat(s) => s.change_time = time,
            RecordBody::VutSensor(VutReading::Gnss { position: p, .. }) => *p = position,
            RecordBody::VutSensor(_) => {}
            RecordBody::DriverState(d) => d.timestamp = time,
            RecordBody::Environment(e) => {
                e.timestamp = time;
                e.area_center = position;
            }
            RecordBody::Hazard(h) => {
                h.timestamp = time;
                h.position = position;
            }
        }
        self
    }
}

pub fn observation_from_cam(c: &CamExtract) -> TrafficObjectObservation {
    TrafficObjectObservation {
        object_id: c.originator.0,
        classification: c.classification,
        position: c.position,
        speed: c.speed,
        course: c.course,
        timestamp: c.generation_time,
        source: ObservationSource::CamSelfReport,
        reporter: c.originator,
    }
}

pub fn observations_from_cpm(c: &CpmExtract) -> Result<Vec<TrafficObjectObservation>, MessageError> {
    if c.detections.is_empty() {
        return Err(MessageError::EmptyDetectionList);
    }
    Ok(c
        .detections
        .iter()
        .map(|d| observation_from_detection(c.originator, c.generation_time, d))
        .collect())
}

pub fn observation_from_detection(
    originator: StationId,
    generation_time: TimestampMs,
    d: &CpmDetection,
) -> TrafficObjectObservation {
    TrafficObjectObservation {
        object_id: d.object_id,
        classification: d.classification,
        position: d.position,
        speed: d.speed,
        course: d.course,
        timestamp: generation_time,
        source: ObservationSource::CpmDetection,
        reporter: originator,
    }
}

pub fn classification_round_trip(code: u32) -> ObjectClassification {
    ObjectClassification::from_code(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pos(lat: f64, lon: f64) -> GeoPosition {
        GeoPosition::new(lat, lon).unwrap()
    }

    #[test]
    fn cam_row_201() {
        let cam = CamExtract {
            originator: StationId(201),
            generation_time: 1_600_000_000_000,
            position: pos(49.2339473, 6.9828387),
            speed: 10.33,
            course: CourseDeg::new(90.0).unwrap(),
            classification: ObjectClassification::PassengerCar,
        };
        let o = observation_from_cam(&cam);
        assert_eq!(o.object_id, 201);
        assert_eq!(o.source, ObservationSource::CamSelfReport);
        assert_eq!(o.reporter, StationId(201));
        assert_eq!(o.position, cam.position);
        assert_eq!(o.speed, 10.33);
        assert_eq!(o.course.value(), 90.0);
    }

    #[test]
    fn cam_at_standstill() {
        let cam = CamExtract {
            originator: StationId(5),
            generation_time: 10,
            position: pos(49.0, 7.0),
            speed: 0.0,
            course: CourseDeg::default(),
            classification: ObjectClassification::Bus,
        };
        assert_eq!(observation_from_cam(&cam).speed, 0.0);
    }

    #[test]
    fn cpm_detections() {
        let ped = CpmDetection {
            object_id: 47,
            classification: ObjectClassification::Pedestrian,
            position: pos(49.2339251, 6.9826933),
            speed: 1.48,
            course: CourseDeg::new(270.8).unwrap(),
        };
        let mut car = ped;
        car.object_id = 3;
        car.classification = ObjectClassification::PassengerCar;
        let cpm = CpmExtract {
            originator: StationId(9000),
            generation_time: 77,
            detections: vec![ped, car],
        };
        let obs = observations_from_cpm(&cpm).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].object_id, 47);
        assert_eq!(obs[0].classification, ObjectClassification::Pedestrian);
        assert_eq!(obs[0].position, ped.position);
        assert_eq!(obs[0].speed, 1.48);
        assert_eq!(obs[0].course.value(), 270.8);
        assert_eq!(obs[0].reporter, StationId(9000));
        assert_eq!(obs[0].source, ObservationSource::CpmDetection);

        let empty = CpmExtract {
            detections: vec![],
            ..cpm
        };
        assert_eq!(observations_from_cpm(&empty), Err(MessageError::EmptyDetectionList));
    }

    #[test]
    fn classification_codes() {
        assert_eq!(classification_round_trip(5), ObjectClassification::PassengerCar);
        assert_eq!(classification_round_trip(1), ObjectClassification::Pedestrian);
        assert_eq!(classification_round_trip(99), ObjectClassification::Unknown);
        for c in ObjectClassification::ALL {
            assert_eq!(ObjectClassification::from_code(u32::from(c.code())), c);
        }
    }

    #[test]
    fn readings_rebuild_snapshot() {
        let mut s = VutSensorExtract {
            timestamp: 1,
            gear: 3,
            speed: 12.5,
            rain_intensity: 4,
            gnss: pos(49.0, 7.0),
            ..Default::default()
        };
        s.exterior_lights = ExteriorLights(ExteriorLights::LOW_BEAM | ExteriorLights::TURN_LEFT);
        let mut rebuilt = VutSensorExtract {
            timestamp: 1,
            ..Default::default()
        };
        for g in SensorGroup::ALL {
            VutReading::sample(g, &s).apply_to(&mut rebuilt);
        }
        assert_eq!(rebuilt, s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn cam_conversion_preserves_kinematics(
            id in 1u32.., t in 1u64..u64::MAX / 2,
            lat in -90.0f64..=90.0, lon in -180.0f64..=180.0,
            speed in 0.0f64..80.0, course in 0.0f64..360.0, code in 0u32..12,
        ) {
            let cam = CamExtract {
                originator: StationId(id),
                generation_time: t,
                position: pos(lat, lon),
                speed,
                course: CourseDeg::new(course).unwrap(),
                classification: ObjectClassification::from_code(code),
            };
            let o = observation_from_cam(&cam);
            prop_assert_eq!(o.position, cam.position);
            prop_assert_eq!(o.speed, cam.speed);
            prop_assert_eq!(o.course, cam.course);
            prop_assert_eq!(o.classification, cam.classification);
            prop_assert_eq!(o.timestamp, t);
            prop_assert_eq!(o.object_id, id);
        }
    }
}
