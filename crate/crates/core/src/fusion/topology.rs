use serde::{Deserialize, Serialize};

use crate::geo::{to_local_enu, GeoPosition, LocalPoint};
use crate::messages::{MapLane, MapTopology, SignalPhase, SpatExtract, TimestampMs};

use super::FusedObject;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasedLane {
    pub lane: MapLane,
    pub phase: SignalPhase,
}

/// Intersection topology with the signal phase each lane showed at the situation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationTopology {
    pub intersection_id: u32,
    pub lanes: Vec<PhasedLane>,
}

/// Attaches to every lane the phase of its signal group from the SPAT extract
/// nearest to `t`. On equal distance the later extract wins.
pub fn join_topology(map: &MapTopology, spat: &[SpatExtract], t: TimestampMs) -> SituationTopology {
    let phase_of = |group: u16| {
        spat.iter()
            .filter(|s| s.intersection_id == map.intersection_id && s.signal_group == group)
            .min_by_key(|s| (s.change_time.abs_diff(t), std::cmp::Reverse(s.change_time)))
            .map_or(SignalPhase::Unknown, |s| s.phase)
    };
    SituationTopology {
        intersection_id: map.intersection_id,
        lanes: map
            .lanes
            .iter()
            .map(|lane| PhasedLane {
                lane: lane.clone(),
                phase: phase_of(lane.signal_group),
            })
            .collect(),
    }
}

fn segment_distance(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(&ab);
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab.scale(s))).norm()
}

/// Shortest distance from `p` to the lane polyline, `None` if the lane is out of local range.
pub fn lane_distance(p: GeoPosition, lane: &MapLane) -> Option<f64> {
    let pts: Option<Vec<LocalPoint>> = lane.polyline.iter().map(|q| to_local_enu(p, *q).ok()).collect();
    let pts = pts?;
    let origin = LocalPoint::new(0.0, 0.0);
    pts.windows(2)
        .map(|w| segment_distance(origin, w[0], w[1]))
        .min_by(f64::total_cmp)
}

/// Distances this close count as a tie.
const TIE_EPS_M: f64 = 1e-6;

/// Sets `lane_id` to the nearest lane within `max_lateral_m`; lower lane id on ties.
pub fn link_lanes(objects: &mut [FusedObject], map: &MapTopology, max_lateral_m: f64) {
    for o in objects.iter_mut() {
        let near: Vec<(f64, u32)> = map
            .lanes
            .iter()
            .filter_map(|l| lane_distance(o.position, l).map(|d| (d, l.lane_id)))
            .filter(|(d, _)| *d <= max_lateral_m)
            .collect();
        let best = near.iter().map(|n| n.0).min_by(f64::total_cmp);
        o.lane_id = best.and_then(|b| {
            near.iter()
                .filter(|(d, _)| *d <= b + TIE_EPS_M)
                .map(|(_, id)| *id)
                .min()
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{from_local_enu, CourseDeg};
    use crate::messages::ObjectClassification;

    fn origin() -> GeoPosition {
        GeoPosition { lat: 49.2339, lon: 6.9825 }
    }

    fn at(east: f64, north: f64) -> GeoPosition {
        from_local_enu(origin(), LocalPoint::new(east, north))
    }

    fn lane(id: u32, group: u16, north: f64) -> MapLane {
        MapLane {
            lane_id: id,
            signal_group: group,
            polyline: vec![at(-50.0, north), at(0.0, north), at(50.0, north)],
            ingress: true,
        }
    }

    fn map() -> MapTopology {
        MapTopology {
            intersection_id: 9,
            lanes: vec![lane(2, 3, 0.0), lane(1, 4, 3.0), lane(5, 3, -40.0)],
        }
    }

    fn object(p: GeoPosition) -> FusedObject {
        FusedObject {
            fused_id: 1,
            classification: ObjectClassification::PassengerCar,
            position: p,
            speed: 5.0,
            course: CourseDeg::wrapped(90.0),
            provenance: vec![],
            lane_id: None,
        }
    }

    fn spat(group: u16, phase: SignalPhase, time: TimestampMs) -> SpatExtract {
        SpatExtract {
            intersection_id: 9,
            signal_group: group,
            phase,
            change_time: time,
        }
    }

    #[test]
    fn lanes_without_spat_are_unknown() {
        let t = join_topology(&map(), &[], 1000);
        assert!(t.lanes.iter().all(|l| l.phase == SignalPhase::Unknown));
    }

    #[test]
    fn phase_applies_to_every_lane_of_the_group() {
        let t = join_topology(&map(), &[spat(3, SignalPhase::Green, 900)], 1000);
        let phases: Vec<_> = t.lanes.iter().map(|l| (l.lane.lane_id, l.phase)).collect();
        assert_eq!(
            phases,
            vec![(2, SignalPhase::Green), (1, SignalPhase::Unknown), (5, SignalPhase::Green)]
        );
    }

    #[test]
    fn nearer_spat_wins() {
        let s = [spat(3, SignalPhase::Red, 700), spat(3, SignalPhase::Green, 1200)];
        assert_eq!(join_topology(&map(), &s, 1000).lanes[0].phase, SignalPhase::Green);
        assert_eq!(join_topology(&map(), &s, 900).lanes[0].phase, SignalPhase::Red);
        let other = SpatExtract {
            intersection_id: 8,
            ..spat(3, SignalPhase::Amber, 1000)
        };
        assert_eq!(join_topology(&map(), &[other], 1000).lanes[0].phase, SignalPhase::Unknown);
    }

    #[test]
    fn objects_snap_to_the_nearest_lane() {
        let mut objs = vec![object(at(10.0, 0.0)), object(at(0.0, 80.0)), object(at(20.0, 1.5)), object(at(0.0, 2.6))];
        link_lanes(&mut objs, &map(), 2.0);
        let ids: Vec<_> = objs.iter().map(|o| o.lane_id).collect();
        assert_eq!(ids, vec![Some(2), None, Some(1), Some(1)]);
    }

    #[test]
    fn segment_ends_clamp() {
        let d = segment_distance(LocalPoint::new(3.0, 4.0), LocalPoint::new(0.0, 0.0), LocalPoint::new(-5.0, 0.0));
        assert!((d - 5.0).abs() < 1e-12);
    }
}
