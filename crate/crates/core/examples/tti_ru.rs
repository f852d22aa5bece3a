//! Time to intersection and relative urgency for a vehicle heading north
//! and a few other road users around it.

use situfuse::geo::{from_local_enu, CourseDeg, GeoPosition, LocalPoint};
use situfuse::metrics::{compute_ru, compute_tti, KinematicState, MetricConfig};

fn main() {
    let origin = GeoPosition { lat: 49.2339, lon: 6.9826 };
    let at = |east, north, speed, course| KinematicState {
        position: from_local_enu(origin, LocalPoint::new(east, north)),
        speed,
        course: CourseDeg::wrapped(course),
    };
    let vut = at(0.0, -80.0, 10.0, 0.0);
    let cfg = MetricConfig::default();
    let others = [
        ("car from the left, same arrival", at(-64.0, 0.0, 8.0, 90.0)),
        ("cyclist from the right, late", at(40.0, 0.0, 4.0, 270.0)),
        ("car ahead, same lane", at(0.0, -40.0, 9.0, 0.0)),
        ("oncoming car", at(3.5, 30.0, 12.0, 180.0)),
        ("pedestrian walking away", at(15.0, -70.0, 1.3, 90.0)),
        ("parked car", at(-4.0, -20.0, 0.0, 0.0)),
    ];
    println!("{:<34}{:>10}{:>10}{:>8}", "object", "TTI_OBJ", "TTI_VUT", "RU");
    for (name, obj) in &others {
        let (t_obj, t_vut) = compute_tti(&vut, obj, &cfg);
        let ru = compute_ru(&vut, obj, &cfg).to_string();
        println!("{name:<34}{:>10}{:>10}{ru:>8}", t_obj.to_string(), t_vut.to_string());
    }
}
