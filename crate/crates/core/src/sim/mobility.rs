use rand::Rng;

use crate::formation::VehicleId;
use crate::rfmodel::Vec3;

use super::config::RoadConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub lane: u32,
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Smallest spacing between two vehicles at placement time.
pub const MIN_SPACING_M: f64 = 2.0;

/// Constant-velocity advance by `dt` seconds.
pub fn mobility_step(vehicles: &mut [VehicleState], dt: f64) {
    debug_assert!(dt > 0.0);
    for v in vehicles {
        v.position = v.position.add_scaled(&v.velocity, dt);
    }
}

/// Vehicle `i` drives in lane `i mod lanes` at a uniform position along the
/// segment and a uniform forward speed.
pub fn place_vehicles<R: Rng + ?Sized>(
    count: u32,
    road: &RoadConfig,
    speed_mps: (f64, f64),
    rng: &mut R,
) -> Vec<VehicleState> {
    let mut out: Vec<VehicleState> = Vec::with_capacity(count as usize);
    for id in 0..count {
        let lane = id % road.lanes;
        let y = f64::from(lane) * road.lane_width_m;
        let mut x = rng.random_range(0.0..road.length_m);
        // Resample a few times to avoid stacking; fall back to shifting ahead.
        for attempt in 0.. {
            let clear = out
                .iter()
                .all(|o| o.position.distance(&Vec3::planar(x, y)) >= MIN_SPACING_M);
            if clear {
                break;
            }
            x = if attempt < 16 {
                rng.random_range(0.0..road.length_m)
            } else {
                x + MIN_SPACING_M
            };
        }
        let speed = if speed_mps.1 > speed_mps.0 {
            rng.random_range(speed_mps.0..=speed_mps.1)
        } else {
            speed_mps.0
        };
        out.push(VehicleState {
            id,
            lane,
            position: Vec3::planar(x, y),
            velocity: Vec3::planar(speed, 0.0),
        });
    }
    out
}
