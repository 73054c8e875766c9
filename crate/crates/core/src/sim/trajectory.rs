use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Aabb, SimError};
use crate::geometry::{Pose, Rotation, Vec3};
use crate::rng;

/// Fixed-tick pose sequence with continuous-time interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(dt: f64, poses: Vec<Pose>) -> Result<Self, SimError> {
        if poses.is_empty() {
            return Err(SimError::EmptyTrajectory);
        }
        if poses.windows(2).any(|w| w[1].stamp <= w[0].stamp) {
            return Err(SimError::NonIncreasingStamps);
        }
        Ok(Self { dt, poses })
    }

    pub fn start(&self) -> f64 {
        self.poses[0].stamp
    }

    pub fn end(&self) -> f64 {
        self.poses[self.poses.len() - 1].stamp
    }

    /// Pose at time `t`: linear in position, spherical in orientation. Times
    /// outside the span are clamped to the end poses.
    pub fn sample(&self, t: f64) -> Pose {
        let n = self.poses.len();
        if n == 1 || t <= self.start() {
            return Pose { stamp: t.max(0.0), ..self.poses[0] };
        }
        if t >= self.end() {
            return Pose { stamp: t, ..self.poses[n - 1] };
        }
        let hi = self.poses.partition_point(|p| p.stamp <= t).min(n - 1);
        let (a, b) = (&self.poses[hi - 1], &self.poses[hi]);
        let u = (t - a.stamp) / (b.stamp - a.stamp);
        Pose {
            position: a.position + (b.position - a.position) * u,
            orientation: a.orientation.slerp(&b.orientation, u),
            stamp: t,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }
}

/// Corner cutting; the result stays inside the convex hull of the input.
fn chaikin(points: &[Vec3], iterations: usize) -> Vec<Vec3> {
    let mut pts = points.to_vec();
    for _ in 0..iterations {
        if pts.len() < 3 {
            break;
        }
        let mut next = Vec::with_capacity(pts.len() * 2);
        next.push(pts[0]);
        for w in pts.windows(2) {
            next.push(w[0] * 0.75 + w[1] * 0.25);
            next.push(w[0] * 0.25 + w[1] * 0.75);
        }
        next.push(pts[pts.len() - 1]);
        pts = next;
    }
    pts
}

/// Drives through `waypoints` at constant `speed`, sampled every `dt`, with
/// the heading following the horizontal direction of travel.
pub fn trajectory_through(waypoints: &[Vec3], speed: f64, dt: f64) -> Result<Trajectory, SimError> {
    if !(speed > 0.0) || !(dt > 0.0) {
        return Err(SimError::BadMotion { speed, dt });
    }
    if waypoints.len() < 2 {
        return Err(SimError::TooFewWaypoints(waypoints.len()));
    }
    let path = chaikin(waypoints, 3);
    let mut cumulative = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in path.windows(2) {
        acc += (w[1] - w[0]).norm();
        cumulative.push(acc);
    }
    if acc <= 0.0 {
        return Err(SimError::DegeneratePath);
    }
    let step = speed * dt;
    let n = (acc / step).floor() as usize + 1;
    let mut positions = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let s = (k as f64 * step).min(acc);
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < s {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let u = if len > 0.0 { (s - cumulative[seg]) / len } else { 0.0 };
        positions.push(path[seg] + (path[seg + 1] - path[seg]) * u);
    }
    let headings = headings(&positions);
    let poses = positions
        .iter()
        .zip(&headings)
        .enumerate()
        .map(|(k, (p, yaw))| Pose {
            position: *p,
            orientation: Rotation::from_yaw(*yaw),
            stamp: k as f64 * dt,
        })
        .collect();
    Trajectory::new(dt, poses)
}

fn headings(positions: &[Vec3]) -> Vec<f64> {
    let n = positions.len();
    let mut out = vec![0.0; n];
    let mut last = None;
    for k in 0..n {
        let (a, b) = if k + 1 < n { (k, k + 1) } else { (k.saturating_sub(1), k) };
        let d = positions[b] - positions[a];
        let yaw = if d.x.hypot(d.y) > 1e-9 { Some(d.y.atan2(d.x)) } else { last };
        out[k] = yaw.unwrap_or(0.0);
        last = yaw;
    }
    out
}

/// Smooth path through `waypoint_count` seeded random waypoints inside
/// `bounds` (kept 5% of each extent away from the faces).
pub fn generate_trajectory(
    bounds: &Aabb,
    waypoint_count: usize,
    speed: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if bounds.volume() <= 0.0 {
        return Err(SimError::DegenerateBounds);
    }
    let e = bounds.extent();
    let inner = Aabb::new(bounds.min + e * 0.05, bounds.max - e * 0.05);
    let mut r = rng::stream(seed, "trajectory");
    let waypoints: Vec<Vec3> = (0..waypoint_count)
        .map(|_| {
            Vec3::new(
                r.random_range(inner.min.x..=inner.max.x),
                r.random_range(inner.min.y..=inner.max.y),
                r.random_range(inner.min.z..=inner.max.z),
            )
        })
        .collect();
    trajectory_through(&waypoints, speed, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bounds() -> Aabb {
        Aabb::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(400.0, 200.0, 5.0))
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_trajectory(&bounds(), 6, 5.0, 0.1, 42).unwrap();
        let b = generate_trajectory(&bounds(), 6, 5.0, 0.1, 42).unwrap();
        let c = generate_trajectory(&bounds(), 6, 5.0, 0.1, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn straight_corridor_progresses_monotonically() {
        let t = trajectory_through(&[Vec3::new(0.0, 1.0, 1.0), Vec3::new(50.0, 1.0, 1.0)], 2.0, 0.1).unwrap();
        assert!(t.poses.windows(2).all(|w| w[1].position.x > w[0].position.x));
        assert!(t.poses.iter().all(|p| (p.position.y - 1.0).abs() < 1e-12));
        assert_abs_diff_eq!(t.poses[0].orientation.yaw(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stays_within_bounds_over_many_seeds() {
        let b = bounds();
        for seed in 0..1000 {
            let t = generate_trajectory(&b, 4, 8.0, 0.5, seed).unwrap();
            assert!(t.poses.iter().all(|p| b.contains(&p.position)), "seed {seed}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let flat = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0));
        assert!(matches!(generate_trajectory(&flat, 3, 1.0, 0.1, 0), Err(SimError::DegenerateBounds)));
        assert!(matches!(generate_trajectory(&bounds(), 3, 0.0, 0.1, 0), Err(SimError::BadMotion { .. })));
        assert!(matches!(generate_trajectory(&bounds(), 1, 1.0, 0.1, 0), Err(SimError::TooFewWaypoints(1))));
    }

    #[test]
    fn heading_follows_velocity_and_sampling_interpolates() {
        let t = trajectory_through(&[Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 10.0, 0.0)], 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(t.poses[3].orientation.yaw(), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let mid = t.sample(0.75);
        assert_abs_diff_eq!(mid.position.y, 0.75, epsilon = 1e-12);
        assert_eq!(t.sample(-1.0).position, t.poses[0].position);
        assert_eq!(t.sample(1e6).position, t.poses.last().unwrap().position);
    }
}
