use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{AnchorParams, Vec3};

/// Axis-aligned box, closed on all faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x.max(0.0) * e.y.max(0.0) * e.z.max(0.0)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Shrinks every face inward by `margin`, never past the center.
    pub fn shrunk(&self, margin: f64) -> Aabb {
        let c = self.center();
        let mut out = *self;
        for i in 0..3 {
            out.min[i] = (self.min[i] + margin).min(c[i]);
            out.max[i] = (self.max[i] - margin).max(c[i]);
        }
        out
    }

    /// Slab test for the segment `p0 -> p1`. Boundary contact, including a
    /// segment grazing a single corner or edge, counts as an intersection.
    pub fn intersects_segment(&self, p0: &Vec3, p1: &Vec3) -> bool {
        let d = p1 - p0;
        let (mut t_enter, mut t_exit) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if d[i] == 0.0 {
                if p0[i] < self.min[i] || p0[i] > self.max[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let mut t_near = (self.min[i] - p0[i]) * inv;
            let mut t_far = (self.max[i] - p0[i]) * inv;
            if t_near > t_far {
                std::mem::swap(&mut t_near, &mut t_far);
            }
            t_enter = t_enter.max(t_near);
            t_exit = t_exit.min(t_far);
            if t_enter > t_exit {
                return false;
            }
        }
        true
    }
}

/// Operating area with its anchors and the boxes that block radio line of sight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Aabb,
    pub anchors: Vec<AnchorParams>,
    pub occluders: Vec<Aabb>,
}

impl Environment {
    pub fn new(bounds: Aabb, anchors: Vec<AnchorParams>, occluders: Vec<Aabb>) -> Result<Self, SimError> {
        let env = Self {
            bounds,
            anchors,
            occluders,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.bounds.volume() <= 0.0 {
            return Err(SimError::DegenerateBounds);
        }
        if self.anchors.is_empty() {
            return Err(SimError::NoAnchors);
        }
        for (i, a) in self.anchors.iter().enumerate() {
            a.validate()?;
            if !self.bounds.contains(&a.position) {
                return Err(SimError::AnchorOutOfBounds(a.anchor_id));
            }
            if self.anchors[..i].iter().any(|b| b.anchor_id == a.anchor_id) {
                return Err(SimError::DuplicateAnchor(a.anchor_id));
            }
        }
        Ok(())
    }

    pub fn anchor(&self, anchor_id: u32) -> Option<&AnchorParams> {
        self.anchors.iter().find(|a| a.anchor_id == anchor_id)
    }

    pub fn anchor_ids(&self) -> Vec<u32> {
        self.anchors.iter().map(|a| a.anchor_id).collect()
    }
}

/// True iff the segment `p0 -> p1` touches no occluder.
pub fn line_of_sight(env: &Environment, p0: &Vec3, p1: &Vec3) -> bool {
    !env.occluders.iter().any(|b| b.intersects_segment(p0, p1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn env_with(occluders: Vec<Aabb>) -> Environment {
        Environment::new(
            Aabb::new(Vec3::new(-10.0, -10.0, -10.0), Vec3::new(10.0, 10.0, 10.0)),
            vec![AnchorParams::ideal(0, Vec3::zeros())],
            occluders,
        )
        .unwrap()
    }

    #[test]
    fn open_space_has_line_of_sight() {
        let env = env_with(vec![]);
        assert!(line_of_sight(&env, &Vec3::new(-5.0, 0.0, 0.0), &Vec3::new(5.0, 1.0, 2.0)));
    }

    #[test]
    fn box_on_midpoint_blocks() {
        let env = env_with(vec![Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0))]);
        assert!(!line_of_sight(&env, &Vec3::new(-5.0, 0.2, 0.1), &Vec3::new(5.0, -0.3, 0.0)));
        assert!(line_of_sight(&env, &Vec3::new(-5.0, 3.0, 0.0), &Vec3::new(5.0, 3.0, 0.0)));
        // stops short of the box
        assert!(line_of_sight(&env, &Vec3::new(-5.0, 0.0, 0.0), &Vec3::new(-1.5, 0.0, 0.0)));
    }

    #[test]
    fn corner_and_face_contact_blocks() {
        let unit = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        // grazes the (1,1,1) corner only
        assert!(unit.intersects_segment(&Vec3::new(2.0, 0.0, 1.0), &Vec3::new(0.0, 2.0, 1.0)));
        // runs along a face
        assert!(unit.intersects_segment(&Vec3::new(-1.0, 0.5, 1.0), &Vec3::new(2.0, 0.5, 1.0)));
        // parallel just outside
        assert!(!unit.intersects_segment(&Vec3::new(-1.0, 0.5, 1.0 + 1e-9), &Vec3::new(2.0, 0.5, 1.0 + 1e-9)));
    }

    /// Brute-force sampler stepping 1 mm along the segment.
    fn sampled_hit(b: &Aabb, p0: &Vec3, p1: &Vec3) -> bool {
        let n = ((p1 - p0).norm() / 1e-3).ceil().max(1.0) as usize;
        (0..=n).any(|k| b.contains(&(p0 + (p1 - p0) * (k as f64 / n as f64))))
    }

    /// Length of the part of the segment inside the box, used to skip grazing
    /// cases a 1 mm sampler cannot resolve.
    fn chord(b: &Aabb, p0: &Vec3, p1: &Vec3) -> f64 {
        let d = p1 - p0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if p0[i] < b.min[i] || p0[i] > b.max[i] {
                    return 0.0;
                }
                continue;
            }
            let (a, c) = ((b.min[i] - p0[i]) / d[i], (b.max[i] - p0[i]) / d[i]);
            lo = lo.max(a.min(c));
            hi = hi.min(a.max(c));
        }
        (hi - lo).max(0.0) * d.norm()
    }

    #[test]
    fn slab_test_matches_sampler_on_segment_grid() {
        let b = Aabb::new(Vec3::new(-0.5, -0.25, -0.4), Vec3::new(0.5, 0.35, 0.3));
        let grid: Vec<f64> = vec![-1.2, -0.5, -0.1, 0.35, 1.1];
        let mut points = Vec::new();
        for &x in &grid {
            for &y in &grid {
                for &z in &grid {
                    points.push(Vec3::new(x, y, z + 0.013));
                }
            }
        }
        let mut r = rng::stream(11, "los-test");
        let mut checked = 0;
        for (i, p0) in points.iter().enumerate() {
            for p1 in points.iter().skip(i + 1).step_by(7) {
                let jitter = Vec3::new(r.random_range(-0.01..0.01), r.random_range(-0.01..0.01), 0.0);
                let p1 = p1 + jitter;
                let c = chord(&b, p0, &p1);
                if c > 0.0 && c < 2e-3 {
                    continue;
                }
                assert_eq!(b.intersects_segment(p0, &p1), sampled_hit(&b, p0, &p1), "{p0:?} -> {p1:?}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn environment_validation() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        assert!(matches!(
            Environment::new(bounds, vec![], vec![]),
            Err(SimError::NoAnchors)
        ));
        assert!(matches!(
            Environment::new(bounds, vec![AnchorParams::ideal(4, Vec3::new(2.0, 0.0, 0.0))], vec![]),
            Err(SimError::AnchorOutOfBounds(4))
        ));
        let a = AnchorParams::ideal(1, Vec3::new(0.5, 0.5, 0.5));
        assert!(matches!(
            Environment::new(bounds, vec![a, a], vec![]),
            Err(SimError::DuplicateAnchor(1))
        ));
        let flat = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0));
        assert!(matches!(Environment::new(flat, vec![], vec![]), Err(SimError::DegenerateBounds)));
    }
}
