use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{line_of_sight, Environment, SimError, Trajectory};
use crate::geometry::{tag_world_position, TagMount};
use crate::rng;

/// Smallest range the simulator emits, meters.
pub const MIN_RANGE: f64 = 0.01;

/// Relative jitter applied to every ping period.
pub const PING_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the Gaussian range noise, meters.
    pub sigma_range: f64,
    pub p_outlier: f64,
    /// Outliers add `Uniform(0, outlier_spread)` meters.
    pub outlier_spread: f64,
    /// Mean of the exponential positive bias added when the path is blocked.
    pub nlos_bias: f64,
    pub p_detect_los: f64,
    pub p_detect_nlos: f64,
    /// Pairs farther apart than this are never detected.
    #[serde(default)]
    pub max_range: Option<f64>,
}

impl NoiseModel {
    /// No noise, no outliers, every line-of-sight ping detected.
    pub fn noiseless() -> Self {
        Self {
            sigma_range: 0.0,
            p_outlier: 0.0,
            outlier_spread: 0.0,
            nlos_bias: 0.0,
            p_detect_los: 1.0,
            p_detect_nlos: 1.0,
            max_range: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let ok = self.sigma_range >= 0.0
            && self.outlier_spread >= 0.0
            && self.nlos_bias >= 0.0
            && prob(self.p_outlier)
            && prob(self.p_detect_los)
            && prob(self.p_detect_nlos)
            && self.p_detect_nlos <= self.p_detect_los
            && self.max_range.is_none_or(|m| m > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SimError::BadNoiseModel(*self))
        }
    }
}

/// One range reading between a tag and an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub stamp: f64,
    pub tag_id: u32,
    pub anchor_id: u32,
    pub range: f64,
}

/// Simulates jittered-periodic ranging for every (tag, anchor) pair over the
/// trajectory's time span.
///
/// Each pair draws from its own schedule, detection, noise and outlier
/// streams, so results do not depend on pair iteration order. The returned log
/// is sorted by `(stamp, tag_id, anchor_id)`.
pub fn sample_measurements(
    env: &Environment,
    traj: &Trajectory,
    noise: &NoiseModel,
    rate_hz: f64,
    mounts: &[TagMount],
    seed: u64,
) -> Result<Vec<MeasurementRecord>, SimError> {
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(SimError::BadRate(rate_hz));
    }
    noise.validate()?;
    let period = 1.0 / rate_hz;
    let gaussian = Normal::new(0.0, noise.sigma_range).map_err(|_| SimError::BadNoiseModel(*noise))?;
    let nlos = (noise.nlos_bias > 0.0)
        .then(|| Exp::new(1.0 / noise.nlos_bias))
        .transpose()
        .map_err(|_| SimError::BadNoiseModel(*noise))?;

    let mut log = Vec::new();
    let n_anchors = env.anchors.len() as u64;
    for (ti, mount) in mounts.iter().enumerate() {
        for (ai, anchor) in env.anchors.iter().enumerate() {
            let pair = ti as u64 * n_anchors + ai as u64;
            let mut schedule = rng::indexed_stream(seed, "schedule", pair);
            let mut detection = rng::indexed_stream(seed, "detection", pair);
            let mut ranging = rng::indexed_stream(seed, "noise", pair);
            let mut outliers = rng::indexed_stream(seed, "outliers", pair);

            let mut t = traj.start() + schedule.random_range(0.0..period);
            while t <= traj.end() {
                let pose = traj.sample(t);
                let tag = tag_world_position(&pose, mount);
                let distance = (tag - anchor.position).norm();
                let los = line_of_sight(env, &tag, &anchor.position);
                let p_detect = if los { noise.p_detect_los } else { noise.p_detect_nlos };
                let in_range = noise.max_range.is_none_or(|m| distance <= m);
                // Always draw so the stream stays aligned with the schedule.
                let u: f64 = detection.random();
                if in_range && u < p_detect {
                    let mut range = anchor.scale * distance + anchor.bias;
                    if noise.sigma_range > 0.0 {
                        range += gaussian.sample(&mut ranging);
                    }
                    if !los {
                        if let Some(exp) = &nlos {
                            range += exp.sample(&mut ranging);
                        }
                    }
                    if noise.p_outlier > 0.0 && outliers.random::<f64>() < noise.p_outlier {
                        range += outliers.random_range(0.0..=noise.outlier_spread);
                    }
                    log.push(MeasurementRecord {
                        stamp: t,
                        tag_id: mount.tag_id,
                        anchor_id: anchor.anchor_id,
                        range: range.max(MIN_RANGE),
                    });
                }
                t += period * (1.0 + schedule.random_range(-PING_JITTER..=PING_JITTER));
            }
        }
    }
    log.sort_by(|a, b| {
        a.stamp
            .total_cmp(&b.stamp)
            .then(a.tag_id.cmp(&b.tag_id))
            .then(a.anchor_id.cmp(&b.anchor_id))
    });
    Ok(log)
}

/// Number of distinct anchors heard (by any tag) in the trailing `window`
/// seconds, evaluated every `step` seconds across the log.
pub fn visible_anchor_counts(log: &[MeasurementRecord], window: f64, step: f64) -> Vec<(f64, usize)> {
    let (Some(first), Some(last)) = (log.first(), log.last()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut t = first.stamp + window;
    while t <= last.stamp + 1e-12 {
        let lo = log.partition_point(|m| m.stamp < t - window);
        let hi = log.partition_point(|m| m.stamp <= t);
        let mut ids: Vec<u32> = log[lo..hi].iter().map(|m| m.anchor_id).collect();
        ids.sort_unstable();
        ids.dedup();
        out.push((t, ids.len()));
        t += step;
    }
    out
}

/// Number of distinct anchors in line of sight of any tag at some instant of
/// the trailing `window` seconds, with the trajectory sampled every `dt`
/// seconds and windows ending every `step` seconds.
pub fn line_of_sight_counts(
    env: &Environment,
    traj: &Trajectory,
    mounts: &[TagMount],
    window: f64,
    step: f64,
    dt: f64,
) -> Vec<(f64, usize)> {
    let n = ((traj.end() - traj.start()) / dt).floor() as usize + 1;
    let seen: Vec<(f64, Vec<bool>)> = (0..n)
        .map(|k| {
            let t = traj.start() + k as f64 * dt;
            let pose = traj.sample(t);
            let tags: Vec<_> = mounts.iter().map(|m| tag_world_position(&pose, m)).collect();
            let los = env
                .anchors
                .iter()
                .map(|a| tags.iter().any(|p| line_of_sight(env, p, &a.position)))
                .collect();
            (t, los)
        })
        .collect();
    let mut out = Vec::new();
    let mut t = traj.start() + window;
    while t <= traj.end() + 1e-12 {
        let lo = seen.partition_point(|s| s.0 < t - window);
        let hi = seen.partition_point(|s| s.0 <= t);
        let count = (0..env.anchors.len()).filter(|&a| seen[lo..hi].iter().any(|s| s.1[a])).count();
        out.push((t, count));
        t += step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{range_model, AnchorParams, Vec3};
    use crate::sim::{trajectory_through, Aabb};

    fn setup(occluders: Vec<Aabb>) -> (Environment, Trajectory, Vec<TagMount>) {
        let env = Environment::new(
            Aabb::new(Vec3::new(-50.0, -50.0, -5.0), Vec3::new(50.0, 50.0, 10.0)),
            vec![
                AnchorParams::new(0, Vec3::new(-40.0, 0.0, 2.0), 1.01, 0.1).unwrap(),
                AnchorParams::new(1, Vec3::new(40.0, 10.0, 3.0), 0.99, -0.05).unwrap(),
                AnchorParams::ideal(2, Vec3::new(0.0, 40.0, 1.0)),
            ],
            occluders,
        )
        .unwrap();
        let traj = trajectory_through(&[Vec3::new(-20.0, -20.0, 1.0), Vec3::new(20.0, 0.0, 1.0), Vec3::new(0.0, 20.0, 1.0)], 5.0, 0.05).unwrap();
        let mounts = vec![TagMount::new(0, Vec3::new(0.3, 0.2, 0.5)), TagMount::new(1, Vec3::new(-0.3, -0.2, 0.5))];
        (env, traj, mounts)
    }

    #[test]
    fn noiseless_records_equal_range_model() {
        let (env, traj, mounts) = setup(vec![]);
        let log = sample_measurements(&env, &traj, &NoiseModel::noiseless(), 10.0, &mounts, 3).unwrap();
        assert!(log.len() > 100);
        for m in &log {
            let mount = mounts.iter().find(|t| t.tag_id == m.tag_id).unwrap();
            let expected = range_model(&traj.sample(m.stamp), mount, env.anchor(m.anchor_id).unwrap());
            assert_eq!(m.range, expected);
        }
        assert!(log.windows(2).all(|w| w[0].stamp <= w[1].stamp));
    }

    #[test]
    fn no_detection_gives_empty_log() {
        let (env, traj, mounts) = setup(vec![]);
        let noise = NoiseModel { p_detect_los: 0.0, p_detect_nlos: 0.0, ..NoiseModel::noiseless() };
        assert!(sample_measurements(&env, &traj, &noise, 10.0, &mounts, 3).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_positive() {
        let (env, traj, mounts) = setup(vec![Aabb::new(Vec3::new(-5.0, -60.0, -5.0), Vec3::new(5.0, 60.0, 20.0))]);
        let noise = NoiseModel {
            sigma_range: 0.5,
            p_outlier: 0.1,
            outlier_spread: 30.0,
            nlos_bias: 2.0,
            p_detect_los: 0.9,
            p_detect_nlos: 0.4,
            max_range: None,
        };
        let a = sample_measurements(&env, &traj, &noise, 10.0, &mounts, 5).unwrap();
        let b = sample_measurements(&env, &traj, &noise, 10.0, &mounts, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|m| m.range >= MIN_RANGE));
    }

    #[test]
    fn mean_of_los_samples_converges_to_true_range() {
        let env = Environment::new(
            Aabb::new(Vec3::new(-10.0, -10.0, -10.0), Vec3::new(10.0, 10.0, 10.0)),
            vec![AnchorParams::ideal(0, Vec3::new(3.0, 4.0, 0.0))],
            vec![],
        )
        .unwrap();
        // static vehicle: 10^5 pings at 1 kHz over 100 s
        let poses = vec![
            crate::geometry::Pose::new(Vec3::zeros(), crate::geometry::Rotation::identity(), 0.0).unwrap(),
            crate::geometry::Pose::new(Vec3::zeros(), crate::geometry::Rotation::identity(), 100.0).unwrap(),
        ];
        let traj = Trajectory::new(100.0, poses).unwrap();
        let noise = NoiseModel { sigma_range: 0.1, ..NoiseModel::noiseless() };
        let log = sample_measurements(&env, &traj, &noise, 1000.0, &[TagMount::new(0, Vec3::zeros())], 9).unwrap();
        assert!(log.len() > 95_000);
        let mean = log.iter().map(|m| m.range).sum::<f64>() / log.len() as f64;
        assert!((mean - 5.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn invalid_noise_and_rate_rejected() {
        let (env, traj, mounts) = setup(vec![]);
        let bad = NoiseModel { p_detect_nlos: 1.0, p_detect_los: 0.5, ..NoiseModel::noiseless() };
        assert!(matches!(sample_measurements(&env, &traj, &bad, 10.0, &mounts, 0), Err(SimError::BadNoiseModel(_))));
        assert!(matches!(
            sample_measurements(&env, &traj, &NoiseModel::noiseless(), 0.0, &mounts, 0),
            Err(SimError::BadRate(_))
        ));
    }

    #[test]
    fn visibility_counts() {
        let log = vec![
            MeasurementRecord { stamp: 0.0, tag_id: 0, anchor_id: 1, range: 1.0 },
            MeasurementRecord { stamp: 0.5, tag_id: 1, anchor_id: 2, range: 1.0 },
            MeasurementRecord { stamp: 1.6, tag_id: 0, anchor_id: 1, range: 1.0 },
            MeasurementRecord { stamp: 3.0, tag_id: 0, anchor_id: 1, range: 1.0 },
        ];
        let counts = visible_anchor_counts(&log, 1.0, 1.0);
        assert_eq!(counts, vec![(1.0, 2), (2.0, 1), (3.0, 1)]);
    }

    #[test]
    fn line_of_sight_counts_follow_occluders() {
        let (env, traj, mounts) = setup(vec![]);
        let open = line_of_sight_counts(&env, &traj, &mounts, 1.0, 1.0, 0.05);
        assert!(!open.is_empty());
        assert!(open.iter().all(|c| c.1 == 3));
        // A slab between the trajectory and anchor 0 only.
        let wall = Aabb::new(Vec3::new(-35.0, -50.0, -5.0), Vec3::new(-34.0, 50.0, 10.0));
        let (env, traj, mounts) = setup(vec![wall]);
        let walled = line_of_sight_counts(&env, &traj, &mounts, 1.0, 1.0, 0.05);
        assert_eq!(walled.len(), open.len());
        assert!(walled.iter().all(|c| c.1 == 2));
    }
}
