use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{trajectory_through, Aabb, Environment, SimError, Trajectory};
use crate::geometry::{AnchorParams, Vec3};
use crate::rng;

/// A city-block layout: a grid of streets with buildings filling the blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampusParams {
    pub size_x: f64,
    pub size_y: f64,
    pub height: f64,
    /// x coordinates of the north-south streets.
    pub streets_x: Vec<f64>,
    /// y coordinates of the east-west streets.
    pub streets_y: Vec<f64>,
    pub street_half_width: f64,
    pub building_height_min: f64,
    pub building_height_max: f64,
    /// Probability that a block is left open (a park or a car park).
    pub open_block_fraction: f64,
    pub n_anchors: usize,
    pub anchor_height_min: f64,
    pub anchor_height_max: f64,
    /// Anchor range scales are drawn from `1 ± scale_spread`.
    pub scale_spread: f64,
    /// Anchor range biases are drawn from `± bias_spread` meters.
    pub bias_spread: f64,
    /// Height of the vehicle reference point above ground.
    pub vehicle_height: f64,
}

impl Default for CampusParams {
    fn default() -> Self {
        Self {
            size_x: 400.0,
            size_y: 200.0,
            height: 30.0,
            streets_x: vec![15.0, 95.0, 175.0, 255.0, 335.0, 385.0],
            streets_y: vec![15.0, 70.0, 130.0, 185.0],
            street_half_width: 6.0,
            building_height_min: 8.0,
            building_height_max: 25.0,
            open_block_fraction: 0.15,
            n_anchors: 10,
            anchor_height_min: 1.5,
            anchor_height_max: 4.0,
            scale_spread: 0.01,
            bias_spread: 0.3,
            vehicle_height: 0.5,
        }
    }
}

/// Drivable street network: junctions at every `(streets_x[i], streets_y[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub z: f64,
}

impl StreetGrid {
    pub fn junction(&self, i: usize, j: usize) -> Vec3 {
        Vec3::new(self.xs[i], self.ys[j], self.z)
    }
}

fn sorted_inside(v: &[f64], hi: f64) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[0] < w[1]) && v[0] > 0.0 && v[v.len() - 1] < hi
}

/// Builds the campus environment and its street grid.
pub fn generate_campus(params: &CampusParams, seed: u64) -> Result<(Environment, StreetGrid), SimError> {
    if !sorted_inside(&params.streets_x, params.size_x) || !sorted_inside(&params.streets_y, params.size_y) {
        return Err(SimError::BadCampus("streets must be increasing, inside the area, at least two per axis".into()));
    }
    if params.building_height_max < params.building_height_min || params.anchor_height_max < params.anchor_height_min {
        return Err(SimError::BadCampus("height ranges are inverted".into()));
    }
    let bounds = Aabb::new(Vec3::zeros(), Vec3::new(params.size_x, params.size_y, params.height));
    let hw = params.street_half_width;

    // Block edges along each axis: area border and both sides of every street.
    let edges = |streets: &[f64], size: f64| {
        let mut spans = Vec::new();
        let mut lo = 0.0;
        for &s in streets {
            if s - hw > lo {
                spans.push((lo, s - hw));
            }
            lo = s + hw;
        }
        if size > lo {
            spans.push((lo, size));
        }
        spans
    };
    let mut r = rng::stream(seed, "campus");
    let mut occluders = Vec::new();
    for &(x0, x1) in &edges(&params.streets_x, params.size_x) {
        for &(y0, y1) in &edges(&params.streets_y, params.size_y) {
            if r.random::<f64>() < params.open_block_fraction {
                continue;
            }
            let h = r.random_range(params.building_height_min..=params.building_height_max).min(params.height);
            let inset = 1.0;
            if x1 - x0 > 2.0 * inset && y1 - y0 > 2.0 * inset {
                occluders.push(Aabb::new(Vec3::new(x0 + inset, y0 + inset, 0.0), Vec3::new(x1 - inset, y1 - inset, h)));
            }
        }
    }

    // Anchors stand at the street side next to distinct junctions.
    let mut junctions: Vec<(usize, usize)> = (0..params.streets_x.len())
        .flat_map(|i| (0..params.streets_y.len()).map(move |j| (i, j)))
        .collect();
    if params.n_anchors == 0 || params.n_anchors > junctions.len() {
        return Err(SimError::BadCampus(format!(
            "n_anchors must be in 1..={}, got {}",
            junctions.len(),
            params.n_anchors
        )));
    }
    let mut anchors = Vec::with_capacity(params.n_anchors);
    for k in 0..params.n_anchors {
        let pick = r.random_range(0..junctions.len());
        let (i, j) = junctions.swap_remove(pick);
        let along = r.random_range(-20.0..=20.0);
        let side = if r.random::<bool>() { 0.8 } else { -0.8 } * hw;
        let (x, y) = if r.random::<bool>() {
            (params.streets_x[i] + side, params.streets_y[j] + along)
        } else {
            (params.streets_x[i] + along, params.streets_y[j] + side)
        };
        let position = Vec3::new(
            x.clamp(0.5, params.size_x - 0.5),
            y.clamp(0.5, params.size_y - 0.5),
            r.random_range(params.anchor_height_min..=params.anchor_height_max),
        );
        let scale = 1.0 + r.random_range(-params.scale_spread..=params.scale_spread);
        let bias = r.random_range(-params.bias_spread..=params.bias_spread);
        anchors.push(AnchorParams::new(k as u32, position, scale, bias)?);
    }
    let env = Environment::new(bounds, anchors, occluders)?;
    let grid = StreetGrid {
        xs: params.streets_x.clone(),
        ys: params.streets_y.clone(),
        z: params.vehicle_height,
    };
    Ok((env, grid))
}

/// Random drive along the street grid visiting `waypoint_count` junctions,
/// never immediately turning back. Corners are rounded within a few meters.
pub fn generate_street_trajectory(
    grid: &StreetGrid,
    waypoint_count: usize,
    speed: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if waypoint_count < 2 {
        return Err(SimError::TooFewWaypoints(waypoint_count));
    }
    if grid.xs.len() < 2 || grid.ys.len() < 2 {
        return Err(SimError::BadCampus("street grid needs at least 2x2 junctions".into()));
    }
    let mut r = rng::stream(seed, "trajectory");
    let mut at = (r.random_range(0..grid.xs.len()), r.random_range(0..grid.ys.len()));
    let mut prev: Option<(usize, usize)> = None;
    let mut nodes = vec![at];
    while nodes.len() < waypoint_count {
        let (i, j) = at;
        let mut options = Vec::with_capacity(4);
        if i > 0 {
            options.push((i - 1, j));
        }
        if i + 1 < grid.xs.len() {
            options.push((i + 1, j));
        }
        if j > 0 {
            options.push((i, j - 1));
        }
        if j + 1 < grid.ys.len() {
            options.push((i, j + 1));
        }
        let forward: Vec<_> = options.iter().copied().filter(|o| Some(*o) != prev).collect();
        let choices = if forward.is_empty() { &options } else { &forward };
        let next = *choices.choose(&mut r).expect("grid has neighbors");
        prev = Some(at);
        at = next;
        nodes.push(at);
    }

    const CORNER: f64 = 6.0;
    let points: Vec<Vec3> = nodes.iter().map(|&(i, j)| grid.junction(i, j)).collect();
    let mut waypoints = vec![points[0]];
    for k in 1..points.len() - 1 {
        let (a, b, c) = (points[k - 1], points[k], points[k + 1]);
        let din = (b - a).normalize();
        let dout = (c - b).normalize();
        if din.dot(&dout) > 0.999 {
            waypoints.push(b);
            continue;
        }
        let cin = CORNER.min(0.5 * (b - a).norm());
        let cout = CORNER.min(0.5 * (c - b).norm());
        waypoints.push(b - din * cin);
        waypoints.push(b);
        waypoints.push(b + dout * cout);
    }
    waypoints.push(points[points.len() - 1]);
    trajectory_through(&waypoints, speed, dt)
}
