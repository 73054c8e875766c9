use nalgebra::{DMatrix, DVector};

use super::{huber_cost, huber_weight, residual_jacobian, GoConfig, GoError, TAG_LINK_SIGMA};
use crate::dataset::{FrameVector, Layout};
use crate::geometry::{AnchorParams, TagMount, Vec3};

/// Cost below which the window counts as solved exactly.
const ABS_COST_TOL: f64 = 1e-20;
const GRAD_TOL: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e16;
const LAMBDA_MIN: f64 = 1e-15;
/// Smallest accepted ratio of singular values in the multilateration system.
const MULTILATERATION_COND: f64 = 1e-6;
/// Relative cost drop for the second start to count as a different minimum.
const DISTINCT_MINIMUM: f64 = 1e-9;

/// Known quantities of the estimation problem: which slot of a frame belongs
/// to which tag and anchor, the anchors themselves, and the tag separation.
#[derive(Debug, Clone, PartialEq)]
pub struct GoModel {
    pub layout: Layout,
    /// Anchors in `layout.anchor_ids` order.
    pub anchors: Vec<AnchorParams>,
    /// Distance between the first two tags when both are mounted.
    pub tag_distance: Option<f64>,
}

impl GoModel {
    pub fn new(layout: Layout, anchors: &[AnchorParams], mounts: &[TagMount]) -> Result<Self, GoError> {
        let ordered = layout
            .anchor_ids
            .iter()
            .map(|id| anchors.iter().find(|a| a.anchor_id == *id).copied().ok_or(GoError::UnknownAnchor(*id)))
            .collect::<Result<Vec<_>, _>>()?;
        let offsets = layout
            .tag_ids
            .iter()
            .map(|id| mounts.iter().find(|m| m.tag_id == *id).map(|m| m.body_offset).ok_or(GoError::UnknownTag(*id)))
            .collect::<Result<Vec<_>, _>>()?;
        let tag_distance = (offsets.len() >= 2).then(|| (offsets[0] - offsets[1]).norm());
        Ok(Self { layout, anchors: ordered, tag_distance })
    }

    pub fn n_tags(&self) -> usize {
        self.layout.n_tags()
    }

    pub fn anchor_centroid(&self) -> Vec3 {
        self.anchors.iter().map(|a| a.position).sum::<Vec3>() / self.anchors.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoSolution {
    pub n_tags: usize,
    /// Frame-major: `positions[k * n_tags + j]` is tag `j` in frame `k`.
    pub positions: Vec<Vec3>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some tag saw fewer than four distinct anchors in the window.
    pub low_observability: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_trace: Vec<f64>,
}

impl GoSolution {
    pub fn position(&self, frame: usize, tag: usize) -> Vec3 {
        self.positions[frame * self.n_tags + tag]
    }

    /// Estimates of the first tag, one per frame.
    pub fn first_tag(&self) -> Vec<Vec3> {
        self.positions.iter().step_by(self.n_tags).copied().collect()
    }
}

struct Obs {
    var: usize,
    anchor: usize,
    range: f64,
}

struct Problem<'a> {
    model: &'a GoModel,
    config: &'a GoConfig,
    n_frames: usize,
    obs: Vec<Obs>,
    /// Frames where both linked tags have ranges.
    links: Vec<usize>,
}

impl Problem<'_> {
    fn n_tags(&self) -> usize {
        self.model.n_tags()
    }

    fn cost(&self, x: &[Vec3]) -> f64 {
        let delta = self.config.huber_delta;
        let mut c: f64 = self
            .obs
            .iter()
            .map(|o| huber_cost(o.range - self.model.anchors[o.anchor].range_from(&x[o.var]), delta))
            .sum();
        let t = self.n_tags();
        let s = self.config.motion_sigma;
        for j in 0..t {
            for k in 1..self.n_frames.saturating_sub(1) {
                let a = (x[(k + 1) * t + j] - 2.0 * x[k * t + j] + x[(k - 1) * t + j]) / s;
                c += 0.5 * a.norm_squared();
            }
        }
        if let Some(len) = self.model.tag_distance {
            for &k in &self.links {
                let l = ((x[k * t] - x[k * t + 1]).norm() - len) / TAG_LINK_SIGMA;
                c += 0.5 * l * l;
            }
        }
        c
    }

    /// Gauss–Newton system `H`, gradient `g` of the robust cost at `x`, with
    /// Huber weights frozen at the current residuals.
    fn linearize(&self, x: &[Vec3]) -> (DMatrix<f64>, DVector<f64>) {
        let n = 3 * x.len();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for o in &self.obs {
            let a = &self.model.anchors[o.anchor];
            let jac = residual_jacobian(&x[o.var], a);
            if jac.singular {
                continue;
            }
            let r = o.range - a.range_from(&x[o.var]);
            let w = huber_weight(r, self.config.huber_delta);
            let b = 3 * o.var;
            for p in 0..3 {
                g[b + p] += w * jac.gradient[p] * r;
                for q in 0..3 {
                    h[(b + p, b + q)] += w * jac.gradient[p] * jac.gradient[q];
                }
            }
        }
        let t = self.n_tags();
        let s = self.config.motion_sigma;
        let coef = [1.0 / s, -2.0 / s, 1.0 / s];
        for j in 0..t {
            for k in 1..self.n_frames.saturating_sub(1) {
                let vars = [(k - 1) * t + j, k * t + j, (k + 1) * t + j];
                let a = (x[vars[2]] - 2.0 * x[vars[1]] + x[vars[0]]) / s;
                for (ci, vi) in coef.iter().zip(vars) {
                    for p in 0..3 {
                        g[3 * vi + p] += ci * a[p];
                        for (cj, vj) in coef.iter().zip(vars) {
                            h[(3 * vi + p, 3 * vj + p)] += ci * cj;
                        }
                    }
                }
            }
        }
        if let Some(len) = self.model.tag_distance {
            for &k in &self.links {
                let d = x[k * t] - x[k * t + 1];
                let dn = d.norm();
                if dn <= super::SINGULAR_DISTANCE {
                    continue;
                }
                let l = (dn - len) / TAG_LINK_SIGMA;
                let u = d / (dn * TAG_LINK_SIGMA);
                let (v0, v1) = (3 * k * t, 3 * (k * t + 1));
                for p in 0..3 {
                    g[v0 + p] += u[p] * l;
                    g[v1 + p] -= u[p] * l;
                    for q in 0..3 {
                        let uu = u[p] * u[q];
                        h[(v0 + p, v0 + q)] += uu;
                        h[(v1 + p, v1 + q)] += uu;
                        h[(v0 + p, v1 + q)] -= uu;
                        h[(v1 + p, v0 + q)] -= uu;
                    }
                }
            }
        }
        (h, g)
    }
}

/// Solves one window of frames. `init` holds a starting position for every
/// tag in every frame, frame-major.
pub fn solve_window(
    frames: &[FrameVector],
    model: &GoModel,
    config: &GoConfig,
    init: &[Vec3],
) -> Result<GoSolution, GoError> {
    config.validate()?;
    let t = model.n_tags();
    let n_anchors = model.anchors.len();
    if init.len() != frames.len() * t {
        return Err(GoError::BadInit { got: init.len(), expected: frames.len() * t });
    }
    let mut obs = Vec::new();
    let mut links = Vec::new();
    let mut seen = vec![vec![false; n_anchors]; t];
    for (k, f) in frames.iter().enumerate() {
        let mut has = vec![false; t];
        for (j, tag_seen) in seen.iter_mut().enumerate() {
            for (a, anchor_seen) in tag_seen.iter_mut().enumerate() {
                let range = f.values[j * n_anchors + a];
                if range > 0.0 {
                    obs.push(Obs { var: k * t + j, anchor: a, range });
                    *anchor_seen = true;
                    has[j] = true;
                }
            }
        }
        if t >= 2 && has[0] && has[1] {
            links.push(k);
        }
    }
    if obs.is_empty() {
        return Err(GoError::NoMeasurements);
    }
    let low_observability = seen.iter().any(|s| s.iter().filter(|v| **v).count() < 4);
    let problem = Problem { model, config, n_frames: frames.len(), obs, links };

    let mut best = problem.descend(init.to_vec());
    if let Some(alt) = problem.multilateration_start(init) {
        let other = problem.descend(alt);
        if other.cost < best.cost * (1.0 - DISTINCT_MINIMUM) {
            best = other;
        }
    }
    Ok(GoSolution {
        n_tags: t,
        positions: best.x,
        cost: best.cost,
        iterations: best.iterations,
        converged: best.converged,
        low_observability,
        cost_trace: best.trace,
    })
}

struct Descent {
    x: Vec<Vec3>,
    cost: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Problem<'_> {
    /// Levenberg–Marquardt from `x`.
    fn descend(&self, mut x: Vec<Vec3>) -> Descent {
        let config = self.config;
        let mut cost = self.cost(&x);
        let mut trace = vec![cost];
        let mut lambda = config.lm_lambda0;
        let mut converged = false;
        let mut iterations = 0;
        'outer: while iterations < config.max_iters {
            if cost <= ABS_COST_TOL {
                converged = true;
                break;
            }
            iterations += 1;
            let (h, g) = self.linearize(&x);
            if g.amax() <= GRAD_TOL {
                converged = true;
                break;
            }
            let damping: Vec<f64> = h.diagonal().iter().map(|d| d.max(1e-9)).collect();
            let (x_new, cost_new) = loop {
                let mut a = h.clone();
                for (i, d) in damping.iter().enumerate() {
                    a[(i, i)] += lambda * d;
                }
                if let Some(chol) = a.cholesky() {
                    let step = chol.solve(&(-&g));
                    let cand: Vec<Vec3> = x
                        .iter()
                        .enumerate()
                        .map(|(i, p)| p + Vec3::new(step[3 * i], step[3 * i + 1], step[3 * i + 2]))
                        .collect();
                    let c = self.cost(&cand);
                    if c < cost {
                        break (cand, c);
                    }
                }
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    break 'outer;
                }
            };
            let rel = (cost - cost_new) / cost;
            x = x_new;
            cost = cost_new;
            trace.push(cost);
            lambda = (lambda / 10.0).max(LAMBDA_MIN);
            if rel < config.rel_tol || cost <= ABS_COST_TOL {
                converged = true;
                break;
            }
        }
        Descent { x, cost, trace, iterations, converged }
    }

    /// `init` with every tag position that sees four or more non-coplanar
    /// anchors replaced by its linear least-squares multilateration, or `None`
    /// when no position qualifies.
    fn multilateration_start(&self, init: &[Vec3]) -> Option<Vec<Vec3>> {
        let mut per_var: Vec<Vec<(Vec3, f64)>> = vec![Vec::new(); init.len()];
        for o in &self.obs {
            let a = &self.model.anchors[o.anchor];
            per_var[o.var].push((a.position, (o.range - a.bias) / a.scale));
        }
        let mut x = init.to_vec();
        let mut changed = false;
        for (v, seen) in per_var.iter().enumerate() {
            if let Some(p) = multilaterate(seen) {
                x[v] = p;
                changed = true;
            }
        }
        changed.then_some(x)
    }
}

/// Linear least-squares position from `(anchor, distance)` pairs, obtained by
/// differencing the sphere equations against the first anchor.
fn multilaterate(seen: &[(Vec3, f64)]) -> Option<Vec3> {
    if seen.len() < 4 {
        return None;
    }
    let (p0, d0) = seen[0];
    let rows = seen.len() - 1;
    let mut a = DMatrix::zeros(rows, 3);
    let mut b = DVector::zeros(rows);
    for (i, (p, d)) in seen[1..].iter().enumerate() {
        let diff = 2.0 * (p - p0);
        for c in 0..3 {
            a[(i, c)] = diff[c];
        }
        b[i] = d0 * d0 - d * d + p.norm_squared() - p0.norm_squared();
    }
    let svd = a.svd(true, true);
    let (hi, lo) = (svd.singular_values.max(), svd.singular_values.min());
    if !(lo > MULTILATERATION_COND * hi) {
        return None;
    }
    let sol = svd.solve(&b, 0.0).ok()?;
    let p = Vec3::new(sol[0], sol[1], sol[2]);
    p.iter().all(|c| c.is_finite()).then_some(p)
}
