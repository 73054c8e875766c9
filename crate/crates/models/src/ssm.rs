//! Diagonal selective state-space recurrence with exact zero-order-hold
//! discretization, as a fused tape operation, plus the depthwise causal
//! convolution that precedes it in a block.

use std::cell::RefCell;
use std::rc::Rc;

use uwbloc_autodiff::{AutodiffError, BackwardArgs, CustomOp, Tensor, Var};

/// `(Ā, B̄)` for one diagonal entry: `Ā = exp(Δa)`, `B̄ = (exp(Δa) - 1) / a * b`.
pub fn discretize(delta: f64, a: f64, b: f64) -> (f64, f64) {
    let x = delta * a;
    (x.exp(), x.exp_m1() / a * b)
}

/// Dimensions of one scan: batch, length, channels, state size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanDims {
    pub batch: usize,
    pub len: usize,
    pub d_inner: usize,
    pub d_state: usize,
}

impl ScanDims {
    /// Validates `u, Δ: [B, S, Din]`, `A: [Din, N]`, `B, C: [B, S, N]`, `D: [Din]`.
    pub fn check(inputs: &[&Tensor]) -> Result<Self, AutodiffError> {
        let [u, delta, a, b, c, d] = inputs else {
            return Err(AutodiffError::BadShape {
                op: "selective_scan",
                shape: vec![inputs.len()],
                reason: "expects 6 inputs".into(),
            });
        };
        let mismatch = |lhs: &Tensor, rhs: &Tensor| AutodiffError::ShapeMismatch {
            op: "selective_scan",
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        let &[batch, len, d_inner] = u.shape() else {
            return Err(mismatch(u, delta));
        };
        if delta.shape() != u.shape() {
            return Err(mismatch(u, delta));
        }
        if a.rank() != 2 || a.shape()[0] != d_inner {
            return Err(mismatch(u, a));
        }
        let d_state = a.shape()[1];
        if b.shape() != [batch, len, d_state] {
            return Err(mismatch(a, b));
        }
        if c.shape() != b.shape() {
            return Err(mismatch(b, c));
        }
        if d.shape() != [d_inner] {
            return Err(mismatch(u, d));
        }
        Ok(Self {
            batch,
            len,
            d_inner,
            d_state,
        })
    }
}

/// Reference recurrence: materializes `Ā_t`, `B̄_t` for every step and runs
/// `h_t = Ā_t h_{t-1} + B̄_t u_t`, `y_t = C_t h_t + D u_t` from `h_0 = 0`.
pub fn naive_scan(u: &Tensor, delta: &Tensor, a: &Tensor, b: &Tensor, c: &Tensor, d: &Tensor) -> Result<Tensor, AutodiffError> {
    let dims = ScanDims::check(&[u, delta, a, b, c, d])?;
    let ScanDims {
        batch,
        len,
        d_inner,
        d_state,
    } = dims;
    let mut y = vec![0.0; batch * len * d_inner];
    for bi in 0..batch {
        for ch in 0..d_inner {
            let mut h = vec![0.0; d_state];
            for t in 0..len {
                let row = (bi * len + t) * d_inner + ch;
                let srow = (bi * len + t) * d_state;
                let (abar, bbar): (Vec<f64>, Vec<f64>) = (0..d_state)
                    .map(|n| discretize(delta.data()[row], a.data()[ch * d_state + n], b.data()[srow + n]))
                    .unzip();
                for n in 0..d_state {
                    h[n] = abar[n] * h[n] + bbar[n] * u.data()[row];
                }
                let ch_out: f64 = (0..d_state).map(|n| c.data()[srow + n] * h[n]).sum();
                y[row] = ch_out + d.data()[ch] * u.data()[row];
            }
        }
    }
    Tensor::new(vec![batch, len, d_inner], y)
}

/// Largest scan (in `B * S * Din * N` elements) whose `exp(Δa) - 1` values
/// are kept from forward to backward; bigger scans recompute them.
pub const EXP_CACHE_LIMIT: usize = 1 << 22;

/// `d/da [(exp(Δa) - 1) / a]`, i.e. `Δ^2 (x e^x - expm1 x) / x^2` with `x = Δa`.
fn zoh_grad_a(dl: f64, x: f64, alpha: f64, em1: f64, inv_a: f64) -> f64 {
    if x.abs() < 1e-3 {
        dl * dl * (0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x / 30.0)))
    } else {
        (x * alpha - em1) * inv_a * inv_a
    }
}

/// Fused scan. Keeps the hidden states of its forward pass for the backward
/// pass, so each application needs its own instance. Computes `exp(Δa) - 1`
/// as a difference rather than with `expm1`: the absolute error stays at
/// rounding level, which is what the recurrence sees.
#[derive(Default)]
pub struct SelectiveScan {
    states: RefCell<Vec<f64>>,
    em1: RefCell<Vec<f64>>,
}

impl SelectiveScan {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CustomOp for SelectiveScan {
    fn name(&self) -> &'static str {
        "selective_scan"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let ScanDims {
            batch,
            len,
            d_inner,
            d_state,
        } = ScanDims::check(inputs)?;
        let (u, delta, a, b, c, d) = (
            inputs[0].data(),
            inputs[1].data(),
            inputs[2].data(),
            inputs[3].data(),
            inputs[4].data(),
            inputs[5].data(),
        );
        let total = batch * len * d_inner * d_state;
        let inv_a: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
        let mut states = self.states.borrow_mut();
        states.clear();
        states.reserve_exact(total);
        let mut cache = self.em1.borrow_mut();
        cache.clear();
        let caching = total <= EXP_CACHE_LIMIT;
        if caching {
            cache.reserve_exact(total);
        }
        let mut y = Vec::with_capacity(batch * len * d_inner);
        let mut h = vec![0.0; d_inner * d_state];
        for bi in 0..batch {
            h.fill(0.0);
            for t in 0..len {
                let row = (bi * len + t) * d_inner;
                let srow = (bi * len + t) * d_state;
                let (bt, ct) = (&b[srow..srow + d_state], &c[srow..srow + d_state]);
                for (ch, hr) in h.chunks_exact_mut(d_state).enumerate() {
                    let (dl, ui) = (delta[row + ch], u[row + ch]);
                    let k0 = ch * d_state;
                    let ar = &a[k0..k0 + d_state];
                    let ir = &inv_a[k0..k0 + d_state];
                    let mut acc = 0.0;
                    for ((((hn, an), ia), bn), cn) in hr.iter_mut().zip(ar).zip(ir).zip(bt).zip(ct) {
                        let alpha = (dl * an).exp();
                        // exp may underflow to 0 for very large Δ|a|; NaN is left to
                        // the caller's divergence check
                        debug_assert!(!(alpha > 1.0 || alpha < 0.0), "unstable transition {alpha}");
                        let em1 = alpha - 1.0;
                        if caching {
                            cache.push(em1);
                        }
                        *hn = alpha * *hn + em1 * ia * bn * ui;
                        acc += cn * *hn;
                    }
                    y.push(acc + d[ch] * ui);
                }
                states.extend_from_slice(&h);
            }
        }
        Tensor::new(vec![batch, len, d_inner], y)
    }

    fn backward(&self, args: &BackwardArgs) -> Vec<Option<Tensor>> {
        let refs: Vec<&Tensor> = args.inputs.iter().map(|t| t.as_ref()).collect();
        let ScanDims {
            batch,
            len,
            d_inner,
            d_state,
        } = ScanDims::check(&refs).expect("checked in forward");
        let (u, delta, a, b, c, d) = (
            refs[0].data(),
            refs[1].data(),
            refs[2].data(),
            refs[3].data(),
            refs[4].data(),
            refs[5].data(),
        );
        let g = args.grad.data();
        let inv_a: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
        let states = self.states.borrow();
        let cache = self.em1.borrow();
        let cached = !cache.is_empty();
        let zeros = vec![0.0; d_inner * d_state];
        let mut du = vec![0.0; u.len()];
        let mut ddelta = vec![0.0; delta.len()];
        let mut da = vec![0.0; a.len()];
        let mut db = vec![0.0; b.len()];
        let mut dc = vec![0.0; c.len()];
        let mut dd = vec![0.0; d.len()];
        // carry = Ā_{t+1} λ_{t+1}, the part of dL/dh_t flowing back from step t+1
        let mut carry = vec![0.0; d_inner * d_state];
        for bi in 0..batch {
            carry.fill(0.0);
            for t in (0..len).rev() {
                let row = (bi * len + t) * d_inner;
                let srow = (bi * len + t) * d_state;
                let h_t = &states[row * d_state..(row + d_inner) * d_state];
                let h_prev = if t > 0 {
                    &states[(row - d_inner) * d_state..row * d_state]
                } else {
                    &zeros[..]
                };
                let (bt, ct) = (&b[srow..srow + d_state], &c[srow..srow + d_state]);
                for ch in 0..d_inner {
                    let (dl, ui, gi) = (delta[row + ch], u[row + ch], g[row + ch]);
                    dd[ch] += gi * ui;
                    let mut du_acc = gi * d[ch];
                    let mut ddl = 0.0;
                    let k0 = ch * d_state;
                    let r = k0..k0 + d_state;
                    let em_row = cached.then(|| &cache[(row + ch) * d_state..(row + ch + 1) * d_state]);
                    let dcr = &mut dc[srow..srow + d_state];
                    let dbr = &mut db[srow..srow + d_state];
                    let dar = &mut da[r.clone()];
                    let car = &mut carry[r.clone()];
                    for n in 0..d_state {
                        let (an, ia) = (a[k0 + n], inv_a[k0 + n]);
                        let x = dl * an;
                        let em1 = match em_row {
                            Some(e) => e[n],
                            None => x.exp() - 1.0,
                        };
                        let alpha = em1 + 1.0;
                        let e = em1 * ia;
                        let hp = h_prev[k0 + n];
                        let lam = gi * ct[n] + car[n];
                        dcr[n] += gi * h_t[k0 + n];
                        let lu = lam * ui;
                        let bn = bt[n];
                        // dL/dĀ = λ h_{t-1}, dL/dB̄ = λ u
                        ddl += (lam * hp * an + lu * bn) * alpha;
                        dar[n] += lam * hp * dl * alpha + lu * bn * zoh_grad_a(dl, x, alpha, em1, ia);
                        dbr[n] += lu * e;
                        du_acc += lam * e * bn;
                        car[n] = alpha * lam;
                    }
                    ddelta[row + ch] = ddl;
                    du[row + ch] = du_acc;
                }
            }
        }
        let out = [du, ddelta, da, db, dc, dd];
        out.into_iter()
            .zip(refs)
            .zip(args.needs)
            .map(|((g, x), need)| need.then(|| Tensor::new(x.shape().to_vec(), g).expect("input shape")))
            .collect()
    }
}

/// Applies the fused scan on the tape of `u`.
pub fn selective_scan<'t>(
    u: Var<'t>,
    delta: Var<'t>,
    a: Var<'t>,
    b: Var<'t>,
    c: Var<'t>,
    d: Var<'t>,
) -> Result<Var<'t>, AutodiffError> {
    u.tape().custom(Rc::new(SelectiveScan::new()), &[u, delta, a, b, c, d])
}

/// Depthwise causal convolution: `y[t, c] = bias[c] + Σ_k w[c, k] x[t - K + 1 + k, c]`
/// with zero padding before the start. Inputs `x: [B, S, C]`, `w: [C, K]`, `bias: [C]`.
pub struct CausalConv;

impl CausalConv {
    fn dims(inputs: &[&Tensor]) -> Result<(usize, usize, usize, usize), AutodiffError> {
        let [x, w, bias] = inputs else {
            return Err(AutodiffError::BadShape {
                op: "causal_conv",
                shape: vec![inputs.len()],
                reason: "expects 3 inputs".into(),
            });
        };
        let err = |rhs: &Tensor| AutodiffError::ShapeMismatch {
            op: "causal_conv",
            lhs: x.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        };
        let &[batch, len, ch] = x.shape() else { return Err(err(w)) };
        if w.rank() != 2 || w.shape()[0] != ch || w.shape()[1] == 0 {
            return Err(err(w));
        }
        if bias.shape() != [ch] {
            return Err(err(bias));
        }
        Ok((batch, len, ch, w.shape()[1]))
    }
}

impl CustomOp for CausalConv {
    fn name(&self) -> &'static str {
        "causal_conv"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (batch, len, ch, k) = Self::dims(inputs)?;
        let (x, w, bias) = (inputs[0].data(), inputs[1].data(), inputs[2].data());
        let mut y = Vec::with_capacity(x.len());
        for bi in 0..batch {
            for t in 0..len {
                for c in 0..ch {
                    let mut acc = bias[c];
                    for j in 0..k {
                        if let Some(src) = (t + j + 1).checked_sub(k) {
                            acc += w[c * k + j] * x[(bi * len + src) * ch + c];
                        }
                    }
                    y.push(acc);
                }
            }
        }
        Tensor::new(vec![batch, len, ch], y)
    }

    fn backward(&self, args: &BackwardArgs) -> Vec<Option<Tensor>> {
        let refs: Vec<&Tensor> = args.inputs.iter().map(|t| t.as_ref()).collect();
        let (batch, len, ch, k) = Self::dims(&refs).expect("checked in forward");
        let (x, w) = (refs[0].data(), refs[1].data());
        let g = args.grad.data();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; ch];
        for bi in 0..batch {
            for t in 0..len {
                for c in 0..ch {
                    let gi = g[(bi * len + t) * ch + c];
                    db[c] += gi;
                    for j in 0..k {
                        if let Some(src) = (t + j + 1).checked_sub(k) {
                            let xi = (bi * len + src) * ch + c;
                            dw[c * k + j] += gi * x[xi];
                            dx[xi] += gi * w[c * k + j];
                        }
                    }
                }
            }
        }
        [dx, dw, db]
            .into_iter()
            .zip(refs)
            .zip(args.needs)
            .map(|((g, x), need)| need.then(|| Tensor::new(x.shape().to_vec(), g).expect("input shape")))
            .collect()
    }
}

pub fn causal_conv<'t>(x: Var<'t>, w: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, AutodiffError> {
    x.tape().custom(Rc::new(CausalConv), &[x, w, bias])
}
