use uwbloc_autodiff::{AutodiffError, Var};

pub const RMS_EPS: f64 = 1e-5;

/// `x W (+ b)` over the last axis.
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Option<Var<'t>>) -> Result<Var<'t>, AutodiffError> {
    let y = x.matmul(w)?;
    match b {
        Some(b) => y.add(b),
        None => Ok(y),
    }
}

/// `x / sqrt(mean(x^2) + eps) * w` over the last axis.
pub fn rms_norm<'t>(x: Var<'t>, w: Var<'t>) -> Result<Var<'t>, AutodiffError> {
    let shape = x.shape();
    let last = shape.len().checked_sub(1).ok_or(AutodiffError::BadShape {
        op: "rms_norm",
        shape: shape.clone(),
        reason: "rank 0".into(),
    })?;
    let inv = x
        .square()
        .mean_axis(last)?
        .add_scalar(RMS_EPS)
        .sqrt()
        .reciprocal()
        .expand_last(shape[last]);
    x.mul(inv)?.mul(w)
}

/// Mean of squared differences over every element.
pub fn mse_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>, AutodiffError> {
    let (ps, ts) = (pred.shape(), target.shape());
    if ps != ts {
        return Err(AutodiffError::ShapeMismatch {
            op: "mse_loss",
            lhs: ps,
            rhs: ts,
        });
    }
    Ok(pred.sub(target)?.square().mean_all())
}
