use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{AutodiffError, Tape, Tensor, Var};

/// Denominator floor of the relative error, so gradients that are zero up to
/// rounding compare on an absolute scale.
pub const GRADCHECK_FLOOR: f64 = 1e-3;

const STEP: f64 = 1e-6;

/// Worst disagreement between reverse-mode and central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel: f64,
    pub max_abs: f64,
    /// `(input, element)` of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel < tol
    }
}

/// Compares gradients of `f` at `inputs` with central finite differences
/// (step `1e-6`). The scalar loss is a fixed random projection of `f`'s
/// output so every output element contributes.
pub fn gradcheck<F>(inputs: &[Tensor], seed: u64, f: F) -> Result<GradCheck, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, AutodiffError>,
{
    let mut proj: Option<Tensor> = None;
    let mut loss = |xs: &[Tensor], grad: bool| -> Result<(f64, Vec<Tensor>), AutodiffError> {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), grad)).collect();
        let out = f(&tape, &vars)?;
        let p = proj.get_or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Tensor::from_fn(&out.shape(), |_| StandardNormal.sample(&mut rng))
        });
        let l = out.mul(tape.constant(p.clone()))?.sum_all();
        let value = l.value().data()[0];
        let grads = if grad {
            let g = tape.backward(l)?;
            vars.iter().map(|v| g.get_or_zeros(*v)).collect()
        } else {
            vec![]
        };
        Ok((value, grads))
    };
    let (_, analytic) = loss(inputs, true)?;
    let mut report = GradCheck {
        max_rel: 0.0,
        max_abs: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let x0 = xs[i].data()[j];
            xs[i].data_mut()[j] = x0 + STEP;
            let (fp, _) = loss(&xs, false)?;
            xs[i].data_mut()[j] = x0 - STEP;
            let (fm, _) = loss(&xs, false)?;
            xs[i].data_mut()[j] = x0;
            let num = (fp - fm) / (2.0 * STEP);
            let ana = analytic[i].data()[j];
            let abs = (ana - num).abs();
            let rel = abs / ana.abs().max(num.abs()).max(GRADCHECK_FLOOR);
            if rel > report.max_rel || !rel.is_finite() {
                report.max_rel = if rel.is_finite() { rel } else { f64::INFINITY };
                report.worst = (i, j);
            }
            report.max_abs = report.max_abs.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_rule() {
        // reciprocal used as a stand-in for log: values match nowhere near
        let x = Tensor::new(vec![3], vec![0.5, 1.5, 2.0]).unwrap();
        let good = gradcheck(std::slice::from_ref(&x), 1, |_, v| Ok(v[0].log())).unwrap();
        assert!(good.passes(1e-5), "{good:?}");
        assert_eq!(good.checked, 3);
        let bad = gradcheck(&[x], 1, |t, v| {
            // value of log but gradient of a constant
            let c = t.constant(v[0].value().map(f64::ln));
            Ok(c.add(v[0].scale(0.0))?)
        })
        .unwrap();
        assert!(!bad.passes(1e-2));
    }
}
