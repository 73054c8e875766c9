use crate::tape::BackwardArgs;
use crate::{AutodiffError, Tensor, Var};

/// `C (m x n) += alpha * op(A) (m x k) * op(B) (k x n)` on row-major slices,
/// where `trans_a` / `trans_b` read the stored matrix transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m*k, k*n and m*n elements (checked above
    // in debug builds and by construction in every caller), and the strides
    // describe row-major or transposed row-major layouts inside them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'t> Var<'t> {
    /// `[.., m, k] x [k, n] -> [.., m, n]`; leading dimensions of the left
    /// operand are flattened into rows.
    pub fn matmul(self, w: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        let (av, wv) = (self.value(), w.value());
        let (ash, wsh) = (av.shape(), wv.shape());
        if ash.is_empty() || wsh.len() != 2 || ash[ash.len() - 1] != wsh[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: ash.to_vec(),
                rhs: wsh.to_vec(),
            });
        }
        let (k, n) = (wsh[0], wsh[1]);
        let m = av.len() / k.max(1);
        let mut out_shape = ash.to_vec();
        *out_shape.last_mut().expect("rank >= 1") = n;
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, av.data(), false, wv.data(), false, &mut out);
        let backward = move |a: &BackwardArgs| {
            let (x, w, g) = (&a.inputs[0], &a.inputs[1], a.grad.data());
            let gx = a.needs[0].then(|| {
                let mut d = vec![0.0; m * k];
                gemm(m, n, k, 1.0, g, false, w.data(), true, &mut d);
                Tensor::new(x.shape().to_vec(), d).expect("shape")
            });
            let gw = a.needs[1].then(|| {
                let mut d = vec![0.0; k * n];
                gemm(k, m, n, 1.0, x.data(), true, g, false, &mut d);
                Tensor::new(vec![k, n], d).expect("shape")
            });
            vec![gx, gw]
        };
        Ok(self
            .tape
            .push(Tensor::new(out_shape, out).expect("shape"), &[self, w], Box::new(backward)))
    }
}
