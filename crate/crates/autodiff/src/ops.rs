use crate::tape::BackwardArgs;
use crate::{AutodiffError, Tensor, Var};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("shape computed by the op")
}

/// Splits `shape` around `axis` into (outer, dim, inner) element counts.
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl<'t> Var<'t> {
    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(
        self,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let out = self.value().map(f);
        let backward = move |a: &BackwardArgs| {
            let (x, y, g) = (a.inputs[0].data(), a.output.data(), a.grad.data());
            let d = x.iter().zip(y).zip(g).map(|((x, y), g)| g * df(*x, *y)).collect();
            vec![Some(tensor(a.output.shape(), d))]
        };
        self.tape.push(out, &[self], Box::new(backward))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn log(self) -> Var<'t> {
        self.unary(f64::ln, |x, _| 1.0 / x)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    /// `x * sigmoid(x)`.
    pub fn silu(self) -> Var<'t> {
        self.unary(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn reciprocal(self) -> Var<'t> {
        self.unary(|x| 1.0 / x, |_, y| -y * y)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    fn binary(self, other: Var<'t>, kind: Binary) -> Result<Var<'t>, AutodiffError> {
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        let a_big = sa.len() >= sb.len();
        let (big, small) = if a_big { (sa, sb) } else { (sb, sa) };
        if !big.ends_with(small) {
            let op = match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            };
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let out_shape = big.to_vec();
        let n = a.len().max(b.len());
        let (na, nb) = (a.len(), b.len());
        let (ad, bd) = (a.data(), b.data());
        let data: Vec<f64> = match kind {
            Binary::Add => (0..n).map(|i| ad[i % na] + bd[i % nb]).collect(),
            Binary::Sub => (0..n).map(|i| ad[i % na] - bd[i % nb]).collect(),
            Binary::Mul => (0..n).map(|i| ad[i % na] * bd[i % nb]).collect(),
        };
        let backward = move |args: &BackwardArgs| {
            let g = args.grad.data();
            let (a, b) = (&args.inputs[0], &args.inputs[1]);
            let (na, nb) = (a.len(), b.len());
            // Sum of g * factor over the broadcast copies of an operand with `len` elements.
            let reduce = |len: usize, factor: &dyn Fn(usize) -> f64| {
                let mut d = vec![0.0; len];
                for (i, gi) in g.iter().enumerate() {
                    d[i % len] += gi * factor(i);
                }
                d
            };
            let ga = args.needs[0].then(|| {
                let d = match kind {
                    Binary::Add | Binary::Sub => reduce(na, &|_| 1.0),
                    Binary::Mul => reduce(na, &|i| b.data()[i % nb]),
                };
                tensor(a.shape(), d)
            });
            let gb = args.needs[1].then(|| {
                let d = match kind {
                    Binary::Add => reduce(nb, &|_| 1.0),
                    Binary::Sub => reduce(nb, &|_| -1.0),
                    Binary::Mul => reduce(nb, &|i| a.data()[i % na]),
                };
                tensor(b.shape(), d)
            });
            vec![ga, gb]
        };
        Ok(self.tape.push(tensor(&out_shape, data), &[self, other], Box::new(backward)))
    }

    /// Elementwise sum with trailing-suffix broadcasting.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.binary(other, Binary::Sub)
    }

    /// Elementwise product with trailing-suffix broadcasting.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.binary(other, Binary::Mul)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, AutodiffError> {
        let v = self.value();
        let out = (*v).clone().reshaped(shape)?;
        let backward = |a: &BackwardArgs| vec![Some(tensor(a.inputs[0].shape(), a.grad.data().to_vec()))];
        Ok(self.tape.push(out, &[self], Box::new(backward)))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>, AutodiffError> {
        let v = self.value();
        let shape = v.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(AutodiffError::bad_shape(
                "slice",
                shape,
                format!("axis {axis}, range {start}..{}", start + len),
            ));
        }
        let (outer, dim, inner) = around(shape, axis);
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&v.data()[base..base + len * inner]);
        }
        let backward = move |a: &BackwardArgs| {
            let mut d = vec![0.0; outer * dim * inner];
            let g = a.grad.data();
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                d[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(tensor(a.inputs[0].shape(), d))]
        };
        Ok(self.tape.push(tensor(&out_shape, data), &[self], Box::new(backward)))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, AutodiffError> {
        let first = parts.first().ok_or_else(|| AutodiffError::bad_shape("concat", &[], "no operands"))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let s0 = values[0].shape().to_vec();
        if axis >= s0.len() {
            return Err(AutodiffError::bad_shape("concat", &s0, format!("axis {axis}")));
        }
        for v in &values[1..] {
            let s = v.shape();
            let same = s.len() == s0.len() && s.iter().zip(&s0).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: s0.clone(),
                    rhs: s.to_vec(),
                });
            }
        }
        let (outer, _, inner) = around(&s0, axis);
        let dims: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = dims.iter().sum();
        let mut out_shape = s0.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, d) in values.iter().zip(&dims) {
                data.extend_from_slice(&v.data()[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let backward = move |a: &BackwardArgs| {
            let g = a.grad.data();
            let mut out: Vec<Vec<f64>> = dims.iter().map(|d| Vec::with_capacity(outer * d * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (buf, d) in out.iter_mut().zip(&dims) {
                    buf.extend_from_slice(&g[pos..pos + d * inner]);
                    pos += d * inner;
                }
            }
            out.into_iter()
                .zip(a.inputs)
                .zip(a.needs)
                .map(|((d, x), need)| need.then(|| tensor(x.shape(), d)))
                .collect()
        };
        Ok(first.tape.push(tensor(&out_shape, data), parts, Box::new(backward)))
    }

    /// Swaps the last two dimensions.
    pub fn transpose(self) -> Result<Var<'t>, AutodiffError> {
        let v = self.value();
        let shape = v.shape();
        if shape.len() < 2 {
            return Err(AutodiffError::bad_shape("transpose", shape, "rank below 2"));
        }
        let r = shape.len();
        let (m, n) = (shape[r - 2], shape[r - 1]);
        let batch = v.len() / (m * n).max(1);
        let swap = move |src: &[f64]| {
            let mut d = vec![0.0; src.len()];
            for b in 0..batch {
                for i in 0..m {
                    for j in 0..n {
                        d[b * m * n + j * m + i] = src[b * m * n + i * n + j];
                    }
                }
            }
            d
        };
        let mut out_shape = shape.to_vec();
        out_shape.swap(r - 2, r - 1);
        let data = swap(v.data());
        let backward = move |a: &BackwardArgs| {
            // the gradient is n x m per batch; swap it back
            let g = a.grad.data();
            let mut d = vec![0.0; g.len()];
            for b in 0..batch {
                for j in 0..n {
                    for i in 0..m {
                        d[b * m * n + i * n + j] = g[b * m * n + j * m + i];
                    }
                }
            }
            vec![Some(tensor(a.inputs[0].shape(), d))]
        };
        Ok(self.tape.push(tensor(&out_shape, data), &[self], Box::new(backward)))
    }

    /// Sum of all elements, shape `[]`.
    pub fn sum_all(self) -> Var<'t> {
        let s = self.value().sum();
        let backward = |a: &BackwardArgs| {
            let g = a.grad.data()[0];
            vec![Some(Tensor::full(a.inputs[0].shape(), g))]
        };
        self.tape.push(Tensor::scalar(s), &[self], Box::new(backward))
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = self.value().len().max(1) as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sums out `axis`.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>, AutodiffError> {
        let v = self.value();
        let shape = v.shape();
        if axis >= shape.len() {
            return Err(AutodiffError::bad_shape("sum_axis", shape, format!("axis {axis}")));
        }
        let (outer, dim, inner) = around(shape, axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..dim {
                let src = &v.data()[(o * dim + k) * inner..(o * dim + k + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let backward = move |a: &BackwardArgs| {
            let g = a.grad.data();
            let mut d = Vec::with_capacity(outer * dim * inner);
            for o in 0..outer {
                for _ in 0..dim {
                    d.extend_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(tensor(a.inputs[0].shape(), d))]
        };
        Ok(self.tape.push(tensor(&out_shape, data), &[self], Box::new(backward)))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>, AutodiffError> {
        let dim = *self
            .shape()
            .get(axis)
            .ok_or_else(|| AutodiffError::bad_shape("mean_axis", &self.shape(), format!("axis {axis}")))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / dim.max(1) as f64))
    }

    /// Repeats every element `d` times along a new last axis: `[..] -> [.., d]`.
    pub fn expand_last(self, d: usize) -> Var<'t> {
        let v = self.value();
        let data: Vec<f64> = v.data().iter().flat_map(|x| std::iter::repeat_n(*x, d)).collect();
        let mut out_shape = v.shape().to_vec();
        out_shape.push(d);
        let backward = move |a: &BackwardArgs| {
            let s = a.grad.data().chunks(d.max(1)).map(|c| c.iter().sum()).collect();
            vec![Some(tensor(a.inputs[0].shape(), s))]
        };
        self.tape.push(tensor(&out_shape, data), &[self], Box::new(backward))
    }

    /// Running sum along `axis`.
    pub fn cumsum(self, axis: usize) -> Result<Var<'t>, AutodiffError> {
        let v = self.value();
        let shape = v.shape();
        if axis >= shape.len() {
            return Err(AutodiffError::bad_shape("cumsum", shape, format!("axis {axis}")));
        }
        let (outer, dim, inner) = around(shape, axis);
        let mut data = v.data().to_vec();
        for o in 0..outer {
            for k in 1..dim {
                for i in 0..inner {
                    data[(o * dim + k) * inner + i] += data[(o * dim + k - 1) * inner + i];
                }
            }
        }
        let backward = move |a: &BackwardArgs| {
            // reverse running sum of the upstream gradient
            let mut d = a.grad.data().to_vec();
            for o in 0..outer {
                for k in (0..dim.saturating_sub(1)).rev() {
                    for i in 0..inner {
                        d[(o * dim + k) * inner + i] += d[(o * dim + k + 1) * inner + i];
                    }
                }
            }
            vec![Some(tensor(a.inputs[0].shape(), d))]
        };
        Ok(self.tape.push(tensor(shape, data), &[self], Box::new(backward)))
    }
}
