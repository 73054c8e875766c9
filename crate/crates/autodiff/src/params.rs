use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{AutodiffError, Gradients, Tape, Tensor, Var};

/// Initializer for a named parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Const(f64),
    /// Uniform on `[-a, a]`.
    Uniform(f64),
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
}

/// Seed for the parameter `name`, derived from FNV-1a of the name and `seed`.
pub fn name_seed(name: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

/// Named parameter tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `name` initialized deterministically from `(name, seed)`; replaces
    /// an existing entry.
    pub fn init(&mut self, name: &str, shape: &[usize], init: Init, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(name_seed(name, seed));
        let t = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::Const(c) => Tensor::full(shape, c),
            Init::Uniform(a) => Tensor::from_fn(shape, |_| rng.random_range(-a..=a)),
            Init::Normal(s) => {
                let d = Normal::new(0.0, s).expect("finite standard deviation");
                Tensor::from_fn(shape, |_| d.sample(&mut rng))
            }
        };
        self.params.insert(name.to_string(), t);
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.params.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, AutodiffError> {
        self.params.get(name).ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, AutodiffError> {
        self.params
            .get_mut(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// All parameters as leaves on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), true)))
                .collect(),
        }
    }

    /// All parameters as constants on `tape` (inference).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
                .collect(),
        }
    }

    /// Zeros shaped like every parameter.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// `self += other` for every parameter; names and shapes must agree.
    pub fn add_assign(&mut self, other: &ParamStore) -> Result<(), AutodiffError> {
        for (k, v) in &other.params {
            self.get_mut(k)?.add_assign(v)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.params.values_mut() {
            for x in v.data_mut() {
                *x *= c;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }
}

/// Parameters bound to one tape.
#[derive(Debug)]
pub struct Bound<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    /// Names existing tape variables, e.g. the leaves of a gradient check.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>, AutodiffError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    /// Gradients per parameter name; zeros for parameters the loss ignores.
    pub fn grads(&self, g: &Gradients) -> ParamStore {
        ParamStore {
            params: self.vars.iter().map(|(k, v)| (k.clone(), g.get_or_zeros(*v))).collect(),
        }
    }
}
