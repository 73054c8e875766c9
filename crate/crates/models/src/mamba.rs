use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uwbloc_autodiff::{name_seed, Bound, Init, ParamStore, Tensor, Var};

use crate::layers::{linear, rms_norm};
use crate::ssm::{causal_conv, selective_scan};
use crate::ModelError;

/// Range of the initial step sizes `Δ`, sampled log-uniformly per channel.
pub const DT_MIN: f64 = 0.001;
pub const DT_MAX: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MambaConfig {
    pub input_dim: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub d_state: usize,
    pub expand: usize,
    /// Causal convolution width; 0 disables the convolution.
    pub conv_width: usize,
    pub label_dim: usize,
    /// Window length the positional table is sized for.
    pub s: usize,
}

impl Default for MambaConfig {
    fn default() -> Self {
        Self {
            input_dim: 20,
            d_model: 64,
            n_blocks: 4,
            d_state: 16,
            expand: 2,
            conv_width: 4,
            label_dim: 6,
            s: 100,
        }
    }
}

fn block_name(i: usize, p: &str) -> String {
    format!("block{i}.{p}")
}

impl MambaConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    /// Rank of the `Δ` projection, `ceil(d_model / 16)`.
    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("input_dim", self.input_dim),
            ("d_model", self.d_model),
            ("n_blocks", self.n_blocks),
            ("d_state", self.d_state),
            ("expand", self.expand),
            ("label_dim", self.label_dim),
            ("s", self.s),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ModelError::BadConfig(format!("mamba {name} must be positive"))),
            None => Ok(()),
        }
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        let (d, di, n, r) = (self.d_model, self.d_inner(), self.d_state, self.dt_rank());
        let fan = |k: usize| Init::Uniform(1.0 / (k as f64).sqrt());
        let mut p = ParamStore::new();
        p.init("embed.w", &[self.input_dim, d], fan(self.input_dim), seed);
        p.init("embed.b", &[d], Init::Zeros, seed);
        p.init("embed.pos", &[self.s, d], Init::Normal(0.02), seed);
        for i in 0..self.n_blocks {
            let name = |s: &str| block_name(i, s);
            p.init(&name("norm"), &[d], Init::Ones, seed);
            p.init(&name("in_proj"), &[d, 2 * di], fan(d), seed);
            if self.conv_width > 0 {
                p.init(&name("conv_w"), &[di, self.conv_width], fan(self.conv_width), seed);
                p.init(&name("conv_b"), &[di], Init::Zeros, seed);
            }
            p.init(&name("x_proj"), &[di, r + 2 * n], fan(di), seed);
            p.init(&name("dt_w"), &[r, di], fan(r), seed);
            // softplus(dt_b) log-uniform in [DT_MIN, DT_MAX]
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(&name("dt_b"), seed));
            let dt_b = Tensor::from_fn(&[di], |_| {
                let dt = (rng.random_range(DT_MIN.ln()..DT_MAX.ln())).exp();
                dt + (-(-dt).exp_m1()).ln()
            });
            p.insert(&name("dt_b"), dt_b);
            p.insert(&name("a_log"), Tensor::from_fn(&[di, n], |k| ((k % n + 1) as f64).ln()));
            p.init(&name("d"), &[di], Init::Ones, seed);
            p.init(&name("out_proj"), &[di, d], fan(di), seed);
        }
        p.init("norm_f", &[d], Init::Ones, seed);
        p.init("head.w", &[d, self.label_dim], fan(d), seed);
        p.init("head.b", &[self.label_dim], Init::Zeros, seed);
        p
    }

    /// `[B, S, input_dim] -> [B, S, d_model]`: linear projection plus the
    /// positional table.
    pub fn embed<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        let shape = x.shape();
        if shape.len() != 3 || shape[1] != self.s || shape[2] != self.input_dim {
            return Err(ModelError::InputShape {
                s: self.s,
                input_dim: self.input_dim,
                got: shape,
            });
        }
        let h = linear(x, p.get("embed.w")?, Some(p.get("embed.b")?))?;
        Ok(h.add(p.get("embed.pos")?)?)
    }

    /// One residual block, `[B, S, d_model] -> [B, S, d_model]`.
    pub fn block<'t>(&self, p: &Bound<'t>, i: usize, h: Var<'t>) -> Result<Var<'t>, ModelError> {
        let get = |s: &str| p.get(&block_name(i, s));
        let (di, n, r) = (self.d_inner(), self.d_state, self.dt_rank());
        let normed = rms_norm(h, get("norm")?)?;
        let xz = normed.matmul(get("in_proj")?)?;
        let mut xs = xz.slice(2, 0, di)?;
        let z = xz.slice(2, di, di)?;
        if self.conv_width > 0 {
            xs = causal_conv(xs, get("conv_w")?, get("conv_b")?)?;
        }
        let xs = xs.silu();
        let dbc = xs.matmul(get("x_proj")?)?;
        let dtr = dbc.slice(2, 0, r)?;
        let bm = dbc.slice(2, r, n)?;
        let cm = dbc.slice(2, r + n, n)?;
        let delta = linear(dtr, get("dt_w")?, Some(get("dt_b")?))?.softplus();
        let a = get("a_log")?.exp().neg();
        let y = selective_scan(xs, delta, a, bm, cm, get("d")?)?;
        let y = y.mul(z.silu())?;
        Ok(h.add(y.matmul(get("out_proj")?)?)?)
    }

    /// `[B, S, input_dim] -> [B, S, label_dim]`.
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        let mut h = self.embed(p, x)?;
        for i in 0..self.n_blocks {
            h = self.block(p, i, h)?;
        }
        let h = rms_norm(h, p.get("norm_f")?)?;
        Ok(linear(h, p.get("head.w")?, Some(p.get("head.b")?))?)
    }
}
