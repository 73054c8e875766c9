use serde::{Deserialize, Serialize};
use uwbloc_autodiff::{Bound, Init, ParamStore, Tensor, Var};

use crate::layers::linear;
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
    BiLstm,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm | CellKind::BiLstm => 4,
        }
    }

    fn directions(self) -> usize {
        if self == CellKind::BiLstm {
            2
        } else {
            1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
            CellKind::BiLstm => "bilstm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnConfig {
    pub cell: CellKind,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub input_dim: usize,
    pub label_dim: usize,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::BiLstm,
            hidden_size: 128,
            n_layers: 2,
            input_dim: 20,
            label_dim: 6,
        }
    }
}

const DIRS: [&str; 2] = ["fwd", "bwd"];

fn pname(layer: usize, dir: usize, p: &str) -> String {
    format!("l{layer}.{}.{p}", DIRS[dir])
}

impl RnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_size == 0 || self.n_layers == 0 || self.input_dim == 0 || self.label_dim == 0 {
            return Err(ModelError::BadConfig(format!("{} sizes must be positive", self.cell.name())));
        }
        Ok(())
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        let (h, g, dirs) = (self.hidden_size, self.cell.gates(), self.cell.directions());
        let u = Init::Uniform(1.0 / (h as f64).sqrt());
        let mut p = ParamStore::new();
        for layer in 0..self.n_layers {
            let input = if layer == 0 { self.input_dim } else { h * dirs };
            for dir in 0..dirs {
                p.init(&pname(layer, dir, "w_ih"), &[input, g * h], u, seed);
                p.init(&pname(layer, dir, "w_hh"), &[h, g * h], u, seed);
                p.init(&pname(layer, dir, "b_ih"), &[g * h], u, seed);
                if self.cell == CellKind::Gru {
                    p.init(&pname(layer, dir, "b_hh"), &[g * h], u, seed);
                }
            }
        }
        p.init("head.w", &[h * dirs, self.label_dim], Init::Uniform(1.0 / ((h * dirs) as f64).sqrt()), seed);
        p.init("head.b", &[self.label_dim], Init::Zeros, seed);
        p
    }

    /// One direction of one layer over `[B, S, In]`, returning `[B, S, H]`.
    fn run<'t>(&self, p: &Bound<'t>, layer: usize, dir: usize, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        let shape = x.shape();
        let (batch, len, h) = (shape[0], shape[1], self.hidden_size);
        let g = self.cell.gates();
        let xw = linear(x, p.get(&pname(layer, dir, "w_ih"))?, Some(p.get(&pname(layer, dir, "b_ih"))?))?;
        let w_hh = p.get(&pname(layer, dir, "w_hh"))?;
        let b_hh = if self.cell == CellKind::Gru {
            Some(p.get(&pname(layer, dir, "b_hh"))?)
        } else {
            None
        };
        let tape = x.tape();
        let mut hs = tape.constant(Tensor::zeros(&[batch, h]));
        let mut cs = hs;
        let mut outs = vec![None; len];
        let steps: Vec<usize> = if dir == 0 { (0..len).collect() } else { (0..len).rev().collect() };
        for t in steps {
            let xt = xw.slice(1, t, 1)?.reshape(&[batch, g * h])?;
            let hw = linear(hs, w_hh, b_hh)?;
            let gate = |v: Var<'t>, k: usize| v.slice(1, k * h, h);
            if self.cell == CellKind::Gru {
                // PyTorch gate order r, z, n
                let r = gate(xt, 0)?.add(gate(hw, 0)?)?.sigmoid();
                let z = gate(xt, 1)?.add(gate(hw, 1)?)?.sigmoid();
                let n = gate(xt, 2)?.add(r.mul(gate(hw, 2)?)?)?.tanh();
                hs = n.add(z.mul(hs.sub(n)?)?)?;
            } else {
                // PyTorch gate order i, f, g, o
                let pre = xt.add(hw)?;
                let i = gate(pre, 0)?.sigmoid();
                let f = gate(pre, 1)?.sigmoid();
                let c_in = gate(pre, 2)?.tanh();
                let o = gate(pre, 3)?.sigmoid();
                cs = f.mul(cs)?.add(i.mul(c_in)?)?;
                hs = o.mul(cs.tanh())?;
            }
            outs[t] = Some(hs.reshape(&[batch, 1, h])?);
        }
        let outs: Vec<Var<'t>> = outs.into_iter().map(|o| o.expect("every step visited")).collect();
        Ok(Var::concat(&outs, 1)?)
    }

    /// `[B, S, input_dim] -> [B, S, label_dim]`.
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>, ModelError> {
        let shape = x.shape();
        if shape.len() != 3 || shape[2] != self.input_dim || shape[1] == 0 {
            return Err(ModelError::InputShape {
                s: shape.get(1).copied().unwrap_or(0),
                input_dim: self.input_dim,
                got: shape,
            });
        }
        let mut h = x;
        for layer in 0..self.n_layers {
            let dirs: Vec<Var<'t>> = (0..self.cell.directions())
                .map(|d| self.run(p, layer, d, h))
                .collect::<Result<_, _>>()?;
            h = if dirs.len() == 1 { dirs[0] } else { Var::concat(&dirs, 2)? };
        }
        Ok(linear(h, p.get("head.w")?, Some(p.get("head.b")?))?)
    }
}
