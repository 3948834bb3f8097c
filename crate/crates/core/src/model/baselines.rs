use alloc::format;

use serde::{Deserialize, Serialize};

use super::GraphSample;
use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{Error, Result};
use crate::msgpass::inverse_degree;
use crate::nn;
use crate::rng::Rng;
use crate::tensor::ParamStore;

/// Width and depth of the GKN and GCN baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub layers: usize,
    pub channels: usize,
    /// Hidden width of the GKN edge-kernel network (unused by GCN).
    pub kernel_width: usize,
    /// Nonlinearity between layers.
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Gelu => tape.gelu(x),
            Activation::Identity => x,
        }
    }
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            layers: 4,
            channels: 32,
            kernel_width: 64,
            activation: Activation::Gelu,
        }
    }
}

impl BaselineConfig {
    fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.channels == 0 || self.kernel_width == 0 {
            return Err(Error::InvalidArgument(format!("baseline sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

pub(super) fn init_gkn(cfg: &BaselineConfig, c_in: usize, rng: &mut Rng) -> Result<ParamStore> {
    cfg.validate()?;
    let c = cfg.channels;
    let mut store = ParamStore::new();
    nn::add_linear(&mut store, rng, "lift", 2 + c_in, c, true)?;
    nn::add_mlp(&mut store, rng, "kernel", &[4 + 2 * c_in, cfg.kernel_width, c * c])?;
    for t in 0..cfg.layers {
        nn::add_linear(&mut store, rng, &format!("layer{t}"), c, c, true)?;
    }
    nn::add_linear(&mut store, rng, "proj", c, 1, true)?;
    Ok(store)
}

pub(super) fn init_gcn(cfg: &BaselineConfig, c_in: usize, rng: &mut Rng) -> Result<ParamStore> {
    cfg.validate()?;
    let c = cfg.channels;
    let mut store = ParamStore::new();
    nn::add_linear(&mut store, rng, "lift", 2 + c_in, c, true)?;
    for t in 0..cfg.layers {
        nn::add_linear(&mut store, rng, &format!("layer{t}.self"), c, c, true)?;
        nn::add_linear(&mut store, rng, &format!("layer{t}.nbr"), c, c, false)?;
    }
    nn::add_linear(&mut store, rng, "proj", c, 1, true)?;
    Ok(store)
}

fn lift(tape: &mut Tape, p: &ParamVars, sample: &GraphSample) -> Result<Var> {
    let coords = tape.constant(sample.points.to_tensor());
    let f = tape.constant(sample.f_values.clone());
    let input = tape.concat(&[coords, f], 1)?;
    nn::linear(tape, p, "lift", input)
}

/// Edge-conditioned kernel convolution: per layer
/// `h ← σ(W h + (1/|N(i)|) Σ_j κ(e_ij) h_j)` with one shared kernel network
/// `κ: d_e → C × C`; σ between layers, none after the last.
pub fn gkn_forward(tape: &mut Tape, p: &ParamVars, cfg: &BaselineConfig, sample: &GraphSample) -> Result<Var> {
    let c = cfg.channels;
    let graph = &sample.graph;
    let e = graph.num_edges();
    let edge_attr = tape.constant(sample.edge_attr()?.clone());
    let inv_deg = tape.constant(inverse_degree(graph));

    let kernel = nn::mlp(tape, p, "kernel", 2, edge_attr)?;
    let kernel = tape.reshape(kernel, &[e, c, c])?;

    let mut h = lift(tape, p, sample)?;
    for t in 0..cfg.layers {
        let hj = tape.gather_rows(h, graph.senders())?;
        let hj = tape.reshape(hj, &[e, c, 1])?;
        let prod = tape.mul(kernel, hj)?;
        let msg = tape.sum_axis(prod, 1)?;
        let msg = tape.reshape(msg, &[e, c])?;
        let agg = tape.scatter_add_rows(msg, graph.receivers(), graph.num_nodes)?;
        let agg = tape.mul(agg, inv_deg)?;
        let local = nn::linear(tape, p, &format!("layer{t}"), h)?;
        h = tape.add(local, agg)?;
        if t + 1 < cfg.layers {
            h = cfg.activation.apply(tape, h);
        }
    }
    nn::linear(tape, p, "proj", h)
}

/// Mean-neighbour graph convolution with a separate self term:
/// `h ← σ(W_self h + W_nbr mean_j h_j + b)`.
pub fn gcn_forward(tape: &mut Tape, p: &ParamVars, cfg: &BaselineConfig, sample: &GraphSample) -> Result<Var> {
    let graph = &sample.graph;
    let inv_deg = tape.constant(inverse_degree(graph));
    let mut h = lift(tape, p, sample)?;
    for t in 0..cfg.layers {
        let hj = tape.gather_rows(h, graph.senders())?;
        let sum = tape.scatter_add_rows(hj, graph.receivers(), graph.num_nodes)?;
        let mean = tape.mul(sum, inv_deg)?;
        let own = nn::linear(tape, p, &format!("layer{t}.self"), h)?;
        let nbr = nn::linear(tape, p, &format!("layer{t}.nbr"), mean)?;
        h = tape.add(own, nbr)?;
        if t + 1 < cfg.layers {
            h = cfg.activation.apply(tape, h);
        }
    }
    nn::linear(tape, p, "proj", h)
}
