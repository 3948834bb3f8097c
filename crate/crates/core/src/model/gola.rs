use alloc::format;

use serde::{Deserialize, Serialize};

use super::GraphSample;
use crate::attention::{self, AttentionShape};
use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{Error, Result};
use crate::gatlayer;
use crate::msgpass::{self, MsgPassShape};
use crate::rng::Rng;
use crate::spectral;
use crate::tensor::ParamStore;

/// GOLA architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GolaConfig {
    pub modes: usize,
    pub channels: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub msgpass_blocks: usize,
    pub residual_depth: usize,
    pub gat_layers: usize,
    /// Separate `C × C` projection after `W_out`.
    pub final_proj: bool,
    /// Standard deviation of the jitter added to the initial lattice frequencies.
    pub freq_jitter: f64,
}

impl Default for GolaConfig {
    fn default() -> Self {
        GolaConfig {
            modes: 64,
            channels: 64,
            heads: 4,
            head_dim: 16,
            msgpass_blocks: 3,
            residual_depth: 2,
            gat_layers: 1,
            final_proj: true,
            freq_jitter: 0.01,
        }
    }
}

impl GolaConfig {
    fn validate(&self) -> Result<()> {
        let sizes = [self.modes, self.channels, self.heads, self.head_dim];
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("GOLA sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn attention_shape(&self) -> AttentionShape {
        AttentionShape {
            channels: self.channels,
            heads: self.heads,
            head_dim: self.head_dim,
            final_proj: self.final_proj,
        }
    }
}

pub(super) fn init(cfg: &GolaConfig, c_in: usize, rng: &mut Rng) -> Result<ParamStore> {
    cfg.validate()?;
    let c = cfg.channels;
    let edge_dim = 4 + 2 * c_in;
    let mut store = ParamStore::new();
    spectral::add_params(&mut store, rng, "encoder", c_in, c, cfg.modes, cfg.freq_jitter)?;
    let mp = MsgPassShape {
        channels: c,
        edge_dim,
        residual_depth: cfg.residual_depth,
    };
    for b in 0..cfg.msgpass_blocks {
        msgpass::add_params(&mut store, rng, &format!("mp{b}"), mp)?;
    }
    attention::add_params(&mut store, rng, "attn", cfg.attention_shape())?;
    for l in 0..cfg.gat_layers {
        gatlayer::add_params(&mut store, rng, &format!("gat{l}"), c, edge_dim)?;
    }
    gatlayer::add_head(&mut store, rng, "head", c, 1)?;
    Ok(store)
}

/// Encoder → message passing blocks → global attention → GAT layers → head.
pub fn gola_forward(tape: &mut Tape, p: &ParamVars, cfg: &GolaConfig, sample: &GraphSample) -> Result<Var> {
    let coords = tape.constant(sample.points.to_tensor());
    let f = tape.constant(sample.f_values.clone());
    let edge_attr = tape.constant(sample.edge_attr()?.clone());
    let graph = &sample.graph;

    let mut h = spectral::encode_with(tape, p, "encoder", f, coords)?;
    for b in 0..cfg.msgpass_blocks {
        h = msgpass::block(tape, p, &format!("mp{b}"), h, graph, edge_attr, cfg.residual_depth)?;
    }
    h = attention::multi_head(tape, p, "attn", h, cfg.heads)?;
    for l in 0..cfg.gat_layers {
        h = gatlayer::layer(tape, p, &format!("gat{l}"), h, graph, edge_attr)?;
    }
    gatlayer::predict(tape, p, "head", h)
}
