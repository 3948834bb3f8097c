//! Global linear multi-head attention over all nodes.
//!
//! Each head accumulates the `d_h × d_h` kernel `G = (1/N) Σ_j k̃_jᵀ ṽ_j`
//! from instance-normalised keys and values and applies it to the raw
//! queries, so the cost is `O(N·d_h²)` and no `N × N` matrix is formed.

use alloc::format;

use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{shape_err, Result};
use crate::nn;
use crate::rng::Rng;
use crate::tensor::ParamStore;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionShape {
    pub channels: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Whether a separate `C × C` projection follows `W_out`.
    pub final_proj: bool,
}

/// Registers per-head `wq`, `wk`, `wv` (`C × d_h`, unbiased), `w_out`
/// (`H·d_h × C`, unbiased) and optionally `proj` (`C × C` with bias).
pub fn add_params(store: &mut ParamStore, rng: &mut Rng, prefix: &str, shape: AttentionShape) -> Result<()> {
    let (c, dh) = (shape.channels, shape.head_dim);
    for head in 0..shape.heads {
        for w in ["wq", "wk", "wv"] {
            nn::add_linear(store, rng, &format!("{prefix}.head{head}.{w}"), c, dh, false)?;
        }
    }
    nn::add_linear(store, rng, &format!("{prefix}.w_out"), shape.heads * dh, c, false)?;
    if shape.final_proj {
        nn::add_linear(store, rng, &format!("{prefix}.proj"), c, c, true)?;
    }
    Ok(())
}

/// Per column: subtract the mean over rows and divide by `sqrt(var + 1e-5)`.
pub fn instance_norm(tape: &mut Tape, z: Var) -> Result<Var> {
    let mean = tape.mean_axis(z, 0)?;
    let centered = tape.sub(z, mean)?;
    let sq = tape.square(centered);
    let var = tape.mean_axis(sq, 0)?;
    let var = tape.offset(var, INSTANCE_NORM_EPS);
    let scale = tape.sqrt(var);
    tape.div(centered, scale)
}

/// Output of one head, `N × d_h`.
pub fn head_apply(tape: &mut Tape, p: &ParamVars, prefix: &str, h: Var, head: usize) -> Result<Var> {
    let base = format!("{prefix}.head{head}");
    let q = nn::linear(tape, p, &format!("{base}.wq"), h)?;
    let k = nn::linear(tape, p, &format!("{base}.wk"), h)?;
    let v = nn::linear(tape, p, &format!("{base}.wv"), h)?;
    let n = tape.shape(h)[0];
    let k = instance_norm(tape, k)?;
    let v = instance_norm(tape, v)?;
    let kt = tape.transpose(k)?;
    let g = tape.matmul(kt, v)?;
    let g = tape.scale(g, 1.0 / n as f64);
    tape.matmul(q, g)
}

/// Concatenated heads through `W_out` and the optional final projection.
pub fn multi_head(tape: &mut Tape, p: &ParamVars, prefix: &str, h: Var, heads: usize) -> Result<Var> {
    let sh = tape.shape(h);
    if sh.len() != 2 || heads == 0 {
        return Err(shape_err("multi_head", sh, &[heads]));
    }
    let mut outs = alloc::vec::Vec::with_capacity(heads);
    for head in 0..heads {
        outs.push(head_apply(tape, p, prefix, h, head)?);
    }
    let cat = tape.concat(&outs, 1)?;
    let y = nn::linear(tape, p, &format!("{prefix}.w_out"), cat)?;
    if p.find(&format!("{prefix}.proj.w")).is_some() {
        nn::linear(tape, p, &format!("{prefix}.proj"), y)
    } else {
        Ok(y)
    }
}
