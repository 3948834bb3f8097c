//! Neighbourhood attention with edge features, skip connection and the
//! output head.

use alloc::format;

use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{shape_err, Result};
use crate::geometry::SpatialGraph;
use crate::math;
use crate::nn;
use crate::rng::Rng;
use crate::tensor::ParamStore;

/// Registers `w1, w2, w4, w5, ws` (`C × C`) and `w3` (`d_e × C`), all unbiased.
pub fn add_params(store: &mut ParamStore, rng: &mut Rng, prefix: &str, channels: usize, edge_dim: usize) -> Result<()> {
    for w in ["w1", "w2", "w4", "w5", "ws"] {
        nn::add_linear(store, rng, &format!("{prefix}.{w}"), channels, channels, false)?;
    }
    nn::add_linear(store, rng, &format!("{prefix}.w3"), edge_dim, channels, false)
}

/// Registers the affine head `C → C_target`.
pub fn add_head(store: &mut ParamStore, rng: &mut Rng, prefix: &str, channels: usize, targets: usize) -> Result<()> {
    nn::add_linear(store, rng, prefix, channels, targets, true)
}

fn check_nodes(tape: &Tape, op: &'static str, h: Var, graph: &SpatialGraph) -> Result<()> {
    let sh = tape.shape(h);
    if sh.len() != 2 || sh[0] != graph.num_nodes {
        return Err(shape_err(op, sh, &[graph.num_nodes]));
    }
    Ok(())
}

/// Softmax of per-edge scores `E × 1` within each receiving node's edges.
pub fn segment_softmax(tape: &mut Tape, logits: Var, graph: &SpatialGraph) -> Result<Var> {
    let recv = graph.receivers();
    let peak = tape.segment_max(logits, &graph.offsets)?;
    // The shift cancels in the ratio; keep it off the gradient path.
    let peak = tape.detach(peak);
    let peak_e = tape.gather_rows(peak, recv.clone())?;
    let shifted = tape.sub(logits, peak_e)?;
    let ex = tape.exp(shifted);
    let z = tape.scatter_add_rows(ex, recv.clone(), graph.num_nodes)?;
    let z_e = tape.gather_rows(z, recv)?;
    tape.div(ex, z_e)
}

/// `W_3 e_ij` for every edge.
fn edge_term(tape: &mut Tape, p: &ParamVars, prefix: &str, edge_attr: Var) -> Result<Var> {
    nn::linear(tape, p, &format!("{prefix}.w3"), edge_attr)
}

fn coeffs_from(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    graph: &SpatialGraph,
    edge_w3: Var,
) -> Result<Var> {
    let c = tape.shape(h)[1];
    let q = nn::linear(tape, p, &format!("{prefix}.w4"), h)?;
    let k = nn::linear(tape, p, &format!("{prefix}.w5"), h)?;
    let q_e = tape.gather_rows(q, graph.receivers())?;
    let k_e = tape.gather_rows(k, graph.senders())?;
    let key = tape.add(k_e, edge_w3)?;
    let prod = tape.mul(q_e, key)?;
    let dot = tape.sum_axis(prod, 1)?;
    let logits = tape.scale(dot, 1.0 / math::sqrt(c as f64));
    segment_softmax(tape, logits, graph)
}

/// `α_ij = softmax_j(⟨W_4 h_i, W_5 h_j + W_3 e_ij⟩ / √C)` as an `E × 1` column.
pub fn attention_coeffs(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    graph: &SpatialGraph,
    edge_attr: Var,
) -> Result<Var> {
    check_nodes(tape, "attention_coeffs", h, graph)?;
    let ew = edge_term(tape, p, prefix, edge_attr)?;
    coeffs_from(tape, p, prefix, h, graph, ew)
}

/// `h'_i = W_1 h_i + Σ_j α_ij (W_2 h_j + W_3 e_ij) + W_s h_i`.
pub fn gat_update(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    alpha: Var,
    graph: &SpatialGraph,
    edge_attr: Var,
) -> Result<Var> {
    check_nodes(tape, "gat_update", h, graph)?;
    let sa = tape.shape(alpha);
    if sa != [graph.num_edges(), 1] {
        return Err(shape_err("gat_update", sa, &[graph.num_edges(), 1]));
    }
    let ew = edge_term(tape, p, prefix, edge_attr)?;
    update_from(tape, p, prefix, h, alpha, graph, ew)
}

fn update_from(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    alpha: Var,
    graph: &SpatialGraph,
    edge_w3: Var,
) -> Result<Var> {
    let self_term = nn::linear(tape, p, &format!("{prefix}.w1"), h)?;
    let v = nn::linear(tape, p, &format!("{prefix}.w2"), h)?;
    let v_e = tape.gather_rows(v, graph.senders())?;
    let val = tape.add(v_e, edge_w3)?;
    let weighted = tape.mul(val, alpha)?;
    let agg = tape.scatter_add_rows(weighted, graph.receivers(), graph.num_nodes)?;
    let out = tape.add(self_term, agg)?;
    let skip = nn::linear(tape, p, &format!("{prefix}.ws"), h)?;
    tape.add(out, skip)
}

/// Coefficients and update sharing one `W_3 e` evaluation.
pub fn layer(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    graph: &SpatialGraph,
    edge_attr: Var,
) -> Result<Var> {
    check_nodes(tape, "gat_layer", h, graph)?;
    let ew = edge_term(tape, p, prefix, edge_attr)?;
    let alpha = coeffs_from(tape, p, prefix, h, graph, ew)?;
    update_from(tape, p, prefix, h, alpha, graph, ew)
}

/// Affine per-node map to the predicted solution.
pub fn predict(tape: &mut Tape, p: &ParamVars, prefix: &str, h: Var) -> Result<Var> {
    nn::linear(tape, p, prefix, h)
}
