//! Message passing with mean/max/min/std aggregation.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::{shape_err, Result};
use crate::geometry::SpatialGraph;
use crate::math;
use crate::nn;
use crate::rng::Rng;
use crate::tensor::{ParamStore, Tensor};

/// Smoothing inside the standard deviation so its gradient stays bounded.
pub const STD_EPS: f64 = 1e-8;

/// Layer widths of one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MsgPassShape {
    pub channels: usize,
    pub edge_dim: usize,
    pub residual_depth: usize,
}

/// Registers `g_theta` (`2C + d_e → C → C`), `gamma_theta` (`5C → C → C`) and
/// `residual_depth` residual MLPs (`C → C → C`) under `prefix`.
pub fn add_params(store: &mut ParamStore, rng: &mut Rng, prefix: &str, shape: MsgPassShape) -> Result<()> {
    let c = shape.channels;
    nn::add_mlp(store, rng, &format!("{prefix}.g"), &[2 * c + shape.edge_dim, c, c])?;
    nn::add_mlp(store, rng, &format!("{prefix}.gamma"), &[5 * c, c, c])?;
    for r in 0..shape.residual_depth {
        nn::add_mlp(store, rng, &format!("{prefix}.res{r}"), &[c, c, c])?;
    }
    Ok(())
}

/// `m_ij = g(h_i, h_j, e_ij)` per edge, rows in edge order (`E × C`).
pub fn messages(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    graph: &SpatialGraph,
    edge_attr: Var,
) -> Result<Var> {
    let sh = tape.shape(h);
    if sh.len() != 2 || sh[0] != graph.num_nodes {
        return Err(shape_err("messages", sh, &[graph.num_nodes]));
    }
    let hi = tape.gather_rows(h, graph.receivers())?;
    let hj = tape.gather_rows(h, graph.senders())?;
    let input = tape.concat(&[hi, hj, edge_attr], 1)?;
    nn::mlp(tape, p, &format!("{prefix}.g"), 2, input)
}

/// `1/deg(i)` per node, `0` for isolated nodes, as an `N × 1` constant.
pub fn inverse_degree(graph: &SpatialGraph) -> Tensor {
    let data: Vec<f64> = (0..graph.num_nodes)
        .map(|i| match graph.degree(i) {
            0 => 0.0,
            d => 1.0 / d as f64,
        })
        .collect();
    Tensor::new(&[graph.num_nodes, 1], data).expect("N x 1")
}

/// Per node `concat(mean, max, min, std)` of incoming messages (`N × 4C`).
/// Isolated nodes get zero rows.
pub fn aggregate(tape: &mut Tape, m: Var, graph: &SpatialGraph) -> Result<Var> {
    let sm = tape.shape(m);
    if sm.len() != 2 || sm[0] != graph.num_edges() {
        return Err(shape_err("aggregate", sm, &[graph.num_edges()]));
    }
    let n = graph.num_nodes;
    let recv = graph.receivers();
    let inv_deg = tape.constant(inverse_degree(graph));

    let sum = tape.scatter_add_rows(m, recv.clone(), n)?;
    let mean = tape.mul(sum, inv_deg)?;
    let max = tape.segment_max(m, &graph.offsets)?;
    let min = tape.segment_min(m, &graph.offsets)?;

    let mean_e = tape.gather_rows(mean, recv.clone())?;
    let centered = tape.sub(m, mean_e)?;
    let sq = tape.square(centered);
    let sq_sum = tape.scatter_add_rows(sq, recv, n)?;
    let var = tape.mul(sq_sum, inv_deg)?;
    let var = tape.offset(var, STD_EPS);
    let std = tape.sqrt(var);
    let std = tape.offset(std, -math::sqrt(STD_EPS));

    tape.concat(&[mean, max, min, std], 1)
}

/// `h' = γ(h, m̂)` followed by `residual_depth` blocks `h ← h + MLP(h)`.
pub fn update(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    aggregated: Var,
    residual_depth: usize,
) -> Result<Var> {
    let input = tape.concat(&[h, aggregated], 1)?;
    let mut out = nn::mlp(tape, p, &format!("{prefix}.gamma"), 2, input)?;
    for r in 0..residual_depth {
        let delta = nn::mlp(tape, p, &format!("{prefix}.res{r}"), 2, out)?;
        out = tape.add(out, delta)?;
    }
    Ok(out)
}

/// One full block: messages, aggregation, update.
pub fn block(
    tape: &mut Tape,
    p: &ParamVars,
    prefix: &str,
    h: Var,
    graph: &SpatialGraph,
    edge_attr: Var,
    residual_depth: usize,
) -> Result<Var> {
    let m = messages(tape, p, prefix, h, graph, edge_attr)?;
    let agg = aggregate(tape, m, graph)?;
    update(tape, p, prefix, h, agg, residual_depth)
}
