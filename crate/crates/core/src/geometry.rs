//! Node sampling, radius graphs and edge attributes.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::Tensor;

/// Sampled grid nodes.
///
/// Grid node `k = a * res + b` sits at `(a / (res - 1), b / (res - 1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub coords: Vec<[f64; 2]>,
    /// Flat grid index of every point, ascending.
    pub grid_index: Vec<usize>,
    pub source_grid_res: usize,
    pub seed: u64,
}

impl PointSet {
    /// Points at arbitrary coordinates (no source grid).
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Self {
        let grid_index = (0..coords.len()).collect();
        PointSet {
            coords,
            grid_index,
            source_grid_res: 0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// `N × 2` coordinate matrix.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.coords.iter().flat_map(|c| c.iter().copied()).collect();
        Tensor::new(&[self.len(), 2], data).expect("N x 2")
    }

    /// Reorders points so that new point `k` is old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        PointSet {
            coords: perm.iter().map(|&p| self.coords[p]).collect(),
            grid_index: perm.iter().map(|&p| self.grid_index[p]).collect(),
            source_grid_res: self.source_grid_res,
            seed: self.seed,
        }
    }
}

pub fn grid_coord(res: usize, flat: usize) -> [f64; 2] {
    let span = (res - 1) as f64;
    [(flat / res) as f64 / span, (flat % res) as f64 / span]
}

/// Draws `density` distinct nodes of a `grid_res × grid_res` grid uniformly
/// without replacement. Points come back in ascending grid order.
pub fn sample_points(grid_res: usize, density: usize, seed: u64) -> Result<PointSet> {
    if grid_res < 2 {
        return Err(Error::InvalidArgument(format!("grid_res {grid_res} < 2")));
    }
    let total = grid_res * grid_res;
    if density == 0 || density > total {
        return Err(Error::InvalidArgument(format!(
            "density {density} outside 1..={total}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut grid_index = rand::seq::index::sample(&mut rng, total, density).into_vec();
    grid_index.sort_unstable();
    let coords = grid_index.iter().map(|&k| grid_coord(grid_res, k)).collect();
    Ok(PointSet {
        coords,
        grid_index,
        source_grid_res: grid_res,
        seed,
    })
}

/// Directed, symmetric radius graph in CSR order by receiving node.
///
/// Edge `(i, j)` carries the message from `j` into `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGraph {
    pub num_nodes: usize,
    pub radius: f64,
    /// `(receiver i, sender j)`, sorted by `(i, j)`.
    pub edges: Vec<(usize, usize)>,
    /// Edges of node `i` occupy `offsets[i]..offsets[i + 1]`.
    pub offsets: Vec<usize>,
    receivers: Arc<[usize]>,
    senders: Arc<[usize]>,
    /// `E × d_e` rows `concat(x_i, x_j, f(x_i), f(x_j))`, once attached.
    pub edge_attr: Option<Tensor>,
}

impl SpatialGraph {
    /// Builds the CSR structure from an arbitrary directed edge list.
    pub fn from_edges(num_nodes: usize, radius: f64, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        edges.sort_unstable();
        edges.dedup();
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(i, j) in &edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::Index {
                    op: "graph",
                    index: i.max(j),
                    bound: num_nodes,
                });
            }
            offsets[i + 1] += 1;
        }
        for k in 0..num_nodes {
            offsets[k + 1] += offsets[k];
        }
        let receivers: Arc<[usize]> = edges.iter().map(|e| e.0).collect();
        let senders: Arc<[usize]> = edges.iter().map(|e| e.1).collect();
        Ok(SpatialGraph {
            num_nodes,
            radius,
            edges,
            offsets,
            receivers,
            senders,
            edge_attr: None,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn receivers(&self) -> Arc<[usize]> {
        self.receivers.clone()
    }

    pub fn senders(&self) -> Arc<[usize]> {
        self.senders.clone()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.offsets[i]..self.offsets[i + 1]].iter().map(|e| e.1)
    }

    pub fn mean_degree(&self) -> f64 {
        self.num_edges() as f64 / self.num_nodes.max(1) as f64
    }

    pub fn edge_attr_dim(&self) -> Option<usize> {
        self.edge_attr.as_ref().map(|t| t.shape()[1])
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut inv = vec![0usize; perm.len()];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(i, j)| (inv[i], inv[j])).collect();
        let mut g = SpatialGraph::from_edges(self.num_nodes, self.radius, edges)?;
        if let Some(attr) = &self.edge_attr {
            let d = attr.shape()[1];
            let mut data = vec![0.0; g.num_edges() * d];
            for (e, &(i, j)) in self.edges.iter().enumerate() {
                let target = g.edge_index(inv[i], inv[j]).expect("edge survives relabeling");
                data[target * d..(target + 1) * d].copy_from_slice(attr.row(e));
            }
            g.edge_attr = Some(Tensor::new(&[g.num_edges(), d], data)?);
        }
        Ok(g)
    }

    /// Position of edge `(i, j)` in the edge list.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.offsets[i];
        self.edges[lo..self.offsets[i + 1]]
            .binary_search(&(i, j))
            .ok()
            .map(|k| lo + k)
    }
}

fn within(a: [f64; 2], b: [f64; 2], radius: f64) -> bool {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    math::sqrt(dx * dx + dy * dy) <= radius
}

/// All pairs `i != j` with `‖x_i − x_j‖₂ ≤ radius`, via uniform cell hashing
/// with cell size `radius`.
pub fn build_radius_graph(points: &PointSet, radius: f64) -> Result<SpatialGraph> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius {radius} must be positive")));
    }
    let n = points.len();
    if n == 0 {
        return SpatialGraph::from_edges(0, radius, Vec::new());
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in &points.coords {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let cells_along = |a: usize| ((hi[a] - lo[a]) / radius) as usize + 1;
    let (nx, ny) = (cells_along(0), cells_along(1));
    let cell_of = |c: &[f64; 2]| {
        let cx = (((c[0] - lo[0]) / radius) as usize).min(nx - 1);
        let cy = (((c[1] - lo[1]) / radius) as usize).min(ny - 1);
        (cx, cy)
    };
    // Counting sort of points into cells.
    let mut start = vec![0usize; nx * ny + 1];
    for c in &points.coords {
        let (cx, cy) = cell_of(c);
        start[cx * ny + cy + 1] += 1;
    }
    for k in 0..nx * ny {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut members = vec![0usize; n];
    for (i, c) in points.coords.iter().enumerate() {
        let (cx, cy) = cell_of(c);
        members[fill[cx * ny + cy]] = i;
        fill[cx * ny + cy] += 1;
    }

    let mut edges = Vec::new();
    let mut nbrs = Vec::new();
    for (i, c) in points.coords.iter().enumerate() {
        let (cx, cy) = cell_of(c);
        nbrs.clear();
        for x in cx.saturating_sub(1)..=(cx + 1).min(nx - 1) {
            for y in cy.saturating_sub(1)..=(cy + 1).min(ny - 1) {
                let cell = x * ny + y;
                for &j in &members[start[cell]..start[cell + 1]] {
                    if j != i && within(*c, points.coords[j], radius) {
                        nbrs.push(j);
                    }
                }
            }
        }
        nbrs.sort_unstable();
        edges.extend(nbrs.iter().map(|&j| (i, j)));
    }
    SpatialGraph::from_edges(n, radius, edges)
}

/// Fills `edge_attr` with `concat(x_i, x_j, f(x_i), f(x_j))` per edge.
pub fn attach_edge_attributes(
    mut graph: SpatialGraph,
    points: &PointSet,
    f_values: &Tensor,
) -> Result<SpatialGraph> {
    let n = points.len();
    if f_values.rank() != 2 || f_values.shape()[0] != n || graph.num_nodes != n {
        return Err(crate::error::shape_err(
            "attach_edge_attributes",
            f_values.shape(),
            &[n, graph.num_nodes],
        ));
    }
    let c_in = f_values.shape()[1];
    let d = 4 + 2 * c_in;
    let mut data = Vec::with_capacity(graph.num_edges() * d);
    for &(i, j) in &graph.edges {
        data.extend_from_slice(&points.coords[i]);
        data.extend_from_slice(&points.coords[j]);
        data.extend_from_slice(f_values.row(i));
        data.extend_from_slice(f_values.row(j));
    }
    graph.edge_attr = Some(Tensor::new(&[graph.num_edges(), d], data)?);
    Ok(graph)
}

pub const MIN_RADIUS: f64 = 0.02;
pub const MAX_RADIUS: f64 = 0.5;

/// Radius whose disc holds `target_degree` uniform neighbours on average:
/// `sqrt(target_degree / (π · density))`, clamped to `[0.02, 0.5]`.
pub fn default_radius(density: usize, target_degree: f64) -> f64 {
    let r = math::sqrt(target_degree / (math::PI * density.max(1) as f64));
    r.clamp(MIN_RADIUS, MAX_RADIUS)
}
