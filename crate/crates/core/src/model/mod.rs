//! End-to-end operators sharing one sample contract: GOLA and the GKN and GCN
//! baselines.

mod baselines;
mod gola;

pub use baselines::{gcn_forward, gkn_forward, Activation, BaselineConfig};
pub use gola::{gola_forward, GolaConfig};

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, ParamVars, Tape, Var};
use crate::error::{Error, Result};
use crate::geometry::{self, PointSet, SpatialGraph};
use crate::rng;
use crate::tensor::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gola,
    Gkn,
    Gcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gola, ModelKind::Gkn, ModelKind::Gcn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gola => "gola",
            ModelKind::Gkn => "gkn",
            ModelKind::Gcn => "gcn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gola" => Ok(ModelKind::Gola),
            "gkn" => Ok(ModelKind::Gkn),
            "gcn" => Ok(ModelKind::Gcn),
            other => Err(Error::InvalidArgument(alloc::format!("unknown model `{other}`"))),
        }
    }
}

/// How the graph radius is chosen for a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusPolicy {
    Fixed(f64),
    TargetDegree(f64),
}

impl RadiusPolicy {
    pub fn radius(self, density: usize) -> f64 {
        match self {
            RadiusPolicy::Fixed(r) => r,
            RadiusPolicy::TargetDegree(k) => geometry::default_radius(density, k),
        }
    }
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy::TargetDegree(10.0)
    }
}

/// Configuration for all three model kinds plus the shared graph policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gola: GolaConfig,
    pub gkn: BaselineConfig,
    pub gcn: BaselineConfig,
    pub radius: RadiusPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gola: GolaConfig::default(),
            gkn: BaselineConfig::default(),
            gcn: BaselineConfig::default(),
            radius: RadiusPolicy::default(),
        }
    }
}

/// One graph instance: sampled points, input values, graph with edge
/// attributes and (for training) target values.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    pub points: PointSet,
    /// `N × C_in`
    pub f_values: Tensor,
    pub graph: SpatialGraph,
    /// `N × 1`
    pub target: Option<Tensor>,
}

impl GraphSample {
    /// Builds the radius graph and its edge attributes.
    pub fn new(points: PointSet, f_values: Tensor, radius: f64, target: Option<Tensor>) -> Result<Self> {
        let graph = geometry::build_radius_graph(&points, radius)?;
        let graph = geometry::attach_edge_attributes(graph, &points, &f_values)?;
        Ok(GraphSample {
            points,
            f_values,
            graph,
            target,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.points.len()
    }

    pub fn c_in(&self) -> usize {
        self.f_values.shape()[1]
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let rows = |t: &Tensor| -> Result<Tensor> {
            let c = t.shape()[1];
            let data = perm.iter().flat_map(|&p| t.row(p).iter().copied()).collect();
            Tensor::new(&[perm.len(), c], data)
        };
        Ok(GraphSample {
            points: self.points.permuted(perm),
            f_values: rows(&self.f_values)?,
            graph: self.graph.permuted(perm)?,
            target: self.target.as_ref().map(rows).transpose()?,
        })
    }

    pub(crate) fn edge_attr(&self) -> Result<&Tensor> {
        self.graph
            .edge_attr
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("graph has no edge attributes".into()))
    }
}

/// A model kind with its configuration and learnable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub c_in: usize,
    pub params: ParamStore,
}

impl Model {
    pub fn new(kind: ModelKind, config: &ModelConfig, c_in: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let params = match kind {
            ModelKind::Gola => gola::init(&config.gola, c_in, &mut rng)?,
            ModelKind::Gkn => baselines::init_gkn(&config.gkn, c_in, &mut rng)?,
            ModelKind::Gcn => baselines::init_gcn(&config.gcn, c_in, &mut rng)?,
        };
        Ok(Model {
            kind,
            config: config.clone(),
            c_in,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Records the forward pass on `tape`, returning the `N × 1` prediction.
    pub fn forward(&self, tape: &mut Tape, p: &ParamVars, sample: &GraphSample) -> Result<Var> {
        if sample.c_in() != self.c_in {
            return Err(crate::error::shape_err(
                "model input",
                sample.f_values.shape(),
                &[sample.num_nodes(), self.c_in],
            ));
        }
        match self.kind {
            ModelKind::Gola => gola_forward(tape, p, &self.config.gola, sample),
            ModelKind::Gkn => gkn_forward(tape, p, &self.config.gkn, sample),
            ModelKind::Gcn => gcn_forward(tape, p, &self.config.gcn, sample),
        }
    }

    pub fn predict(&self, sample: &GraphSample) -> Result<Tensor> {
        autodiff::evaluate(&self.params, |tape, p| self.forward(tape, p, sample))
    }

    pub fn name(&self) -> String {
        String::from(self.kind.as_str())
    }
}

/// Total scalar count of a parameter set.
pub fn param_count(params: &ParamStore) -> usize {
    params.param_count()
}
