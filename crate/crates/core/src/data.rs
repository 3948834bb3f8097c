//! In-memory benchmark datasets and grid subsampling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, PointSet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    Darcy,
    Advection,
    Eikonal,
    NonlinearDiffusion,
}

impl PdeKind {
    pub const ALL: [PdeKind; 4] = [
        PdeKind::Darcy,
        PdeKind::Advection,
        PdeKind::Eikonal,
        PdeKind::NonlinearDiffusion,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PdeKind::Darcy => "darcy",
            PdeKind::Advection => "advection",
            PdeKind::Eikonal => "eikonal",
            PdeKind::NonlinearDiffusion => "nonlinear_diffusion",
        }
    }
}

impl fmt::Display for PdeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PdeKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown pde `{s}`")))
    }
}

/// Input and solution sampled on the full grid, row-major `grid_res²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub f_grid: Vec<f64>,
    pub u_grid: Vec<f64>,
}

/// Self-describing generation record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub pair_seeds: Vec<u64>,
    /// Generator constants (coefficients, horizons, tolerances, ...).
    pub generator: BTreeMap<String, f64>,
    /// Standard deviation of all target values; training rescales by it.
    pub target_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub pde: PdeKind,
    pub grid_res: usize,
    pub pairs: Vec<FieldPair>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid_res * self.grid_res;
        for (k, p) in self.pairs.iter().enumerate() {
            if p.f_grid.len() != n || p.u_grid.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "pair {k} does not hold {n} grid values"
                )));
            }
            if !p.f_grid.iter().chain(&p.u_grid).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("pair {k}")));
            }
        }
        Ok(())
    }
}

/// Mean and standard deviation of a sequence (population convention).
pub fn mean_std<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    for &v in values {
        n += 1;
        s += v;
        s2 += v * v;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    (mean, crate::math::sqrt(var))
}

/// A subsampled instance: points and the grid values gathered at them.
#[derive(Clone, Debug, PartialEq)]
pub struct Subsample {
    pub points: PointSet,
    /// `N × 1`
    pub f_values: Tensor,
    /// `N × 1`
    pub u_values: Tensor,
}

/// Samples `density` grid nodes and gathers both fields there.
pub fn subsample(pair: &FieldPair, grid_res: usize, density: usize, seed: u64) -> Result<Subsample> {
    let points = geometry::sample_points(grid_res, density, seed)?;
    let n = grid_res * grid_res;
    if pair.f_grid.len() != n || pair.u_grid.len() != n {
        return Err(Error::InvalidArgument(format!("pair is not a {grid_res}² grid")));
    }
    let gather = |grid: &[f64]| -> Result<Tensor> {
        let vals = points.grid_index.iter().map(|&k| grid[k]).collect();
        Tensor::new(&[points.len(), 1], vals)
    };
    Ok(Subsample {
        f_values: gather(&pair.f_grid)?,
        u_values: gather(&pair.u_grid)?,
        points,
    })
}
