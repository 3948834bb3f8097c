#![allow(dead_code)]

use gola_core::geometry::PointSet;
use gola_core::model::{GraphSample, ModelConfig};
use gola_core::rng::{self, Rng};
use gola_core::Tensor;

pub fn random_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * rng::normal(rng)).collect()).unwrap()
}

pub fn random_points(rng: &mut Rng, n: usize) -> PointSet {
    PointSet::from_coords((0..n).map(|_| [rng::uniform(rng, 0.0, 1.0), rng::uniform(rng, 0.0, 1.0)]).collect())
}

/// A random sample with a radius giving a handful of neighbours per node.
pub fn random_sample(seed: u64, n: usize, radius: f64) -> GraphSample {
    let mut r = rng::seeded(seed);
    let points = random_points(&mut r, n);
    let f = random_tensor(&mut r, &[n, 1], 1.0);
    let u = random_tensor(&mut r, &[n, 1], 1.0);
    GraphSample::new(points, f, radius, Some(u)).unwrap()
}

pub fn small_config() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.gola.channels = 8;
    cfg.gola.modes = 8;
    cfg.gola.heads = 2;
    cfg.gola.head_dim = 4;
    cfg.gola.msgpass_blocks = 1;
    cfg.gola.residual_depth = 1;
    cfg.gkn.channels = 4;
    cfg.gkn.kernel_width = 6;
    cfg.gkn.layers = 2;
    cfg.gcn.channels = 6;
    cfg.gcn.layers = 2;
    cfg
}
