//! Relative-L2 training with Adam, and density sweeps.

mod adam;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{relative_l2, relative_l2_on_tape, REL_EPS};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::forward_backward;
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::model::{GraphSample, Model, ModelConfig, ModelKind, RadiusPolicy};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_interval: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub train_density: usize,
    pub eval_densities: Vec<usize>,
    /// Draw a fresh point subset of every training pair each epoch instead
    /// of fixing one subset for the whole run.
    pub resample_points: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 4,
            lr: 1e-3,
            lr_decay_factor: 0.5,
            lr_decay_interval: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            train_size: 100,
            test_size: 100,
            train_density: 1000,
            eval_densities: alloc::vec![1000],
            resample_points: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.epochs == 0 || self.batch_size == 0 || self.train_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "lr, epochs, batch_size and train_size must be positive: {self:?}"
            )));
        }
        if self.lr_decay_interval == 0 || !(self.lr_decay_factor > 0.0) {
            return Err(Error::InvalidArgument("lr decay must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
        }
    }

    /// Step-decayed learning rate at `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.lr_decay_interval) as f64;
        self.lr * libm::pow(self.lr_decay_factor, k)
    }
}

/// Input standardisation and target scaling fitted on the training pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub f_mean: f64,
    pub f_std: f64,
    pub u_std: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            f_mean: 0.0,
            f_std: 1.0,
            u_std: 1.0,
        }
    }

    pub fn fit(dataset: &Dataset, indices: &[usize]) -> Self {
        let (f_mean, f_std) = data::mean_std(indices.iter().flat_map(|&k| dataset.pairs[k].f_grid.iter()));
        let (_, u_std) = data::mean_std(indices.iter().flat_map(|&k| dataset.pairs[k].u_grid.iter()));
        let guard = |s: f64| if s > 1e-12 { s } else { 1.0 };
        Normalizer {
            f_mean,
            f_std: guard(f_std),
            u_std: guard(u_std),
        }
    }
}

/// Seed of the point subset for `pair` at `density` under run `seed`.
pub fn sample_seed(seed: u64, density: usize, pair: usize) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, density as u64), pair as u64)
}

/// Subsamples and builds graphs for `indices` at one density.
pub fn build_samples(
    dataset: &Dataset,
    indices: &[usize],
    density: usize,
    seed: u64,
    norm: &Normalizer,
    radius: RadiusPolicy,
) -> Result<Vec<GraphSample>> {
    let r = radius.radius(density);
    indices
        .iter()
        .map(|&k| {
            let s = data::subsample(&dataset.pairs[k], dataset.grid_res, density, sample_seed(seed, density, k))?;
            let f = s.f_values.data().iter().map(|v| (v - norm.f_mean) / norm.f_std).collect();
            let u = s.u_values.data().iter().map(|v| v / norm.u_std).collect();
            let n = s.points.len();
            GraphSample::new(
                s.points,
                Tensor::new(&[n, 1], f)?,
                r,
                Some(Tensor::new(&[n, 1], u)?),
            )
        })
        .collect()
}

fn target_of(sample: &GraphSample) -> Result<&Tensor> {
    sample
        .target
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sample has no target".into()))
}

/// Relative L2 of one sample, with gradients.
pub fn sample_loss_and_grads(model: &Model, sample: &GraphSample) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let target = target_of(sample)?.clone();
    forward_backward(&model.params, |tape, p| {
        let pred = model.forward(tape, p, sample)?;
        let truth = tape.constant(target);
        relative_l2_on_tape(tape, pred, truth)
    })
}

/// Mean relative L2 over samples.
pub fn evaluate(model: &Model, samples: &[GraphSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let pred = model.predict(s)?;
        total += relative_l2(pred.data(), target_of(s)?.data())?;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub density: usize,
    pub test_rel_l2: f64,
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model_kind: ModelKind,
    pub pde_tag: String,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub train_density: usize,
    pub epoch_losses: Vec<f64>,
    pub eval: Vec<DensityResult>,
    pub param_count: usize,
    pub wall_clock_secs: f64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub normalizer: Normalizer,
}

impl RunReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }

    pub fn error_at(&self, density: usize) -> Option<f64> {
        self.eval.iter().find(|r| r.density == density).map(|r| r.test_rel_l2)
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub report: RunReport,
    pub model: Model,
}

/// Trains `kind` on the first `train_size` pairs and evaluates on the next
/// `test_size` pairs at every evaluation density.
///
/// `wall_clock_secs` is left at zero; callers with a clock fill it in.
pub fn fit(dataset: &Dataset, kind: ModelKind, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with_progress(dataset, kind, model_cfg, cfg, |_, _| {})
}

/// [`fit`] with a callback receiving `(epoch, mean train loss)` after each epoch.
pub fn fit_with_progress(
    dataset: &Dataset,
    kind: ModelKind,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<FitOutcome> {
    cfg.validate()?;
    let needed = cfg.train_size + cfg.test_size;
    if dataset.len() < needed {
        return Err(Error::InvalidArgument(format!(
            "dataset holds {} pairs, need {needed}",
            dataset.len()
        )));
    }
    let train_idx: Vec<usize> = (0..cfg.train_size).collect();
    let test_idx: Vec<usize> = (cfg.train_size..needed).collect();
    let norm = Normalizer::fit(dataset, &train_idx);
    let mut train = build_samples(dataset, &train_idx, cfg.train_density, cfg.seed, &norm, model_cfg.radius)?;

    let mut model = Model::new(kind, model_cfg, 1, rng::derive_seed(cfg.seed, 0x1417))?;
    let adam = cfg.adam();
    let mut state = AdamState::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(cfg.seed, 0x5eed));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.resample_points && epoch > 0 {
            let seed = rng::derive_seed(rng::derive_seed(cfg.seed, 0x7e5a), epoch as u64);
            train = build_samples(dataset, &train_idx, cfg.train_density, seed, &norm, model_cfg.radius)?;
        }
        order.shuffle(&mut shuffle_rng);
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<BTreeMap<String, Tensor>> = None;
            for &k in batch {
                let (loss, grads) = sample_loss_and_grads(&model, &train[k]).map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
                epoch_loss += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(total) => {
                        for (name, g) in grads {
                            let t = total.get_mut(&name).expect("same parameter set");
                            t.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
                        }
                    }
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            for g in grads.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            adam_step(&mut model.params, &grads, &mut state, &adam, lr)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}: {e}")))?;
        }
        let mean = epoch_loss / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: train loss {mean}")));
        }
        epoch_losses.push(mean);
        progress(epoch, mean);
    }

    let mut eval = Vec::with_capacity(cfg.eval_densities.len());
    if !test_idx.is_empty() {
        for &density in &cfg.eval_densities {
            let eval_seed = rng::derive_seed(cfg.seed, 0xe7a1);
            let test = build_samples(dataset, &test_idx, density, eval_seed, &norm, model_cfg.radius)?;
            eval.push(DensityResult {
                density,
                test_rel_l2: evaluate(&model, &test)?,
            });
        }
    }

    let report = RunReport {
        model_kind: kind,
        pde_tag: dataset.pde.tag().to_string(),
        seed: cfg.seed,
        train_size: cfg.train_size,
        test_size: cfg.test_size,
        train_density: cfg.train_density,
        epoch_losses,
        eval,
        param_count: model.param_count(),
        wall_clock_secs: 0.0,
        model_config: model_cfg.clone(),
        train_config: cfg.clone(),
        normalizer: norm,
    };
    Ok(FitOutcome { report, model })
}

/// One fit per `(kind, density)`, training and evaluating at that density.
pub fn density_sweep(
    dataset: &Dataset,
    kinds: &[ModelKind],
    densities: &[usize],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<RunReport>> {
    let mut out = Vec::with_capacity(kinds.len() * densities.len());
    for &kind in kinds {
        for &density in densities {
            let mut c = cfg.clone();
            c.train_density = density;
            c.eval_densities = alloc::vec![density];
            out.push(fit(dataset, kind, model_cfg, &c)?.report);
        }
    }
    Ok(out)
}
