//! Benchmark dataset generation.
//!
//! Every pair is computed in `f64` from its own derived seed, checked
//! against its solver's tolerance, then rounded to `f32` precision, which
//! is what the dataset container stores.

pub mod advection;
pub mod darcy;
pub mod diffusion;
pub mod eikonal;
pub mod grf;

use std::collections::BTreeMap;

use gola_core::data::{self, Dataset, DatasetMeta, FieldPair, PdeKind};
use gola_core::rng;

pub use gola_core::data::{subsample, Subsample};
pub use grf::{sample_grf, GrfSpec};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

/// GRF smoothness and correlation per benchmark.
pub fn grf_params(pde: PdeKind) -> (f64, f64) {
    match pde {
        PdeKind::Darcy => (2.0, 3.0),
        PdeKind::Advection => (3.0, 3.0),
        PdeKind::Eikonal | PdeKind::NonlinearDiffusion => (2.5, 3.0),
    }
}

pub const ADVECTION_VELOCITY: [f64; 2] = [1.0, 0.5];
pub const ADVECTION_HORIZON: f64 = 0.5;
pub const DIFFUSION_HORIZON: f64 = 0.2;
pub const EIKONAL_LOG_SPEED_SCALE: f64 = 0.5;
/// Largest accepted Darcy residual after the CG solve.
pub const DARCY_RESIDUAL_BOUND: f64 = 1e-6;

/// Seed of pair `k` in a dataset generated from `seed`.
pub fn pair_seed(seed: u64, k: usize) -> u64 {
    rng::derive_seed(seed, k as u64)
}

fn grf(pde: PdeKind, grid_res: usize, seed: u64) -> Result<Vec<f64>, GenError> {
    let (alpha, tau) = grf_params(pde);
    sample_grf(&GrfSpec {
        grid_res,
        tau,
        alpha,
        seed,
    })
}

/// One `f64` pair of the given benchmark.
pub fn generate_pair(pde: PdeKind, grid_res: usize, seed: u64) -> Result<FieldPair, GenError> {
    if grid_res < 3 {
        return Err(GenError::InvalidSpec(format!("grid_res {grid_res} < 3")));
    }
    let g = grf(pde, grid_res, seed)?;
    let n = grid_res;
    let pair = match pde {
        PdeKind::Darcy => {
            let a = darcy::threshold_coefficient(&g);
            let (u, residual) = darcy::solve(&a, n)?;
            if !(residual < DARCY_RESIDUAL_BOUND) {
                return Err(GenError::Solver(format!("Darcy residual {residual:.3e}")));
            }
            FieldPair { f_grid: a, u_grid: u }
        }
        PdeKind::Advection => {
            let u = advection::advect(&g, n, ADVECTION_VELOCITY, ADVECTION_HORIZON);
            FieldPair { f_grid: g, u_grid: u }
        }
        PdeKind::Eikonal => {
            let s: Vec<f64> = g.iter().map(|v| (EIKONAL_LOG_SPEED_SCALE * v).exp()).collect();
            let u = eikonal::solve(&s, n)?;
            FieldPair { f_grid: s, u_grid: u }
        }
        PdeKind::NonlinearDiffusion => {
            let peak = g.iter().fold(0.0f64, |m, v| m.max(v * v));
            let f: Vec<f64> = g.iter().map(|v| v * v / peak).collect();
            let u = diffusion::integrate(&f, n, DIFFUSION_HORIZON, 1.0)?;
            FieldPair { f_grid: f, u_grid: u }
        }
    };
    Ok(pair)
}

/// Generator constants recorded in the dataset metadata.
pub fn generator_constants(pde: PdeKind) -> BTreeMap<String, f64> {
    let (alpha, tau) = grf_params(pde);
    let mut m = BTreeMap::new();
    m.insert("grf_alpha".to_string(), alpha);
    m.insert("grf_tau".to_string(), tau);
    let mut put = |k: &str, v: f64| {
        m.insert(k.to_string(), v);
    };
    match pde {
        PdeKind::Darcy => {
            put("a_high", darcy::A_HIGH);
            put("a_low", darcy::A_LOW);
            put("cg_tol", darcy::CG_TOL);
            put("residual_bound", DARCY_RESIDUAL_BOUND);
        }
        PdeKind::Advection => {
            put("velocity_x", ADVECTION_VELOCITY[0]);
            put("velocity_y", ADVECTION_VELOCITY[1]);
            put("horizon", ADVECTION_HORIZON);
        }
        PdeKind::Eikonal => {
            put("log_speed_scale", EIKONAL_LOG_SPEED_SCALE);
            put("sweep_tol", eikonal::SWEEP_TOL);
            put("max_rounds", eikonal::MAX_ROUNDS as f64);
        }
        PdeKind::NonlinearDiffusion => {
            put("d0", diffusion::D0);
            put("d2", diffusion::D2);
            put("cfl", diffusion::CFL);
            put("horizon", DIFFUSION_HORIZON);
        }
    }
    m
}

/// Rounds every value to the nearest `f32`.
pub fn quantize(pair: &mut FieldPair) {
    for v in pair.f_grid.iter_mut().chain(pair.u_grid.iter_mut()) {
        *v = *v as f32 as f64;
    }
}

/// `count` pairs at full 64-bit precision, generated on up to `threads`
/// worker threads. Output is independent of `threads`.
pub fn generate_raw(
    pde: PdeKind,
    grid_res: usize,
    count: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<FieldPair>, GenError> {
    if count == 0 {
        return Err(GenError::InvalidSpec("count must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..count).map(|k| pair_seed(seed, k)).collect();
    let threads = threads.clamp(1, count);
    if threads == 1 {
        return seeds.iter().map(|&s| generate_pair(pde, grid_res, s)).collect();
    }
    let chunk = count.div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&s| generate_pair(pde, grid_res, s))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        for h in handles {
            out.extend(h.join().expect("generator thread panicked")?);
        }
        Ok(out)
    })
}

/// A stored-precision dataset of `count` pairs.
pub fn generate(pde: PdeKind, grid_res: usize, count: usize, seed: u64, threads: usize) -> Result<Dataset, GenError> {
    let mut pairs = generate_raw(pde, grid_res, count, seed, threads)?;
    pairs.iter_mut().for_each(quantize);
    let (_, target_std) = data::mean_std(pairs.iter().flat_map(|p| p.u_grid.iter()));
    Ok(Dataset {
        pde,
        grid_res,
        meta: DatasetMeta {
            seed,
            pair_seeds: (0..count).map(|k| pair_seed(seed, k)).collect(),
            generator: generator_constants(pde),
            target_std,
        },
        pairs,
    })
}

pub fn gen_darcy(grid_res: usize, n: usize, seed: u64) -> Result<Dataset, GenError> {
    generate(PdeKind::Darcy, grid_res, n, seed, 1)
}

pub fn gen_advection(grid_res: usize, n: usize, seed: u64) -> Result<Dataset, GenError> {
    generate(PdeKind::Advection, grid_res, n, seed, 1)
}

pub fn gen_eikonal(grid_res: usize, n: usize, seed: u64) -> Result<Dataset, GenError> {
    generate(PdeKind::Eikonal, grid_res, n, seed, 1)
}

pub fn gen_nonlinear_diffusion(grid_res: usize, n: usize, seed: u64) -> Result<Dataset, GenError> {
    generate(PdeKind::NonlinearDiffusion, grid_res, n, seed, 1)
}
