//! The `gola` command line: `generate`, `train` and `sweep`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
//! solver failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use gola_core::data::PdeKind;
use gola_core::model::{ModelConfig, ModelKind};
use gola_core::train::{RunReport, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::pdedata;
use crate::persist::{self, Checkpoint};
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gola", version, about = "Graph operator training on PDE benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset file.
    Generate {
        /// Benchmark: darcy, advection, eikonal or nonlinear_diffusion.
        #[arg(long, value_parser = parse_pde)]
        pde: PdeKind,
        /// Number of input/solution pairs.
        #[arg(long)]
        n: usize,
        /// Grid resolution per axis.
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Base seed; pair k uses a seed derived from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (output does not depend on it).
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its report (JSON, CSV) and checkpoint.
    Train {
        /// JSON config with sections data, model, train, sweep.
        #[arg(long)]
        config: PathBuf,
        /// Model kind: gola, gkn or gcn.
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        /// Report path; the CSV and checkpoint are written next to it with
        /// extensions `.csv` and `.ckpt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every (model, density, seed) combination and plot error vs density.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated densities; overrides the config.
        #[arg(long, value_delimiter = ',')]
        densities: Option<Vec<usize>>,
        /// Comma-separated model kinds; overrides the config.
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Option<Vec<ModelKind>>,
        /// Output directory for sweep.csv, sweep.svg and reports.json.
        #[arg(long)]
        out: PathBuf,
        /// Run independent fits on several threads.
        #[arg(long)]
        parallel: bool,
    },
}

fn parse_pde(s: &str) -> Result<PdeKind, String> {
    s.parse().map_err(|e: gola_core::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: gola_core::Error| e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset file, relative paths resolved against the config's directory.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub densities: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Run seeds; empty means the train seed only.
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            densities: vec![50, 200, 800],
            models: vec![ModelKind::Gola, ModelKind::Gkn],
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.train
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            pde,
            n,
            grid,
            seed,
            threads,
            out,
        } => cmd_generate(pde, n, grid, seed, threads, &out),
        Command::Train { config, model, out } => cmd_train(&config, model, &out).map(|_| ()),
        Command::Sweep {
            config,
            densities,
            models,
            out,
            parallel,
        } => cmd_sweep(&config, densities, models, &out, parallel).map(|_| ()),
    }
}

pub fn cmd_generate(pde: PdeKind, n: usize, grid: usize, seed: u64, threads: usize, out: &Path) -> Result<(), CliError> {
    if n == 0 || grid < 3 {
        return Err(CliError::Usage("--n must be ≥ 1 and --grid ≥ 3".into()));
    }
    let ds = pdedata::generate(pde, grid, n, seed, threads).map_err(|e| match e {
        pdedata::GenError::InvalidSpec(m) => CliError::Usage(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    persist::save_dataset(out, &ds).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote {}", out.display());
    println!("pde {pde}  grid {grid}  count {n}  seed {seed}");
    println!("target std {}", report::fmt9(ds.meta.target_std));
    for (k, v) in &ds.meta.generator {
        println!("  {k} = {v}");
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<gola_core::data::Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("dataset {} does not exist", path.display())));
    }
    persist::load_dataset(path).map_err(|e| CliError::Usage(format!("dataset {}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

pub fn cmd_train(config: &Path, kind: ModelKind, out: &Path) -> Result<RunReport, CliError> {
    let cfg = ConfigFile::load(config)?;
    let ds = load_dataset(&cfg.data.path)?;
    let every = (cfg.train.epochs / 10).max(1);
    let outcome = report::timed_fit(&ds, kind, &cfg.model, &cfg.train, |epoch, loss| {
        if epoch % every == 0 || epoch + 1 == cfg.train.epochs {
            eprintln!("epoch {epoch:>5}  train rel-L2 {}", report::fmt9(loss));
        }
    })
    .map_err(|e| CliError::Runtime(format!("training failed: {e}")))?;
    let rep = outcome.report;
    let err = |e: report::ReportError| CliError::Runtime(e.to_string());
    write(&out.with_extension("json"), report::report_to_json(&rep).map_err(err)?)?;
    write(&out.with_extension("csv"), report::report_to_csv(&rep).map_err(err)?)?;
    let ck = Checkpoint {
        model: outcome.model,
        normalizer: rep.normalizer,
        seed: rep.seed,
    };
    persist::save_checkpoint(&out.with_extension("ckpt"), &ck).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &rep.eval {
        println!("{kind} density {}: test rel-L2 {}", r.density, report::fmt9(r.test_rel_l2));
    }
    Ok(rep)
}

/// One fit of a sweep.
#[derive(Clone, Copy, Debug)]
struct Job {
    kind: ModelKind,
    density: usize,
    seed: u64,
}

pub fn cmd_sweep(
    config: &Path,
    densities: Option<Vec<usize>>,
    models: Option<Vec<ModelKind>>,
    out: &Path,
    parallel: bool,
) -> Result<Vec<RunReport>, CliError> {
    let cfg = ConfigFile::load(config)?;
    let densities = densities.unwrap_or_else(|| cfg.sweep.densities.clone());
    let models = models.unwrap_or_else(|| cfg.sweep.models.clone());
    if densities.is_empty() || models.is_empty() {
        return Err(CliError::Usage("sweep needs at least one density and one model".into()));
    }
    let seeds = if cfg.sweep.seeds.is_empty() {
        vec![cfg.train.seed]
    } else {
        cfg.sweep.seeds.clone()
    };
    let ds = load_dataset(&cfg.data.path)?;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("creating {}: {e}", out.display())))?;

    let mut jobs = Vec::new();
    for &kind in &models {
        for &density in &densities {
            jobs.extend(seeds.iter().map(|&seed| Job { kind, density, seed }));
        }
    }
    let run_job = |job: &Job| -> Result<RunReport, CliError> {
        let mut tc = cfg.train.clone();
        tc.seed = job.seed;
        tc.train_density = job.density;
        tc.eval_densities = vec![job.density];
        let rep = report::timed_fit(&ds, job.kind, &cfg.model, &tc, |_, _| {})
            .map_err(|e| CliError::Runtime(format!("{} at density {}: {e}", job.kind, job.density)))?
            .report;
        eprintln!(
            "{} density {} seed {}: test rel-L2 {}",
            job.kind,
            job.density,
            job.seed,
            report::fmt9(rep.eval[0].test_rel_l2)
        );
        Ok(rep)
    };

    let results: Vec<Result<RunReport, CliError>> = if parallel {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
        let slots: Vec<Mutex<Option<Result<RunReport, CliError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        let next = Mutex::new(0usize);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let k = {
                        let mut n = next.lock().expect("queue lock");
                        let k = *n;
                        *n += 1;
                        k
                    };
                    if k >= jobs.len() {
                        break;
                    }
                    *slots[k].lock().expect("slot lock") = Some(run_job(&jobs[k]));
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every job ran"))
            .collect()
    } else {
        jobs.iter().map(run_job).collect()
    };
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let rows = report::sweep_rows(&reports);
    let err = |e: report::ReportError| CliError::Runtime(e.to_string());
    write(&out.join("sweep.csv"), report::sweep_to_csv(&rows).map_err(err)?)?;
    write(&out.join("sweep.svg"), report::sweep_svg(&rows))?;
    let json = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&out.join("reports.json"), json)?;
    println!("wrote {} rows to {}", rows.len(), out.join("sweep.csv").display());
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_config_keys_are_rejected() {
        let ok = r#"{"data": {"path": "d.gola"}, "train": {"epochs": 2}}"#;
        assert_eq!(ConfigFile::parse(ok).unwrap().train.epochs, 2);
        let bad = r#"{"data": {"path": "d.gola"}, "train": {"epochz": 2}}"#;
        assert!(matches!(ConfigFile::parse(bad), Err(CliError::Usage(_))));
        let bad = r#"{"data": {"path": "d.gola"}, "extra": {}}"#;
        assert!(ConfigFile::parse(bad).is_err());
        let bad = r#"{"data": {"path": "d.gola"}, "train": {"lr": -1.0}}"#;
        assert!(ConfigFile::parse(bad).is_err());
    }

    #[test]
    fn flag_errors_exit_with_usage_code() {
        assert_eq!(run(["gola", "generate", "--pde", "poisson", "--n", "1", "--out", "x"]), EXIT_USAGE);
        assert_eq!(run(["gola", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["gola", "train", "--help"]), EXIT_OK);
    }
}
