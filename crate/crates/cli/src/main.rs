use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cae_core::data::load_dataset;
use cae_core::diagnostics::DimensionReport;
use cae_core::experiment::{
    encode_all, evaluate_model, generate, level_set_export, level_sets_csv, run_experiment, run_sweep,
    ExperimentConfig, LevelSetConfig, PRESET_NAMES,
};
use cae_core::gradcheck::oracle_suite;
use cae_core::training::CaeModel;
use cae_core::{CaeError, Result};
use clap::{Args, Parser, Subcommand};

/// Conformal autoencoder experiments.
#[derive(Parser)]
#[command(name = "cae", version)]
struct Cli {
    /// Root for run directories that are not given explicitly.
    #[arg(long, env = "CAE_OUTPUT_ROOT", default_value = "runs", global = true)]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Built-in configuration to start from.
    #[arg(long)]
    preset: Option<String>,

    /// TOML experiment document, layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a key, e.g. `--set training.epochs_max=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured training and test sets.
    Generate(ConfigArgs),
    /// Generate, train, diagnose and evaluate one configured run.
    Train(ConfigArgs),
    /// Reconstruction metrics of a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Dimension report of the training run; recomputed from `data` if absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Robustness grid over ambient dimension, noise level and seed.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads (0 for all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Decoded level sets of a two-dimensional chart.
    LevelSets {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Training data, which fixes the latent ranges and quantiles.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of loss gradients and input Jacobians.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        models: usize,
        #[arg(long, default_value_t = 50)]
        jacobians: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn resolve(args: &ConfigArgs) -> Result<ExperimentConfig> {
    match (&args.config, &args.preset) {
        (Some(path), preset) => ExperimentConfig::load(path, preset.as_deref(), &args.set),
        (None, Some(preset)) => ExperimentConfig::resolve(Some(preset), None, &args.set),
        (None, None) => Err(CaeError::config(
            "preset",
            format!("pass --config or --preset ({})", PRESET_NAMES.join(", ")),
        )),
    }
}

fn run_dir(args: &ConfigArgs, cfg: &ExperimentConfig, root: &Path) -> PathBuf {
    match (&args.out, &cfg.outputs.dir) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => root.join(dir),
        (None, None) => root.join(&cfg.name),
    }
}

fn emit(json: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(json)?;
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CaeError::io(path, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let root = cli.output_root;
    match cli.command {
        Command::Generate(args) => {
            let cfg = resolve(&args)?;
            let dir = run_dir(&args, &cfg, &root);
            let data = generate(&cfg, &dir)?;
            emit(
                &serde_json::json!({
                    "dir": dir,
                    "train_points": data.train.len(),
                    "test_points": data.test.as_ref().map_or(0, |t| t.len()),
                    "dimension": data.train.dim(),
                }),
                None,
            )?;
        }
        Command::Train(args) => {
            let cfg = resolve(&args)?;
            let dir = run_dir(&args, &cfg, &root);
            let out = run_experiment(&cfg, &dir)?;
            let mut summary = serde_json::to_value(&out.metrics)?;
            summary["dir"] = serde_json::json!(dir);
            emit(&summary, None)?;
        }
        Command::Evaluate {
            model,
            data,
            report,
            out,
        } => {
            let model = CaeModel::load(&model)?;
            let data = load_dataset(&data)?;
            let report = report.map(DimensionReport::load).transpose()?;
            let eval = evaluate_model(&model, &data, report)?;
            emit(&serde_json::to_value(&eval)?, out.as_deref())?;
        }
        Command::Sweep { config, jobs } => {
            let cfg = resolve(&config)?;
            let dir = run_dir(&config, &cfg, &root);
            let cells = run_sweep(&cfg, &dir, jobs)?;
            let failed = cells.iter().filter(|c| c.failure.is_some()).count();
            emit(
                &serde_json::json!({
                    "dir": dir,
                    "cells": cells.len(),
                    "failed": failed,
                }),
                None,
            )?;
        }
        Command::LevelSets {
            model,
            report,
            data,
            points,
            levels,
            out,
        } => {
            let model = CaeModel::load(&model)?;
            let report = DimensionReport::load(&report)?;
            let data = load_dataset(&data)?;
            let latents = encode_all(&model, &data)?;
            let curves = level_set_export(&model, &report, &latents, &LevelSetConfig { points, levels })?;
            let csv = level_sets_csv(&curves);
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| CaeError::io(&path, e))?,
                None => print!("{csv}"),
            }
        }
        Command::Gradcheck {
            models,
            jacobians,
            seed,
        } => {
            let report = oracle_suite(models, jacobians, seed)?;
            let mut json = serde_json::to_value(&report)?;
            json["passed"] = serde_json::json!(report.passed());
            emit(&json, None)?;
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.to_json()).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
