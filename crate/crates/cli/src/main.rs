//! `distress`: command-line driver for the pipeline.
//!
//! Exit codes: 0 success, 1 some cells or stages failed, 2 fatal error.
//! Errors are printed to stderr as one JSON object.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use distress_core::runner::{
    generate_synthetic, run, ExperimentConfig, Pipeline, RunnerError, Stage, SyntheticSpec,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "distress", version, about = "Corporate distress text analytics")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this stage instead of the command's default.
    #[arg(long, global = true)]
    stage: Option<Stage>,
    /// Global seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scoring service URL; overrides the config and DISTRESS_BACKEND_URL.
    #[arg(long, global = true)]
    backend_url: Option<String>,
    /// Output directory; overrides the config and DISTRESS_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filings to cleaned MD&A documents.
    Extract,
    /// Dictionary tone per document.
    Tone,
    /// Backend sentence scores aggregated per document.
    Score,
    /// Self-training domain adaptation and DAPT scores.
    Adapt,
    /// Assemble the feature tables.
    Features,
    /// Run every stage the config needs and write the report.
    Evaluate,
    /// Re-render the table and chart from the last evaluation.
    Report,
    /// Generate a synthetic corpus and financial file.
    Synth {
        /// Generator spec (TOML); defaults to the config's `[synthetic]`
        /// section, then to the built-in defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        let kind = match &e {
            RunnerError::InvalidConfig(_) => "invalid_config",
            RunnerError::InvalidSynthetic(_) => "invalid_synthetic",
            RunnerError::MissingInput { .. } => "missing_input",
            RunnerError::NoUsableCells => "no_usable_cells",
            RunnerError::Io { .. } => "io",
            RunnerError::Csv(_) => "csv",
            RunnerError::Corpus(_) => "corpus",
            RunnerError::Lexicon(_) => "lexicon",
            RunnerError::Scoring(_) => "scoring",
            RunnerError::Adaptation(_) => "adaptation",
            RunnerError::Features(_) => "features",
            RunnerError::Evaluation(_) => "evaluation",
        };
        Failure { kind, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "usage", message: message.into() }
}

fn load_config(cli: &Cli, validate: bool) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| usage("--config is required for this command"))?;
    let mut cfg = ExperimentConfig::load_unvalidated(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(url) = &cli.backend_url {
        cfg.set_backend_url(url)?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if validate {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn synth(cli: &Cli, spec_path: Option<&PathBuf>) -> Result<u8, Failure> {
    let cfg = cli.config.as_ref().map(|_| load_config(cli, false)).transpose()?;
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<SyntheticSpec>(&text).map_err(|e| Failure { kind: "invalid_synthetic", message: e.to_string() })?
        }
        None => cfg.as_ref().and_then(|c| c.synthetic.clone()).unwrap_or_default(),
    };
    if let Some(seed) = cli.seed {
        spec.rng_seed = seed;
    }
    let dir = match (&cli.out, &cfg) {
        (Some(out), _) => out.clone(),
        (None, Some(c)) => c.corpus.index.parent().map(PathBuf::from).unwrap_or_default(),
        (None, None) => return Err(usage("synth needs --out or a --config whose corpus index marks the target directory")),
    };
    let (out, manifest) = generate_synthetic(&spec, &dir)?;
    println!(
        "{}",
        json!({ "index": out.index, "financials": out.financials, "n_filings": manifest.n_filings, "n_bankrupt": manifest.n_bankrupt })
    );
    Ok(0)
}

fn execute(cli: &Cli) -> Result<u8, Failure> {
    if let Command::Synth { spec } = &cli.command {
        return synth(cli, spec.as_ref());
    }
    let cfg = load_config(cli, true)?;
    let default_stage = match cli.command {
        Command::Extract => Some(Stage::Extract),
        Command::Tone => Some(Stage::Tone),
        Command::Score => Some(Stage::Score),
        Command::Adapt => Some(Stage::Adapt),
        Command::Features => Some(Stage::Features),
        Command::Report => Some(Stage::Report),
        Command::Evaluate | Command::Synth { .. } => None,
    };
    let Some(stage) = cli.stage.or(default_stage) else {
        let outcome = run(cfg)?;
        print!("{}", outcome.report.to_csv_string().map_err(RunnerError::from)?);
        let failed = outcome.failed_cells();
        if failed > 0 {
            eprintln!("{}", json!({ "error": "cell_failures", "failed_cells": failed, "cells": outcome.manifest.cells }));
            return Ok(1);
        }
        return Ok(0);
    };
    let mut pipeline = Pipeline::new(cfg)?;
    let result = pipeline.run_stage(stage);
    pipeline.write_manifest()?;
    result?;
    let failed: Vec<_> = pipeline.manifest().cells.iter().filter(|c| !c.ok).collect();
    if !failed.is_empty() {
        eprintln!("{}", json!({ "error": "cell_failures", "failed_cells": failed.len(), "cells": failed }));
        return Ok(1);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log).init();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(2)
        }
    }
}
