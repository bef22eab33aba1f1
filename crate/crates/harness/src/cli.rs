use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mboris_core::Method;

use crate::config::{parse_field, method_names, Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(name = "mboris", version, about = "Boris-type integrators for strong magnetic fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV.
    Run(Flags),
    /// Tokamak banana orbits for three methods and two stepsizes.
    Banana(Flags),
    /// Error sweep over stepsizes and field strengths.
    Converge(Flags),
    /// Run a trajectory and report nondegeneracy, drifts and residuals.
    Check(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Field model: tokamak, cubic-potential or uniform.
    #[arg(long)]
    pub field: Option<String>,
    /// Method name, or a comma-separated list for `banana`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Full ε = 2^-13..2^-22 sweep for `converge`.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Upper bound on the nondegeneracy norm accepted by `check`.
    #[arg(long)]
    pub bound: Option<f64>,
}

impl Command {
    pub fn split(&self) -> (Experiment, &Flags) {
        match self {
            Command::Run(f) => (Experiment::Run, f),
            Command::Banana(f) => (Experiment::Banana, f),
            Command::Converge(f) => (Experiment::Converge, f),
            Command::Check(f) => (Experiment::Check, f),
        }
    }
}

fn parse_methods(text: &str) -> Result<Vec<Method>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<Method>()
                .map_err(|_| HarnessError::Config(format!("unknown method '{}' (available: {})", s.trim(), method_names())))
        })
        .collect()
}

/// Loads the configuration file (if any) and applies the flags on top.
pub fn resolve(experiment: Experiment, flags: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = Some(experiment);
    if let Some(name) = &flags.field {
        cfg.field = Some(parse_field(name)?);
    }
    if let Some(m) = &flags.method {
        cfg.methods = parse_methods(m)?;
    }
    if flags.h.is_some() {
        cfg.h = flags.h;
        if experiment == Experiment::Converge {
            cfg.h_list = flags.h.map(|h| vec![h]);
        } else {
            cfg.h_list = None;
        }
    }
    if flags.eps.is_some() {
        cfg.eps = flags.eps;
        if experiment == Experiment::Converge {
            cfg.eps_list = flags.eps.map(|e| vec![e]);
        }
    }
    if flags.t_final.is_some() {
        cfg.t_final = flags.t_final;
    }
    if flags.out.is_some() {
        cfg.out = flags.out.clone();
    }
    cfg.emit_plots |= flags.plots;
    cfg.full |= flags.full;
    if flags.workers.is_some() {
        cfg.workers = flags.workers;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if flags.bound.is_some() {
        cfg.nondegeneracy_bound = flags.bound;
    }
    cfg.validate()?;
    Ok(cfg)
}
