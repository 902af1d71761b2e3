//! Experiment driver behind the `wobbly` binary.

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::ExperimentConfig;
pub use run::{execute, Command, Outcome};

use crate::error::{Error, Result};

/// Exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Error = 1,
    CheckFailed = 2,
}

#[derive(Debug, Parser)]
#[command(name = "wobbly", version, about = "Experiments on intermittent maps with wobbly neutral fixed points")]
pub struct Args {
    /// What to compute.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON config, merged over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One of m1-semistable, m2-semistable, lsv-stable, clt-small-alpha,
    /// clt-zero-at-fixed-point, holland-eval.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Turn the acceptance thresholds into exit code 2 on failure.
    #[arg(long)]
    pub check: bool,
}

impl Args {
    /// Preset, config file, `WOBBLY_*` environment, then flags.
    pub fn resolve(&self, env: &[(String, String)]) -> Result<ExperimentConfig> {
        let file = self.config.as_ref().map(std::fs::read_to_string).transpose()?;
        let mut cfg = ExperimentConfig::load(self.preset.as_deref(), file.as_deref(), env)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        Ok(cfg)
    }
}

pub fn main_with(args: Args) -> Status {
    let env: Vec<(String, String)> = std::env::vars().collect();
    let result = args.resolve(&env).and_then(|cfg| {
        if cfg.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        execute(args.command, &cfg, args.check)
    });
    match result {
        Ok(outcome) => {
            for c in &outcome.checks {
                let mark = if c.passed { "ok  " } else { "FAIL" };
                eprintln!("{mark} {} = {:.6e}", c.name, c.value);
            }
            eprintln!("{} artifacts in {:.1} s", outcome.artifacts.len(), outcome.wall_time_s);
            if args.check && !outcome.passed() {
                Status::CheckFailed
            } else {
                Status::Success
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            Status::Error
        }
    }
}
