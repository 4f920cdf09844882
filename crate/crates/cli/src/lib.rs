//! Command-line driver for household speaker-identification experiments.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hearth-lp", version, about = "Semi-supervised speaker identification in simulated households")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic manifest and embedding payload to --manifest.
    GenSynth(Overrides),
    /// Group the manifest's speakers into households and write --split-file.
    BuildHouseholds(Overrides),
    /// Evaluate methods over every (L, U) cell and write reports to --out.
    Sweep(Overrides),
    /// Print per-utterance predictions for one household.
    Score {
        #[arg(long)]
        household: String,
        /// Write the propagation delta trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Write one household's affinity and normalized matrices to --out.
    DumpGraph {
        #[arg(long)]
        household: String,
        #[command(flatten)]
        opts: Overrides,
    },
}

/// Values given on the command line win over the config file, which wins
/// over built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long)]
    pub split_file: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<String>,
    #[arg(long)]
    pub tolerance: Option<String>,
    /// Comma-separated method names.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated L values (`All` allowed).
    #[arg(long)]
    pub labeled: Option<String>,
    /// Comma-separated U values (`All` allowed).
    #[arg(long)]
    pub unlabeled: Option<String>,
    /// `dev` or `val`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
    /// Stdout format: table, csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Also write a plot series along `L` or `U`.
    #[arg(long)]
    pub plot: Option<String>,
    #[arg(long)]
    pub household_size: Option<String>,
    #[arg(long)]
    pub dev_households: Option<String>,
    #[arg(long)]
    pub val_households: Option<String>,
    /// Holdout utterances per speaker.
    #[arg(long)]
    pub holdout: Option<String>,
    #[arg(long)]
    pub speakers: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    /// Utterances per synthetic speaker.
    #[arg(long)]
    pub utterances: Option<String>,
    /// Per-coordinate noise of synthetic utterances.
    #[arg(long)]
    pub spread: Option<String>,
}

impl Overrides {
    /// Defaults, then the config file, then flags. Validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("manifest", &self.manifest),
            ("split_file", &self.split_file),
            ("out_dir", &self.out),
            ("seed", &self.seed),
            ("sigma", &self.sigma),
            ("alpha", &self.alpha),
            ("max_iterations", &self.max_iterations),
            ("tolerance", &self.tolerance),
            ("methods", &self.methods),
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
            ("split", &self.split),
            ("jobs", &self.jobs),
            ("format", &self.format),
            ("plot", &self.plot),
            ("household_size", &self.household_size),
            ("dev_households", &self.dev_households),
            ("val_households", &self.val_households),
            ("holdout_per_speaker", &self.holdout),
            ("n_speakers", &self.speakers),
            ("dim", &self.dim),
            ("utterances_per_speaker", &self.utterances),
            ("intra_class_spread", &self.spread),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenSynth(o) => commands::gen_synth(&o.resolve()?, out),
        Command::BuildHouseholds(o) => commands::build_households_cmd(&o.resolve()?, out),
        Command::Sweep(o) => commands::sweep(&o.resolve()?, out),
        Command::Score { household, trace, opts } => commands::score(&opts.resolve()?, &household, trace.as_deref(), out),
        Command::DumpGraph { household, opts } => commands::dump_graph(&opts.resolve()?, &household, out),
    }
}

/// `{e:#}` on a single line.
pub fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").lines().map(str::trim).collect::<Vec<_>>().join(" ")
}
