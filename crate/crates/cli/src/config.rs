//! Run configuration: defaults, a flat `key = value` file, and CLI overrides.
//!
//! The file holds one `key = value` pair per line. Blank lines and lines
//! starting with `#` are skipped. Lists are comma-separated. Unknown or
//! repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use hearth_lp::evaluation::PlotAxis;
use hearth_lp::{Count, LpConfig, Method, SimulationConfig, Split, SweepSpec, SynthConfig};

/// How `sweep` prints its report on stdout. Files are always CSV and JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => bail!("format must be table, csv or json, got `{other}`"),
        }
    }
}

impl OutputFormat {
    fn name(self) -> &'static str {
        match self {
            OutputFormat::Table => "table",
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,

    pub sigma: f64,
    pub alpha: f64,
    pub max_iterations: usize,
    pub tolerance: f64,

    pub household_size: usize,
    pub dev_households: usize,
    pub val_households: usize,
    pub holdout_per_speaker: usize,

    pub n_speakers: usize,
    pub dim: usize,
    pub utterances_per_speaker: usize,
    pub intra_class_spread: f64,

    pub methods: Vec<Method>,
    pub labeled: Vec<Count>,
    pub unlabeled: Vec<Count>,
    pub split: Split,
    pub jobs: usize,
    pub format: OutputFormat,
    pub plot: Option<PlotAxis>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lp = LpConfig::default();
        let sim = SimulationConfig::default();
        RunConfig {
            manifest: None,
            split_file: None,
            out_dir: None,
            seed: 0,
            sigma: lp.sigma,
            alpha: lp.alpha,
            max_iterations: lp.max_iterations,
            tolerance: lp.tolerance,
            household_size: sim.household_size,
            dev_households: sim.dev_households,
            val_households: sim.val_households,
            holdout_per_speaker: sim.holdout_per_speaker,
            n_speakers: 64,
            dim: 16,
            utterances_per_speaker: 40,
            intra_class_spread: 0.25,
            methods: Method::ALL.to_vec(),
            labeled: vec![Count::N(2)],
            unlabeled: vec![Count::All],
            split: Split::Val,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            format: OutputFormat::Table,
            plot: None,
        }
    }
}

/// Every key a config file may set, in rendering order.
pub const KEYS: &[&str] = &[
    "manifest",
    "split_file",
    "out_dir",
    "seed",
    "sigma",
    "alpha",
    "max_iterations",
    "tolerance",
    "household_size",
    "dev_households",
    "val_households",
    "holdout_per_speaker",
    "n_speakers",
    "dim",
    "utterances_per_speaker",
    "intra_class_spread",
    "methods",
    "labeled",
    "unlabeled",
    "split",
    "jobs",
    "format",
    "plot",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "manifest" => self.manifest = optional_path(value),
            "split_file" => self.split_file = optional_path(value),
            "out_dir" => self.out_dir = optional_path(value),
            "seed" => self.seed = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "max_iterations" => self.max_iterations = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "household_size" => self.household_size = parse(key, value)?,
            "dev_households" => self.dev_households = parse(key, value)?,
            "val_households" => self.val_households = parse(key, value)?,
            "holdout_per_speaker" => self.holdout_per_speaker = parse(key, value)?,
            "n_speakers" => self.n_speakers = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "utterances_per_speaker" => self.utterances_per_speaker = parse(key, value)?,
            "intra_class_spread" => self.intra_class_spread = parse(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "labeled" => self.labeled = parse_list(key, value)?,
            "unlabeled" => self.unlabeled = parse_list(key, value)?,
            "split" => self.split = parse(key, value)?,
            "jobs" => self.jobs = parse(key, value)?,
            "format" => self.format = parse(key, value)?,
            "plot" => {
                self.plot = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Applies a config file on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim();
            if seen.contains(&key) {
                bail!("line {}: key `{key}` given twice", n + 1);
            }
            seen.push(key);
            self.set(key, value).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config `{}`", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("config `{}`", path.display()))
    }

    /// Checks every field. Messages name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.lp_config()
            .validate()
            .map_err(|e| anyhow!("{e}"))?;
        self.simulation_config()
            .validate()
            .map_err(|e| anyhow!("{e}"))?;
        self.synth_config().validate().map_err(|e| anyhow!("{e}"))?;
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        self.sweep_spec().validate().map_err(|e| anyhow!("{e}"))?;
        Ok(())
    }

    pub fn lp_config(&self) -> LpConfig {
        LpConfig {
            alpha: self.alpha,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            sigma: self.sigma,
        }
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        SimulationConfig {
            household_size: self.household_size,
            dev_households: self.dev_households,
            val_households: self.val_households,
            holdout_per_speaker: self.holdout_per_speaker,
            labeled_per_speaker: self.labeled.first().copied().unwrap_or(Count::N(2)),
            unlabeled_per_household: self.unlabeled.first().copied().unwrap_or(Count::All),
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_speakers: self.n_speakers,
            dim: self.dim,
            utterances_per_speaker: self.utterances_per_speaker,
            intra_class_spread: self.intra_class_spread,
            seed: self.seed,
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            methods: self.methods.clone(),
            labeled_values: self.labeled.clone(),
            unlabeled_values: self.unlabeled.clone(),
            split: self.split,
            seed: self.seed,
        }
    }

    /// The resolved configuration in the same format `apply_text` reads.
    /// Reading it back reproduces `self`.
    pub fn render(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("manifest", path(&self.manifest));
        line("split_file", path(&self.split_file));
        line("out_dir", path(&self.out_dir));
        line("seed", self.seed.to_string());
        line("sigma", format!("{:?}", self.sigma));
        line("alpha", format!("{:?}", self.alpha));
        line("max_iterations", self.max_iterations.to_string());
        line("tolerance", format!("{:e}", self.tolerance));
        line("household_size", self.household_size.to_string());
        line("dev_households", self.dev_households.to_string());
        line("val_households", self.val_households.to_string());
        line("holdout_per_speaker", self.holdout_per_speaker.to_string());
        line("n_speakers", self.n_speakers.to_string());
        line("dim", self.dim.to_string());
        line("utterances_per_speaker", self.utterances_per_speaker.to_string());
        line("intra_class_spread", format!("{:?}", self.intra_class_spread));
        line("methods", join(&self.methods));
        line("labeled", join(&self.labeled));
        line("unlabeled", join(&self.unlabeled));
        line("split", self.split.to_string());
        line("jobs", self.jobs.to_string());
        line("format", self.format.name().to_string());
        line(
            "plot",
            match self.plot {
                None => "none".into(),
                Some(PlotAxis::Labeled) => "L".into(),
                Some(PlotAxis::Unlabeled) => "U".into(),
            },
        );
        out
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| anyhow!("no manifest given (use --manifest or `manifest =` in the config)"))
    }

    pub fn require_split_file(&self) -> Result<&Path> {
        self.split_file
            .as_deref()
            .ok_or_else(|| anyhow!("no split file given (use --split-file or `split_file =` in the config)"))
    }

    pub fn require_out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| anyhow!("no output directory given (use --out or `out_dir =` in the config)"))
    }
}
