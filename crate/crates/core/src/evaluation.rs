//! SIER computation, method x (L, U) sweeps and report writers.
//!
//! SIER is `1 - top-1 accuracy` on holdout utterances. Sweep results are
//! micro-averaged: errors and holdout counts are pooled over households
//! before dividing. The per-household mean (macro) is reported alongside.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Catalog, Count, EmbeddingMatrix, HouseholdDataset, Role, SpeakerId, Split, SplitFile, Utterance};
use crate::error::{Error, Result};
use crate::propagation::LpConfig;
use crate::scoring::{Method, ScorerInput};
use crate::simulation::assign_roles;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SierTally {
    pub errors: usize,
    pub count: usize,
    pub sier: f64,
}

pub fn compute_sier(predictions: &[SpeakerId], truths: &[SpeakerId]) -> Result<SierTally> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} holdout utterances",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::InvalidInput("no holdout utterances to score".into()));
    }
    let errors = predictions.iter().zip(truths).filter(|(p, t)| p != t).count();
    Ok(SierTally {
        errors,
        count: truths.len(),
        sier: errors as f64 / truths.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdTally {
    pub household_id: String,
    pub errors: usize,
    pub holdout_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SierResult {
    pub method: Method,
    #[serde(rename = "L")]
    pub labeled: Count,
    #[serde(rename = "U")]
    pub unlabeled: Count,
    pub per_household: Vec<HouseholdTally>,
    pub micro_sier: f64,
    pub macro_sier: f64,
}

impl SierResult {
    pub fn from_tallies(
        method: Method,
        labeled: Count,
        unlabeled: Count,
        per_household: Vec<HouseholdTally>,
    ) -> Result<Self> {
        let errors = per_household.iter().map(|h| h.errors).sum::<usize>();
        let holdouts = per_household.iter().map(|h| h.holdout_count).sum::<usize>();
        if holdouts == 0 || per_household.iter().any(|h| h.holdout_count == 0) {
            return Err(Error::InvalidInput("households without holdout utterances".into()));
        }
        let macro_sier = per_household
            .iter()
            .map(|h| h.errors as f64 / h.holdout_count as f64)
            .sum::<f64>()
            / per_household.len() as f64;
        Ok(SierResult {
            method,
            labeled,
            unlabeled,
            micro_sier: errors as f64 / holdouts as f64,
            macro_sier,
            per_household,
        })
    }

    pub fn errors(&self) -> usize {
        self.per_household.iter().map(|h| h.errors).sum()
    }

    pub fn holdouts(&self) -> usize {
        self.per_household.iter().map(|h| h.holdout_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    pub labeled_values: Vec<Count>,
    pub unlabeled_values: Vec<Count>,
    pub split: Split,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.labeled_values.is_empty() {
            return Err(Error::Config("labeled values must not be empty".into()));
        }
        if self.unlabeled_values.is_empty() {
            return Err(Error::Config("unlabeled values must not be empty".into()));
        }
        if self.labeled_values.contains(&Count::N(0)) {
            return Err(Error::Config("labeled values must be at least 1".into()));
        }
        Ok(())
    }
}

/// Embeddings, catalog and household split a sweep runs over.
#[derive(Debug, Clone, Copy)]
pub struct SweepDataset<'a> {
    pub embeddings: &'a EmbeddingMatrix,
    pub catalog: &'a Catalog,
    pub split_file: &'a SplitFile,
}

/// Per-household predictions for one (method, L, U) cell, in holdout order.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdOutcome {
    pub household_id: String,
    pub holdout_ids: Vec<String>,
    pub predictions: Vec<SpeakerId>,
    pub truths: Vec<SpeakerId>,
}

impl HouseholdOutcome {
    pub fn tally(&self) -> Result<HouseholdTally> {
        let t = compute_sier(&self.predictions, &self.truths)?;
        Ok(HouseholdTally {
            household_id: self.household_id.clone(),
            errors: t.errors,
            holdout_count: t.count,
        })
    }
}

/// Re-draws enrollment and unlabeled roles for every household of `split`,
/// keeping each household's recorded holdout set.
pub fn cell_households(
    dataset: SweepDataset<'_>,
    split: Split,
    labeled: Count,
    unlabeled: Count,
    seed: u64,
) -> Result<Vec<HouseholdDataset>> {
    let by_speaker = dataset.catalog.by_speaker();
    let mut out = Vec::new();
    for record in dataset.split_file.in_split(split) {
        let held: HashSet<&str> = record.holdout_ids().collect();
        let mut holdout = Vec::new();
        let mut pools: Vec<(SpeakerId, Vec<&Utterance>)> = Vec::new();
        for speaker in &record.speaker_ids {
            let utts = by_speaker.get(speaker).ok_or_else(|| {
                Error::Shortfall(format!(
                    "household `{}`: speaker `{speaker}` has no utterances in the catalog",
                    record.household_id
                ))
            })?;
            let (h, rest): (Vec<&Utterance>, Vec<&Utterance>) = utts
                .iter()
                .partition(|u| held.contains(u.utterance_id.as_str()));
            holdout.extend(h);
            pools.push((speaker.clone(), rest));
        }
        if holdout.len() != held.len() {
            return Err(Error::InvalidInput(format!(
                "household `{}` holds out utterances of speakers outside the household",
                record.household_id
            )));
        }
        let roles = assign_roles(&record.household_id, &pools, labeled, unlabeled, seed)?;
        let mut utterances: Vec<(Utterance, Role)> = holdout
            .into_iter()
            .map(|u| (u.clone(), Role::Holdout))
            .collect();
        for (id, role) in roles {
            let u = dataset
                .catalog
                .get(&id)
                .expect("role assignment drawn from the catalog");
            utterances.push((u.clone(), role));
        }
        out.push(HouseholdDataset::new(
            record.household_id.clone(),
            record.speaker_ids.clone(),
            utterances,
        )?);
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no households in the {split} split")));
    }
    Ok(out)
}

/// Scores one household with one method.
pub fn evaluate_household(
    household: &HouseholdDataset,
    embeddings: &EmbeddingMatrix,
    method: Method,
    lp_config: LpConfig,
) -> Result<HouseholdOutcome> {
    let input = ScorerInput::from_household(household, embeddings, lp_config);
    let prediction = method.score(&input)?;
    let holdout: Vec<&Utterance> = household.with_role(Role::Holdout).collect();
    Ok(HouseholdOutcome {
        household_id: household.household_id.clone(),
        holdout_ids: holdout.iter().map(|u| u.utterance_id.clone()).collect(),
        predictions: prediction.speakers().cloned().collect(),
        truths: holdout.iter().map(|u| u.speaker.clone()).collect(),
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Scores every household of a cell, `jobs` households at a time.
pub fn evaluate_cell(
    households: &[HouseholdDataset],
    embeddings: &EmbeddingMatrix,
    method: Method,
    lp_config: LpConfig,
    jobs: usize,
) -> Result<Vec<HouseholdOutcome>> {
    score_households(&thread_pool(jobs)?, households, embeddings, method, lp_config)
}

fn score_households(
    pool: &rayon::ThreadPool,
    households: &[HouseholdDataset],
    embeddings: &EmbeddingMatrix,
    method: Method,
    lp_config: LpConfig,
) -> Result<Vec<HouseholdOutcome>> {
    pool.install(|| {
        households
            .par_iter()
            .map(|h| evaluate_household(h, embeddings, method, lp_config))
            .collect()
    })
}

/// Runs every (method, L, U) cell. All methods of a cell see the same draws.
pub fn run_sweep(
    spec: &SweepSpec,
    dataset: SweepDataset<'_>,
    lp_config: LpConfig,
    jobs: usize,
) -> Result<Vec<SierResult>> {
    spec.validate()?;
    lp_config.validate()?;
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let pool = thread_pool(jobs)?;
    let mut results = Vec::new();
    for &labeled in &spec.labeled_values {
        for &unlabeled in &spec.unlabeled_values {
            let households = cell_households(dataset, spec.split, labeled, unlabeled, spec.seed)?;
            for &method in &spec.methods {
                let tallies = score_households(&pool, &households, dataset.embeddings, method, lp_config)?
                    .iter()
                    .map(HouseholdOutcome::tally)
                    .collect::<Result<Vec<_>>>()?;
                results.push(SierResult::from_tallies(method, labeled, unlabeled, tallies)?);
            }
        }
    }
    sort_results(&mut results);
    Ok(results)
}

/// Orders by method (table order), then L, then U; `All` sorts last.
pub fn sort_results(results: &mut [SierResult]) {
    results.sort_by_key(|r| (r.method, r.labeled, r.unlabeled));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("format must be csv or json, got `{other}`"))),
        }
    }
}

pub const CSV_HEADER: &str = "method,L,U,households,holdouts,errors,micro_sier,macro_sier";

pub fn render_csv(results: &[SierResult]) -> String {
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6}",
            r.method,
            r.labeled,
            r.unlabeled,
            r.per_household.len(),
            r.holdouts(),
            r.errors(),
            r.micro_sier,
            r.macro_sier
        );
    }
    out
}

pub fn render_json(results: &[SierResult]) -> Result<String> {
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    serde_json::to_string_pretty(&sorted)
        .map(|s| s + "\n")
        .map_err(|e| Error::json("report", e))
}

pub fn parse_json_report(text: &str) -> Result<Vec<SierResult>> {
    serde_json::from_str(text).map_err(|e| Error::json("report", e))
}

pub fn emit_report(results: &[SierResult], format: ReportFormat, path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no results to report".into()));
    }
    let body = match format {
        ReportFormat::Csv => render_csv(results),
        ReportFormat::Json => render_json(results)?,
    };
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Labeled,
    Unlabeled,
}

impl std::str::FromStr for PlotAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" => Ok(PlotAxis::Labeled),
            "U" | "u" => Ok(PlotAxis::Unlabeled),
            other => Err(Error::Config(format!("plot axis must be L or U, got `{other}`"))),
        }
    }
}

/// One `(x, micro_sier)` point per result, grouped by method, as CSV.
pub fn render_plot_series(results: &[SierResult], axis: PlotAxis) -> String {
    let mut sorted = results.to_vec();
    match axis {
        PlotAxis::Unlabeled => sort_results(&mut sorted),
        PlotAxis::Labeled => sorted.sort_by_key(|r| (r.method, r.unlabeled, r.labeled)),
    }
    let (x_name, fixed_name) = match axis {
        PlotAxis::Labeled => ("L", "U"),
        PlotAxis::Unlabeled => ("U", "L"),
    };
    let mut out = format!("method,{fixed_name},{x_name},micro_sier\n");
    for r in &sorted {
        let (fixed, x) = match axis {
            PlotAxis::Labeled => (r.unlabeled, r.labeled),
            PlotAxis::Unlabeled => (r.labeled, r.unlabeled),
        };
        let _ = writeln!(out, "{},{fixed},{x},{:.6}", r.method, r.micro_sier);
    }
    out
}

/// Human-readable table with SIER in percent.
pub fn render_table(results: &[SierResult]) -> String {
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    let mut out = format!(
        "{:<7} {:>5} {:>5} {:>10} {:>10} {:>12} {:>12}\n",
        "method", "L", "U", "holdouts", "errors", "SIER (%)", "macro (%)"
    );
    for r in &sorted {
        let _ = writeln!(
            out,
            "{:<7} {:>5} {:>5} {:>10} {:>10} {:>12.2} {:>12.2}",
            r.method.name(),
            r.labeled.to_string(),
            r.unlabeled.to_string(),
            r.holdouts(),
            r.errors(),
            100.0 * r.micro_sier,
            100.0 * r.macro_sier
        );
    }
    out
}
