//! The seven holdout scoring methods.
//!
//! | name    | step 1 (pseudo-labels for unlabeled rows) | step 2 (holdout prediction)      |
//! |---------|-------------------------------------------|----------------------------------|
//! | `cs`    | -                                         | mean cosine to enrolled rows     |
//! | `csea`  | -                                         | cosine to speaker centroid       |
//! | `2cs`   | `cs`                                      | `cs` over labeled + pseudo       |
//! | `2csea` | `csea`                                    | `csea` over labeled + pseudo     |
//! | `lp`    | -                                         | propagation over all rows        |
//! | `2lp`   | propagation over labeled + unlabeled      | propagation over all rows        |
//! | `2lpea` | propagation over labeled + unlabeled      | `csea` over labeled + pseudo     |
//!
//! Scorers only see labels for enrolled rows. Centroids average unit-normalized
//! embeddings and are not re-normalized.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{unit_vector, EmbeddingMatrix, HouseholdDataset, Role, SpeakerId};
use crate::error::{Error, Result};
use crate::graph::build_affinity;
use crate::propagation::{argmax_rows, init_label_matrix, propagate, LpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cs")]
    Cs,
    #[serde(rename = "csea")]
    Csea,
    #[serde(rename = "2cs")]
    TwoCs,
    #[serde(rename = "2csea")]
    TwoCsea,
    #[serde(rename = "lp")]
    Lp,
    #[serde(rename = "2lp")]
    TwoLp,
    #[serde(rename = "2lpea")]
    TwoLpea,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cs,
        Method::Csea,
        Method::TwoCs,
        Method::TwoCsea,
        Method::Lp,
        Method::TwoLp,
        Method::TwoLpea,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cs => "cs",
            Method::Csea => "csea",
            Method::TwoCs => "2cs",
            Method::TwoCsea => "2csea",
            Method::Lp => "lp",
            Method::TwoLp => "2lp",
            Method::TwoLpea => "2lpea",
        }
    }

    /// Whether the method looks at unlabeled rows at all.
    pub fn uses_unlabeled(self) -> bool {
        !matches!(self, Method::Cs | Method::Csea)
    }

    pub fn score(self, input: &ScorerInput<'_>) -> Result<Prediction> {
        match self {
            Method::Cs => score_cs(input),
            Method::Csea => score_csea(input),
            Method::TwoCs => score_2cs(input),
            Method::TwoCsea => score_2csea(input),
            Method::Lp => score_lp(input),
            Method::TwoLp => score_2lp(input),
            Method::TwoLpea => score_2lpea(input),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method `{s}` (expected one of cs, csea, 2cs, 2csea, lp, 2lp, 2lpea)"
                ))
            })
    }
}

/// Scorer-facing view of one household. Rows index into `embeddings`.
#[derive(Debug, Clone)]
pub struct ScorerInput<'a> {
    pub embeddings: &'a EmbeddingMatrix,
    pub labeled: Vec<(usize, SpeakerId)>,
    pub unlabeled: Vec<usize>,
    pub holdout: Vec<usize>,
    pub speakers: Vec<SpeakerId>,
    pub lp_config: LpConfig,
}

impl<'a> ScorerInput<'a> {
    /// Blinded view of a household: only enrolled utterances keep their speaker.
    pub fn from_household(
        household: &HouseholdDataset,
        embeddings: &'a EmbeddingMatrix,
        lp_config: LpConfig,
    ) -> Self {
        ScorerInput {
            embeddings,
            labeled: household
                .with_role(Role::Labeled)
                .map(|u| (u.embedding_index, u.speaker.clone()))
                .collect(),
            unlabeled: household
                .with_role(Role::Unlabeled)
                .map(|u| u.embedding_index)
                .collect(),
            holdout: household
                .with_role(Role::Holdout)
                .map(|u| u.embedding_index)
                .collect(),
            speakers: household.speakers.clone(),
            lp_config,
        }
    }

    /// Labeled rows with speakers resolved to indices into `speakers`.
    fn enrolled(&self) -> Result<Vec<(usize, usize)>> {
        let mut enrolled = Vec::with_capacity(self.labeled.len());
        let mut covered = vec![false; self.speakers.len()];
        for (row, speaker) in &self.labeled {
            let class = self
                .speakers
                .iter()
                .position(|s| s == speaker)
                .ok_or_else(|| Error::UnknownSpeaker(speaker.to_string()))?;
            self.check_row(*row)?;
            covered[class] = true;
            enrolled.push((*row, class));
        }
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidInput(format!(
                "speaker `{}` has no labeled utterance",
                self.speakers[missing]
            )));
        }
        for &row in self.unlabeled.iter().chain(&self.holdout) {
            self.check_row(row)?;
        }
        Ok(enrolled)
    }

    fn check_row(&self, row: usize) -> Result<()> {
        if row >= self.embeddings.rows() {
            return Err(Error::InvalidInput(format!(
                "row {row} out of range for {} embeddings",
                self.embeddings.rows()
            )));
        }
        Ok(())
    }

    fn unit(&self, row: usize) -> Result<Vec<f64>> {
        unit_vector(self.embeddings.row(row)).ok_or(Error::ZeroNorm { row })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutPrediction {
    pub row: usize,
    pub speaker: SpeakerId,
    pub speaker_index: usize,
    /// One score per entry of `ScorerInput::speakers`.
    pub scores: Vec<f64>,
    /// Set when every score was zero (no label reached the node) and the
    /// prediction fell back to the first speaker.
    pub unreached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub holdout: Vec<HoldoutPrediction>,
}

impl Prediction {
    fn from_scores(input: &ScorerInput<'_>, scores: DMatrix<f64>, flag_unreached: bool) -> Self {
        let winners = argmax_rows(&scores);
        let holdout = input
            .holdout
            .iter()
            .zip(winners)
            .enumerate()
            .map(|(i, (&row, k))| {
                let scores: Vec<f64> = scores.row(i).iter().copied().collect();
                HoldoutPrediction {
                    row,
                    speaker: input.speakers[k].clone(),
                    speaker_index: k,
                    unreached: flag_unreached && scores.iter().all(|&v| v == 0.0),
                    scores,
                }
            })
            .collect();
        Prediction { holdout }
    }

    pub fn speakers(&self) -> impl Iterator<Item = &SpeakerId> {
        self.holdout.iter().map(|p| &p.speaker)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-speaker reference sets of unit vectors.
type References = Vec<Vec<Vec<f64>>>;

fn references(input: &ScorerInput<'_>, members: &[(usize, usize)]) -> Result<References> {
    let mut refs = vec![Vec::new(); input.speakers.len()];
    for &(row, class) in members {
        refs[class].push(input.unit(row)?);
    }
    Ok(refs)
}

/// Mean cosine of each query to each speaker's reference rows.
fn mean_cosine(queries: &[Vec<f64>], refs: &References) -> DMatrix<f64> {
    DMatrix::from_fn(queries.len(), refs.len(), |q, s| {
        let total: f64 = refs[s].iter().map(|r| dot(&queries[q], r)).sum();
        total / refs[s].len() as f64
    })
}

fn centroids(input: &ScorerInput<'_>, refs: &References) -> Result<Vec<Vec<f64>>> {
    let dim = input.embeddings.dim();
    refs.iter()
        .enumerate()
        .map(|(s, members)| {
            let mut c = vec![0.0; dim];
            for m in members {
                for (acc, v) in c.iter_mut().zip(m) {
                    *acc += v;
                }
            }
            let count = members.len() as f64;
            c.iter_mut().for_each(|v| *v /= count);
            let norm = dot(&c, &c).sqrt();
            if norm <= 1e-12 {
                return Err(Error::ZeroCentroid {
                    speaker: input.speakers[s].to_string(),
                });
            }
            Ok(c)
        })
        .collect()
}

/// Cosine of each unit query to each centroid.
fn centroid_cosine(queries: &[Vec<f64>], centroids: &[Vec<f64>]) -> DMatrix<f64> {
    let norms: Vec<f64> = centroids.iter().map(|c| dot(c, c).sqrt()).collect();
    DMatrix::from_fn(queries.len(), centroids.len(), |q, s| {
        dot(&queries[q], &centroids[s]) / norms[s]
    })
}

fn units(input: &ScorerInput<'_>, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|&r| input.unit(r)).collect()
}

#[derive(Clone, Copy)]
enum Cosine {
    Mean,
    Centroid,
}

fn cosine_scores(
    input: &ScorerInput<'_>,
    members: &[(usize, usize)],
    queries: &[Vec<f64>],
    kind: Cosine,
) -> Result<DMatrix<f64>> {
    let refs = references(input, members)?;
    Ok(match kind {
        Cosine::Mean => mean_cosine(queries, &refs),
        Cosine::Centroid => centroid_cosine(queries, &centroids(input, &refs)?),
    })
}

fn one_step_cosine(input: &ScorerInput<'_>, kind: Cosine) -> Result<Prediction> {
    let enrolled = input.enrolled()?;
    let queries = units(input, &input.holdout)?;
    let scores = cosine_scores(input, &enrolled, &queries, kind)?;
    Ok(Prediction::from_scores(input, scores, false))
}

fn two_step_cosine(input: &ScorerInput<'_>, kind: Cosine) -> Result<Prediction> {
    let mut members = input.enrolled()?;
    if !input.unlabeled.is_empty() {
        let unlabeled = units(input, &input.unlabeled)?;
        let step1 = cosine_scores(input, &members, &unlabeled, kind)?;
        members.extend(input.unlabeled.iter().copied().zip(argmax_rows(&step1)));
    }
    let queries = units(input, &input.holdout)?;
    let scores = cosine_scores(input, &members, &queries, kind)?;
    Ok(Prediction::from_scores(input, scores, false))
}

/// Propagates `known` over a graph on `rows` and returns the final soft labels.
fn propagate_over(
    input: &ScorerInput<'_>,
    rows: &[usize],
    known: &[(usize, usize)],
) -> Result<DMatrix<f64>> {
    let graph = build_affinity(&input.embeddings.select(rows)?, input.lp_config.sigma)?;
    let y0 = init_label_matrix(rows.len(), input.speakers.len(), known)?;
    Ok(propagate(graph.normalized(), &y0, &input.lp_config)?
        .soft_labels
        .into_inner())
}

/// Hard pseudo-labels for unlabeled rows from a graph over labeled + unlabeled
/// rows (holdout rows excluded).
fn lp_pseudo_labels(input: &ScorerInput<'_>, enrolled: &[(usize, usize)]) -> Result<Vec<usize>> {
    if input.unlabeled.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<usize> = enrolled
        .iter()
        .map(|&(r, _)| r)
        .chain(input.unlabeled.iter().copied())
        .collect();
    let known: Vec<(usize, usize)> = enrolled.iter().enumerate().map(|(i, &(_, c))| (i, c)).collect();
    let soft = propagate_over(input, &rows, &known)?;
    let tail = soft.rows(enrolled.len(), input.unlabeled.len()).into_owned();
    Ok(argmax_rows(&tail))
}

/// Graph over labeled, unlabeled then holdout rows; `pseudo` (if any) marks
/// unlabeled rows as known. Holdout soft labels come back as scores.
fn lp_holdout(
    input: &ScorerInput<'_>,
    enrolled: &[(usize, usize)],
    pseudo: &[usize],
) -> Result<Prediction> {
    let rows: Vec<usize> = enrolled
        .iter()
        .map(|&(r, _)| r)
        .chain(input.unlabeled.iter().copied())
        .chain(input.holdout.iter().copied())
        .collect();
    let l = enrolled.len();
    let known: Vec<(usize, usize)> = enrolled
        .iter()
        .enumerate()
        .map(|(i, &(_, c))| (i, c))
        .chain(pseudo.iter().enumerate().map(|(i, &c)| (l + i, c)))
        .collect();
    let soft = propagate_over(input, &rows, &known)?;
    let offset = l + input.unlabeled.len();
    let scores = soft.rows(offset, input.holdout.len()).into_owned();
    Ok(Prediction::from_scores(input, scores, true))
}

/// Mean cosine to every enrolled row of each speaker.
pub fn score_cs(input: &ScorerInput<'_>) -> Result<Prediction> {
    one_step_cosine(input, Cosine::Mean)
}

/// Cosine to each speaker's enrollment centroid.
pub fn score_csea(input: &ScorerInput<'_>) -> Result<Prediction> {
    one_step_cosine(input, Cosine::Centroid)
}

pub fn score_2cs(input: &ScorerInput<'_>) -> Result<Prediction> {
    two_step_cosine(input, Cosine::Mean)
}

pub fn score_2csea(input: &ScorerInput<'_>) -> Result<Prediction> {
    two_step_cosine(input, Cosine::Centroid)
}

/// One propagation over labeled, unlabeled and holdout rows.
pub fn score_lp(input: &ScorerInput<'_>) -> Result<Prediction> {
    let enrolled = input.enrolled()?;
    lp_holdout(input, &enrolled, &[])
}

/// Propagation for pseudo-labels, then a second propagation where labels and
/// pseudo-labels are both known and column-normalized together.
pub fn score_2lp(input: &ScorerInput<'_>) -> Result<Prediction> {
    let enrolled = input.enrolled()?;
    let pseudo = lp_pseudo_labels(input, &enrolled)?;
    lp_holdout(input, &enrolled, &pseudo)
}

/// Propagation for pseudo-labels, then centroid cosine scoring.
pub fn score_2lpea(input: &ScorerInput<'_>) -> Result<Prediction> {
    let mut members = input.enrolled()?;
    let pseudo = lp_pseudo_labels(input, &members)?;
    members.extend(input.unlabeled.iter().copied().zip(pseudo));
    let queries = units(input, &input.holdout)?;
    let scores = cosine_scores(input, &members, &queries, Cosine::Centroid)?;
    Ok(Prediction::from_scores(input, scores, false))
}
