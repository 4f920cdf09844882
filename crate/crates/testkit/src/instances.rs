//! Seeded random instances.

use hearth_lp::{EmbeddingMatrix, LpConfig, Method, ScorerInput, SpeakerId};

use crate::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn speakers(classes: usize) -> Vec<SpeakerId> {
    (0..classes)
        .map(|c| SpeakerId::new(format!("spk{c}")).unwrap())
        .collect()
}

/// `n` points in `dim` dimensions drawn around `clusters` random centers.
pub fn clustered_points(rng: &mut impl Rng, n: usize, dim: usize, clusters: usize, spread: f64) -> Vec<Vec<f32>> {
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n)
        .map(|i| {
            let c = &centers[i % clusters];
            c.iter().map(|m| (m + noise.sample(rng)) as f32).collect()
        })
        .collect()
}

pub fn matrix(points: &[Vec<f32>]) -> EmbeddingMatrix {
    let dim = points[0].len();
    EmbeddingMatrix::new(points.len(), dim, points.iter().flatten().copied().collect()).unwrap()
}

pub fn to_f64(points: &[Vec<f32>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| p.iter().map(|&v| f64::from(v)).collect())
        .collect()
}

/// A household-shaped scoring problem over rows of `matrix`.
#[derive(Debug, Clone)]
pub struct ScoringInstance {
    pub matrix: EmbeddingMatrix,
    pub labeled: Vec<(usize, usize)>,
    pub unlabeled: Vec<usize>,
    pub holdout: Vec<usize>,
    pub classes: usize,
}

impl ScoringInstance {
    pub fn input(&self, lp_config: LpConfig) -> ScorerInput<'_> {
        let speakers = speakers(self.classes);
        ScorerInput {
            embeddings: &self.matrix,
            labeled: self
                .labeled
                .iter()
                .map(|&(r, c)| (r, speakers[c].clone()))
                .collect(),
            unlabeled: self.unlabeled.clone(),
            holdout: self.holdout.clone(),
            speakers,
            lp_config,
        }
    }

    pub fn point(&self, row: usize) -> Vec<f64> {
        self.matrix.row(row).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn labeled_points(&self) -> Vec<(Vec<f64>, usize)> {
        self.labeled.iter().map(|&(r, c)| (self.point(r), c)).collect()
    }

    pub fn unlabeled_points(&self) -> Vec<Vec<f64>> {
        self.unlabeled.iter().map(|&r| self.point(r)).collect()
    }

    pub fn holdout_points(&self) -> Vec<Vec<f64>> {
        self.holdout.iter().map(|&r| self.point(r)).collect()
    }

    /// Holdout class indices the reference implementation predicts.
    pub fn expected(&self, method: Method, lp: &LpConfig) -> Vec<usize> {
        let (l, u, h, c) = (
            self.labeled_points(),
            self.unlabeled_points(),
            self.holdout_points(),
            self.classes,
        );
        let (sigma, alpha) = (lp.sigma, lp.alpha);
        match method {
            Method::Cs => oracle::predict_cs(&l, &h, c),
            Method::Csea => oracle::predict_csea(&l, &h, c),
            Method::TwoCs => oracle::predict_2cs(&l, &u, &h, c),
            Method::TwoCsea => oracle::predict_2csea(&l, &u, &h, c),
            Method::Lp => oracle::predict_lp(&l, &u, &h, c, sigma, alpha),
            Method::TwoLp => oracle::predict_2lp(&l, &u, &h, c, sigma, alpha),
            Method::TwoLpea => oracle::predict_2lpea(&l, &u, &h, c, sigma, alpha),
        }
    }

    pub fn without_unlabeled(&self) -> Self {
        ScoringInstance {
            unlabeled: Vec::new(),
            ..self.clone()
        }
    }
}

/// Random instance with `2..=max_classes` speakers and at most `max_rows`
/// utterances, of which at least one per speaker is labeled and at least one
/// is holdout. Points are unit-scale clusters with per-coordinate noise
/// `spread`, so a kernel width near `spread * sqrt(dim)` keeps graphs connected.
pub fn random_scoring_instance(
    rng: &mut impl Rng,
    max_classes: usize,
    max_rows: usize,
    dim: usize,
    spread: f64,
    with_unlabeled: bool,
) -> ScoringInstance {
    let classes = rng.random_range(2..=max_classes);
    let min_rows = 2 * classes + 1;
    let rows = rng.random_range(min_rows..=max_rows.max(min_rows));
    let mut truth: Vec<usize> = (0..rows).map(|i| i % classes).collect();
    // shuffle ground truth so roles are not aligned with classes
    for i in (1..rows).rev() {
        let j = rng.random_range(0..=i);
        truth.swap(i, j);
    }
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let noise = Normal::new(0.0, spread).unwrap();
    let points: Vec<Vec<f32>> = truth
        .iter()
        .map(|&c| centers[c].iter().map(|m| (m + noise.sample(rng)) as f32).collect())
        .collect();

    let mut labeled = Vec::new();
    let mut rest = Vec::new();
    let mut enrolled = vec![false; classes];
    for (row, &c) in truth.iter().enumerate() {
        if !enrolled[c] {
            enrolled[c] = true;
            labeled.push((row, c));
        } else {
            rest.push(row);
        }
    }
    let mut unlabeled = Vec::new();
    let mut holdout = Vec::new();
    for row in rest {
        match rng.random_range(0..3) {
            0 => labeled.push((row, truth[row])),
            1 if with_unlabeled => unlabeled.push(row),
            _ => holdout.push(row),
        }
    }
    if holdout.is_empty() {
        let row = unlabeled.pop().or_else(|| {
            // keep at least one labeled row per class
            let idx = labeled
                .iter()
                .rposition(|&(_, c)| labeled.iter().filter(|&&(_, k)| k == c).count() > 1)?;
            Some(labeled.remove(idx).0)
        });
        holdout.push(row.expect("enough rows for a holdout"));
    }
    ScoringInstance {
        matrix: matrix(&points),
        labeled,
        unlabeled,
        holdout,
        classes,
    }
}
