//! Household simulation and synthetic embedding worlds.
//!
//! Speakers are shuffled and cut into consecutive households of
//! `household_size`; speakers left over (the remainder, or households beyond
//! `dev + val`) are dropped. Within a household each speaker contributes
//! `holdout_per_speaker` holdout utterances and `labeled_per_speaker`
//! enrollment utterances; unlabeled utterances are then drawn uniformly from
//! the household's pooled leftovers.
//!
//! Random streams are keyed so that sweeps can re-draw roles cell by cell:
//!
//! * composition: `derive_seed(seed, [TAG_HOUSEHOLDS])`
//! * holdout draw: `derive_seed(seed, [TAG_HOLDOUT, fnv1a64(household_id)])`
//! * enrollment + unlabeled draw:
//!   `derive_seed(seed, [TAG_ROLES, fnv1a64(household_id), L])`
//!
//! The unlabeled rows are a prefix of one shuffle of the leftovers that does
//! not depend on `U`, so a larger `U` always extends a smaller one, and the
//! enrollment draw is shared by every `U`.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{
    Catalog, Count, EmbeddingMatrix, HouseholdRecord, Role, RoleAssignment, SpeakerId, Split,
    SplitFile, Utterance,
};
use crate::error::{Error, Result};
use crate::seed::{count_part, derive_seed, fnv1a64, rng, TAG_HOLDOUT, TAG_HOUSEHOLDS, TAG_ROLES, TAG_SYNTH};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub household_size: usize,
    pub dev_households: usize,
    pub val_households: usize,
    pub holdout_per_speaker: usize,
    pub labeled_per_speaker: Count,
    pub unlabeled_per_household: Count,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            household_size: 4,
            dev_households: 112,
            val_households: 200,
            holdout_per_speaker: 10,
            labeled_per_speaker: Count::N(2),
            unlabeled_per_household: Count::All,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.household_size < 2 {
            return Err(Error::Config(format!(
                "household_size must be at least 2, got {}",
                self.household_size
            )));
        }
        if self.dev_households + self.val_households == 0 {
            return Err(Error::Config("at least one household is required".into()));
        }
        if self.holdout_per_speaker == 0 {
            return Err(Error::Config("holdout_per_speaker must be positive".into()));
        }
        if self.labeled_per_speaker == Count::N(0) {
            return Err(Error::Config("labeled_per_speaker must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws enrollment and unlabeled roles for one household.
///
/// `pools` holds, per speaker, the utterances not reserved for holdout in
/// catalog order. Returns `(utterance_id, role)` pairs.
pub fn assign_roles(
    household_id: &str,
    pools: &[(SpeakerId, Vec<&Utterance>)],
    labeled: Count,
    unlabeled: Count,
    seed: u64,
) -> Result<Vec<(String, Role)>> {
    if labeled == Count::N(0) {
        return Err(Error::Config("labeled_per_speaker must be at least 1".into()));
    }
    let mut rng = rng(derive_seed(
        seed,
        &[TAG_ROLES, fnv1a64(household_id.as_bytes()), count_part(labeled)],
    ));
    let mut roles = Vec::new();
    let mut leftovers = Vec::new();
    for (speaker, pool) in pools {
        let needed = match labeled {
            Count::N(n) => n,
            Count::All => 1,
        };
        if pool.len() < needed {
            return Err(Error::Shortfall(format!(
                "household `{household_id}`: speaker `{speaker}` has {} non-holdout utterances, {needed} needed for enrollment",
                pool.len()
            )));
        }
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        let take = labeled.take(shuffled.len());
        roles.extend(
            shuffled[..take]
                .iter()
                .map(|u| (u.utterance_id.clone(), Role::Labeled)),
        );
        leftovers.extend_from_slice(&shuffled[take..]);
    }
    leftovers.shuffle(&mut rng);
    let take = unlabeled.take(leftovers.len());
    roles.extend(
        leftovers[..take]
            .iter()
            .map(|u| (u.utterance_id.clone(), Role::Unlabeled)),
    );
    Ok(roles)
}

/// Per-speaker utterance pools, in household speaker order.
type Pools<'a> = Vec<(SpeakerId, Vec<&'a Utterance>)>;

/// Splits each speaker's utterances into a fixed holdout set and the rest.
fn draw_holdout<'a>(
    household_id: &str,
    speakers: &[SpeakerId],
    by_speaker: &HashMap<&SpeakerId, Vec<&'a Utterance>>,
    config: &SimulationConfig,
) -> Result<(Vec<&'a Utterance>, Pools<'a>)> {
    let mut rng = rng(derive_seed(
        config.seed,
        &[TAG_HOLDOUT, fnv1a64(household_id.as_bytes())],
    ));
    let min_enrolled = match config.labeled_per_speaker {
        Count::N(n) => n,
        Count::All => 1,
    };
    let mut holdout = Vec::new();
    let mut pools = Vec::new();
    for speaker in speakers {
        let utts = by_speaker.get(speaker).cloned().unwrap_or_default();
        let needed = config.holdout_per_speaker + min_enrolled;
        if utts.len() < needed {
            return Err(Error::Shortfall(format!(
                "household `{household_id}`: speaker `{speaker}` has {} utterances, {needed} needed ({} holdout + {min_enrolled} labeled)",
                utts.len(),
                config.holdout_per_speaker
            )));
        }
        let mut shuffled = utts.clone();
        shuffled.shuffle(&mut rng);
        let held: HashSet<&str> = shuffled[..config.holdout_per_speaker]
            .iter()
            .map(|u| u.utterance_id.as_str())
            .collect();
        holdout.extend(shuffled[..config.holdout_per_speaker].iter().copied());
        let rest = utts
            .into_iter()
            .filter(|u| !held.contains(u.utterance_id.as_str()))
            .collect();
        pools.push((speaker.clone(), rest));
    }
    Ok((holdout, pools))
}

/// Builds role assignments for one household, listing utterances in catalog
/// order.
fn household_record(
    household_id: String,
    split: Split,
    speakers: Vec<SpeakerId>,
    by_speaker: &HashMap<&SpeakerId, Vec<&Utterance>>,
    config: &SimulationConfig,
) -> Result<HouseholdRecord> {
    let (holdout, pools) = draw_holdout(&household_id, &speakers, by_speaker, config)?;
    let mut roles: HashMap<String, Role> = holdout
        .iter()
        .map(|u| (u.utterance_id.clone(), Role::Holdout))
        .collect();
    roles.extend(assign_roles(
        &household_id,
        &pools,
        config.labeled_per_speaker,
        config.unlabeled_per_household,
        config.seed,
    )?);
    let assignments = speakers
        .iter()
        .flat_map(|s| by_speaker.get(s).into_iter().flatten())
        .filter_map(|u| {
            roles.get(&u.utterance_id).map(|&role| RoleAssignment {
                utterance_id: u.utterance_id.clone(),
                role,
            })
        })
        .collect();
    Ok(HouseholdRecord {
        household_id,
        split,
        speaker_ids: speakers,
        assignments,
    })
}

/// Simulates households from a speaker catalog.
pub fn build_households(catalog: &Catalog, config: &SimulationConfig) -> Result<SplitFile> {
    config.validate()?;
    let total = config.dev_households + config.val_households;
    let mut speakers = catalog.speakers();
    let needed = total * config.household_size;
    if speakers.len() < needed {
        return Err(Error::Shortfall(format!(
            "{total} households of {} need {needed} speakers, catalog has {}",
            config.household_size,
            speakers.len()
        )));
    }
    speakers.shuffle(&mut rng(derive_seed(config.seed, &[TAG_HOUSEHOLDS])));
    let dropped_speakers = speakers[needed..].to_vec();

    let by_speaker = catalog.by_speaker();
    let households = speakers[..needed]
        .chunks(config.household_size)
        .enumerate()
        .map(|(k, group)| {
            let split = if k < config.dev_households {
                Split::Dev
            } else {
                Split::Val
            };
            household_record(format!("hh{k:04}"), split, group.to_vec(), &by_speaker, config)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SplitFile {
        seed: config.seed,
        household_size: config.household_size,
        holdout_per_speaker: config.holdout_per_speaker,
        labeled_per_speaker: config.labeled_per_speaker,
        unlabeled_per_household: config.unlabeled_per_household,
        dropped_speakers,
        households,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub dim: usize,
    pub utterances_per_speaker: usize,
    /// Per-coordinate noise standard deviation.
    pub intra_class_spread: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 {
            return Err(Error::Config("n_speakers must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.utterances_per_speaker == 0 {
            return Err(Error::Config("utterances_per_speaker must be positive".into()));
        }
        if !(self.intra_class_spread > 0.0 && self.intra_class_spread.is_finite()) {
            return Err(Error::Config(format!(
                "intra_class_spread must be positive, got {}",
                self.intra_class_spread
            )));
        }
        Ok(())
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Gaussian clusters around uniformly random unit-sphere means, L2-normalized.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(EmbeddingMatrix, Catalog)> {
    config.validate()?;
    let mut rng = rng(derive_seed(config.seed, &[TAG_SYNTH]));
    let means: Vec<Vec<f64>> = (0..config.n_speakers)
        .map(|_| {
            normalized(
                (0..config.dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect(),
            )
        })
        .collect();
    sample_utterances(config, &means, &mut rng)
}

/// Like [`generate_synthetic`] but with caller-chosen speaker means.
/// `config.n_speakers` is ignored.
pub fn generate_synthetic_with_means(
    config: &SynthConfig,
    means: &[Vec<f64>],
) -> Result<(EmbeddingMatrix, Catalog)> {
    let config = SynthConfig {
        n_speakers: means.len(),
        ..config.clone()
    };
    config.validate()?;
    if means.iter().any(|m| m.len() != config.dim) {
        return Err(Error::DimensionMismatch(format!(
            "every mean must have dim {}",
            config.dim
        )));
    }
    let mut rng = rng(derive_seed(config.seed, &[TAG_SYNTH]));
    sample_utterances(&config, means, &mut rng)
}

fn sample_utterances(
    config: &SynthConfig,
    means: &[Vec<f64>],
    rng: &mut impl rand::Rng,
) -> Result<(EmbeddingMatrix, Catalog)> {
    let noise = Normal::new(0.0, config.intra_class_spread)
        .map_err(|e| Error::Config(format!("intra_class_spread: {e}")))?;
    let mut data = Vec::with_capacity(means.len() * config.utterances_per_speaker * config.dim);
    let mut utterances = Vec::with_capacity(means.len() * config.utterances_per_speaker);
    for (s, mean) in means.iter().enumerate() {
        let speaker = SpeakerId::new(format!("spk{s:04}"))?;
        for u in 0..config.utterances_per_speaker {
            let point = normalized(mean.iter().map(|m| m + noise.sample(rng)).collect());
            data.extend(point.into_iter().map(|v| v as f32));
            utterances.push(Utterance {
                utterance_id: format!("spk{s:04}-{u:04}"),
                speaker: speaker.clone(),
                embedding_index: utterances.len(),
            });
        }
    }
    let matrix = EmbeddingMatrix::new(utterances.len(), config.dim, data)?;
    Ok((matrix, Catalog::new(utterances)?))
}
