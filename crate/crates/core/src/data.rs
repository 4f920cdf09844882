//! Domain types, the embedding/manifest file formats and household split files.
//!
//! Embeddings live in a flat little-endian `f32` payload (row-major, no
//! header) described by a JSONL manifest. The first manifest line is a header
//! object `{"dim", "count", "embedding_file"}`; every following line is one
//! utterance `{"utterance_id", "speaker_id", "row"}`. When the header omits
//! `embedding_file`, each utterance line must instead carry its vector inline
//! as `"embedding": [..]`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerId(String);

impl SpeakerId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidInput("speaker id must be non-empty".into()));
        }
        Ok(SpeakerId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SpeakerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One utterance record. `speaker` is ground truth and is only handed to
/// scorers for labeled utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker: SpeakerId,
    pub embedding_index: usize,
}

/// Row-major dense matrix of `f32` embeddings, one row per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("embedding dim must be positive".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch(format!(
                "{rows} x {dim} matrix needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the selected rows, in the given order, into a new matrix.
    pub fn select(&self, rows: &[usize]) -> Result<EmbeddingMatrix> {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            if r >= self.rows {
                return Err(Error::InvalidInput(format!(
                    "row {r} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(r));
        }
        EmbeddingMatrix::new(rows.len(), self.dim, data)
    }
}

/// Returns a copy of `matrix` with every row scaled to unit Euclidean norm.
/// The norm is accumulated in `f64`.
pub fn l2_normalize(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(matrix.data.len());
    for r in 0..matrix.rows {
        let unit = unit_vector(matrix.row(r)).ok_or(Error::ZeroNorm { row: r })?;
        data.extend(unit.into_iter().map(|v| v as f32));
    }
    EmbeddingMatrix::new(matrix.rows, matrix.dim, data)
}

/// `f64` unit vector in the direction of `row`, or `None` for a zero row.
pub(crate) fn unit_vector(row: &[f32]) -> Option<Vec<f64>> {
    let norm = row
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        return None;
    }
    Some(row.iter().map(|&v| f64::from(v) / norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Labeled,
    Unlabeled,
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Val,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dev" => Ok(Split::Dev),
            "val" => Ok(Split::Val),
            other => Err(Error::Config(format!(
                "split must be `dev` or `val`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Dev => "dev",
            Split::Val => "val",
        })
    }
}

/// A per-speaker or per-household utterance count, or "every remaining one".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Count {
    // Variant order makes `All` sort after every finite count.
    N(usize),
    All,
}

impl Count {
    /// Resolves against the number of available items.
    pub fn take(self, available: usize) -> usize {
        match self {
            Count::N(n) => n.min(available),
            Count::All => available,
        }
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::N(n) => write!(f, "{n}"),
            Count::All => f.write_str("All"),
        }
    }
}

impl FromStr for Count {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Count::All);
        }
        s.parse::<usize>()
            .map(Count::N)
            .map_err(|_| Error::Config(format!("expected a count or `All`, got `{s}`")))
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Count::N(n) => serializer.serialize_u64(*n as u64),
            Count::All => serializer.serialize_str("All"),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::N(n) => Ok(Count::N(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Every utterance known to a dataset, in manifest order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    utterances: Vec<Utterance>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(utterances.len());
        for (i, u) in utterances.iter().enumerate() {
            if by_id.insert(u.utterance_id.clone(), i).is_some() {
                return Err(Error::DuplicateUtterance(u.utterance_id.clone()));
            }
        }
        Ok(Catalog { utterances, by_id })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&Utterance> {
        self.by_id.get(utterance_id).map(|&i| &self.utterances[i])
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<SpeakerId> {
        let mut seen = HashSet::new();
        self.utterances
            .iter()
            .filter(|u| seen.insert(&u.speaker))
            .map(|u| u.speaker.clone())
            .collect()
    }

    /// Utterances grouped by speaker, each group in catalog order.
    pub fn by_speaker(&self) -> HashMap<&SpeakerId, Vec<&Utterance>> {
        let mut map: HashMap<&SpeakerId, Vec<&Utterance>> = HashMap::new();
        for u in &self.utterances {
            map.entry(&u.speaker).or_default().push(u);
        }
        map
    }

    fn check_rows(&self, matrix: &EmbeddingMatrix) -> Result<()> {
        for u in &self.utterances {
            if u.embedding_index >= matrix.rows() {
                return Err(Error::InvalidInput(format!(
                    "utterance `{}` points at row {} of a {}-row matrix",
                    u.utterance_id,
                    u.embedding_index,
                    matrix.rows()
                )));
            }
        }
        Ok(())
    }
}

/// One household: C speakers and their utterances, each with one role.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdDataset {
    pub household_id: String,
    pub speakers: Vec<SpeakerId>,
    pub utterances: Vec<(Utterance, Role)>,
}

impl HouseholdDataset {
    pub fn new(
        household_id: impl Into<String>,
        speakers: Vec<SpeakerId>,
        utterances: Vec<(Utterance, Role)>,
    ) -> Result<Self> {
        let household_id = household_id.into();
        if speakers.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "household `{household_id}` needs at least 2 speakers, has {}",
                speakers.len()
            )));
        }
        let unique: HashSet<_> = speakers.iter().collect();
        if unique.len() != speakers.len() {
            return Err(Error::InvalidInput(format!(
                "household `{household_id}` lists a speaker twice"
            )));
        }
        let mut ids = HashSet::new();
        let mut enrolled = HashSet::new();
        for (u, role) in &utterances {
            if !unique.contains(&u.speaker) {
                return Err(Error::UnknownSpeaker(u.speaker.to_string()));
            }
            if !ids.insert(u.utterance_id.as_str()) {
                return Err(Error::DuplicateUtterance(u.utterance_id.clone()));
            }
            if *role == Role::Labeled {
                enrolled.insert(&u.speaker);
            }
        }
        if let Some(s) = speakers.iter().find(|s| !enrolled.contains(s)) {
            return Err(Error::InvalidInput(format!(
                "speaker `{s}` in household `{household_id}` has no labeled utterance"
            )));
        }
        Ok(HouseholdDataset {
            household_id,
            speakers,
            utterances,
        })
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Utterance> {
        self.utterances
            .iter()
            .filter(move |(_, r)| *r == role)
            .map(|(u, _)| u)
    }

    pub fn count(&self, role: Role) -> usize {
        self.with_role(role).count()
    }
}

// ---------------------------------------------------------------------------
// Manifest + payload

#[derive(Debug, Serialize, Deserialize)]
struct ManifestHeader {
    dim: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_file: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    utterance_id: String,
    speaker_id: String,
    row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<serde_json::Value>>,
}

/// Reads a manifest and its embedding payload (binary or inline).
pub fn load_dataset(manifest_path: &Path) -> Result<(EmbeddingMatrix, Catalog)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, first) = lines.next().ok_or(Error::Manifest {
        line: 1,
        reason: "empty manifest".into(),
    })?;
    let header: ManifestHeader = serde_json::from_str(first).map_err(|e| Error::Manifest {
        line: 1,
        reason: format!("bad header: {e}"),
    })?;
    if header.dim == 0 {
        return Err(Error::Manifest {
            line: 1,
            reason: "dim must be positive".into(),
        });
    }

    let mut rows = Vec::with_capacity(header.count);
    for (idx, line) in lines {
        let row: ManifestRow = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        rows.push((idx + 1, row));
    }
    if rows.len() != header.count {
        return Err(Error::Manifest {
            line: 1,
            reason: format!(
                "header declares {} utterances, found {}",
                header.count,
                rows.len()
            ),
        });
    }

    let mut seen_rows = BTreeSet::new();
    for (line, r) in &rows {
        if r.row >= header.count || !seen_rows.insert(r.row) {
            return Err(Error::Manifest {
                line: *line,
                reason: format!("row {} is out of range or repeated", r.row),
            });
        }
    }

    let data = match &header.embedding_file {
        Some(file) => {
            let payload_path = manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(file);
            read_payload(&payload_path, header.count, header.dim)?
        }
        None => inline_payload(&rows, header.count, header.dim)?,
    };
    let matrix = EmbeddingMatrix::new(header.count, header.dim, data)?;

    let mut utterances = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let speaker = SpeakerId::new(r.speaker_id).map_err(|_| Error::Manifest {
            line,
            reason: "empty speaker_id".into(),
        })?;
        utterances.push(Utterance {
            utterance_id: r.utterance_id,
            speaker,
            embedding_index: r.row,
        });
    }
    let catalog = Catalog::new(utterances)?;
    Ok((matrix, catalog))
}

fn read_payload(path: &Path, count: usize, dim: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = count * dim * 4;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "manifest declares {count} x {dim} f32 values ({expected} bytes) but {} holds {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / dim,
            col: pos % dim,
        });
    }
    Ok(data)
}

fn inline_payload(rows: &[(usize, ManifestRow)], count: usize, dim: usize) -> Result<Vec<f32>> {
    let mut data = vec![0.0f32; count * dim];
    for (line, r) in rows {
        let values = r.embedding.as_ref().ok_or_else(|| Error::Manifest {
            line: *line,
            reason: "no embedding_file in header and no inline `embedding`".into(),
        })?;
        if values.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "line {line}: inline embedding has {} values, manifest dim is {dim}",
                values.len()
            )));
        }
        for (col, v) in values.iter().enumerate() {
            let x = match v {
                serde_json::Value::Number(n) => n.as_f64().map(|f| f as f32),
                // JSON has no NaN/Infinity literals; accept them spelled as strings
                serde_json::Value::String(s) => s.parse::<f32>().ok(),
                _ => None,
            }
            .ok_or_else(|| Error::Manifest {
                line: *line,
                reason: format!("embedding value {col} is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::NonFinite { row: r.row, col });
            }
            data[r.row * dim + col] = x;
        }
    }
    Ok(data)
}

/// Payload path used by [`write_dataset`] for a given manifest.
pub fn payload_path_for(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("f32")
}

/// Writes `catalog` as a JSONL manifest plus a binary payload next to it.
pub fn write_dataset(manifest_path: &Path, matrix: &EmbeddingMatrix, catalog: &Catalog) -> Result<()> {
    catalog.check_rows(matrix)?;
    let payload = payload_path_for(manifest_path);
    let file_name = payload
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidInput("manifest path has no file name".into()))?
        .to_string();

    let mut bytes = Vec::with_capacity(matrix.data.len() * 4);
    for v in &matrix.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;

    let file = fs::File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut out = BufWriter::new(file);
    let header = ManifestHeader {
        dim: matrix.dim(),
        count: matrix.rows(),
        embedding_file: Some(file_name),
    };
    let mut write_line = |value: String| -> Result<()> {
        writeln!(out, "{value}").map_err(|e| Error::io(manifest_path, e))
    };
    write_line(serde_json::to_string(&header).map_err(|e| Error::json("manifest header", e))?)?;
    for u in &catalog.utterances {
        let row = ManifestRow {
            utterance_id: u.utterance_id.clone(),
            speaker_id: u.speaker.to_string(),
            row: u.embedding_index,
            embedding: None,
        };
        write_line(serde_json::to_string(&row).map_err(|e| Error::json("manifest row", e))?)?;
    }
    out.flush().map_err(|e| Error::io(manifest_path, e))
}

// ---------------------------------------------------------------------------
// Household split file

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub utterance_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub household_id: String,
    pub split: Split,
    pub speaker_ids: Vec<SpeakerId>,
    pub assignments: Vec<RoleAssignment>,
}

impl HouseholdRecord {
    /// Resolves the record against a catalog into a [`HouseholdDataset`].
    pub fn to_dataset(&self, catalog: &Catalog) -> Result<HouseholdDataset> {
        let mut utterances = Vec::with_capacity(self.assignments.len());
        for a in &self.assignments {
            let u = catalog.get(&a.utterance_id).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "household `{}` references unknown utterance `{}`",
                    self.household_id, a.utterance_id
                ))
            })?;
            utterances.push((u.clone(), a.role));
        }
        HouseholdDataset::new(self.household_id.clone(), self.speaker_ids.clone(), utterances)
    }

    pub fn holdout_ids(&self) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(|a| a.role == Role::Holdout)
            .map(|a| a.utterance_id.as_str())
    }
}

/// The authoritative record of a household simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub household_size: usize,
    pub holdout_per_speaker: usize,
    pub labeled_per_speaker: Count,
    pub unlabeled_per_household: Count,
    pub dropped_speakers: Vec<SpeakerId>,
    pub households: Vec<HouseholdRecord>,
}

impl SplitFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("split file", e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &HouseholdRecord> {
        self.households.iter().filter(move |h| h.split == split)
    }
}
