//! Graph-based label propagation for speaker identification in small
//! households.
//!
//! Each household becomes a fully connected Gaussian-kernel graph over its
//! utterance embeddings. Enrollment labels are spread to unlabeled and
//! holdout utterances by iterative, class-normalized label propagation, and
//! seven scoring methods (cosine baselines, pseudo-label variants and the
//! propagation family) are compared by speaker identification error rate
//! (SIER) over simulated households.
//!
//! Modules, bottom-up:
//!
//! * [`data`]: embeddings, catalogs, households and their file formats
//! * [`graph`]: affinity matrix, normalized operator and Laplacian
//! * [`propagation`]: iterative solver and its closed-form counterpart
//! * [`scoring`]: the seven holdout scorers
//! * [`simulation`]: household protocol and synthetic embedding worlds
//! * [`evaluation`]: SIER, sweeps and reports

pub mod data;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod propagation;
pub mod scoring;
pub mod seed;
pub mod simulation;

pub use data::{
    l2_normalize, load_dataset, write_dataset, Catalog, Count, EmbeddingMatrix, HouseholdDataset,
    Role, SpeakerId, Split, SplitFile, Utterance,
};
pub use error::{Error, Result};
pub use evaluation::{compute_sier, run_sweep, SierResult, SweepDataset, SweepSpec};
pub use graph::{build_affinity, AffinityGraph};
pub use propagation::{init_label_matrix, propagate, solve_closed_form, LabelMatrix, LpConfig, PropagationResult};
pub use scoring::{Method, Prediction, ScorerInput};
pub use simulation::{build_households, generate_synthetic, SimulationConfig, SynthConfig};
