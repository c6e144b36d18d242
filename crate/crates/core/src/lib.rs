//! Per-cell-line drug ranking with latent factors trained on a joint
//! push-at-the-top and pairwise-order objective.
//!
//! The pipeline is: load a response matrix ([`data`]), label drugs as
//! sensitive per cell line ([`labeling`]), split ([`splits`]), select genes
//! ([`genes`]) and build cell-line similarities ([`similarity`]), train
//! ([`model`]), then score rankings ([`metrics`]). [`experiment`] wires
//! these into reproducible protocols and grid searches.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiment;
pub mod genes;
pub mod labeling;
pub mod metrics;
pub mod model;
pub mod similarity;
pub mod splits;

pub use data::{load_expression, load_response, ExpressionMatrix, ResponseMatrix};
pub use error::{Error, Result, Stage};
pub use labeling::{label_new_cell_lines, label_train_test, Label, LabelSource, SensitivityLabels};
pub use model::{
    extrapolate_cell_line, train, LatentModel, LossWeights, OptimizerConfig, RankedDrug, TrainedModel, TrainingLabels,
};
pub use similarity::{SimilarityKind, SimilarityMatrix};
