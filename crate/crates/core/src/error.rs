use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which axis of a table an identifier belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    CellLine,
    Drug,
    Gene,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::CellLine => "cell line",
            Axis::Drug => "drug",
            Axis::Gene => "gene",
        })
    }
}

/// Pipeline stage, used to tag errors raised while running an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Label,
    Split,
    SelectGenes,
    Similarity,
    Train,
    Rank,
    Evaluate,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Label => "label",
            Stage::Split => "split",
            Stage::SelectGenes => "select-genes",
            Stage::Similarity => "similarity",
            Stage::Train => "train",
            Stage::Rank => "rank",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("duplicate {axis} id {id}")]
    DuplicateId { axis: Axis, id: String },
    #[error("unknown {axis} {id}")]
    UnknownId { axis: Axis, id: String },
    #[error("cannot parse {value:?} at row {row}, column {column} as a number")]
    Parse { row: usize, column: usize, value: String },
    #[error("missing value at row {row}, column {column}")]
    MissingCell { row: usize, column: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("{axis} {id} has no observed values")]
    AllMissing { axis: Axis, id: String },
    #[error("malformed table: {0}")]
    Shape(String),
    #[error("{axis} {id} is not present in both tables")]
    Alignment { axis: Axis, id: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(String),

    #[error("hold-out pool exhausted: only {selected} of {requested} test cell lines could be selected")]
    PoolExhausted { selected: usize, requested: usize },
    #[error("no genes selected for any drug; try weaker regularization")]
    NoGenesSelected,

    #[error("non-finite {term} term")]
    NonFiniteLoss { term: &'static str },
    #[error("training diverged after {halvings} consecutive step halvings")]
    Diverged { halvings: usize, trace: Vec<f64> },

    #[error("stage {stage} failed{}: {source}", point.as_ref().map(|p| format!(" at {p}")).unwrap_or_default())]
    Stage {
        stage: Stage,
        point: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: Stage, point: Option<String>) -> Self {
        Error::Stage {
            stage,
            point,
            source: Box::new(self),
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
