use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {layer}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("gradient slot for parameter `{0}` is not filled")]
    GradientNotFilled(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("scorer head has {head} outputs but class support has {support} classes")]
    HeadSupportMismatch { head: usize, support: usize },

    #[error("class {0} is already present in the head")]
    DuplicateClass(usize),

    #[error("label {label} is not covered by the classifier head {head:?}")]
    LabelOutOfHead { label: usize, head: Vec<usize> },

    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("requested {requested} exemplars but only {available} samples are available")]
    NotEnoughSamples { requested: usize, available: usize },

    #[error("classes {0:?} were already seen in an earlier increment")]
    ClassOverlap(Vec<usize>),

    #[error("old classes exist but no generator is available")]
    MissingGenerator,

    #[error("exemplar budget {budget} is smaller than the number of classes {classes}")]
    BudgetTooSmall { budget: usize, classes: usize },

    #[error("GAN training diverged at epoch {epoch}: discriminator loss {d_loss}, generator loss {g_loss}")]
    GanDiverged { epoch: usize, d_loss: f32, g_loss: f32 },

    #[error("classifier training diverged at epoch {epoch}: loss {loss}")]
    TrainingDiverged { epoch: usize, loss: f32 },

    #[error("bad IDX magic: expected {expected}, found {found}")]
    IdxBadMagic { expected: u32, found: u32 },

    #[error("truncated IDX {what}: needed {needed} bytes, {available} available")]
    IdxTruncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error("seed {seed}, increment {increment}: {source}")]
    Protocol {
        seed: u64,
        increment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("strategy `{strategy}`: {source}")]
    Strategy {
        strategy: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
