use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: shape mismatch: {detail}")]
    ShapeMismatch { layer: usize, detail: String },

    #[error("layer {layer}: unknown layer kind `{kind}`")]
    UnknownLayerKind { layer: usize, kind: String },

    #[error("layer {layer}: unknown activation `{name}`")]
    UnknownActivation { layer: usize, name: String },

    #[error("layer {layer}: non-finite value at weight index {index}")]
    NonFiniteWeight { layer: usize, index: usize },

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error("input length {got} does not match expected {expected}")]
    InputLength { expected: usize, got: usize },

    #[error("token id {token} at position {position} is outside the vocabulary of size {vocab}")]
    TokenOutOfVocabulary { token: usize, position: usize, vocab: usize },

    #[error("unknown neuron `{0}`")]
    UnknownNeuron(String),

    #[error("no edge between `{from}` and `{to}`")]
    MissingEdge { from: String, to: String },

    #[error("output layer must be softmax or sigmoid, found {0}")]
    NotProbabilistic(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid strata: {0}")]
    InvalidStrata(String),

    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    #[error("characterizations {first} and {second} both hold on influence {from} -> {to}")]
    NonExclusiveCharacterization {
        from: String,
        to: String,
        first: String,
        second: String,
    },

    #[error("missing measure: {0}")]
    MissingMeasure(String),

    #[error("unknown category `{value}` for feature `{feature}`")]
    UnknownCategory { feature: String, value: String },

    #[error("incompatible perturbation: {0}")]
    IncompatiblePerturbation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent document: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by invalid user input rather than internal failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Inconsistent(_) | Error::Diverged { .. })
    }
}
