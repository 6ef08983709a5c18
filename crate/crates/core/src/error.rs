use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no cable modes in window [{lo}, {hi}] GHz")]
    NoModesInWindow { lo: f64, hi: f64 },

    #[error("Hilbert space too large: dimension {dim} exceeds cap {cap}")]
    HilbertSpaceTooLarge { dim: usize, cap: usize },

    #[error("label {0} lies outside the truncation")]
    LabelOutOfTruncation(String),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("label ambiguity: {0} could not be assigned above the overlap threshold")]
    LabelAmbiguity(String),

    #[error("eigenbranches not separable: {0}")]
    BranchesNotSeparable(String),

    #[error("no avoided crossing found in [{lo}, {hi}] GHz")]
    NoAvoidedCrossing { lo: f64, hi: f64 },

    #[error("no sign change in bracket [{lo}, {hi}] GHz")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("singular denominator {term} = {value:.3e} GHz")]
    Singularity { term: String, value: f64 },

    #[error("singular pulse: {0}")]
    SingularPulse(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("gate not found: {0}")]
    GateNotFound(String),

    #[error("inconsistent traces: {0}")]
    InconsistentTraces(String),

    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl Error {
    /// Stable snake_case identifier, used by the CLI's machine-readable
    /// error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NoModesInWindow { .. } => "no_modes_in_window",
            Error::HilbertSpaceTooLarge { .. } => "hilbert_space_too_large",
            Error::LabelOutOfTruncation(_) => "label_out_of_truncation",
            Error::NonHermitian(_) => "non_hermitian",
            Error::LabelAmbiguity(_) => "label_ambiguity",
            Error::BranchesNotSeparable(_) => "branches_not_separable",
            Error::NoAvoidedCrossing { .. } => "no_avoided_crossing",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::Singularity { .. } => "singularity",
            Error::SingularPulse(_) => "singular_pulse",
            Error::InvalidSchedule(_) => "invalid_schedule",
            Error::GateNotFound(_) => "gate_not_found",
            Error::InconsistentTraces(_) => "inconsistent_traces",
            Error::EmptyFeasibleSet(_) => "empty_feasible_set",
            Error::InvalidParams(_) => "invalid_params",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
