use thiserror::Error;

/// Errors raised by the simulation, analysis and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinlError {
    #[error("occupation {occupation} on mode {mode} exceeds cutoff {n_max}")]
    OccupationExceedsCutoff {
        mode: usize,
        occupation: usize,
        n_max: usize,
    },
    #[error("cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(usize, usize),
    #[error("mode count mismatch: expected {expected}, found {found}")]
    ModeMismatch { expected: usize, found: usize },
    #[error("mode index {mode} out of range for a {modes}-mode state")]
    InvalidMode { mode: usize, modes: usize },
    #[error("beam splitter needs two distinct modes, got ({0}, {0})")]
    IdenticalModes(usize),
    #[error("keep set must be a non-empty list of distinct modes")]
    InvalidKeepSet,
    #[error("out-coupling ancilla mode {0} is not in vacuum")]
    NonVacuumAncilla(usize),
    #[error("heralding probability {p:e} is below {floor:e}; event is effectively impossible")]
    HeraldingImpossible { p: f64, floor: f64 },
    #[error("variance {0} is not positive")]
    NonPositiveVariance(f64),
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no feasible point: best heralding probability {p_best:e} is below the floor {p_crit:e}")]
    Infeasible { p_best: f64, p_crit: f64 },
    #[error("cutoff {n_max} misses {deficit:e} of the coherent input |{alpha}|; raise the cutoff")]
    CutoffInsufficient { alpha: f64, n_max: usize, deficit: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl MinlError {
    /// True for errors caused by bad user input, as opposed to numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            MinlError::HeraldingImpossible { .. }
                | MinlError::NonPositiveVariance(_)
                | MinlError::ZeroNorm
                | MinlError::Infeasible { .. }
                | MinlError::CutoffInsufficient { .. }
                | MinlError::Numerical(_)
                | MinlError::Io(_)
        )
    }
}

impl From<std::io::Error> for MinlError {
    fn from(e: std::io::Error) -> Self {
        MinlError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MinlError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MinlError::InvalidParameter(msg.into()))
}
