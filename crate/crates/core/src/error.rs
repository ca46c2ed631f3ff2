use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the module that raises them; [`Error::module`]
/// names that module so front ends can report where a numerical run failed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("spectral density is not integrable ({0})")]
    NonIntegrable(String),
    #[error("omega_in = {omega_in} is not above the continuum threshold {threshold}: the state is stable")]
    BelowThreshold { omega_in: f64, threshold: f64 },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("quadrature did not reach tolerance: estimate {value:e}, error {error:e} after {intervals} intervals")]
    QuadratureFailure { value: f64, error: f64, intervals: usize },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("matrix dimension {0} exceeds the dense limit of {max}", max = crate::exact::MAX_DENSE_DIM)]
    DimensionTooLarge(usize),
    #[error("matrix exponential refinement did not converge (last change {0:e})")]
    NonConvergence(f64),

    #[error("step {step} too coarse: must be at most {max} to resolve the kernel")]
    StepTooCoarse { step: f64, max: f64 },
    #[error("survival amplitude left the unit disk: |A| = {0}")]
    AmplitudeBlowup(f64),
    #[error("fit window starts at {start}, before the required {min}")]
    WindowTooEarly { start: f64, min: f64 },
    #[error("trace too short for the fit window: {0}")]
    TraceTooShort(String),
    #[error("survival probability is not exponential on the window (residual {residual:e} > {max:e})")]
    NonExponential { residual: f64, max: f64 },

    #[error("probability must lie in (0, 1], got {0}")]
    NonpositiveProbability(f64),
    #[error("measurement interval {tau} outside the trace range [0, {t_max}]")]
    TauOutOfRange { tau: f64, t_max: f64 },

    #[error("strong coupling: |Sigma| = {sigma:e} is not small against {scale:e}")]
    StrongCoupling { sigma: f64, scale: f64 },
    #[error("perturbative pole invalid: |Sigma| = {sigma:e} against convergence radius {radius:e}")]
    PerturbativityViolated { sigma: f64, radius: f64 },
    #[error("wrong form-factor family: {0}")]
    WrongFamily(String),

    #[error("Z = {z_factor} < 1 but no crossing was found in the scan range")]
    MissingCrossing { z_factor: f64 },
    #[error("scan too coarse: {0}")]
    ScanTooCoarse(String),

    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// The module that raised the error.
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            InvalidParameter(_) | NonIntegrable(_) | BelowThreshold { .. } | InvalidRange(_) => "model",
            QuadratureFailure { .. } => "quadrature",
            InvalidGrid(_) | DimensionTooLarge(_) | NonConvergence(_) => "exact",
            StepTooCoarse { .. }
            | AmplitudeBlowup(_)
            | WindowTooEarly { .. }
            | TraceTooShort(_)
            | NonExponential { .. } => "volterra",
            NonpositiveProbability(_) | TauOutOfRange { .. } => "rates",
            StrongCoupling { .. } | MissingCrossing { .. } | ScanTooCoarse(_) => "zeno",
            PerturbativityViolated { .. } | WrongFamily(_) => "laser",
            Config(_) | Io(_) => "cli",
        }
    }

    /// True for bad user input as opposed to a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidRange(_)
                | Error::InvalidGrid(_)
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
