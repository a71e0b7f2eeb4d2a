use thiserror::Error;

/// Errors raised by estimators, design calculations and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient data for variance: need m >= 2 and n >= 2, got m = {m}, n = {n}")]
    InsufficientForVariance { m: usize, n: usize },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("derivative estimate unstable: control density {density:e} at threshold {threshold}")]
    UnstableDerivative { threshold: f64, density: f64 },

    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("integration failed: {0}")]
    IntegrationFailed(String),

    #[error("control-side variance zero")]
    ControlVarianceZero,

    #[error("invalid cost: {0}")]
    InvalidCost(String),

    #[error("no alternative specified")]
    NoAlternative,

    #[error("variance zero")]
    VarianceZero,

    #[error("stage one exceeds budget: m1 + n1 = {accrued} > N = {total}")]
    StageOneExceedsBudget { accrued: usize, total: usize },

    #[error("cannot standardize: {0}")]
    CannotStandardize(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(f64),

    #[error("trial already complete")]
    TrialComplete,

    #[error("invalid phase: expected {expected}, found {found}")]
    InvalidPhase { expected: &'static str, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state file: {0}")]
    StateFormat(String),

    #[error("study config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
