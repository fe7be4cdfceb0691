use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty training series")]
    EmptySeries,

    #[error("unidentifiable R_out: {0}")]
    UnidentifiableOutdoorResistance(String),

    #[error("no stable fit: every R_m candidate produced a dynamics parameter outside (0, 1)")]
    NoStableFit,

    #[error("thermal demand exceeds plant capacity ({demand:.4} kW > {capacity:.4} kW)")]
    DemandExceedsCapacity { demand: f64, capacity: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("feature count mismatch: model expects {expected} features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("PMV clothing surface temperature iteration did not converge in {0} steps")]
    PmvNonConvergence(usize),

    #[error("no heating-regime data: {0}")]
    NoHeatingData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient forecast coverage: {0}")]
    ForecastCoverage(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: non-uniform timestamps")]
    NonUniformTimestamps { line: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("plan invariant violated: {0}")]
    PlanInvariant(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(step: usize, err: Error) -> Self {
        Error::AtStep {
            step,
            source: Box::new(err),
        }
    }
}
