use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("window has {got} samples, expected {expected}")]
    WindowLength { expected: usize, got: usize },

    #[error("filter bank coefficient lengths do not match order {order}: {detail}")]
    BankShape { order: usize, detail: String },

    #[error("prototype bank violates a nominal constraint: {0}")]
    PrototypeConstraint(String),

    #[error("constraint row {row} is linearly dependent on the preceding rows")]
    RedundantConstraint { row: usize },

    #[error("normalized damping {value} is outside the representable range (|sT N/2| > 700)")]
    DampingOutOfRange { value: f64 },

    #[error("quadratic program is infeasible; constraint row {row} cannot be satisfied")]
    Infeasible { row: usize },

    #[error("quadratic program did not converge within {0} iterations")]
    IterationLimit(usize),

    #[error("design infeasible: {0}")]
    DesignInfeasible(String),

    #[error("grid refinement did not converge after {rounds} rounds (worst violation {violation:e})")]
    RefinementStalled { rounds: usize, violation: f64 },

    #[error("phasor estimate magnitude {magnitude:e} is below the division guard {guard:e}")]
    NearZeroPhasor { magnitude: f64, guard: f64 },

    #[error("reference phasor has zero magnitude; TVE undefined")]
    ZeroReference,

    #[error("step time {0} s lies outside the measured series")]
    StepOutsideSeries(f64),

    #[error("unknown scenario id `{0}`")]
    UnknownScenario(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
