use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by graph construction, game evaluation, integration and
/// equilibrium search.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("no directed route from origin to destination")]
    NoRoute,

    #[error("route enumeration exceeded the cap of {cap} routes")]
    RouteExplosion { cap: usize },

    #[error("not a simple parallel-route game: {0}")]
    NotSimple(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("population `{population}` is not admissible: route flows sum to {actual}, throughput is {expected}")]
    NotAdmissible {
        population: String,
        expected: f64,
        actual: f64,
    },

    #[error("flow value {value} is below the negative-flow tolerance")]
    NegativeFlow { value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("integration step produced a non-finite state at t = {time}")]
    StepRejected { time: f64 },

    #[error("oracle grid of {points} states exceeds the cap of {cap}")]
    TooLarge { points: u128, cap: u64 },

    #[error("throughput mismatch for population index {population}: {first} vs {second}")]
    ThroughputMismatch {
        population: usize,
        first: f64,
        second: f64,
    },

    #[error("contraction bound violated at t = {time}: distance {distance} > bound {bound}")]
    ContractionViolated { time: f64, distance: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("failed to parse scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
