use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(String, String),
    #[error("asymmetric weight on edge {x}-{y}: {forward} vs {backward}")]
    AsymmetricWeight {
        x: String,
        y: String,
        forward: f64,
        backward: f64,
    },
    #[error("self-loop at vertex {0}")]
    SelfLoop(String),
    #[error("nonpositive weight or measure: {0}")]
    NonpositiveWeightOrMeasure(String),
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("vertex budget exceeded: {requested} > {budget}")]
    BudgetExceeded { requested: usize, budget: usize },
    #[error("invalid graph family: {0}")]
    InvalidFamily(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("ball B_{radius} around {center} touches the truncation edge (at distance {edge_distance})")]
    TruncationTooSmall {
        center: String,
        radius: u32,
        edge_distance: u32,
    },
    #[error("vertex {0} has neighbors outside the stored truncation")]
    MissingNeighborValue(String),
    #[error("ball has an empty interior")]
    EmptyInterior,
    #[error("test function must be positive on the 2-hop neighborhood (vertex {0})")]
    NonpositiveTestFunction(String),
    #[error("exhaustion did not converge within the truncation: last radii {r_prev}/{r_last}, values {prev} / {last}")]
    TruncationExhausted {
        r_prev: u32,
        r_last: u32,
        prev: f64,
        last: f64,
    },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("solution left the nonnegative cone at t = {t}: min component {value}")]
    NegativeState { t: f64, value: f64 },
    #[error("step size collapsed at t = {t} without solution growth (sup-norm {sup_norm})")]
    StepFloorWithoutGrowth { t: f64, sup_norm: f64 },
    #[error("step limit reached at t = {t} after {steps} steps")]
    StepLimit { t: f64, steps: usize },
    #[error("Picard iteration did not converge after {iterations} iterations (last increment {increment})")]
    NoConvergence { iterations: usize, increment: f64 },
    #[error("radius {r} is below the validity radius {min_radius}")]
    RadiusBelowValidity { r: f64, min_radius: f64 },
    #[error("missing fit: {0}")]
    MissingFit(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
