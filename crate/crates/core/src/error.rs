use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numeric overflow: natural parameter {theta} exceeds cap {cap}")]
    Overflow { theta: f64, cap: f64 },

    #[error("value {value} outside the support of the {family} family")]
    Domain { family: &'static str, value: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("design for subset {subset:?} is rank deficient")]
    RankDeficient { subset: Vec<String> },

    #[error("column `{column}` has {distinct} distinct values, spline basis needs at least {needed}")]
    InsufficientDistinct {
        column: String,
        distinct: usize,
        needed: usize,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("{method} test does not support the {family} family")]
    UnsupportedFamily {
        method: &'static str,
        family: &'static str,
    },

    #[error("degenerate degrees of freedom: n = {n}, edf = {edf}")]
    DegenerateDf { n: usize, edf: f64 },

    #[error("bootstrap refits failed in {failed} of {reps} replicates")]
    BootstrapFailures { failed: usize, reps: usize },

    #[error("exhaustive search over {p} covariates is infeasible without a subset size cap")]
    InfeasibleSearch { p: usize },

    #[error("no fit succeeded on the lambda grid")]
    AllFitsFailed,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("structural model is cyclic at node `{0}`")]
    Cyclic(String),
}
