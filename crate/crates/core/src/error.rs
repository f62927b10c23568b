use thiserror::Error;

/// Everything that can go wrong while building or solving a design problem.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DesignError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("Schur complement is ill-defined: column space of the off-diagonal block is not inside the top block")]
    IllDefinedSchur,

    #[error("top block of the partitioned matrix is singular")]
    SingularTopBlock,

    #[error("columns of Q1 are not contrasts (Q1^T 1 != 0, max deviation {0:.3e})")]
    NotContrasts(f64),

    #[error("row {0} of Q1 is all zeros; every treatment must be of interest")]
    ZeroRowQ1(usize),

    #[error("empty level list for covariate dimension {0}")]
    EmptyLevels(usize),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("design is infeasible: {0}")]
    InfeasibleDesign(String),

    #[error("marginal design is infeasible: {0}")]
    InfeasibleMarginal(String),

    #[error("no covariate design makes the covariate functions estimable: {0}")]
    InfeasibleInterest(String),

    #[error("solver did not converge after {iterations} iterations (best value {best_value:.6e})")]
    NotConverged {
        iterations: usize,
        best_value: f64,
        best_weights: Vec<f64>,
    },

    #[error("grid oracle too large: dimension {dim} exceeds {max}")]
    OracleTooLarge { dim: usize, max: usize },

    #[error("linear program is infeasible: {0}")]
    LpInfeasible(String),

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("{n} trials cannot cover a support of size {support}")]
    TooFewTrials { n: u64, support: usize },

    #[error("bad strata: {0}")]
    BadStrata(String),

    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),
}

pub type Result<T> = std::result::Result<T, DesignError>;
