use thiserror::Error;

/// Broad failure classes. The CLI maps each one to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
    Guard,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("branch {from}-{to} has zero impedance")]
    SingularBranch { from: usize, to: usize },

    #[error("power flow Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("power flow did not converge (max mismatch {max_mismatch:.3e})")]
    PowerFlowDiverged { max_mismatch: f64 },

    #[error("eliminated block is singular for nodes {nodes:?}")]
    SingularReduction { nodes: Vec<usize> },

    #[error("integration produced a non-finite state at step {step}")]
    Blowup { step: usize },

    #[error("perturbation simulation blew up (direction {direction}, size {size}, state {state})")]
    PerturbationBlowup {
        direction: usize,
        size: usize,
        state: usize,
    },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not orthogonal (deviation {0:.3e})")]
    NotOrthogonal(f64),

    #[error("no outputs: the instrumented generator set is empty")]
    NoOutputs,

    #[error("square-root factor lost positive definiteness")]
    FactorDowndate,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fault on branch {from}-{to} rejected: endpoint is a generator terminal bus")]
    GeneratorTerminalFault { from: usize, to: usize },

    #[error("C({g}, {k}) = {count} placements exceeds the exhaustive limit {limit}; use mads")]
    CombinatorialGuard {
        g: usize,
        k: usize,
        count: u128,
        limit: u128,
    },

    #[error("infeasible cardinality {k} for {g} generators")]
    InfeasibleCardinality { k: usize, g: usize },

    #[error("placements have different cardinalities ({0} vs {1})")]
    CardinalityMismatch(usize, usize),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. } => ErrorKind::Io,
            Parse { .. }
            | InvalidCase(_)
            | InvalidArgument(_)
            | Dimension { .. }
            | SingularBranch { .. }
            | NotSymmetric(_)
            | NotOrthogonal(_)
            | NoOutputs
            | InfeasibleCardinality { .. }
            | CardinalityMismatch(..) => ErrorKind::Validation,
            SingularJacobian { .. }
            | PowerFlowDiverged { .. }
            | SingularReduction { .. }
            | Blowup { .. }
            | PerturbationBlowup { .. }
            | FactorDowndate
            | NonFinite(_) => ErrorKind::Numerical,
            GeneratorTerminalFault { .. } | CombinatorialGuard { .. } => ErrorKind::Guard,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
