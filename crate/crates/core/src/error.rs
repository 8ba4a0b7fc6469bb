use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("topology error: {0}")]
    Topology(String),

    /// The tree is valid but a branch is numbered before the branch feeding it.
    /// `renumber_sequential` repairs this.
    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("division by a zero-magnitude phasor")]
    Singularity,

    #[error("voltage collapse at node {node}")]
    VoltageCollapse { node: usize },

    #[error("non-finite value computed on branch {branch}")]
    Numeric { branch: usize },

    #[error("no convergence after {iterations} iterations (last max delta {max_delta:.3e} p.u.)")]
    NonConvergence { iterations: usize, max_delta: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
