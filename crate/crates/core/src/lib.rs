//! Load flow for radial distribution feeders.
//!
//! Branch tables are parsed and validated into a per-unit [`NetworkModel`],
//! then solved by a backward/forward sweep: branch currents accumulate from
//! the leaves toward the substation through a small work stack, and node
//! voltages are updated outward from the substation. Every elementary step
//! is counted so the cost can be set against a baseline that rebuilds its
//! downstream node sets on every iteration.

pub mod cli;
pub mod error;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{
    inspect_topology, parse_branch_table, renumber_sequential, validate_radial, NodeMapping,
    RawTable, TableFormat,
};
pub use model::{BranchRecord, NetworkModel, PerUnitBase, Phasor, SolveState};
pub use oracle::{baseline_solve, downstream_sum, DownstreamSets};
pub use solver::{solve, step_model, CountMode, SolveOptions, SolveReport};
