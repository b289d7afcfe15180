//! Symbolic execution over disassembled bytecode.

pub mod explore;
pub mod memory;
pub mod oracle;
pub mod term;
pub mod trace;
pub mod word;

pub use explore::{
    explore, explore_with, CallKind, CallSite, ExplorationLimits, ExplorationReport, PathConstraint, PathResult,
    StorageWrite, Terminal,
};
pub use oracle::{Feasibility, FeasibilityOracle, OracleRegistry, DEFAULT_ORACLE};
pub use term::{Op, SymSource, Term, TermRef};
pub use word::U256;
