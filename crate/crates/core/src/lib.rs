//! Bytecode-level detection of token contracts.

pub mod behavior;
pub mod callgraph;
pub mod corpus;
pub mod disasm;
pub mod error;
pub mod hash;
pub mod pipeline;
pub mod sighash;
pub mod symexec;

pub use error::{Error, Result};
