//! Partitioned sequential AC/DC power flow.

// Negated comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod case;
pub mod coordinator;
pub mod error;
pub mod fdpf;
pub mod grid;
pub mod lcc;
pub mod partition;
pub mod solution;
pub mod sparse;

pub use error::{Error, Result};
