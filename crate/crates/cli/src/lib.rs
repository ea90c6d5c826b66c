//! Experiment harness library behind the `privrep` binary: configuration
//! parsing, the sweep runner, CSV emission, and SVG plotting.

// `!(x > 0.0)` guards reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csvout;
pub mod plot;
pub mod runner;
