//! OpenMP-style task offloading onto a simulated ring of FPGA boards.
//!
//! Task programs are recorded as deferred dependence graphs, mapped onto
//! stencil IP cores spread over the boards, wired together with streaming
//! routes (on-board switch, MAC-framed inter-board links), and executed by a
//! discrete-event model of the datapath that produces both the functional
//! result and a simulated elapsed time.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod fabric;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod plan;
pub mod stencil;
pub mod taskgraph;
pub mod variant;

pub use error::{Error, Result};
