// Dense numerical kernels index several parallel arrays with one loop
// variable; iterator chains would obscure them.
#![allow(clippy::needless_range_loop)]

pub mod centralized;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod market;
pub mod output;
pub mod parallel;
pub mod qp;
pub mod scenarios;
pub mod subproblem;

pub use error::{Error, Result};
