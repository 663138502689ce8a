#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod init;
pub mod model;
pub(crate) mod rng;
pub mod synthetic;
pub mod time_encoding;
pub mod training;

pub use error::{Error, Result};
