//! Minimal reverse-mode engine: just the operators the attention layer needs.

mod check;
mod matrix;
mod tape;

pub use check::{grad_check, grad_check_with, GradCheckConfig, GradCheckReport};
pub use matrix::Matrix;
pub use tape::{Tape, Tensor, UnaryRule};
