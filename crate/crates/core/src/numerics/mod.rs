//! Deterministic linear-algebra, RNG, and optimizer substrate.

mod adam;
mod matrix;
mod rng;

pub use adam::{adam_step, finite_diff_grad, AdamState};
pub use matrix::{softmax_row_in_place, softmax_rows, solve_small, DenseMatrix};
pub use rng::RngState;
