//! Dense matrices and a small reverse-mode differentiation tape.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{finite_diff_check, GradCheck};
pub use matrix::Matrix;
pub use tape::{BatchStats, Gradients, Tape, Var};
