//! Dense linear algebra and seeded randomness shared by every other module.

mod matrix;
mod rng;

pub use matrix::{glorot_std, Matrix};
pub use rng::{gaussian_matrix, gaussian_vec, Rng};
