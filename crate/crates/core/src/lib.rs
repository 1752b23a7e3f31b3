//! Hand-coded efficient deep networks and gradient-descent basin experiments.
//!
//! Two families of networks are built exactly by hand and then used as
//! reference points for training:
//!
//! * a sigmoid XOR tree computing the parity of `n` bits with `2n - 1` neurons
//!   ([`constructions::build_parity_net`]);
//! * the radix-2 FFT written as a deep linear network with two complex
//!   nonzeros per row ([`constructions::build_fft_net`]).
//!
//! [`training`] provides forward/backward passes, the squared-L1 regularized
//! expectation loss for linear networks and Adam; [`experiments`] runs noise
//! sweeps around the hand-coded optima, sparsification curves and the L0
//! scaling study; [`cli`] wires everything to the `learnability` binary.

pub mod cli;
pub mod config;
pub mod constructions;
pub mod error;
pub mod experiments;
pub mod math;
pub mod oracles;
pub mod plot;
pub mod training;

pub use error::{Error, Result};
