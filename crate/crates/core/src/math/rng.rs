use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;

/// Seeded random stream backed by ChaCha8.
///
/// ChaCha is a counter-based generator with a fixed, published algorithm, so a
/// `(seed, stream)` pair yields the same sequence on every platform. Streams let
/// one root seed fan out into independent per-purpose sequences without
/// coordination: `Rng::with_stream(seed, k)` never overlaps `Rng::with_stream(seed, j)`.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Standard normal sample.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bit(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Matrix of i.i.d. `N(0, std^2)` entries.
///
/// Draws `rows * cols` normals regardless of `std`, so callers sharing a stream
/// stay aligned across different scales.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    assert!(std >= 0.0, "std must be non-negative");
    Matrix::from_fn(rows, cols, |_, _| {
        let z = rng.normal();
        if std == 0.0 {
            0.0
        } else {
            std * z
        }
    })
}

/// Vector of i.i.d. `N(0, std^2)` entries, with the same stream discipline as [`gaussian_matrix`].
pub fn gaussian_vec(rng: &mut Rng, len: usize, std: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z = rng.normal();
            if std == 0.0 {
                0.0
            } else {
                std * z
            }
        })
        .collect()
}
