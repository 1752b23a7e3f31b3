//! Ground-truth functions the learned networks are measured against.
//!
//! The DFT is unnormalized with forward sign `exp(-2πi/n)`: entry `(j, k)` of
//! [`dft_matrix`] is `ω^{jk}`, and [`fft_reference`] computes the same map.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Complex matrix stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub re: Matrix,
    pub im: Matrix,
}

impl ComplexMatrix {
    pub fn new(re: Matrix, im: Matrix) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::shape(
                "ComplexMatrix::new",
                format!("re {:?} vs im {:?}", re.shape(), im.shape()),
            ));
        }
        Ok(ComplexMatrix { re, im })
    }

    pub fn rows(&self) -> usize {
        self.re.rows()
    }

    pub fn cols(&self) -> usize {
        self.re.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        Complex64::new(self.re[(r, c)], self.im[(r, c)])
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols() {
            return Err(Error::shape(
                "ComplexMatrix::mul_vec",
                format!("{} columns vs vector of {}", self.cols(), x.len()),
            ));
        }
        Ok((0..self.rows())
            .map(|r| (0..self.cols()).map(|c| self.get(r, c) * x[c]).sum())
            .collect())
    }

    /// Real matrix of twice the size acting on interleaved `(re, im)` coordinates:
    /// entry `a + bi` becomes the block `[[a, -b], [b, a]]`.
    pub fn realify(&self) -> Matrix {
        let mut out = Matrix::zeros(2 * self.rows(), 2 * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                let z = self.get(r, c);
                out[(2 * r, 2 * c)] = z.re;
                // `0.0 - x` keeps exact zeros positive.
                out[(2 * r, 2 * c + 1)] = 0.0 - z.im;
                out[(2 * r + 1, 2 * c)] = z.im;
                out[(2 * r + 1, 2 * c + 1)] = z.re;
            }
        }
        out
    }
}

/// Interleaves a complex vector as `[re0, im0, re1, im1, ...]`.
pub fn realify_vec(x: &[Complex64]) -> Vec<f64> {
    x.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn parity_oracle(bits: &[f64]) -> Result<u8> {
    let mut acc = 0u8;
    for &b in bits {
        if b == 1.0 {
            acc ^= 1;
        } else if b != 0.0 {
            return Err(Error::domain(format!("parity input {b} is not a bit")));
        }
    }
    Ok(acc)
}

pub fn is_power_of_two(n: usize) -> bool {
    n >= 1 && n.is_power_of_two()
}

pub(crate) fn require_power_of_two(n: usize, what: &str) -> Result<u32> {
    if !is_power_of_two(n) {
        return Err(Error::domain(format!("{what}: n = {n} is not a power of 2")));
    }
    Ok(n.trailing_zeros())
}

/// `exp(-2πi t / n)`, with the quarter turns snapped so that exact zeros stay zero.
pub fn twiddle(t: usize, n: usize) -> Complex64 {
    let t = t % n;
    if (4 * t) % n == 0 {
        return match 4 * t / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
    }
    let theta = -2.0 * PI * t as f64 / n as f64;
    Complex64::new(theta.cos(), theta.sin())
}

pub fn dft_matrix(n: usize) -> ComplexMatrix {
    assert!(n >= 1, "dft size must be positive");
    let re = Matrix::from_fn(n, n, |j, k| twiddle(j * k % n, n).re);
    let im = Matrix::from_fn(n, n, |j, k| twiddle(j * k % n, n).im);
    ComplexMatrix { re, im }
}

/// Index `i` mapped to its bit reversal over `log2(n)` bits.
pub fn bit_reversal_perm(n: usize) -> Result<Vec<usize>> {
    let bits = require_power_of_two(n, "bit_reversal_perm")?;
    Ok((0..n)
        .map(|i| {
            if bits == 0 {
                0
            } else {
                i.reverse_bits() >> (usize::BITS - bits)
            }
        })
        .collect())
}

/// Iterative radix-2 decimation-in-time FFT.
pub fn fft_reference(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    let perm = bit_reversal_perm(n)?;
    let mut a: Vec<Complex64> = perm.iter().map(|&p| x[p]).collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let w = twiddle(j, len);
                let u = a[start + j];
                let v = w * a[start + j + half];
                a[start + j] = u + v;
                a[start + j + half] = u - v;
            }
        }
        len *= 2;
    }
    Ok(a)
}
