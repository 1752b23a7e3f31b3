//! Central finite-difference gradients for checking the analytic backward pass.

use serde::Serialize;

use crate::constructions::NetParams;

/// Denominator floor for [`relative_error`], so that entries whose gradient is
/// numerically zero are judged on absolute agreement.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for every parameter `i`.
pub fn finite_difference_grad(params: &NetParams, h: f64, mut loss: impl FnMut(&NetParams) -> f64) -> Vec<f64> {
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        probe.set_flat(&flat).expect("same length");
        let up = loss(&probe);
        flat[i] = base[i] - h;
        probe.set_flat(&flat).expect("same length");
        let down = loss(&probe);
        flat[i] = base[i];
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Richardson-extrapolated central differences, `(4 D(h) - D(2h)) / 3`, with `O(h^4)` truncation error.
///
/// Allows a larger `h` than plain central differences for the same truncation error,
/// which keeps cancellation noise down on sharp sigmoid networks.
pub fn richardson_difference_grad(params: &NetParams, h: f64, mut loss: impl FnMut(&NetParams) -> f64) -> Vec<f64> {
    let fine = finite_difference_grad(params, h, &mut loss);
    let coarse = finite_difference_grad(params, 2.0 * h, &mut loss);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub num_params: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
}

pub fn compare_gradients(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len());
    let mut report = GradCheckReport {
        num_params: analytic.len(),
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = relative_error(a, n);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = i;
        }
        report.max_abs_error = report.max_abs_error.max((a - n).abs());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }

    #[test]
    fn richardson_beats_plain_central_difference() {
        use crate::constructions::{Activation, Layer};
        use crate::math::Matrix;
        let net = NetParams::new(
            vec![Layer {
                weights: Matrix::from_vec(1, 1, vec![1.3]).unwrap(),
                bias: None,
                activation: Activation::Linear,
            }],
            1.0,
        )
        .unwrap();
        let f = |p: &NetParams| p.to_flat()[0].powi(5);
        let exact = 5.0 * 1.3f64.powi(4);
        let plain = finite_difference_grad(&net, 1e-3, f)[0];
        let rich = richardson_difference_grad(&net, 1e-3, f)[0];
        assert!((rich - exact).abs() < 1e-9);
        assert!((rich - exact).abs() < 1e-3 * (plain - exact).abs());
    }
}
