#![allow(dead_code)]

use learnability::constructions::{Activation, Layer, NetParams};
use learnability::math::{gaussian_matrix, glorot_std, Matrix, Rng};
use learnability::training::{collapse, forward};

pub fn random_sigmoid_net(rng: &mut Rng, dims: &[usize], alpha: f64) -> NetParams {
    let layers = dims
        .windows(2)
        .map(|d| Layer {
            weights: gaussian_matrix(rng, d[1], d[0], glorot_std(d[0], d[1])),
            bias: Some((0..d[1]).map(|_| 0.5 * rng.normal()).collect()),
            activation: Activation::Sigmoid,
        })
        .collect();
    NetParams::new(layers, alpha).unwrap()
}

pub fn random_linear_net(rng: &mut Rng, dim: usize, depth: usize) -> NetParams {
    let layers = (0..depth)
        .map(|_| Layer {
            weights: gaussian_matrix(rng, dim, dim, glorot_std(dim, dim)),
            bias: None,
            activation: Activation::Linear,
        })
        .collect();
    NetParams::new(layers, 1.0).unwrap()
}

/// Gradient of `||W_L ... W_1 - target||_F^2` with respect to each `W_j`, by the matrix chain rule.
pub fn symbolic_frobenius_grad(params: &NetParams, target: &Matrix) -> Vec<Matrix> {
    let layers = params.layers();
    let residual = collapse(params).unwrap().sub(target).unwrap();
    (0..layers.len())
        .map(|j| {
            let dim_in = layers[0].in_dim();
            let mut below = Matrix::identity(dim_in);
            for l in &layers[..j] {
                below = l.weights.matmul(&below).unwrap();
            }
            let dim_out = layers[j].out_dim();
            let mut above = Matrix::identity(dim_out);
            for l in &layers[j + 1..] {
                above = l.weights.matmul(&above).unwrap();
            }
            above
                .t_matmul(&residual)
                .unwrap()
                .matmul_t(&below)
                .unwrap()
                .scale(2.0)
        })
        .collect()
}

pub fn bits(n: usize, index: usize) -> Vec<f64> {
    (0..n).map(|i| ((index >> i) & 1) as f64).collect()
}

pub fn net_output(params: &NetParams, x: &[f64]) -> Vec<f64> {
    let input = Matrix::from_vec(1, x.len(), x.to_vec()).unwrap();
    forward(params, &input).unwrap().into_output().into_data()
}

/// Compares only entries whose stencil `[w - reach, w + reach]` stays clear of the `|w|` kink
/// at zero. Returns the report and the number of skipped entries.
pub fn compare_away_from_kink(
    params: &NetParams,
    reach: f64,
    analytic: &[f64],
    numeric: &[f64],
) -> (learnability::training::gradcheck::GradCheckReport, usize) {
    let flat = params.to_flat();
    let keep: Vec<usize> = (0..flat.len()).filter(|&i| flat[i].abs() > reach).collect();
    let a: Vec<f64> = keep.iter().map(|&i| analytic[i]).collect();
    let n: Vec<f64> = keep.iter().map(|&i| numeric[i]).collect();
    (
        learnability::training::gradcheck::compare_gradients(&a, &n),
        flat.len() - keep.len(),
    )
}
