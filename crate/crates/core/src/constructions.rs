//! Hand-coded optimal networks: the sigmoid XOR tree for parity and the
//! butterfly factorization of the DFT as a deep linear network.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{gaussian_matrix, glorot_std, Matrix, Rng};
use crate::oracles::{bit_reversal_perm, require_power_of_two, twiddle, ComplexMatrix};

/// Magnitude above which a realified block counts as a nonzero complex weight.
pub const BLOCK_NONZERO_TOL: f64 = 1e-12;

pub const NET_FORMAT: &str = "learnability-net";
pub const NET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `σ(α z)` with the network-wide inverse temperature α.
    Sigmoid,
    Linear,
}

/// One affine layer. `weights` is `out x in`; a `None` bias means the layer is purely linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    layers: Vec<Layer>,
    alpha: f64,
}

impl NetParams {
    pub fn new(layers: Vec<Layer>, alpha: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "NetParams::new",
                    format!(
                        "layer {i} outputs {} but layer {} takes {}",
                        pair[0].out_dim(),
                        i + 1,
                        pair[1].in_dim()
                    ),
                ));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if let Some(b) = &layer.bias {
                if b.len() != layer.out_dim() {
                    return Err(Error::shape(
                        "NetParams::new",
                        format!("layer {i} bias has {} entries for {} outputs", b.len(), layer.out_dim()),
                    ));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::domain(format!("layer {i} bias is not finite")));
                }
            }
        }
        let has_sigmoid = layers.iter().any(|l| l.activation == Activation::Sigmoid);
        if !(alpha.is_finite() && alpha > 0.0) && has_sigmoid {
            return Err(Error::invalid("alpha", format!("{alpha} must be positive")));
        }
        Ok(NetParams { layers, alpha })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn is_linear(&self) -> bool {
        self.layers.iter().all(|l| l.activation == Activation::Linear)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::out_dim).sum()
    }

    pub fn num_params(&self) -> usize {
        self.slices().map(<[f64]>::len).sum()
    }

    /// Parameter blocks in canonical order: per layer, weights (row-major) then bias.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers.iter().flat_map(|l| {
            std::iter::once(l.weights.data()).chain(l.bias.as_deref())
        })
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.data_mut());
            if let Some(b) = &mut l.bias {
                out.push(b.as_mut_slice());
            }
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "set_flat",
                format!("{} values for {} parameters", flat.len(), self.num_params()),
            ));
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    /// Count of parameters (weights and biases) that are exactly nonzero.
    pub fn l0(&self) -> usize {
        self.slices().flatten().filter(|v| **v != 0.0).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = NetDocument {
            format: NET_FORMAT.to_string(),
            version: NET_FORMAT_VERSION,
            alpha: self.alpha,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != NET_FORMAT {
            return Err(Error::invalid("format", format!("expected {NET_FORMAT:?}, got {:?}", doc.format)));
        }
        if doc.version != NET_FORMAT_VERSION {
            return Err(Error::invalid("version", format!("unsupported version {}", doc.version)));
        }
        NetParams::new(doc.layers, doc.alpha)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NetParams::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDocument {
    format: String,
    version: u32,
    alpha: f64,
    layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    pub weights: Vec<bool>,
    pub bias: Option<Vec<bool>>,
}

/// Per-parameter flags; `true` marks an entry that is nonzero in the reference
/// network and therefore allowed to train.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityMask {
    pub layers: Vec<LayerMask>,
}

impl SparsityMask {
    pub fn popcount(&self) -> usize {
        self.slices().flatten().filter(|b| **b).count()
    }

    pub fn slices(&self) -> impl Iterator<Item = &[bool]> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(l.weights.as_slice()).chain(l.bias.as_deref()))
    }

    pub fn is_congruent(&self, params: &NetParams) -> bool {
        self.layers.len() == params.depth()
            && self.slices().map(<[bool]>::len).eq(params.slices().map(<[f64]>::len))
    }

    /// Zeroes every entry whose flag is `false`.
    pub fn apply(&self, params: &mut NetParams) -> Result<()> {
        if !self.is_congruent(params) {
            return Err(Error::shape("SparsityMask::apply", "mask does not match network"));
        }
        for (vals, flags) in params.slices_mut().into_iter().zip(self.slices()) {
            for (v, &keep) in vals.iter_mut().zip(flags) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        Ok(())
    }
}

pub fn mask_of(params: &NetParams, tol: f64) -> SparsityMask {
    assert!(tol >= 0.0, "tolerance must be non-negative");
    let keep = |v: &f64| v.abs() > tol;
    SparsityMask {
        layers: params
            .layers()
            .iter()
            .map(|l| LayerMask {
                weights: l.weights.data().iter().map(keep).collect(),
                bias: l.bias.as_ref().map(|b| b.iter().map(keep).collect()),
            })
            .collect(),
    }
}

/// Number of complex weights in a realified network: 2x2 blocks with any entry above
/// [`BLOCK_NONZERO_TOL`].
pub fn complex_l0(params: &NetParams) -> Result<usize> {
    params.layers().iter().map(|l| complex_l0_of(&l.weights)).sum()
}

pub fn complex_l0_of(w: &Matrix) -> Result<usize> {
    let (rows, cols) = w.shape();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::domain(format!(
            "complex L0 needs even layer dimensions, got {rows}x{cols}"
        )));
    }
    let mut count = 0;
    for br in 0..rows / 2 {
        let top = w.row(2 * br);
        let bottom = w.row(2 * br + 1);
        for bc in 0..cols / 2 {
            let c = 2 * bc;
            if top[c].abs() > BLOCK_NONZERO_TOL
                || top[c + 1].abs() > BLOCK_NONZERO_TOL
                || bottom[c].abs() > BLOCK_NONZERO_TOL
                || bottom[c + 1].abs() > BLOCK_NONZERO_TOL
            {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Sigmoid XOR tree computing parity of `n` bits.
///
/// Every stage turns a pair of bits `(a, b)` into an OR neuron `σ(α(a + b - 0.5))`
/// and an AND neuron `σ(α(a + b - 1.5))`; their difference is the XOR of the pair.
/// The next stage reads each XOR as `u - v` through weights `+1, -1`, and a single
/// output neuron `σ(α(u - v - 0.5))` closes the tree. Layer widths are
/// `n, n/2, ..., 2, 1`, for `2n - 1` neurons in `log2(n) + 1` layers.
pub fn build_parity_net(n: usize, alpha: f64) -> Result<NetParams> {
    let stages = require_power_of_two(n, "build_parity_net")? as usize;
    if n < 2 {
        return Err(Error::domain("parity tree needs n >= 2"));
    }
    let mut layers = Vec::with_capacity(stages + 1);
    let mut in_dim = n;
    for stage in 0..stages {
        // Virtual bits entering this stage: raw inputs first, then u - v pairs.
        let bits = n >> stage;
        let out_dim = bits;
        let mut w = Matrix::zeros(out_dim, in_dim);
        let mut b = vec![0.0; out_dim];
        for pair in 0..bits / 2 {
            for (gate, bias) in [(0, -0.5), (1, -1.5)] {
                let row = 2 * pair + gate;
                for bit in [2 * pair, 2 * pair + 1] {
                    if stage == 0 {
                        w[(row, bit)] = 1.0;
                    } else {
                        w[(row, 2 * bit)] = 1.0;
                        w[(row, 2 * bit + 1)] = -1.0;
                    }
                }
                b[row] = bias;
            }
        }
        layers.push(Layer {
            weights: w,
            bias: Some(b),
            activation: Activation::Sigmoid,
        });
        in_dim = out_dim;
    }
    let out = Matrix::from_vec(1, 2, vec![1.0, -1.0])?;
    layers.push(Layer {
        weights: out,
        bias: Some(vec![-0.5]),
        activation: Activation::Sigmoid,
    });
    NetParams::new(layers, alpha)
}

fn linear_layer(weights: Matrix) -> Layer {
    Layer {
        weights,
        bias: None,
        activation: Activation::Linear,
    }
}

/// Radix-2 decimation-in-time FFT as a deep linear network over interleaved
/// `(re, im)` coordinates: a bit-reversal permutation layer followed by `log2(n)`
/// butterfly layers, each row holding two complex nonzeros. Layers are bias-free.
pub fn build_fft_net(n: usize) -> Result<NetParams> {
    let stages = require_power_of_two(n, "build_fft_net")?;
    if n < 2 {
        return Err(Error::domain("fft network needs n >= 2"));
    }
    let perm = bit_reversal_perm(n)?;
    let mut p = ComplexMatrix::new(Matrix::zeros(n, n), Matrix::zeros(n, n))?;
    for (i, &src) in perm.iter().enumerate() {
        p.re[(i, src)] = 1.0;
    }
    let mut layers = vec![linear_layer(p.realify())];

    for s in 1..=stages {
        let len = 1usize << s;
        let half = len / 2;
        let mut b = ComplexMatrix::new(Matrix::zeros(n, n), Matrix::zeros(n, n))?;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let (top, bot) = (start + j, start + j + half);
                let w = twiddle(j, len);
                b.re[(top, top)] = 1.0;
                b.re[(top, bot)] = w.re;
                b.im[(top, bot)] = w.im;
                b.re[(bot, top)] = 1.0;
                b.re[(bot, bot)] = 0.0 - w.re;
                b.im[(bot, bot)] = 0.0 - w.im;
            }
        }
        layers.push(linear_layer(b.realify()));
    }
    NetParams::new(layers, 1.0)
}

/// Closed-form complex L0 of [`build_fft_net`]: `2n log2(n)` butterfly entries plus `n` for the permutation.
pub fn fft_net_l0(n: usize) -> usize {
    let log = n.trailing_zeros() as usize;
    2 * n * log + n
}

/// Fresh network with the same layer shapes and activations as `template`:
/// weights drawn `N(0, glorot_std(fan_in, fan_out)^2)`, biases (where present) zero.
pub fn glorot_init_like(template: &NetParams, rng: &mut Rng) -> NetParams {
    let layers = template
        .layers()
        .iter()
        .map(|l| {
            let (rows, cols) = l.weights.shape();
            Layer {
                weights: gaussian_matrix(rng, rows, cols, glorot_std(cols, rows)),
                bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                activation: l.activation,
            }
        })
        .collect();
    NetParams::new(layers, template.alpha()).expect("template shapes are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::dft_matrix;

    fn collapse_naive(p: &NetParams) -> Matrix {
        let mut acc = p.layers()[0].weights.clone();
        for l in &p.layers()[1..] {
            acc = l.weights.matmul(&acc).unwrap();
        }
        acc
    }

    #[test]
    fn parity_net_shape() {
        let p = build_parity_net(16, 10.0).unwrap();
        assert_eq!(p.depth(), 5);
        assert_eq!(p.neuron_count(), 31);
        let widths: Vec<usize> = p.layers().iter().map(Layer::out_dim).collect();
        assert_eq!(widths, vec![16, 8, 4, 2, 1]);
        for l in p.layers() {
            assert!(l.weights.data().iter().all(|w| [-1.0, 0.0, 1.0].contains(w)));
            assert!(l.bias.as_ref().unwrap().iter().all(|b| *b == -0.5 || *b == -1.5));
        }
    }

    #[test]
    fn parity_net_rejects_bad_n() {
        assert!(build_parity_net(12, 10.0).is_err());
        assert!(build_parity_net(1, 10.0).is_err());
        assert!(build_parity_net(8, 0.0).is_err());
    }

    #[test]
    fn parity_mask_marks_unit_weights() {
        let p = build_parity_net(8, 10.0).unwrap();
        let m = mask_of(&p, 0.5);
        for (layer, lm) in p.layers().iter().zip(&m.layers) {
            for (w, keep) in layer.weights.data().iter().zip(&lm.weights) {
                assert_eq!(*keep, w.abs() == 1.0);
            }
        }
        // Each non-final neuron reads 2 (first stage) or 4 inputs; the output reads 2.
        let weight_nonzeros: usize = m.layers.iter().flat_map(|l| &l.weights).filter(|b| **b).count();
        assert_eq!(weight_nonzeros, 8 * 2 + 4 * 4 + 2 * 4 + 2);
    }

    #[test]
    fn mask_popcount_is_l0() {
        let p = build_parity_net(8, 10.0).unwrap();
        assert_eq!(mask_of(&p, 0.0).popcount(), p.l0());
        let f = build_fft_net(8).unwrap();
        assert_eq!(mask_of(&f, 0.0).popcount(), f.l0());
        let zero = NetParams::new(vec![linear_layer(Matrix::zeros(3, 3))], 1.0).unwrap();
        assert_eq!(mask_of(&zero, 0.0).popcount(), 0);
    }

    #[test]
    fn fft_net_factorizes_dft() {
        for n in [2usize, 4, 8, 16, 32, 64] {
            let net = build_fft_net(n).unwrap();
            assert_eq!(net.depth(), n.trailing_zeros() as usize + 1);
            let err = collapse_naive(&net).max_abs_diff(&dft_matrix(n).realify()).unwrap();
            assert!(err < 1e-10, "n={n} err={err}");
            assert_eq!(complex_l0(&net).unwrap(), fft_net_l0(n));
        }
    }

    #[test]
    fn fft_n2_is_a_single_butterfly_after_identity_permutation() {
        let net = build_fft_net(2).unwrap();
        assert_eq!(net.layers()[0].weights, Matrix::identity(4));
        assert_eq!(net.layers()[1].weights, dft_matrix(2).realify());
    }

    #[test]
    fn complex_l0_counts() {
        assert_eq!(complex_l0(&build_fft_net(8).unwrap()).unwrap(), 56);
        assert_eq!(complex_l0(&build_fft_net(32).unwrap()).unwrap(), 352);
        let dense = NetParams::new(vec![linear_layer(dft_matrix(32).realify())], 1.0).unwrap();
        assert_eq!(complex_l0(&dense).unwrap(), 1024);
        let zero = NetParams::new(vec![linear_layer(Matrix::zeros(4, 4))], 1.0).unwrap();
        assert_eq!(complex_l0(&zero).unwrap(), 0);
        let odd = NetParams::new(vec![linear_layer(Matrix::zeros(3, 4))], 1.0).unwrap();
        assert!(matches!(complex_l0(&odd), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_round_trip_and_mismatch() {
        let mut p = build_parity_net(4, 10.0).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.num_params());
        p.set_flat(&flat).unwrap();
        assert_eq!(p.to_flat(), flat);
        assert!(p.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn rejects_incompatible_layers() {
        let a = linear_layer(Matrix::zeros(3, 2));
        let b = linear_layer(Matrix::zeros(2, 4));
        assert!(NetParams::new(vec![a, b], 1.0).is_err());
    }

    #[test]
    fn json_rejects_unknown_version() {
        let text = build_fft_net(2).unwrap().to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(NetParams::from_json(&text).is_err());
    }
}
