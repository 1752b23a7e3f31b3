use crate::constructions::{Activation, NetParams};
use crate::error::{Error, Result};
use crate::math::Matrix;

use super::Batch;

/// Gradient (or any per-parameter quantity) laid out like a [`NetParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &NetParams) -> Self {
        Gradients {
            layers: params
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(l.weights.data()).chain(l.bias.as_deref()))
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

    pub fn norm(&self) -> f64 {
        self.slices().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_congruent(&self, params: &NetParams) -> bool {
        self.layers.len() == params.depth()
            && self.slices().map(<[f64]>::len).eq(params.slices().map(<[f64]>::len))
    }
}

/// Activations of every layer for one batch; `activations[0]` is the input.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub activations: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("forward pass has an input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().expect("forward pass has an input")
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the network on a `batch x in_dim` input, keeping every layer's output.
pub fn forward(params: &NetParams, inputs: &Matrix) -> Result<ForwardPass> {
    if inputs.cols() != params.in_dim() {
        return Err(Error::shape(
            "forward",
            format!("input width {} for a network taking {}", inputs.cols(), params.in_dim()),
        ));
    }
    let alpha = params.alpha();
    let mut activations = Vec::with_capacity(params.depth() + 1);
    activations.push(inputs.clone());
    for layer in params.layers() {
        let prev = activations.last().expect("non-empty");
        let mut z = prev.matmul_t(&layer.weights)?;
        if let Some(b) = &layer.bias {
            for r in 0..z.rows() {
                for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                }
            }
        }
        if layer.activation == Activation::Sigmoid {
            for v in z.data_mut() {
                *v = sigmoid(alpha * *v);
            }
        }
        activations.push(z);
    }
    Ok(ForwardPass { activations })
}

/// Reverse-mode pass given `dL/d(output)`.
fn backward(params: &NetParams, pass: &ForwardPass, output_grad: Matrix) -> Result<Gradients> {
    let alpha = params.alpha();
    let mut grads = Vec::with_capacity(params.depth());
    let mut upstream = output_grad;
    for (i, layer) in params.layers().iter().enumerate().rev() {
        let mut delta = upstream;
        if layer.activation == Activation::Sigmoid {
            let out = &pass.activations[i + 1];
            for (d, &a) in delta.data_mut().iter_mut().zip(out.data()) {
                *d *= alpha * a * (1.0 - a);
            }
        }
        let weights = delta.t_matmul(&pass.activations[i])?;
        let bias = layer.bias.as_ref().map(|_| {
            let mut sums = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (s, d) in sums.iter_mut().zip(delta.row(r)) {
                    *s += d;
                }
            }
            sums
        });
        upstream = if i > 0 {
            delta.matmul(&layer.weights)?
        } else {
            Matrix::zeros(1, 1)
        };
        grads.push(LayerGrad { weights, bias });
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// Mean over the batch of `‖y - net(x)‖²`, with its gradient.
pub fn mse_loss_grad(params: &NetParams, batch: &Batch) -> Result<(f64, Gradients)> {
    let pass = forward(params, &batch.inputs)?;
    let out = pass.output();
    if out.shape() != batch.targets.shape() {
        return Err(Error::shape(
            "mse_loss_grad",
            format!("output {:?} vs targets {:?}", out.shape(), batch.targets.shape()),
        ));
    }
    let rows = out.rows() as f64;
    let resid = out.sub(&batch.targets)?;
    let loss = resid.data().iter().map(|r| r * r).sum::<f64>() / rows;
    let grads = backward(params, &pass, resid.scale(2.0 / rows))?;
    Ok((loss, grads))
}

/// Mean squared error without the gradient.
pub fn mse_loss(params: &NetParams, batch: &Batch) -> Result<f64> {
    let out = forward(params, &batch.inputs)?.into_output();
    let resid = out.sub(&batch.targets)?;
    Ok(resid.data().iter().map(|r| r * r).sum::<f64>() / out.rows() as f64)
}

fn require_pure_linear(params: &NetParams, op: &str) -> Result<()> {
    for (i, l) in params.layers().iter().enumerate() {
        if l.activation != Activation::Linear {
            return Err(Error::domain(format!("{op}: layer {i} is not linear")));
        }
        if l.bias.as_ref().is_some_and(|b| b.iter().any(|v| *v != 0.0)) {
            return Err(Error::domain(format!("{op}: layer {i} has a nonzero bias")));
        }
    }
    Ok(())
}

/// Product `W_L ··· W_1` of a linear network.
pub fn collapse(params: &NetParams) -> Result<Matrix> {
    require_pure_linear(params, "collapse")?;
    let layers = params.layers();
    let mut acc = layers[0].weights.clone();
    for l in &layers[1..] {
        acc = l.weights.matmul(&acc)?;
    }
    Ok(acc)
}

/// `β Σ_j ‖W_j‖₁²` over the weight matrices.
pub fn squared_l1_penalty(params: &NetParams, beta: f64) -> f64 {
    params
        .layers()
        .iter()
        .map(|l| l.weights.l1_norm().powi(2))
        .sum::<f64>()
        * beta
}

/// Expected squared error of a linear network over white inputs plus the squared-L1 penalty:
///
/// `‖collapse(params) - target‖_F² + β Σ_j ‖W_j‖₁²`
///
/// For `x ~ N(0, I)`, `E‖(W - F)x‖² = ‖W - F‖_F²`, which is what the batch of all
/// input basis vectors computes. The penalty's subgradient takes `sign(0) = 0`.
pub fn exact_linear_loss_grad(params: &NetParams, target: &Matrix, beta: f64) -> Result<(f64, Gradients)> {
    require_pure_linear(params, "exact_linear_loss_grad")?;
    if target.shape() != (params.out_dim(), params.in_dim()) {
        return Err(Error::shape(
            "exact_linear_loss_grad",
            format!(
                "target {:?} for a {}->{} network",
                target.shape(),
                params.in_dim(),
                params.out_dim()
            ),
        ));
    }
    let basis = Matrix::identity(params.in_dim());
    let pass = forward(params, &basis)?;
    // Row i of the output is net(e_i), i.e. column i of the collapsed map.
    let resid = pass.output().sub(&target.transpose())?;
    let fit = resid.data().iter().map(|r| r * r).sum::<f64>();
    let mut grads = backward(params, &pass, resid.scale(2.0))?;

    let mut penalty = 0.0;
    if beta > 0.0 {
        for (layer, grad) in params.layers().iter().zip(&mut grads.layers) {
            let l1 = layer.weights.l1_norm();
            penalty += beta * l1 * l1;
            let k = 2.0 * beta * l1;
            for (g, w) in grad.weights.data_mut().iter_mut().zip(layer.weights.data()) {
                *g += k * sign(*w);
            }
        }
    }
    Ok((fit + penalty, grads))
}

fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `‖collapse - target‖_F / ‖target‖_F`.
pub fn relative_frobenius_error(params: &NetParams, target: &Matrix) -> Result<f64> {
    let c = collapse(params)?;
    Ok(c.sub(target)?.frobenius_norm() / target.frobenius_norm())
}
