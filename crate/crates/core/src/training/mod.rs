//! Forward evaluation, analytic gradients, Adam and the training loop.

mod adam;
mod backprop;
pub mod gradcheck;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backprop::{
    collapse, exact_linear_loss_grad, forward, mse_loss, mse_loss_grad, relative_frobenius_error, sigmoid,
    squared_l1_penalty, ForwardPass, Gradients, LayerGrad,
};

use crate::constructions::{NetParams, SparsityMask};
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};
use crate::oracles::{dft_matrix, is_power_of_two};

/// RNG stream for training minibatches.
pub const STREAM_BATCHES: u64 = 1;
/// RNG stream for the held-out parity test set.
pub const STREAM_TEST: u64 = 2;

/// Inputs (`batch x in_dim`) paired with targets (`batch x out_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::shape(
                "Batch::new",
                format!("{} inputs vs {} targets", inputs.rows(), targets.rows()),
            ));
        }
        Ok(Batch { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Uniform random bit vectors labelled with their parity.
pub fn sample_binary_batch(rng: &mut Rng, n: usize, batch_size: usize) -> Batch {
    assert!(n >= 1 && batch_size >= 1);
    let mut inputs = Matrix::zeros(batch_size, n);
    let mut targets = Matrix::zeros(batch_size, 1);
    for r in 0..batch_size {
        let mut parity = 0.0;
        for v in inputs.row_mut(r) {
            if rng.bit() {
                *v = 1.0;
                parity = 1.0 - parity;
            }
        }
        targets[(r, 0)] = parity;
    }
    Batch { inputs, targets }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Parity { n: usize },
    Fft { n: usize },
}

impl Task {
    pub fn n(&self) -> usize {
        match *self {
            Task::Parity { n } | Task::Fft { n } => n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Parity { .. } => "parity",
            Task::Fft { .. } => "fft",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !is_power_of_two(n) || n < 2 {
            return Err(Error::invalid("n", format!("{n} is not a power of 2 >= 2")));
        }
        Ok(())
    }

    /// Realified DFT for the FFT task.
    pub fn linear_target(&self) -> Option<Matrix> {
        match *self {
            Task::Fft { n } => Some(dft_matrix(n).realify()),
            Task::Parity { .. } => None,
        }
    }

    pub fn default_loss(&self) -> LossKind {
        match self {
            Task::Parity { .. } => LossKind::MseMinibatch,
            Task::Fft { .. } => LossKind::ExactLinear,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean squared error on freshly sampled minibatches.
    MseMinibatch,
    /// Exact expectation loss of a linear network with the squared-L1 penalty.
    ExactLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_size: usize,
    /// Coefficient of the squared-L1 weight penalty.
    pub beta: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    #[serde(skip)]
    pub mask: Option<SparsityMask>,
    pub loss_kind: LossKind,
    /// Metrics are recorded every `eval_every` steps (and at the last step).
    pub eval_every: u64,
    /// Size of the held-out parity test set.
    pub test_samples: usize,
    /// Stop early once the gradient norm drops below this.
    pub grad_norm_tol: Option<f64>,
}

impl TrainConfig {
    pub fn parity() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            steps: 20_000,
            batch_size: 1000,
            beta: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            mask: None,
            loss_kind: LossKind::MseMinibatch,
            eval_every: 1000,
            test_samples: 10_000,
            grad_norm_tol: None,
        }
    }

    pub fn fft() -> Self {
        TrainConfig {
            steps: 200_000,
            beta: 1e-3,
            loss_kind: LossKind::ExactLinear,
            grad_norm_tol: Some(1e-7),
            ..TrainConfig::parity()
        }
    }

    pub fn for_task(task: &Task) -> Self {
        match task {
            Task::Parity { .. } => TrainConfig::parity(),
            Task::Fft { .. } => TrainConfig::fft(),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("{v} must be positive")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("adam_eps", self.adam_eps)?;
        for (field, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(field, format!("{b} must lie in [0, 1)")));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", format!("{} must be non-negative", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every", "must be at least 1"));
        }
        if self.test_samples == 0 {
            return Err(Error::invalid("test_samples", "must be at least 1"));
        }
        if let Some(tol) = self.grad_norm_tol {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::invalid("grad_norm_tol", format!("{tol} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// One row of the metric trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub loss: f64,
    pub test_error: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub trajectory: Vec<MetricRow>,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> MetricRow {
        *self.trajectory.last().expect("trajectory always holds the final step")
    }
}

/// Parity test metrics on a fixed batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParityEval {
    /// Fraction of inputs with `|output - parity| > 0.5`.
    pub bit_error: f64,
    pub mse: f64,
}

pub fn evaluate_parity(params: &NetParams, test: &Batch) -> Result<ParityEval> {
    let out = forward(params, &test.inputs)?.into_output();
    if out.shape() != test.targets.shape() {
        return Err(Error::shape("evaluate_parity", "output does not match targets"));
    }
    let mut wrong = 0usize;
    let mut sq = 0.0;
    for (o, t) in out.data().iter().zip(test.targets.data()) {
        let d = o - t;
        if d.abs() > 0.5 {
            wrong += 1;
        }
        sq += d * d;
    }
    let rows = out.rows() as f64;
    Ok(ParityEval {
        bit_error: wrong as f64 / rows,
        mse: sq / rows,
    })
}

/// The held-out parity test set for a given seed.
pub fn parity_test_set(n: usize, cfg: &TrainConfig) -> Batch {
    sample_binary_batch(&mut Rng::with_stream(cfg.seed, STREAM_TEST), n, cfg.test_samples)
}

pub fn check_task_params(task: &Task, params: &NetParams) -> Result<()> {
    task.validate()?;
    let n = task.n();
    let ok = match task {
        Task::Parity { .. } => params.in_dim() == n && params.out_dim() == 1,
        Task::Fft { .. } => params.in_dim() == 2 * n && params.out_dim() == 2 * n && params.is_linear(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            "train",
            format!(
                "{}->{} network does not fit task {} with n = {n}",
                params.in_dim(),
                params.out_dim(),
                task.name()
            ),
        ))
    }
}

/// Runs `cfg.steps` Adam steps from `params` on `task`.
///
/// Parity trains on fresh minibatches of random bit vectors; the FFT task uses the
/// exact expectation loss. Metrics are logged at step 0, every `eval_every` steps
/// and at the end, where `loss` and `grad_norm` are taken at the logged parameters.
pub fn train(params: &NetParams, cfg: &TrainConfig, task: &Task) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_task_params(task, params)?;
    if cfg.loss_kind != task.default_loss() {
        return Err(Error::invalid(
            "loss_kind",
            format!("{:?} does not apply to task {}", cfg.loss_kind, task.name()),
        ));
    }
    if let Some(mask) = &cfg.mask {
        if !mask.is_congruent(params) {
            return Err(Error::shape("train", "mask does not match the network"));
        }
    }

    let mut params = params.clone();
    let mut state = AdamState::new(&params);
    let adam = cfg.adam();
    let mut batches = Rng::with_stream(cfg.seed, STREAM_BATCHES);
    let test_set = match task {
        Task::Parity { n } => Some(parity_test_set(*n, cfg)),
        Task::Fft { .. } => None,
    };
    let target = task.linear_target();

    let mut trajectory = Vec::new();
    let mut step = 0u64;
    loop {
        let (loss, grads) = match task {
            Task::Parity { n } => {
                let batch = sample_binary_batch(&mut batches, *n, cfg.batch_size);
                mse_loss_grad(&params, &batch)?
            }
            Task::Fft { .. } => {
                exact_linear_loss_grad(&params, target.as_ref().expect("fft target"), cfg.beta)?
            }
        };
        let grad_norm = grads.norm();
        let converged = cfg.grad_norm_tol.is_some_and(|tol| grad_norm < tol);
        let last = step == cfg.steps || converged;
        if step % cfg.eval_every == 0 || last {
            let test_error = match (task, &test_set, &target) {
                (Task::Parity { .. }, Some(test), _) => evaluate_parity(&params, test)?.bit_error,
                (Task::Fft { .. }, _, Some(t)) => relative_frobenius_error(&params, t)?,
                _ => unreachable!("test data matches the task"),
            };
            trajectory.push(MetricRow {
                step,
                loss,
                test_error,
                grad_norm,
            });
        }
        if last {
            break;
        }
        adam_step(&mut params, &grads, &mut state, &adam, cfg.mask.as_ref())?;
        step += 1;
    }
    Ok(TrainOutcome { params, trajectory })
}

/// Writes a trajectory as CSV with columns `step,loss,test_error,grad_norm`.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["step", "loss", "test_error", "grad_norm"])
            .map_err(|e| Error::Serde(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}
