//! Basin-of-attraction sweeps, magnitude-pruning curves and the L0 scaling study.
//!
//! Every sweep cell is a pure function of `(task, scale, seed, config)`: the
//! perturbation and the training stream are both derived from the cell seed, so
//! cells can run in any order or on any number of worker threads and produce the
//! same records. Records are sorted by `(n, scale, seed)` before they leave.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constructions::{
    build_fft_net, build_parity_net, complex_l0, glorot_init_like, mask_of, NetParams, SparsityMask,
};
use crate::error::{Error, Result};
use crate::math::{gaussian_matrix, gaussian_vec, glorot_std, Matrix, Rng};
use crate::training::{
    evaluate_parity, parity_test_set, relative_frobenius_error, train, MetricRow, Task, TrainConfig,
};

/// RNG stream for initialization noise.
pub const STREAM_PERTURB: u64 = 3;
/// RNG stream for fresh random initializations.
pub const STREAM_RANDOM_INIT: u64 = 4;

/// Error budget floor for [`budgeted_sparsification`].
pub const BUDGET_ABS_FLOOR: f64 = 1e-3;
/// Relative slack over the unpruned error for [`budgeted_sparsification`].
pub const BUDGET_REL_SLACK: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Dimensionless noise scales, ascending. Each layer's noise std is `scale * glorot_std(fan_in, fan_out)`.
    pub scales: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "at least one seed is required"));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scales", "scales must be finite and non-negative"));
        }
        if self.scales.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("scales", "scales must be sorted ascending"));
        }
        Ok(())
    }
}

/// Adds Glorot-scaled Gaussian noise: weights get `N(0, (scale * glorot_std(fan_in, fan_out))^2)`,
/// biases `N(0, (scale * glorot_std(fan_in, 1))^2)`. Scale 0 returns the input unchanged.
pub fn perturb(params: &NetParams, scale: f64, rng: &mut Rng) -> NetParams {
    assert!(scale >= 0.0, "noise scale must be non-negative");
    let mut out = params.clone();
    if scale == 0.0 {
        return out;
    }
    for layer in out.layers_mut() {
        let (rows, cols) = layer.weights.shape();
        let noise = gaussian_matrix(rng, rows, cols, scale * glorot_std(cols, rows));
        for (w, z) in layer.weights.data_mut().iter_mut().zip(noise.data()) {
            *w += z;
        }
        if let Some(bias) = &mut layer.bias {
            let noise = gaussian_vec(rng, bias.len(), scale * glorot_std(cols, 1));
            for (b, z) in bias.iter_mut().zip(noise) {
                *b += z;
            }
        }
    }
    out
}

/// One point of a magnitude-pruning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub l0: usize,
    pub rel_error: f64,
}

/// Zeroes every weight with `|w| < threshold`.
pub fn prune(params: &NetParams, threshold: f64) -> NetParams {
    let mut out = params.clone();
    for s in out.slices_mut() {
        for w in s.iter_mut() {
            if w.abs() < threshold {
                *w = 0.0;
            }
        }
    }
    out
}

/// Magnitude-pruning sweep of a linear network against `target`.
///
/// Thresholds are 0, every distinct nonzero `|w|`, and finally the next float above
/// the largest magnitude (which prunes everything). Each point reports the complex L0
/// and relative Frobenius error of the pruned network.
pub fn sparsify_curve(params: &NetParams, target: &Matrix) -> Result<Vec<CurvePoint>> {
    if !params.is_linear() {
        return Err(Error::domain("sparsify_curve needs a linear network"));
    }
    let mut mags: Vec<f64> = params
        .slices()
        .flatten()
        .map(|w| w.abs())
        .filter(|m| *m > 0.0)
        .collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup();

    let mut thresholds = Vec::with_capacity(mags.len() + 2);
    thresholds.push(0.0);
    thresholds.extend_from_slice(&mags);
    let top = mags.last().copied().unwrap_or(0.0);
    thresholds.push(next_up(top));

    thresholds
        .into_iter()
        .map(|threshold| {
            let pruned = prune(params, threshold);
            Ok(CurvePoint {
                threshold,
                l0: complex_l0(&pruned)?,
                rel_error: relative_frobenius_error(&pruned, target)?,
            })
        })
        .collect()
}

fn next_up(x: f64) -> f64 {
    debug_assert!(x >= 0.0 && x.is_finite());
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// The curve point with the lowest error, ties broken toward smaller L0.
pub fn optimal_sparsification(curve: &[CurvePoint]) -> Result<CurvePoint> {
    curve
        .iter()
        .copied()
        .min_by(|a, b| a.rel_error.total_cmp(&b.rel_error).then(a.l0.cmp(&b.l0)))
        .ok_or_else(|| Error::domain("empty sparsity curve"))
}

/// The sparsest point whose error stays within `max(1e-3, 1.1 * unpruned error)`.
pub fn budgeted_sparsification(curve: &[CurvePoint]) -> Result<CurvePoint> {
    let baseline = curve
        .first()
        .ok_or_else(|| Error::domain("empty sparsity curve"))?
        .rel_error;
    let budget = BUDGET_ABS_FLOOR.max(BUDGET_REL_SLACK * baseline);
    curve
        .iter()
        .copied()
        .filter(|p| p.rel_error <= budget)
        .min_by(|a, b| a.l0.cmp(&b.l0).then(a.rel_error.total_cmp(&b.rel_error)))
        .ok_or_else(|| Error::domain("no curve point within the error budget"))
}

/// Lowest-error point among those with `l0 <= max_l0`.
pub fn best_within_l0(curve: &[CurvePoint], max_l0: usize) -> Option<CurvePoint> {
    curve
        .iter()
        .copied()
        .filter(|p| p.l0 <= max_l0)
        .min_by(|a, b| a.rel_error.total_cmp(&b.rel_error).then(a.l0.cmp(&b.l0)))
}

/// L0 divided by `n log2 n`.
pub fn scaling_factor(l0: usize, n: usize) -> f64 {
    let log = n.trailing_zeros() as f64;
    l0 as f64 / (n as f64 * log)
}

/// How a cell's starting point was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Exact network plus Glorot-scaled noise on every parameter.
    Perturbed,
    /// Exact sparsity pattern enforced during training.
    Masked,
    /// The exact network, untrained.
    Handcoded,
    /// Small perturbation of the exact network.
    Near,
    /// Far from the exact network (fresh Glorot init or large perturbation).
    Far,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Perturbed => "perturbed",
            Condition::Masked => "masked",
            Condition::Handcoded => "handcoded",
            Condition::Near => "near",
            Condition::Far => "far",
        }
    }
}

/// Everything measured for one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: Task,
    pub condition: Condition,
    pub noise_scale: f64,
    pub seed: u64,
    pub alpha: f64,
    pub masked: bool,
    pub masked_init: Option<MaskedInit>,
    pub train: TrainConfig,
    pub final_loss: f64,
    pub final_test_error: f64,
    pub final_bit_error: Option<f64>,
    pub final_test_mse: Option<f64>,
    pub rel_frobenius_error: Option<f64>,
    pub trajectory: Vec<MetricRow>,
    pub sparsity_curve: Option<Vec<CurvePoint>>,
    pub optimal: Option<CurvePoint>,
    pub budgeted: Option<CurvePoint>,
    pub optimal_l0: Option<usize>,
    pub scaling_factor: Option<f64>,
}

impl RunRecord {
    fn sort_key(&self) -> (usize, f64, u64, Condition) {
        (self.task.n(), self.noise_scale, self.seed, self.condition)
    }
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        let (an, ascale, aseed, acond) = a.sort_key();
        let (bn, bscale, bseed, bcond) = b.sort_key();
        an.cmp(&bn)
            .then(ascale.total_cmp(&bscale))
            .then(aseed.cmp(&bseed))
            .then((acond as u8).cmp(&(bcond as u8)))
    })
}

/// The hand-coded network for a task.
pub fn exact_net(task: &Task, alpha: f64) -> Result<NetParams> {
    task.validate()?;
    match *task {
        Task::Parity { n } => build_parity_net(n, alpha),
        Task::Fft { n } => build_fft_net(n),
    }
}

/// Trains `init` and measures it; `linear` tasks also get a sparsity curve.
fn run_cell(
    task: &Task,
    condition: Condition,
    scale: f64,
    init: NetParams,
    cfg: &TrainConfig,
    skip_training: bool,
) -> Result<RunRecord> {
    let (params, trajectory) = if skip_training {
        let cfg0 = TrainConfig {
            steps: 0,
            ..cfg.clone()
        };
        let out = train(&init, &cfg0, task)?;
        (out.params, out.trajectory)
    } else {
        let out = train(&init, cfg, task)?;
        (out.params, out.trajectory)
    };
    let last = *trajectory.last().expect("train records the final step");

    let mut record = RunRecord {
        task: *task,
        condition,
        noise_scale: scale,
        seed: cfg.seed,
        alpha: params.alpha(),
        masked: cfg.mask.is_some(),
        masked_init: None,
        train: cfg.clone(),
        final_loss: last.loss,
        final_test_error: last.test_error,
        final_bit_error: None,
        final_test_mse: None,
        rel_frobenius_error: None,
        trajectory,
        sparsity_curve: None,
        optimal: None,
        budgeted: None,
        optimal_l0: None,
        scaling_factor: None,
    };
    if skip_training {
        record.train.steps = 0;
    }
    match *task {
        Task::Parity { n } => {
            let eval = evaluate_parity(&params, &parity_test_set(n, cfg))?;
            record.final_bit_error = Some(eval.bit_error);
            record.final_test_mse = Some(eval.mse);
        }
        Task::Fft { n } => {
            let target = task.linear_target().expect("fft target");
            record.rel_frobenius_error = Some(relative_frobenius_error(&params, &target)?);
            let curve = sparsify_curve(&params, &target)?;
            let optimal = optimal_sparsification(&curve)?;
            let budgeted = budgeted_sparsification(&curve)?;
            record.optimal = Some(optimal);
            record.budgeted = Some(budgeted);
            record.optimal_l0 = Some(budgeted.l0);
            record.scaling_factor = Some(scaling_factor(budgeted.l0, n));
            record.sparsity_curve = Some(curve);
        }
    }
    Ok(record)
}

fn run_parallel<T, R, F>(threads: usize, jobs: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    if threads <= 1 {
        return jobs.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(f).collect())
}

/// Starting values on the support of a masked sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskedInit {
    /// Exact values plus the cell's Glorot-scaled noise.
    #[default]
    Perturb,
    /// Fresh `N(0, glorot_std^2)` values, independent of the noise scale.
    Redraw,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Inverse temperature of the parity network.
    pub alpha: f64,
    /// Worker threads; each cell runs single-threaded.
    pub threads: usize,
    pub masked_init: MaskedInit,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            alpha: 10.0,
            threads: 1,
            masked_init: MaskedInit::Perturb,
        }
    }
}

/// Starting point of a basin-sweep cell.
///
/// Unmasked cells perturb every parameter. Masked cells start from either the same
/// perturbation or a fresh Glorot draw (see [`MaskedInit`]), then reset every entry
/// outside the exact network's support to zero; training keeps those entries frozen.
pub fn sweep_init(
    task: &Task,
    scale: f64,
    seed: u64,
    masked: Option<MaskedInit>,
    alpha: f64,
) -> Result<(NetParams, Option<SparsityMask>)> {
    let exact = exact_net(task, alpha)?;
    let mut init = match masked {
        Some(MaskedInit::Redraw) => {
            glorot_init_like(&exact, &mut Rng::with_stream(seed, STREAM_RANDOM_INIT))
        }
        _ => perturb(&exact, scale, &mut Rng::with_stream(seed, STREAM_PERTURB)),
    };
    if masked.is_some() {
        let mask = mask_of(&exact, 0.0);
        mask.apply(&mut init)?;
        Ok((init, Some(mask)))
    } else {
        Ok((init, None))
    }
}

/// Trains perturbed copies of the exact network for every `(scale, seed)` cell.
pub fn basin_sweep(
    task: &Task,
    noise: &NoiseSpec,
    cfg: &TrainConfig,
    masked: bool,
    opts: &SweepOptions,
) -> Result<Vec<RunRecord>> {
    task.validate()?;
    noise.validate()?;
    cfg.validate()?;
    let cells: Vec<(f64, u64)> = noise
        .scales
        .iter()
        .flat_map(|&s| noise.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let condition = if masked {
        Condition::Masked
    } else {
        Condition::Perturbed
    };
    let mut records = run_parallel(opts.threads, &cells, |&(scale, seed)| {
        let (init, mask) = sweep_init(task, scale, seed, masked.then_some(opts.masked_init), opts.alpha)?;
        let cell_cfg = TrainConfig {
            seed,
            mask,
            ..cfg.clone()
        };
        log::info!("{} n={} {} scale={scale} seed={seed}", task.name(), task.n(), condition.as_str());
        let mut record = run_cell(task, condition, scale, init, &cell_cfg, false)?;
        record.masked_init = masked.then_some(opts.masked_init);
        Ok(record)
    })?;
    sort_records(&mut records);
    Ok(records)
}

/// Median of `final_bit_error` (parity) or `final_test_error` per noise scale, ascending by scale.
pub fn median_error_by_scale(records: &[RunRecord]) -> Vec<(f64, f64)> {
    let mut scales: Vec<f64> = records.iter().map(|r| r.noise_scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    scales
        .into_iter()
        .map(|s| {
            let mut errs: Vec<f64> = records
                .iter()
                .filter(|r| r.noise_scale == s)
                .map(|r| r.final_bit_error.unwrap_or(r.final_test_error))
                .collect();
            errs.sort_by(f64::total_cmp);
            let m = errs.len();
            let median = if m % 2 == 1 {
                errs[m / 2]
            } else {
                0.5 * (errs[m / 2 - 1] + errs[m / 2])
            };
            (s, median)
        })
        .collect()
}

/// Largest scale whose median error is below `tol`, if any.
pub fn largest_successful_scale(records: &[RunRecord], tol: f64) -> Option<f64> {
    median_error_by_scale(records)
        .into_iter()
        .filter(|(_, e)| *e < tol)
        .map(|(s, _)| s)
        .last()
}

/// How the "far" condition of the scaling study is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum FarInit {
    /// Fresh Glorot-normal network of the hand-coded depth and width.
    Random,
    /// The exact network perturbed at a large scale.
    Perturb { scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub condition: Condition,
    pub l0: usize,
    pub rel_error: f64,
    pub scaling_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub points: Vec<ScalingPoint>,
    pub records: Vec<RunRecord>,
}

/// Initial network for a scaling-study cell.
pub fn fft_init(n: usize, condition: Condition, near_scale: f64, far: FarInit, seed: u64) -> Result<NetParams> {
    let exact = build_fft_net(n)?;
    Ok(match (condition, far) {
        (Condition::Near, _) => perturb(&exact, near_scale, &mut Rng::with_stream(seed, STREAM_PERTURB)),
        (Condition::Far, FarInit::Random) => {
            glorot_init_like(&exact, &mut Rng::with_stream(seed, STREAM_RANDOM_INIT))
        }
        (Condition::Far, FarInit::Perturb { scale }) => {
            perturb(&exact, scale, &mut Rng::with_stream(seed, STREAM_PERTURB))
        }
        _ => exact,
    })
}

/// Complex L0 after sparsification, per size and initial condition.
///
/// The hand-coded network is measured as built; `near` and `far` networks are trained
/// with `cfg` first. The reported L0 is the budgeted sparsification (sparsest pruning
/// that keeps the error within `max(1e-3, 1.1 * unpruned)`).
pub fn scaling_study(
    sizes: &[usize],
    near_scale: f64,
    far: FarInit,
    cfg: &TrainConfig,
    threads: usize,
) -> Result<ScalingStudy> {
    cfg.validate()?;
    for &n in sizes {
        Task::Fft { n }.validate()?;
    }
    if !(near_scale.is_finite() && near_scale >= 0.0) {
        return Err(Error::invalid("near_scale", "must be finite and non-negative"));
    }
    let cells: Vec<(usize, Condition)> = sizes
        .iter()
        .flat_map(|&n| [Condition::Handcoded, Condition::Near, Condition::Far].map(|c| (n, c)))
        .collect();
    let mut records = run_parallel(threads, &cells, |&(n, condition)| {
        let task = Task::Fft { n };
        let init = fft_init(n, condition, near_scale, far, cfg.seed)?;
        let scale = match (condition, far) {
            (Condition::Near, _) => near_scale,
            (Condition::Far, FarInit::Perturb { scale }) => scale,
            _ => 0.0,
        };
        log::info!("scaling study n={n} {}", condition.as_str());
        run_cell(&task, condition, scale, init, cfg, condition == Condition::Handcoded)
    })?;
    sort_records(&mut records);
    let mut points: Vec<ScalingPoint> = records
        .iter()
        .map(|r| {
            let b = r.budgeted.expect("fft records carry a budgeted point");
            ScalingPoint {
                n: r.task.n(),
                condition: r.condition,
                l0: b.l0,
                rel_error: b.rel_error,
                scaling_factor: scaling_factor(b.l0, r.task.n()),
            }
        })
        .collect();
    points.sort_by_key(|p| (p.n, p.condition as u8));
    Ok(ScalingStudy { points, records })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

/// `threshold,l0,rel_error`.
pub fn write_curve_csv<W: Write>(out: W, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "l0", "rel_error"]).map_err(csv_err)?;
    for p in curve {
        w.write_record([p.threshold.to_string(), p.l0.to_string(), p.rel_error.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}

/// `n,condition,l0,scaling_factor`.
pub fn write_scaling_csv<W: Write>(out: W, points: &[ScalingPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "condition", "l0", "scaling_factor"]).map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.n.to_string(),
            p.condition.as_str().to_string(),
            p.l0.to_string(),
            p.scaling_factor.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}

/// Metric trajectories of many cells: `n,condition,noise_scale,seed,step,loss,test_error,grad_norm`.
pub fn write_sweep_metrics_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n", "condition", "noise_scale", "seed", "step", "loss", "test_error", "grad_norm",
    ])
    .map_err(csv_err)?;
    for r in records {
        for m in &r.trajectory {
            w.write_record([
                r.task.n().to_string(),
                r.condition.as_str().to_string(),
                r.noise_scale.to_string(),
                r.seed.to_string(),
                m.step.to_string(),
                m.loss.to_string(),
                m.test_error.to_string(),
                m.grad_norm.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}

/// Sparsity curves of many cells: `n,condition,noise_scale,seed,threshold,l0,rel_error`.
pub fn write_sweep_curves_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "condition", "noise_scale", "seed", "threshold", "l0", "rel_error"])
        .map_err(csv_err)?;
    for r in records {
        for p in r.sparsity_curve.iter().flatten() {
            w.write_record([
                r.task.n().to_string(),
                r.condition.as_str().to_string(),
                r.noise_scale.to_string(),
                r.seed.to_string(),
                p.threshold.to_string(),
                p.l0.to_string(),
                p.rel_error.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))
}
