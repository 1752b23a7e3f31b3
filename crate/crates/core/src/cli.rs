//! The `learnability` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime error, 2 on a usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{emit_config, load_config, ExperimentConfig};
use crate::constructions::{build_fft_net, build_parity_net, complex_l0, NetParams};
use crate::error::{Error, Result};
use crate::experiments::{
    basin_sweep, budgeted_sparsification, optimal_sparsification, perturb, scaling_study,
    sparsify_curve, write_curve_csv, write_scaling_csv, write_sweep_curves_csv,
    write_sweep_metrics_csv, Condition, CurvePoint, MaskedInit, RunRecord, SweepOptions,
    STREAM_PERTURB,
};
use crate::math::Rng;
use crate::plot::emit_plot_data;
use crate::training::gradcheck::{compare_gradients, finite_difference_grad, GradCheckReport};
use crate::training::{
    evaluate_parity, exact_linear_loss_grad, mse_loss, mse_loss_grad, parity_test_set,
    relative_frobenius_error, sample_binary_batch, train, write_metrics_csv, Batch, Task,
    STREAM_BATCHES,
};

pub const CONFIG_ECHO: &str = "config.toml";
pub const RECORD_JSON: &str = "record.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CURVE_CSV: &str = "sparsity_curve.csv";
pub const SCALING_CSV: &str = "scaling.csv";
pub const NET_JSON: &str = "net.json";

#[derive(Debug, Parser)]
#[command(name = "learnability", version, about = "Hand-coded parity and FFT networks and their basins of attraction")]
pub struct Cli {
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps; 1 keeps runs bitwise reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output directory (or output file for `construct`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a hand-coded network and save it as JSON.
    Construct {
        #[arg(long)]
        task: TaskArg,
        #[arg(long)]
        n: usize,
        /// Sigmoid sharpness of the parity network.
        #[arg(long, default_value_t = 10.0)]
        alpha: f64,
    },
    /// Train one perturbed copy of the hand-coded network.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Initialization noise scale.
        #[arg(long, default_value_t = 0.0)]
        scale: f64,
        /// Start from this saved network instead of the perturbed hand-coded one.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Train perturbed copies over a grid of noise scales and seeds.
    BasinSweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Enforce the exact sparsity pattern during training.
        #[arg(long)]
        masked: bool,
        #[arg(long, value_enum)]
        masked_init: Option<MaskedInitArg>,
    },
    /// Magnitude-pruning curve of a saved FFT network.
    Sparsify {
        #[arg(long)]
        net: PathBuf,
    },
    /// Sparsified L0 / (n log2 n) for hand-coded, near and far initializations.
    ScalingStudy {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Compare analytic and finite-difference gradients on a perturbed network.
    Gradcheck {
        #[arg(long)]
        task: TaskArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        scale: f64,
        #[arg(long, default_value_t = 10.0)]
        alpha: f64,
        /// Minibatch size of the parity loss.
        #[arg(long, default_value_t = 64)]
        batch: usize,
        /// Squared-L1 coefficient of the FFT loss.
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Largest accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Parity,
    Fft,
}

impl TaskArg {
    fn task(self, n: usize) -> Task {
        match self {
            TaskArg::Parity => Task::Parity { n },
            TaskArg::Fft => Task::Fft { n },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskedInitArg {
    Perturb,
    Redraw,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::invalid("threads", "must be at least 1"));
    }
    match cli.command {
        Command::Construct { task, n, alpha } => {
            let net = match task {
                TaskArg::Parity => build_parity_net(n, alpha)?,
                TaskArg::Fft => build_fft_net(n)?,
            };
            match &cli.out {
                Some(path) => {
                    net.save(path)?;
                    println!("wrote {} ({} layers, {} nonzeros)", path.display(), net.depth(), net.l0());
                }
                None => println!("{}", net.to_json()?),
            }
            Ok(())
        }
        Command::Train { exp, scale, net } => {
            let cfg = resolve(&exp, cli.seed, cli.out.as_deref())?;
            cmd_train(&cfg, scale, net.as_deref())
        }
        Command::BasinSweep {
            exp,
            masked,
            masked_init,
        } => {
            let mut cfg = resolve(&exp, cli.seed, cli.out.as_deref())?;
            cfg.masked |= masked;
            if let Some(m) = masked_init {
                cfg.masked_init = match m {
                    MaskedInitArg::Perturb => MaskedInit::Perturb,
                    MaskedInitArg::Redraw => MaskedInit::Redraw,
                };
            }
            cmd_basin_sweep(&cfg, cli.threads)
        }
        Command::Sparsify { net } => cmd_sparsify(&net, cli.out.as_deref()),
        Command::ScalingStudy { exp, sizes } => {
            let mut exp = exp;
            exp.task.get_or_insert(TaskArg::Fft);
            let mut cfg = resolve(&exp, cli.seed, cli.out.as_deref())?;
            if let Some(sizes) = sizes {
                cfg.sizes = sizes;
            }
            if !matches!(cfg.task, Task::Fft { .. }) {
                return Err(Error::invalid("task", "scaling-study runs on the fft task"));
            }
            cfg.validate()?;
            cmd_scaling_study(&cfg, cli.threads)
        }
        Command::Gradcheck {
            task,
            n,
            scale,
            alpha,
            batch,
            beta,
            step,
            tol,
        } => {
            let report = gradient_check(task.task(n), scale, alpha, batch, beta, step, cli.seed.unwrap_or(0))?;
            println!(
                "gradcheck {} n={n}: {} parameters, max relative error {:.3e}, max abs error {:.3e}",
                task.task(n).name(),
                report.num_params,
                report.max_relative_error,
                report.max_abs_error
            );
            if let Some(dir) = &cli.out {
                create_dir(dir)?;
                write_json(&dir.join("gradcheck.json"), &report)?;
            }
            if report.max_relative_error < tol {
                Ok(())
            } else {
                Err(Error::domain(format!(
                    "max relative error {:.3e} exceeds {tol:.1e} at parameter {}",
                    report.max_relative_error, report.worst_index
                )))
            }
        }
    }
}

/// Config file (if any), then command-line overrides.
fn resolve(exp: &ExperimentArgs, seed: Option<u64>, out: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = match &exp.config {
        Some(path) => load_config(path)?,
        None => {
            let task = exp
                .task
                .ok_or_else(|| Error::invalid("task", "pass --task or --config"))?;
            ExperimentConfig::for_task(task.task(exp.n.unwrap_or(crate::config::DEFAULT_N)))
        }
    };
    if exp.config.is_some() {
        if let Some(t) = exp.task {
            if t.task(1).name() != cfg.task.name() {
                return Err(Error::invalid("task", "--task disagrees with the config file"));
            }
        }
        if let Some(n) = exp.n {
            cfg.task = match cfg.task {
                Task::Parity { .. } => Task::Parity { n },
                Task::Fft { .. } => Task::Fft { n },
            };
        }
    }
    if let Some(steps) = exp.steps {
        cfg.train.steps = steps;
    }
    if let Some(seed) = seed {
        cfg.train.seed = seed;
        cfg.seeds = vec![seed];
    }
    if let Some(out) = out {
        cfg.out = Some(out.to_path_buf());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::invalid("out", "an output directory is required (--out or `out` in the config)"))?;
    create_dir(&dir)?;
    fs::write(dir.join(CONFIG_ECHO), emit_config(cfg)?).map_err(|e| Error::io(dir.join(CONFIG_ECHO), e))?;
    Ok(dir)
}

fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_train(cfg: &ExperimentConfig, scale: f64, net: Option<&Path>) -> Result<()> {
    let dir = out_dir(cfg)?;
    let task = cfg.task;
    let init = match net {
        Some(path) => NetParams::load(path)?,
        None => {
            let exact = match task {
                Task::Parity { n } => build_parity_net(n, cfg.alpha)?,
                Task::Fft { n } => build_fft_net(n)?,
            };
            perturb(&exact, scale, &mut Rng::with_stream(cfg.train.seed, STREAM_PERTURB))
        }
    };
    let outcome = train(&init, &cfg.train, &task)?;
    let last = outcome.final_metrics();
    write_metrics_csv(create_file(&dir.join(METRICS_CSV))?, &outcome.trajectory)?;
    outcome.params.save(&dir.join(NET_JSON))?;

    let mut record = RunRecord {
        task,
        condition: Condition::Perturbed,
        noise_scale: scale,
        seed: cfg.train.seed,
        alpha: outcome.params.alpha(),
        masked: false,
        masked_init: None,
        train: cfg.train.clone(),
        final_loss: last.loss,
        final_test_error: last.test_error,
        final_bit_error: None,
        final_test_mse: None,
        rel_frobenius_error: None,
        trajectory: outcome.trajectory.clone(),
        sparsity_curve: None,
        optimal: None,
        budgeted: None,
        optimal_l0: None,
        scaling_factor: None,
    };
    match task {
        Task::Parity { n } => {
            let eval = evaluate_parity(&outcome.params, &parity_test_set(n, &cfg.train))?;
            record.final_bit_error = Some(eval.bit_error);
            record.final_test_mse = Some(eval.mse);
            println!("final loss {:.6e}, bit error {}", last.loss, eval.bit_error);
        }
        Task::Fft { n } => {
            let target = task.linear_target().expect("fft target");
            let rel = relative_frobenius_error(&outcome.params, &target)?;
            let curve = sparsify_curve(&outcome.params, &target)?;
            let budgeted = budgeted_sparsification(&curve)?;
            write_curve_csv(create_file(&dir.join(CURVE_CSV))?, &curve)?;
            record.rel_frobenius_error = Some(rel);
            record.optimal = Some(optimal_sparsification(&curve)?);
            record.budgeted = Some(budgeted);
            record.optimal_l0 = Some(budgeted.l0);
            record.scaling_factor = Some(crate::experiments::scaling_factor(budgeted.l0, n));
            record.sparsity_curve = Some(curve);
            println!(
                "final loss {:.6e}, relative error {rel:.6e}, sparsified L0 {}",
                last.loss, budgeted.l0
            );
        }
    }
    write_json(&dir.join(RECORD_JSON), &vec![record])?;
    Ok(())
}

fn cmd_basin_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<()> {
    let dir = out_dir(cfg)?;
    let opts = SweepOptions {
        alpha: cfg.alpha,
        threads,
        masked_init: cfg.masked_init,
    };
    let records = basin_sweep(&cfg.task, &cfg.noise(), &cfg.train, cfg.masked, &opts)?;
    write_json(&dir.join(RECORD_JSON), &records)?;
    write_sweep_metrics_csv(create_file(&dir.join(METRICS_CSV))?, &records)?;
    if matches!(cfg.task, Task::Fft { .. }) {
        write_sweep_curves_csv(create_file(&dir.join(CURVE_CSV))?, &records)?;
    }
    emit_plot_data(&records, &dir)?;
    for (scale, median) in crate::experiments::median_error_by_scale(&records) {
        println!("scale {scale}: median final error {median}");
    }
    Ok(())
}

fn cmd_scaling_study(cfg: &ExperimentConfig, threads: usize) -> Result<()> {
    let dir = out_dir(cfg)?;
    let study = scaling_study(&cfg.sizes, cfg.near_scale, cfg.far(), &cfg.train, threads)?;
    write_json(&dir.join(RECORD_JSON), &study.records)?;
    write_sweep_metrics_csv(create_file(&dir.join(METRICS_CSV))?, &study.records)?;
    write_sweep_curves_csv(create_file(&dir.join(CURVE_CSV))?, &study.records)?;
    write_scaling_csv(create_file(&dir.join(SCALING_CSV))?, &study.points)?;
    emit_plot_data(&study.records, &dir)?;
    for p in &study.points {
        println!(
            "n={} {}: L0 {} scaling factor {:.4} (rel error {:.3e})",
            p.n,
            p.condition.as_str(),
            p.l0,
            p.scaling_factor,
            p.rel_error
        );
    }
    Ok(())
}

fn cmd_sparsify(net_path: &Path, out: Option<&Path>) -> Result<()> {
    let net = NetParams::load(net_path)?;
    if !net.is_linear() || net.in_dim() != net.out_dim() || net.in_dim() % 2 != 0 {
        return Err(Error::domain("sparsify expects a realified FFT network"));
    }
    let n = net.in_dim() / 2;
    let target = Task::Fft { n }.linear_target().expect("fft target");
    Task::Fft { n }.validate()?;
    let curve = sparsify_curve(&net, &target)?;
    let best: CurvePoint = optimal_sparsification(&curve)?;
    let budgeted = budgeted_sparsification(&curve)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_curve_csv(create_file(&dir.join(CURVE_CSV))?, &curve)?;
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let io = |e| Error::io("<stdout>", e);
    writeln!(w, "network L0 {} (complex), {} curve points", complex_l0(&net)?, curve.len()).map_err(io)?;
    writeln!(w, "minimum-error L0 {} rel_error {:.6e} threshold {:e}", best.l0, best.rel_error, best.threshold).map_err(io)?;
    writeln!(w, "budgeted L0 {} rel_error {:.6e} threshold {:e}", budgeted.l0, budgeted.rel_error, budgeted.threshold).map_err(io)?;
    Ok(())
}

/// Analytic versus central-difference gradient of the task loss at a perturbed hand-coded network.
pub fn gradient_check(
    task: Task,
    scale: f64,
    alpha: f64,
    batch: usize,
    beta: f64,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    task.validate()?;
    if batch == 0 {
        return Err(Error::invalid("batch", "must be at least 1"));
    }
    let mut rng = Rng::with_stream(seed, STREAM_PERTURB);
    match task {
        Task::Parity { n } => {
            let net = perturb(&build_parity_net(n, alpha)?, scale, &mut rng);
            let data: Batch = sample_binary_batch(&mut Rng::with_stream(seed, STREAM_BATCHES), n, batch);
            let (_, grads) = mse_loss_grad(&net, &data)?;
            let numeric = finite_difference_grad(&net, h, |p| mse_loss(p, &data).expect("shapes checked"));
            Ok(compare_gradients(&grads.to_flat(), &numeric))
        }
        Task::Fft { n } => {
            let net = perturb(&build_fft_net(n)?, scale, &mut rng);
            let target = task.linear_target().expect("fft target");
            let (_, grads) = exact_linear_loss_grad(&net, &target, beta)?;
            let numeric = finite_difference_grad(&net, h, |p| {
                exact_linear_loss_grad(p, &target, beta).expect("shapes checked").0
            });
            Ok(compare_gradients(&grads.to_flat(), &numeric))
        }
    }
}
