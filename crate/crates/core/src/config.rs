//! TOML experiment configuration.
//!
//! All keys live at the top level; unknown keys are rejected. Only `task` is
//! required. Defaults:
//!
//! | key | parity | fft |
//! |---|---|---|
//! | `n` | 16 | 16 |
//! | `learning_rate` | 1e-4 | 1e-4 |
//! | `steps` | 20000 | 200000 |
//! | `batch_size` | 1000 | 1000 (unused) |
//! | `beta` | 0 | 1e-3 |
//! | `grad_norm_tol` | 0 (off) | 1e-7 |
//! | `adam_beta1`, `adam_beta2`, `adam_eps` | 0.9, 0.999, 1e-8 | same |
//! | `alpha` | 10 | 10 (unused) |
//! | `seed` | 0 | 0 |
//! | `eval_every` | 1000 | 1000 |
//! | `test_samples` | 10000 | 10000 (unused) |
//! | `scales` | `[0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0]` | same |
//! | `seeds` | `[0, 1, 2]` | same |
//! | `masked` | false | false |
//! | `masked_init` | `"perturb"` | same |
//! | `sizes` | `[8, 16, 32]` | same |
//! | `near_scale` | 0.01 | 0.01 |
//! | `far_init` | `"random"` | same |
//! | `far_scale` | 2.0 | 2.0 |
//! | `out` | unset | unset |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{FarInit, MaskedInit, NoiseSpec};
use crate::training::{Task, TrainConfig};

pub const DEFAULT_N: usize = 16;
pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_SCALES: [f64; 7] = [0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0];
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];
pub const DEFAULT_SIZES: [usize; 3] = [8, 16, 32];
pub const DEFAULT_NEAR_SCALE: f64 = 0.01;
pub const DEFAULT_FAR_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Parity,
    Fft,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FarInitKind {
    #[default]
    Random,
    Perturb,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: Option<TaskKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adam_beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adam_beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adam_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_norm_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scales: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masked: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masked_init: Option<MaskedInit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    near_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    far_init: Option<FarInitKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    far_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

/// A fully resolved and validated experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub train: TrainConfig,
    pub alpha: f64,
    pub scales: Vec<f64>,
    pub seeds: Vec<u64>,
    pub masked: bool,
    pub masked_init: MaskedInit,
    pub sizes: Vec<usize>,
    pub near_scale: f64,
    pub far_init: FarInitKind,
    pub far_scale: f64,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for `task`.
    pub fn for_task(task: Task) -> Self {
        ExperimentConfig {
            task,
            train: TrainConfig::for_task(&task),
            alpha: DEFAULT_ALPHA,
            scales: DEFAULT_SCALES.to_vec(),
            seeds: DEFAULT_SEEDS.to_vec(),
            masked: false,
            masked_init: MaskedInit::default(),
            sizes: DEFAULT_SIZES.to_vec(),
            near_scale: DEFAULT_NEAR_SCALE,
            far_init: FarInitKind::default(),
            far_scale: DEFAULT_FAR_SCALE,
            out: None,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            scales: self.scales.clone(),
            seeds: self.seeds.clone(),
        }
    }

    pub fn far(&self) -> FarInit {
        match self.far_init {
            FarInitKind::Random => FarInit::Random,
            FarInitKind::Perturb => FarInit::Perturb {
                scale: self.far_scale,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.train.validate()?;
        self.noise().validate()?;
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("{} must be positive", self.alpha)));
        }
        for &n in &self.sizes {
            Task::Fft { n }
                .validate()
                .map_err(|_| Error::invalid("sizes", format!("{n} is not a power of 2 >= 2")))?;
        }
        for (field, v) in [("near_scale", self.near_scale), ("far_scale", self.far_scale)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, format!("{v} must be non-negative")));
            }
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let kind = raw
        .task
        .ok_or_else(|| Error::invalid("task", "missing; expected \"parity\" or \"fft\""))?;
    let n = raw.n.unwrap_or(DEFAULT_N);
    let task = match kind {
        TaskKind::Parity => Task::Parity { n },
        TaskKind::Fft => Task::Fft { n },
    };
    let mut cfg = ExperimentConfig::for_task(task);
    let t = &mut cfg.train;
    t.learning_rate = raw.learning_rate.unwrap_or(t.learning_rate);
    t.steps = raw.steps.unwrap_or(t.steps);
    t.batch_size = raw.batch_size.unwrap_or(t.batch_size);
    t.beta = raw.beta.unwrap_or(t.beta);
    t.adam_beta1 = raw.adam_beta1.unwrap_or(t.adam_beta1);
    t.adam_beta2 = raw.adam_beta2.unwrap_or(t.adam_beta2);
    t.adam_eps = raw.adam_eps.unwrap_or(t.adam_eps);
    t.seed = raw.seed.unwrap_or(t.seed);
    t.eval_every = raw.eval_every.unwrap_or(t.eval_every);
    t.test_samples = raw.test_samples.unwrap_or(t.test_samples);
    if let Some(tol) = raw.grad_norm_tol {
        t.grad_norm_tol = (tol != 0.0).then_some(tol);
    }
    cfg.alpha = raw.alpha.unwrap_or(cfg.alpha);
    cfg.scales = raw.scales.unwrap_or(cfg.scales);
    cfg.seeds = raw.seeds.unwrap_or(cfg.seeds);
    cfg.masked = raw.masked.unwrap_or(cfg.masked);
    cfg.masked_init = raw.masked_init.unwrap_or(cfg.masked_init);
    cfg.sizes = raw.sizes.unwrap_or(cfg.sizes);
    cfg.near_scale = raw.near_scale.unwrap_or(cfg.near_scale);
    cfg.far_init = raw.far_init.unwrap_or(cfg.far_init);
    cfg.far_scale = raw.far_scale.unwrap_or(cfg.far_scale);
    cfg.out = raw.out;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes every field explicitly, so the output reproduces the run without relying on defaults.
pub fn emit_config(cfg: &ExperimentConfig) -> Result<String> {
    let t = &cfg.train;
    let raw = RawConfig {
        task: Some(match cfg.task {
            Task::Parity { .. } => TaskKind::Parity,
            Task::Fft { .. } => TaskKind::Fft,
        }),
        n: Some(cfg.task.n()),
        learning_rate: Some(t.learning_rate),
        steps: Some(t.steps),
        batch_size: Some(t.batch_size),
        beta: Some(t.beta),
        adam_beta1: Some(t.adam_beta1),
        adam_beta2: Some(t.adam_beta2),
        adam_eps: Some(t.adam_eps),
        alpha: Some(cfg.alpha),
        seed: Some(t.seed),
        eval_every: Some(t.eval_every),
        test_samples: Some(t.test_samples),
        grad_norm_tol: Some(t.grad_norm_tol.unwrap_or(0.0)),
        scales: Some(cfg.scales.clone()),
        seeds: Some(cfg.seeds.clone()),
        masked: Some(cfg.masked),
        masked_init: Some(cfg.masked_init),
        sizes: Some(cfg.sizes.clone()),
        near_scale: Some(cfg.near_scale),
        far_init: Some(cfg.far_init),
        far_scale: Some(cfg.far_scale),
        out: cfg.out.clone(),
    };
    toml::to_string(&raw).map_err(|e| Error::Serde(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::LossKind;

    #[test]
    fn minimal_parity_config() {
        let cfg = parse_config("task = \"parity\"\nn = 16\n").unwrap();
        assert_eq!(cfg.task, Task::Parity { n: 16 });
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.train.batch_size, 1000);
        assert_eq!(cfg.train.loss_kind, LossKind::MseMinibatch);
        assert_eq!(cfg.alpha, 10.0);
        assert_eq!(cfg.scales, DEFAULT_SCALES.to_vec());
    }

    #[test]
    fn fft_defaults() {
        let cfg = parse_config("task = \"fft\"").unwrap();
        assert_eq!(cfg.task, Task::Fft { n: 16 });
        assert_eq!(cfg.train.steps, 200_000);
        assert_eq!(cfg.train.beta, 1e-3);
        assert_eq!(cfg.train.grad_norm_tol, Some(1e-7));
        assert_eq!(cfg.train.loss_kind, LossKind::ExactLinear);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("task = \"parity\"\nn = 8\nlearnig_rate = 0.1\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("learnig_rate"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_config("task = \"parity\"\n\nn = = 4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cases = [
            ("task = \"parity\"\nn = 12", "n"),
            ("task = \"parity\"\nlearning_rate = -1.0", "learning_rate"),
            ("task = \"parity\"\nseeds = []", "seeds"),
            ("task = \"parity\"\nscales = [0.5, 0.1]", "scales"),
            ("task = \"fft\"\nsizes = [8, 24]", "sizes"),
            ("n = 8", "task"),
        ];
        for (text, field) in cases {
            match parse_config(text) {
                Err(Error::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip() {
        let texts = [
            "task = \"parity\"\nn = 8\nsteps = 5\nmasked = true\nmasked_init = \"redraw\"\n",
            "task = \"fft\"\nn = 32\nbeta = 0.0\ngrad_norm_tol = 0.0\nfar_init = \"perturb\"\nout = \"runs/x\"\n",
        ];
        for text in texts {
            let cfg = parse_config(text).unwrap();
            let emitted = emit_config(&cfg).unwrap();
            assert_eq!(parse_config(&emitted).unwrap(), cfg, "{emitted}");
        }
    }

    #[test]
    fn far_init_modes() {
        let cfg = parse_config("task = \"fft\"\nfar_init = \"perturb\"\nfar_scale = 3.0").unwrap();
        assert_eq!(cfg.far(), FarInit::Perturb { scale: 3.0 });
        assert_eq!(ExperimentConfig::for_task(Task::Fft { n: 8 }).far(), FarInit::Random);
    }
}
