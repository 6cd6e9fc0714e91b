//! Fitting a grid to a target by projected gradient descent with any of the
//! metrics as the loss.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::gradients::{GradientGrid, Metric, MetricKind};
use crate::metrics::{MetricError, MetricReport, MsSsimParams, NlpdParams};
use crate::Grid;

/// Step sizes below this end the search.
pub const MIN_STEP: f64 = 1e-8;
/// Consecutive accepted steps with improvement below tolerance before stopping.
pub const PATIENCE: usize = 10;

const STEP_GROWTH: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Nlpd,
    NegMsSsim,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Nlpd => "nlpd",
            LossKind::NegMsSsim => "neg_ms_ssim",
        }
    }

    fn metric_kind(self) -> MetricKind {
        match self {
            LossKind::Mse => MetricKind::Mse,
            LossKind::Nlpd => MetricKind::Nlpd,
            LossKind::NegMsSsim => MetricKind::MsSsim,
        }
    }

    fn sign(self) -> f64 {
        if self == LossKind::NegMsSsim {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "nlpd" => Ok(LossKind::Nlpd),
            "neg_ms_ssim" | "neg-ms-ssim" | "msssim" | "ms_ssim" | "ms-ssim" => {
                Ok(LossKind::NegMsSsim)
            }
            other => Err(format!(
                "unknown loss '{other}' (expected mse, nlpd or neg_ms_ssim)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub loss: LossKind,
    pub max_steps: usize,
    pub initial_step: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Mse,
            max_steps: 2000,
            initial_step: 0.1,
            seed: 0,
            tolerance: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn with_loss(loss: LossKind) -> Self {
        Self {
            loss,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_steps == 0 {
            return Err(FitError::InvalidConfig("max_steps must be at least 1".into()));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(FitError::InvalidConfig(format!(
                "initial_step must be positive, got {}",
                self.initial_step
            )));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(FitError::InvalidConfig(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The gradient vanished exactly.
    ZeroGradient,
    /// Improvements stayed below tolerance for [`PATIENCE`] accepted steps.
    Tolerance,
    /// No decrease could be found with a step of at least [`MIN_STEP`].
    StepFloor,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Final iterate, every value in `[0, 1]`.
    pub final_grid: Grid,
    /// Loss of the initial point followed by the loss after each accepted step.
    pub loss_trajectory: Vec<f64>,
    pub steps_taken: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },
}

fn check_unit_range(g: &Grid, what: &str) -> Result<(), FitError> {
    match g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(FitError::InvalidTarget(format!("{what} value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

struct Objective {
    metric: Metric,
    sign: f64,
}

impl Objective {
    fn new(loss: LossKind, target: &Grid) -> Result<Self, FitError> {
        let (h, w) = target.dim();
        Ok(Self {
            metric: loss.metric_kind().for_size(h, w)?,
            sign: loss.sign(),
        })
    }

    fn eval(&self, x: &Grid, target: &Grid, step: usize) -> Result<(f64, GradientGrid), FitError> {
        let (v, mut g) = self.metric.value_and_gradient(x, target)?;
        if !v.is_finite() {
            return Err(FitError::NonFinite { step, what: "loss" });
        }
        if !g.is_finite() {
            return Err(FitError::NonFinite {
                step,
                what: "gradient",
            });
        }
        if self.sign < 0.0 {
            g.values.mapv_inplace(|d| -d);
        }
        Ok((self.sign * v, g))
    }
}

/// Fits from a seeded `Uniform[0, 1)` starting point.
pub fn fit_spectrogram(target: &Grid, cfg: &FitConfig) -> Result<FitResult, FitError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Grid::from_shape_fn(target.dim(), |_| rng.gen::<f64>());
    fit_spectrogram_from(target, init, cfg)
}

/// Fits from the given starting point.
///
/// Each step tries `clamp(x - eta * grad, 0, 1)`; a step that raises the loss
/// is retried with half the step size, an accepted one grows it by 1.2.
pub fn fit_spectrogram_from(target: &Grid, init: Grid, cfg: &FitConfig) -> Result<FitResult, FitError> {
    cfg.validate()?;
    check_unit_range(target, "target")?;
    if init.dim() != target.dim() {
        return Err(FitError::Metric(MetricError::DimensionMismatch {
            a: init.dim(),
            b: target.dim(),
        }));
    }
    let objective = Objective::new(cfg.loss, target)?;
    let mut x = init.mapv(|v| v.clamp(0.0, 1.0));
    let (mut loss, mut grad) = objective.eval(&x, target, 0)?;
    let mut trajectory = vec![loss];

    let finish = |x: Grid, trajectory: Vec<f64>, steps: usize, reason: StopReason| FitResult {
        final_grid: x,
        loss_trajectory: trajectory,
        steps_taken: steps,
        converged: matches!(reason, StopReason::ZeroGradient | StopReason::Tolerance),
        stop_reason: reason,
    };

    if grad.values.iter().all(|&d| d == 0.0) {
        return Ok(finish(x, trajectory, 0, StopReason::ZeroGradient));
    }

    let mut eta = cfg.initial_step;
    let mut quiet = 0;
    for step in 1..=cfg.max_steps {
        let accepted = loop {
            let candidate = (&x - &(&grad.values * eta)).mapv(|v| v.clamp(0.0, 1.0));
            let (c_loss, c_grad) = objective.eval(&candidate, target, step)?;
            if c_loss <= loss {
                break Some((candidate, c_loss, c_grad));
            }
            eta /= 2.0;
            if eta < MIN_STEP {
                break None;
            }
        };
        let Some((candidate, c_loss, c_grad)) = accepted else {
            return Ok(finish(x, trajectory, step, StopReason::StepFloor));
        };
        let improvement = loss - c_loss;
        x = candidate;
        loss = c_loss;
        grad = c_grad;
        trajectory.push(loss);
        eta *= STEP_GROWTH;

        if grad.values.iter().all(|&d| d == 0.0) {
            return Ok(finish(x, trajectory, step, StopReason::ZeroGradient));
        }
        quiet = if improvement < cfg.tolerance { quiet + 1 } else { 0 };
        if quiet >= PATIENCE {
            return Ok(finish(x, trajectory, step, StopReason::Tolerance));
        }
    }
    Ok(finish(x, trajectory, cfg.max_steps, StopReason::MaxSteps))
}

/// All three metrics between the fit and its target, with parameters sized
/// to the grid.
pub fn fit_report(result: &FitResult, target: &Grid) -> Result<MetricReport, MetricError> {
    report_for_size(&result.final_grid, target)
}

/// [`MetricReport`] with [`MsSsimParams::for_size`] and [`NlpdParams::for_size`].
pub fn report_for_size(a: &Grid, b: &Grid) -> Result<MetricReport, MetricError> {
    let (h, w) = b.dim();
    MetricReport::compute(a, b, &MsSsimParams::for_size(h, w)?, &NlpdParams::for_size(h, w)?)
}
