//! Full-reference metrics on grids with values nominally in [0, 1].
//!
//! * [`mse`]: mean squared error.
//! * [`ssim`] / [`ms_ssim`]: Gaussian-windowed structural similarity and its
//!   multi-scale product form.
//! * [`nlpd`]: Laplacian pyramid, per-stage divisive normalization, then the
//!   mean over stages of the root-mean-square coefficient difference.

mod nlpd;
mod pyramid;
mod ssim;

use serde::Serialize;
use thiserror::Error;

use crate::Grid;

pub use nlpd::{divisive_normalize, nlpd, NlpdParams};
pub(crate) use nlpd::NlpdForward;
pub use pyramid::{build_pyramid, collapse_pyramid, LaplacianPyramid};
pub use ssim::{ms_ssim, ssim, MsSsimParams, WANG_WEIGHTS};
pub(crate) use ssim::{signed_pow, MsSsimForward};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("{h}x{w} grid is smaller than the {window}x{window} window")]
    TooSmall { h: usize, w: usize, window: usize },
    #[error("{scales} scales need at least {needed} pixels per side, got {h}x{w}")]
    TooManyScales {
        scales: usize,
        needed: usize,
        h: usize,
        w: usize,
    },
    #[error("{levels} pyramid levels do not fit a {h}x{w} grid")]
    TooManyLevels { levels: usize, h: usize, w: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("inconsistent pyramid: {0}")]
    InconsistentPyramid(String),
}

pub(crate) fn check_same_dims(a: &Grid, b: &Grid) -> Result<(), MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    Ok(())
}

/// Mean of squared differences.
pub fn mse(a: &Grid, b: &Grid) -> Result<f64, MetricError> {
    check_same_dims(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// The three reference metrics for one grid pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub mse: f64,
    pub nlpd: f64,
    pub ms_ssim: f64,
}

impl MetricReport {
    pub fn compute(
        a: &Grid,
        b: &Grid,
        ms_ssim_params: &MsSsimParams,
        nlpd_params: &NlpdParams,
    ) -> Result<Self, MetricError> {
        Ok(Self {
            mse: mse(a, b)?,
            nlpd: nlpd(a, b, nlpd_params)?,
            ms_ssim: ms_ssim(a, b, ms_ssim_params)?,
        })
    }
}
