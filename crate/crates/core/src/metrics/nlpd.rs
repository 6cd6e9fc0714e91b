use serde::{Serialize, Serializer};

use super::pyramid::check_levels;
use super::{build_pyramid, check_same_dims, LaplacianPyramid, MetricError};
use crate::filter::convolve_same;
use crate::Grid;

const DEFAULT_LEVELS: usize = 5;
const DEFAULT_SIGMA: f64 = 0.17;

/// Normalized Laplacian pyramid distance parameters.
///
/// Stage `k` (band-pass levels first, residual last) is normalized as
/// `z / (sigmas[k] + norm_filters[k] * |z|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpdParams {
    pub levels: usize,
    pub sigmas: Vec<f64>,
    #[serde(serialize_with = "serialize_filters")]
    pub norm_filters: Vec<Grid>,
    pub exponent: f64,
}

fn serialize_filters<S: Serializer>(filters: &[Grid], s: S) -> Result<S::Ok, S::Error> {
    let nested: Vec<Vec<Vec<f64>>> = filters
        .iter()
        .map(|f| f.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect();
    nested.serialize(s)
}

/// 5x5 binomial kernel with the center removed, renormalized to unit sum.
pub(crate) fn normalization_filter() -> Grid {
    let taps = [1.0, 4.0, 6.0, 4.0, 1.0];
    let mut f = Grid::from_shape_fn((5, 5), |(i, j)| taps[i] * taps[j]);
    f[[2, 2]] = 0.0;
    let total = f.sum();
    f / total
}

impl Default for NlpdParams {
    fn default() -> Self {
        Self::with_levels(DEFAULT_LEVELS)
    }
}

impl NlpdParams {
    pub fn with_levels(levels: usize) -> Self {
        Self {
            levels,
            sigmas: vec![DEFAULT_SIGMA; levels + 1],
            norm_filters: vec![normalization_filter(); levels + 1],
            exponent: 2.0,
        }
    }

    /// Default parameters with at most five levels, fewer if the grid is small.
    pub fn for_size(h: usize, w: usize) -> Result<Self, MetricError> {
        let fit = (usize::BITS - 1 - h.min(w).max(1).leading_zeros()) as usize;
        let levels = fit.min(DEFAULT_LEVELS);
        if levels == 0 {
            return Err(MetricError::TooManyLevels { levels: 1, h, w });
        }
        Ok(Self::with_levels(levels))
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |msg: String| Err(MetricError::InvalidParams(msg));
        if self.levels == 0 {
            return bad("levels must be positive".into());
        }
        let stages = self.levels + 1;
        if self.sigmas.len() != stages || self.norm_filters.len() != stages {
            return bad(format!(
                "{} levels need {stages} sigmas and filters, got {} and {}",
                self.levels,
                self.sigmas.len(),
                self.norm_filters.len()
            ));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("sigmas must be positive and finite".into());
        }
        for f in &self.norm_filters {
            if f.nrows() % 2 == 0 || f.ncols() % 2 == 0 {
                return bad(format!("filter {}x{} must have odd sides", f.nrows(), f.ncols()));
            }
            if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("filter entries must be non-negative and finite".into());
            }
        }
        if !(self.exponent.is_finite() && self.exponent > 0.0) {
            return bad("exponent must be positive".into());
        }
        Ok(())
    }
}

fn normalize_stage(z: &Grid, sigma: f64, filter: &Grid) -> (Grid, Grid) {
    let denom = convolve_same(&z.mapv(f64::abs), filter).mapv(|v| v + sigma);
    (z / &denom, denom)
}

/// Divides every coefficient by `sigma + (filter * |z|)` at its stage.
pub fn divisive_normalize(
    p: &LaplacianPyramid,
    params: &NlpdParams,
) -> Result<LaplacianPyramid, MetricError> {
    params.validate()?;
    if p.levels() != params.levels {
        return Err(MetricError::InvalidParams(format!(
            "pyramid has {} levels, parameters describe {}",
            p.levels(),
            params.levels
        )));
    }
    let stages = p
        .stages()
        .zip(params.sigmas.iter().zip(&params.norm_filters))
        .map(|(z, (&sigma, filter))| normalize_stage(z, sigma, filter).0)
        .collect();
    Ok(LaplacianPyramid::from_stages(stages))
}

pub(crate) struct NlpdStage {
    /// Pyramid coefficients of the first input.
    pub z: Grid,
    /// Normalization denominator of the first input.
    pub denom: Grid,
    /// Normalized first input minus normalized second input.
    pub diff: Grid,
    /// `(mean |diff|^p)^(1/p)`
    pub norm: f64,
}

pub(crate) struct NlpdForward {
    pub stages: Vec<NlpdStage>,
    pub value: f64,
}

impl NlpdForward {
    pub(crate) fn new(a: &Grid, b: &Grid, params: &NlpdParams) -> Result<Self, MetricError> {
        params.validate()?;
        check_same_dims(a, b)?;
        let (h, w) = a.dim();
        check_levels(h, w, params.levels)?;
        let pa = build_pyramid(a, params.levels)?;
        let pb = build_pyramid(b, params.levels)?;
        let p = params.exponent;

        let stages: Vec<NlpdStage> = pa
            .stages()
            .zip(pb.stages())
            .zip(params.sigmas.iter().zip(&params.norm_filters))
            .map(|((za, zb), (&sigma, filter))| {
                let (ya, denom) = normalize_stage(za, sigma, filter);
                let (yb, _) = normalize_stage(zb, sigma, filter);
                let diff = &ya - &yb;
                let n = diff.len() as f64;
                let norm = if p == 2.0 {
                    (diff.iter().map(|d| d * d).sum::<f64>() / n).sqrt()
                } else {
                    (diff.iter().map(|d| d.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
                };
                NlpdStage {
                    z: za.clone(),
                    denom,
                    diff,
                    norm,
                }
            })
            .collect();
        let value = stages.iter().map(|s| s.norm).sum::<f64>() / stages.len() as f64;
        Ok(Self { stages, value })
    }
}

/// Mean over pyramid stages of the root-mean-square (or general `exponent`
/// norm) difference between divisively normalized coefficients.
pub fn nlpd(a: &Grid, b: &Grid, params: &NlpdParams) -> Result<f64, MetricError> {
    NlpdForward::new(a, b, params).map(|f| f.value)
}
