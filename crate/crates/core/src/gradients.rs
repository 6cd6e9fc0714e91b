//! Analytic gradients of each metric with respect to its first argument,
//! and a central-difference oracle to check them against.
//!
//! MS-SSIM and NLPD are differentiated in reverse mode by hand: the forward
//! pass keeps its intermediates and every linear filter has an exact adjoint
//! in `crate::filter`, so one gradient costs a small constant number of
//! forward evaluations.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::filter::{blur_valid_t, convolve_same_t, expand_t, mean_pool_t, reduce_t};
use crate::metrics::{
    self, signed_pow, MetricError, MsSsimForward, MsSsimParams, NlpdForward, NlpdParams,
};
use crate::Grid;

/// Smallest |mean contrast-structure| used when differentiating `x^w` with `w < 1`.
const MIN_POWER_BASE: f64 = 1e-12;

/// Derivative of a metric with respect to its first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientGrid {
    pub values: Grid,
}

impl GradientGrid {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Names a metric together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Mse,
    MsSsim(MsSsimParams),
    Nlpd(NlpdParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Mse,
    MsSsim,
    Nlpd,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mse => "mse",
            MetricKind::MsSsim => "msssim",
            MetricKind::Nlpd => "nlpd",
        }
    }

    /// Default parameters sized for an `h x w` grid.
    pub fn for_size(self, h: usize, w: usize) -> Result<Metric, MetricError> {
        Ok(match self {
            MetricKind::Mse => Metric::Mse,
            MetricKind::MsSsim => Metric::MsSsim(MsSsimParams::for_size(h, w)?),
            MetricKind::Nlpd => Metric::Nlpd(NlpdParams::for_size(h, w)?),
        })
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(MetricKind::Mse),
            "msssim" | "ms_ssim" | "ms-ssim" => Ok(MetricKind::MsSsim),
            "nlpd" => Ok(MetricKind::Nlpd),
            other => Err(format!(
                "unknown metric '{other}' (expected mse, msssim or nlpd)"
            )),
        }
    }
}

impl Metric {
    pub fn kind(&self) -> MetricKind {
        match self {
            Metric::Mse => MetricKind::Mse,
            Metric::MsSsim(_) => MetricKind::MsSsim,
            Metric::Nlpd(_) => MetricKind::Nlpd,
        }
    }

    pub fn evaluate(&self, a: &Grid, b: &Grid) -> Result<f64, MetricError> {
        match self {
            Metric::Mse => metrics::mse(a, b),
            Metric::MsSsim(p) => metrics::ms_ssim(a, b, p),
            Metric::Nlpd(p) => metrics::nlpd(a, b, p),
        }
    }

    pub fn gradient(&self, a: &Grid, b: &Grid) -> Result<GradientGrid, MetricError> {
        match self {
            Metric::Mse => grad_mse(a, b),
            Metric::MsSsim(p) => grad_ms_ssim(a, b, p),
            Metric::Nlpd(p) => grad_nlpd(a, b, p),
        }
    }

    /// Value and gradient from a single forward pass.
    pub fn value_and_gradient(
        &self,
        a: &Grid,
        b: &Grid,
    ) -> Result<(f64, GradientGrid), MetricError> {
        match self {
            Metric::Mse => Ok((metrics::mse(a, b)?, grad_mse(a, b)?)),
            Metric::MsSsim(p) => {
                let fwd = MsSsimForward::new(a, b, p)?;
                Ok((fwd.value, ms_ssim_backward(&fwd)))
            }
            Metric::Nlpd(p) => {
                let fwd = NlpdForward::new(a, b, p)?;
                Ok((fwd.value, nlpd_backward(&fwd, p)))
            }
        }
    }
}

/// `2 (a - b) / N`
pub fn grad_mse(a: &Grid, b: &Grid) -> Result<GradientGrid, MetricError> {
    metrics::check_same_dims(a, b)?;
    let scale = 2.0 / a.len().max(1) as f64;
    Ok(GradientGrid {
        values: (a - b) * scale,
    })
}

pub fn grad_ms_ssim(
    a: &Grid,
    b: &Grid,
    params: &MsSsimParams,
) -> Result<GradientGrid, MetricError> {
    let fwd = MsSsimForward::new(a, b, params)?;
    Ok(ms_ssim_backward(&fwd))
}

fn power_derivative(x: f64, w: f64) -> f64 {
    w * x.abs().max(MIN_POWER_BASE).powf(w - 1.0)
}

fn ms_ssim_backward(fwd: &MsSsimForward) -> GradientGrid {
    let m = fwd.scales.len();
    let coarsest = &fwd.scales[m - 1];
    let w_last = fwd.weights[m - 1];

    // Factors of the product: one contrast-structure term per scale, then luminance.
    let mut factors: Vec<f64> = fwd
        .scales
        .iter()
        .zip(&fwd.weights)
        .map(|(s, &w)| signed_pow(s.cs_mean, w))
        .collect();
    factors.push(signed_pow(coarsest.l_mean, w_last));
    let product_except = |skip: usize| -> f64 {
        factors
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, f)| f)
            .product()
    };

    let mut upstream: Option<Grid> = None;
    for k in (0..m).rev() {
        let s = &fwd.scales[k];
        let n = s.cs_map.len() as f64;
        let d_cs = product_except(k) * power_derivative(s.cs_mean, fwd.weights[k]) / n;

        let g_ab = s.cs_denom.mapv(|den| d_cs * 2.0 / den);
        let g_aa = ndarray::Zip::from(&s.cs_map)
            .and(&s.cs_denom)
            .map_collect(|&cs, &den| -d_cs * cs / den);
        let mut g_mu = ndarray::Zip::from(&s.cs_map)
            .and(&s.cs_denom)
            .and(&s.mu_a)
            .and(&s.mu_b)
            .map_collect(|&cs, &den, &ma, &mb| d_cs * (2.0 * ma * cs - 2.0 * mb) / den);

        if let Some((l_map, l_denom)) = &s.luminance {
            let d_l = product_except(m) * power_derivative(s.l_mean, w_last) / n;
            ndarray::Zip::from(&mut g_mu)
                .and(l_map)
                .and(l_denom)
                .and(&s.mu_a)
                .and(&s.mu_b)
                .for_each(|gm, &l, &den, &ma, &mb| {
                    *gm += d_l * (2.0 * mb - 2.0 * ma * l) / den;
                });
        }

        let mut grad = blur_valid_t(&g_mu, &fwd.window);
        grad = grad + &s.a * 2.0 * &blur_valid_t(&g_aa, &fwd.window);
        grad = grad + &s.b * &blur_valid_t(&g_ab, &fwd.window);
        if let Some(coarser) = upstream.take() {
            grad = grad + mean_pool_t(&coarser, s.a.dim());
        }
        upstream = Some(grad);
    }
    GradientGrid {
        values: upstream.expect("at least one scale"),
    }
}

pub fn grad_nlpd(a: &Grid, b: &Grid, params: &NlpdParams) -> Result<GradientGrid, MetricError> {
    let fwd = NlpdForward::new(a, b, params)?;
    Ok(nlpd_backward(&fwd, params))
}

fn nlpd_backward(fwd: &NlpdForward, params: &NlpdParams) -> GradientGrid {
    let stage_count = fwd.stages.len() as f64;
    let p = params.exponent;

    // d value / d z for every stage of the first input's pyramid.
    let z_grads: Vec<Grid> = fwd
        .stages
        .iter()
        .zip(params.norm_filters.iter())
        .map(|(stage, filter)| {
            if stage.norm == 0.0 {
                return Grid::zeros(stage.z.dim());
            }
            let n = stage.diff.len() as f64;
            let coeff = stage.norm.powf(1.0 - p) / (n * stage_count);
            let g_y = stage.diff.mapv(|d| {
                if p == 2.0 {
                    coeff * d
                } else {
                    coeff * d.signum() * d.abs().powf(p - 1.0)
                }
            });
            // y = z / D with D = sigma + F * |z|
            let g_denom = ndarray::Zip::from(&g_y)
                .and(&stage.z)
                .and(&stage.denom)
                .map_collect(|&g, &z, &d| -g * z / (d * d));
            let g_abs = convolve_same_t(&g_denom, filter);
            ndarray::Zip::from(&g_y)
                .and(&stage.z)
                .and(&stage.denom)
                .and(&g_abs)
                .map_collect(|&g, &z, &d, &ga| {
                    let sign = if z > 0.0 {
                        1.0
                    } else if z < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    g / d + sign * ga
                })
        })
        .collect();

    // Back through band_k = G_k - expand(G_{k+1}), G_{k+1} = reduce(G_k).
    let levels = z_grads.len() - 1;
    let mut acc = z_grads[levels].clone();
    for k in (0..levels).rev() {
        let band_grad = &z_grads[k];
        let coarse_dims = acc.dim();
        let coarse_total = &acc - &expand_t(band_grad, coarse_dims);
        acc = band_grad + &reduce_t(&coarse_total, band_grad.dim());
    }
    GradientGrid { values: acc }
}

/// Central differences `(f(a + h e_ij, b) - f(a - h e_ij, b)) / 2h`, one cell
/// at a time. Costs two metric evaluations per cell; cells run in parallel.
pub fn finite_diff_grad(
    metric: &Metric,
    a: &Grid,
    b: &Grid,
    h: f64,
) -> Result<GradientGrid, MetricError> {
    metric.evaluate(a, b)?;
    central_differences(|x| metric.evaluate(x, b), a, h)
}

/// Central differences of an arbitrary scalar function of a grid.
pub fn central_differences<F>(f: F, a: &Grid, h: f64) -> Result<GradientGrid, MetricError>
where
    F: Fn(&Grid) -> Result<f64, MetricError> + Sync,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(MetricError::InvalidParams(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (rows, cols) = a.dim();
    let values: Result<Vec<f64>, MetricError> = (0..rows * cols)
        .into_par_iter()
        .map_init(
            || a.clone(),
            |work, idx| {
                let cell = (idx / cols, idx % cols);
                let orig = work[cell];
                work[cell] = orig + h;
                let plus = f(work);
                work[cell] = orig - h;
                let minus = f(work);
                work[cell] = orig;
                Ok((plus? - minus?) / (2.0 * h))
            },
        )
        .collect();
    Ok(GradientGrid {
        values: Grid::from_shape_vec((rows, cols), values?).expect("shape matches"),
    })
}

/// Agreement between an analytic and a numerical gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientAgreement {
    pub max_rel: f64,
    pub p99_rel: f64,
}

/// Per-entry relative error `|g - n| / max(|g|, |n|, floor)`.
///
/// `floor` is `1e-9` times the largest analytic magnitude, so entries many
/// orders of magnitude below the gradient's scale do not dominate.
pub fn relative_errors(analytic: &GradientGrid, numeric: &GradientGrid) -> Vec<f64> {
    let floor = (analytic.max_abs() * 1e-9).max(f64::MIN_POSITIVE);
    analytic
        .values
        .iter()
        .zip(numeric.values.iter())
        .map(|(g, n)| (g - n).abs() / g.abs().max(n.abs()).max(floor))
        .collect()
}

pub fn compare_gradients(analytic: &GradientGrid, numeric: &GradientGrid) -> GradientAgreement {
    let mut rel = relative_errors(analytic, numeric);
    rel.sort_by(f64::total_cmp);
    let max_rel = rel.last().copied().unwrap_or(0.0);
    let rank = ((rel.len() as f64 * 0.99).ceil() as usize).clamp(1, rel.len().max(1));
    let p99_rel = rel.get(rank - 1).copied().unwrap_or(0.0);
    GradientAgreement { max_rel, p99_rel }
}
