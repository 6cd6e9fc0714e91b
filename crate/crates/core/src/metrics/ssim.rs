use serde::Serialize;

use super::{check_same_dims, MetricError};
use crate::filter::{blur_valid, gaussian_window, mean_pool};
use crate::Grid;

/// Per-scale exponents from Wang, Simoncelli & Bovik (2003), finest first.
pub const WANG_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// The published weights carry four decimals and add up to 1.0001.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsSsimParams {
    pub scales: usize,
    pub scale_weights: Vec<f64>,
    pub window_size: usize,
    pub window_sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for MsSsimParams {
    fn default() -> Self {
        Self {
            scales: 5,
            scale_weights: WANG_WEIGHTS.to_vec(),
            window_size: 11,
            window_sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl MsSsimParams {
    /// Default parameters restricted to the `scales` finest scales, with the
    /// remaining weights rescaled to sum to one.
    pub fn with_scales(scales: usize) -> Result<Self, MetricError> {
        if scales == 0 || scales > WANG_WEIGHTS.len() {
            return Err(MetricError::InvalidParams(format!(
                "scales must be in 1..={}, got {scales}",
                WANG_WEIGHTS.len()
            )));
        }
        if scales == WANG_WEIGHTS.len() {
            return Ok(Self::default());
        }
        let kept = &WANG_WEIGHTS[..scales];
        let total: f64 = kept.iter().sum();
        Ok(Self {
            scales,
            scale_weights: kept.iter().map(|w| w / total).collect(),
            ..Self::default()
        })
    }

    /// The largest default-derived parameter set whose coarsest scale still
    /// holds a full window for an `h x w` grid.
    pub fn for_size(h: usize, w: usize) -> Result<Self, MetricError> {
        let window = Self::default().window_size;
        let mut scales = 0;
        let (mut sh, mut sw) = (h, w);
        while scales < WANG_WEIGHTS.len() && sh >= window && sw >= window {
            scales += 1;
            sh /= 2;
            sw /= 2;
        }
        if scales == 0 {
            return Err(MetricError::TooSmall { h, w, window });
        }
        Self::with_scales(scales)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |msg: String| Err(MetricError::InvalidParams(msg));
        if self.scales == 0 {
            return bad("scales must be positive".into());
        }
        if self.scale_weights.len() != self.scales {
            return bad(format!(
                "{} weights for {} scales",
                self.scale_weights.len(),
                self.scales
            ));
        }
        if self.scale_weights.iter().any(|w| w.is_nan() || *w <= 0.0) {
            return bad("scale weights must be positive".into());
        }
        let sum: f64 = self.scale_weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return bad(format!("scale weights sum to {sum}"));
        }
        if self.window_size == 0 || self.window_size.is_multiple_of(2) {
            return bad(format!("window size {} must be odd", self.window_size));
        }
        if !(self.window_sigma > 0.0 && self.c1 > 0.0 && self.c2 > 0.0) {
            return bad("window sigma, c1 and c2 must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn window(&self) -> Vec<f64> {
        gaussian_window(self.window_size, self.window_sigma)
    }
}

/// `sign(x) * |x|^w`, finite for negative bases.
pub(crate) fn signed_pow(x: f64, w: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(w)
    }
}

/// Local statistics at one scale. Maps are over valid window positions.
pub(crate) struct ScaleState {
    pub a: Grid,
    pub b: Grid,
    pub mu_a: Grid,
    pub mu_b: Grid,
    pub cs_map: Grid,
    /// `var_a + var_b + c2`
    pub cs_denom: Grid,
    /// Luminance map and its denominator `mu_a^2 + mu_b^2 + c1`.
    pub luminance: Option<(Grid, Grid)>,
    pub cs_mean: f64,
    pub l_mean: f64,
}

impl ScaleState {
    fn new(a: Grid, b: Grid, window: &[f64], c1: f64, c2: f64, luminance: bool) -> Self {
        let mu_a = blur_valid(&a, window);
        let mu_b = blur_valid(&b, window);
        let e_aa = blur_valid(&(&a * &a), window);
        let e_bb = blur_valid(&(&b * &b), window);
        let e_ab = blur_valid(&(&a * &b), window);

        let var_a = &e_aa - &(&mu_a * &mu_a);
        let var_b = &e_bb - &(&mu_b * &mu_b);
        let cov = &e_ab - &(&mu_a * &mu_b);

        let cs_denom = (&var_a + &var_b).mapv(|v| v + c2);
        let cs_map = ndarray::Zip::from(&cov)
            .and(&cs_denom)
            .map_collect(|&c, &d| (2.0 * c + c2) / d);
        let n = cs_map.len() as f64;
        let cs_mean = cs_map.sum() / n;

        let (luminance, l_mean) = if luminance {
            let l_denom = ndarray::Zip::from(&mu_a)
                .and(&mu_b)
                .map_collect(|&x, &y| x * x + y * y + c1);
            let l_map = ndarray::Zip::from(&mu_a)
                .and(&mu_b)
                .and(&l_denom)
                .map_collect(|&x, &y, &d| (2.0 * x * y + c1) / d);
            let mean = l_map.sum() / n;
            (Some((l_map, l_denom)), mean)
        } else {
            (None, f64::NAN)
        };

        Self {
            a,
            b,
            mu_a,
            mu_b,
            cs_map,
            cs_denom,
            luminance,
            cs_mean,
            l_mean,
        }
    }
}

/// Forward pass of MS-SSIM with every intermediate kept for differentiation.
pub(crate) struct MsSsimForward {
    pub scales: Vec<ScaleState>,
    pub weights: Vec<f64>,
    pub window: Vec<f64>,
    pub value: f64,
}

impl MsSsimForward {
    pub(crate) fn new(a: &Grid, b: &Grid, params: &MsSsimParams) -> Result<Self, MetricError> {
        params.validate()?;
        check_same_dims(a, b)?;
        let (h, w) = a.dim();
        if h < params.window_size || w < params.window_size {
            return Err(MetricError::TooSmall {
                h,
                w,
                window: params.window_size,
            });
        }
        let needed = params.window_size << (params.scales - 1);
        if (h >> (params.scales - 1)) < params.window_size
            || (w >> (params.scales - 1)) < params.window_size
        {
            return Err(MetricError::TooManyScales {
                scales: params.scales,
                needed,
                h,
                w,
            });
        }

        let window = params.window();
        let mut scales = Vec::with_capacity(params.scales);
        let mut current = Some((a.clone(), b.clone()));
        for k in 0..params.scales {
            let (cur_a, cur_b) = current.take().expect("set for every scale");
            let last = k + 1 == params.scales;
            if !last {
                current = Some((mean_pool(&cur_a), mean_pool(&cur_b)));
            }
            scales.push(ScaleState::new(
                cur_a, cur_b, &window, params.c1, params.c2, last,
            ));
        }

        let coarsest = scales.last().expect("at least one scale");
        let mut value = signed_pow(coarsest.l_mean, params.scale_weights[params.scales - 1]);
        for (state, &weight) in scales.iter().zip(&params.scale_weights) {
            value *= signed_pow(state.cs_mean, weight);
        }

        Ok(Self {
            scales,
            weights: params.scale_weights.clone(),
            window,
            value,
        })
    }
}

/// Single-scale SSIM: mean of luminance × contrast-structure over valid windows.
pub fn ssim(a: &Grid, b: &Grid, params: &MsSsimParams) -> Result<f64, MetricError> {
    params.validate()?;
    check_same_dims(a, b)?;
    let (h, w) = a.dim();
    if h < params.window_size || w < params.window_size {
        return Err(MetricError::TooSmall {
            h,
            w,
            window: params.window_size,
        });
    }
    let state = ScaleState::new(a.clone(), b.clone(), &params.window(), params.c1, params.c2, true);
    let (l_map, _) = state.luminance.as_ref().expect("luminance requested");
    let product: f64 = l_map.iter().zip(state.cs_map.iter()).map(|(l, c)| l * c).sum();
    Ok(product / l_map.len() as f64)
}

/// Multi-scale SSIM.
///
/// Each scale contributes its mean contrast-structure term raised to its
/// weight; the coarsest scale also contributes its mean luminance term raised
/// to the coarsest weight. Scales are separated by 2x2 mean pooling.
pub fn ms_ssim(a: &Grid, b: &Grid, params: &MsSsimParams) -> Result<f64, MetricError> {
    MsSsimForward::new(a, b, params).map(|f| f.value)
}
