//! Soft and hard scalar quantization and entropy accounting for a quantized
//! latent.

use ndarray::{ArrayBase, Data, Dimension, Array};
use serde::Serialize;
use thiserror::Error;

/// Bits per pixel of an uncompressed 24-bit source.
pub const SOURCE_BPP: f64 = 24.0;

#[derive(Debug, Error, PartialEq)]
pub enum QuantizationError {
    #[error("invalid quantizer: {0}")]
    InvalidSpec(String),
    #[error("invalid entropy inputs: {0}")]
    InvalidInputs(String),
    #[error("value {value} at index {index} is not one of the centers")]
    OffCenter { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizerSpec {
    pub centers: Vec<f64>,
    pub s: f64,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self {
            centers: vec![-1.0, 1.0],
            s: 10.0,
        }
    }
}

impl QuantizerSpec {
    pub fn new(centers: Vec<f64>, s: f64) -> Result<Self, QuantizationError> {
        let spec = Self { centers, s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), QuantizationError> {
        if self.centers.len() < 2 {
            return Err(QuantizationError::InvalidSpec(
                "at least two centers are required".into(),
            ));
        }
        if self.centers.iter().any(|c| !c.is_finite()) {
            return Err(QuantizationError::InvalidSpec("centers must be finite".into()));
        }
        if self.centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QuantizationError::InvalidSpec(
                "centers must be strictly increasing".into(),
            ));
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(QuantizationError::InvalidSpec(format!(
                "sharpness must be positive, got {}",
                self.s
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.centers.len()
    }

    /// Softmax weights `exp(-s (z - c_j)^2)` normalized over `j`, written into `w`.
    fn weights(&self, z: f64, w: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for (wj, c) in w.iter_mut().zip(&self.centers) {
            *wj = -self.s * (z - c).powi(2);
            max = max.max(*wj);
        }
        let mut total = 0.0;
        for wj in w.iter_mut() {
            *wj = (*wj - max).exp();
            total += *wj;
        }
        for wj in w.iter_mut() {
            *wj /= total;
        }
    }

    /// Softmax-weighted mean of the centers.
    pub fn soft(&self, z: f64) -> f64 {
        let mut w = vec![0.0; self.centers.len()];
        self.weights(z, &mut w);
        let v: f64 = w.iter().zip(&self.centers).map(|(p, c)| p * c).sum();
        v.clamp(self.centers[0], self.centers[self.centers.len() - 1])
    }

    /// `d soft / dz = 2s * sum_{j<k} p_j p_k (c_j - c_k)^2`, which is positive.
    pub fn soft_derivative(&self, z: f64) -> f64 {
        let mut w = vec![0.0; self.centers.len()];
        self.weights(z, &mut w);
        let mut acc = 0.0;
        for j in 0..w.len() {
            for k in j + 1..w.len() {
                acc += w[j] * w[k] * (self.centers[j] - self.centers[k]).powi(2);
            }
        }
        2.0 * self.s * acc
    }

    /// Nearest center; exact midpoints go to the lower center.
    pub fn hard(&self, z: f64) -> f64 {
        let c = &self.centers;
        let upper = c.partition_point(|&x| x < z);
        if upper == 0 {
            return c[0];
        }
        if upper == c.len() {
            return c[c.len() - 1];
        }
        let (lo, hi) = (c[upper - 1], c[upper]);
        if hi - z < z - lo {
            hi
        } else {
            lo
        }
    }
}

pub fn soft_quantize<S, D>(z: &ArrayBase<S, D>, spec: &QuantizerSpec) -> Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    z.mapv(|v| spec.soft(v))
}

pub fn hard_quantize<S, D>(z: &ArrayBase<S, D>, spec: &QuantizerSpec) -> Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    z.mapv(|v| spec.hard(v))
}

/// Shape of a latent produced by `n` stride-2 downsampling layers with `m`
/// output channels from a `width x height` input, quantized to `levels` centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EntropyInputs {
    pub width: u64,
    pub height: u64,
    pub n: u32,
    pub m: u64,
    pub levels: u64,
}

impl Default for EntropyInputs {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            n: 4,
            m: 128,
            levels: 2,
        }
    }
}

impl EntropyInputs {
    pub fn validate(&self) -> Result<(), QuantizationError> {
        let bad = |m: String| Err(QuantizationError::InvalidInputs(m));
        if self.width == 0 || self.height == 0 || self.m == 0 {
            return bad("width, height and channels must be positive".into());
        }
        if self.levels < 2 {
            return bad(format!("need at least two centers, got {}", self.levels));
        }
        if self.n >= 63 {
            return bad(format!("{} downsampling layers is too many", self.n));
        }
        let step = 1u64 << self.n;
        if !self.width.is_multiple_of(step) || !self.height.is_multiple_of(step) {
            return bad(format!(
                "{}x{} is not divisible by 2^{} = {step}",
                self.width, self.height, self.n
            ));
        }
        Ok(())
    }

    /// Number of latent symbols, `(W / 2^n) * (H / 2^n) * m`.
    pub fn symbols(&self) -> Result<u64, QuantizationError> {
        self.validate()?;
        let step = 1u64 << self.n;
        (self.width / step)
            .checked_mul(self.height / step)
            .and_then(|v| v.checked_mul(self.m))
            .ok_or_else(|| QuantizationError::InvalidInputs("symbol count overflows".into()))
    }
}

/// Upper bound on latent entropy in bits: `symbols * log2(L)`.
pub fn entropy_bound(inp: &EntropyInputs) -> Result<f64, QuantizationError> {
    Ok(inp.symbols()? as f64 * (inp.levels as f64).log2())
}

pub fn bits_per_pixel(bits: f64, width: u64, height: u64) -> f64 {
    assert!(width * height > 0, "bits_per_pixel of an empty image");
    bits / (width * height) as f64
}

/// `source_bpp / bpp`, infinite for a zero-bit code.
pub fn compression_ratio(bpp: f64, source_bpp: f64) -> f64 {
    source_bpp / bpp
}

/// Plug-in Shannon entropy of the center histogram, times the element count.
pub fn empirical_entropy<'a>(
    latent: impl IntoIterator<Item = &'a f64>,
    spec: &QuantizerSpec,
) -> Result<f64, QuantizationError> {
    spec.validate()?;
    let mut counts = vec![0u64; spec.levels()];
    let mut total = 0u64;
    for (index, &value) in latent.into_iter().enumerate() {
        let slot = spec
            .centers
            .iter()
            .position(|&c| c == value)
            .ok_or(QuantizationError::OffCenter { index, value })?;
        counts[slot] += 1;
        total += 1;
    }
    if total == 0 {
        return Ok(0.0);
    }
    let n = total as f64;
    let per_symbol: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    Ok(per_symbol.max(0.0) * n)
}
