use super::MetricError;
use crate::filter::{expand, reduce};
use crate::Grid;

/// Band-pass levels (finest first) plus the low-pass residual.
///
/// Level `k` has `ceil(h / 2^k) x ceil(w / 2^k)` cells; the residual has the
/// dimensions of level `bands.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    pub bands: Vec<Grid>,
    pub lowpass: Grid,
}

impl LaplacianPyramid {
    pub fn levels(&self) -> usize {
        self.bands.len()
    }

    /// Band-pass levels followed by the residual.
    pub fn stages(&self) -> impl Iterator<Item = &Grid> {
        self.bands.iter().chain(std::iter::once(&self.lowpass))
    }

    pub fn stage_count(&self) -> usize {
        self.bands.len() + 1
    }

    pub(crate) fn from_stages(mut stages: Vec<Grid>) -> Self {
        let lowpass = stages.pop().expect("at least the residual stage");
        Self {
            bands: stages,
            lowpass,
        }
    }
}

pub(crate) fn check_levels(h: usize, w: usize, levels: usize) -> Result<(), MetricError> {
    if levels == 0 || levels >= usize::BITS as usize || (h.min(w) >> levels) == 0 {
        return Err(MetricError::TooManyLevels { levels, h, w });
    }
    Ok(())
}

/// Burt–Adelson decomposition with the 5-tap binomial kernel.
pub fn build_pyramid(x: &Grid, levels: usize) -> Result<LaplacianPyramid, MetricError> {
    let (h, w) = x.dim();
    check_levels(h, w, levels)?;
    let mut bands = Vec::with_capacity(levels);
    let mut current = x.clone();
    for _ in 0..levels {
        let coarse = reduce(&current);
        let band = &current - &expand(&coarse, current.dim());
        bands.push(band);
        current = coarse;
    }
    Ok(LaplacianPyramid {
        bands,
        lowpass: current,
    })
}

/// Inverse of [`build_pyramid`]: expand from the residual upward, adding bands.
pub fn collapse_pyramid(p: &LaplacianPyramid) -> Result<Grid, MetricError> {
    let mut expected = p.lowpass.dim();
    for (k, band) in p.bands.iter().enumerate().rev() {
        let (bh, bw) = band.dim();
        if (bh.div_ceil(2), bw.div_ceil(2)) != expected {
            return Err(MetricError::InconsistentPyramid(format!(
                "band {k} is {bh}x{bw} but the level below is {}x{}",
                expected.0, expected.1
            )));
        }
        expected = (bh, bw);
    }
    let mut current = p.lowpass.clone();
    for band in p.bands.iter().rev() {
        current = band + &expand(&current, band.dim());
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_grid_has_empty_bands() {
        let x = Grid::from_elem((37, 20), 0.6);
        let p = build_pyramid(&x, 3).unwrap();
        for band in &p.bands {
            assert!(band.iter().all(|v| v.abs() < 1e-15));
        }
        assert!(p.lowpass.iter().all(|v| (v - 0.6).abs() < 1e-15));
    }

    #[test]
    fn level_dimensions() {
        let x = Grid::zeros((45, 64));
        let p = build_pyramid(&x, 4).unwrap();
        let dims: Vec<_> = p.stages().map(|g| g.dim()).collect();
        assert_eq!(dims, vec![(45, 64), (23, 32), (12, 16), (6, 8), (3, 4)]);
    }

    #[test]
    fn perfect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Grid::from_shape_fn((64, 64), |_| rng.gen::<f64>());
        let back = collapse_pyramid(&build_pyramid(&x, 5).unwrap()).unwrap();
        let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn too_many_levels() {
        let x = Grid::zeros((16, 40));
        assert!(build_pyramid(&x, 4).is_ok());
        assert!(matches!(
            build_pyramid(&x, 5),
            Err(MetricError::TooManyLevels { .. })
        ));
        assert!(build_pyramid(&x, 0).is_err());
    }

    #[test]
    fn collapse_of_zeros_and_bad_shapes() {
        let p = build_pyramid(&Grid::zeros((20, 20)), 2).unwrap();
        assert!(collapse_pyramid(&p).unwrap().iter().all(|&v| v == 0.0));
        let mut bad = p.clone();
        bad.lowpass = Grid::zeros((4, 4));
        assert!(matches!(
            collapse_pyramid(&bad),
            Err(MetricError::InconsistentPyramid(_))
        ));
    }
}
