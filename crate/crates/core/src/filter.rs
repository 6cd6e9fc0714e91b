//! Linear filtering primitives on grids, each paired with its exact adjoint.
//!
//! Boundaries use half-sample symmetric extension (`d c b a | a b c d | d c b a`),
//! which preserves constants and is defined for any length >= 1.

use ndarray::{ArrayView1, Axis};

use crate::Grid;

/// Burt–Adelson generating kernel.
pub(crate) const BINOMIAL5: [f64; 5] = [0.05, 0.25, 0.4, 0.25, 0.05];

pub(crate) fn sym_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

pub(crate) fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn map_lanes(x: &Grid, axis: Axis, out_len: usize, f: impl Fn(&[f64], &mut [f64])) -> Grid {
    let mut shape = [x.nrows(), x.ncols()];
    shape[axis.index()] = out_len;
    let mut out = Grid::zeros(shape);
    let mut input = vec![0.0; x.len_of(axis)];
    let mut output = vec![0.0; out_len];
    for (lane_in, mut lane_out) in x.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        for (dst, src) in input.iter_mut().zip(lane_in.iter()) {
            *dst = *src;
        }
        output.fill(0.0);
        f(&input, &mut output);
        lane_out.assign(&ArrayView1::from(&output[..]));
    }
    out
}

fn valid_1d(x: &[f64], k: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = k.iter().zip(&x[i..]).map(|(w, v)| w * v).sum();
    }
}

fn valid_1d_t(y: &[f64], k: &[f64], out: &mut [f64]) {
    for (i, g) in y.iter().enumerate() {
        for (t, w) in k.iter().enumerate() {
            out[i + t] += w * g;
        }
    }
}

fn reduce_1d(x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = BINOMIAL5
            .iter()
            .enumerate()
            .map(|(t, w)| w * x[sym_index(2 * i as isize + t as isize - 2, x.len())])
            .sum();
    }
}

fn reduce_1d_t(y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (i, g) in y.iter().enumerate() {
        for (t, w) in BINOMIAL5.iter().enumerate() {
            out[sym_index(2 * i as isize + t as isize - 2, n)] += w * g;
        }
    }
}

/// Interpolation taps for fine index `p`: pairs of (weight, coarse index).
fn expand_taps(p: usize, coarse_len: usize) -> impl Iterator<Item = (f64, usize)> {
    BINOMIAL5.iter().enumerate().filter_map(move |(t, w)| {
        let shifted = p as isize - (t as isize - 2);
        (shifted.rem_euclid(2) == 0).then(|| (2.0 * w, sym_index(shifted / 2, coarse_len)))
    })
}

fn expand_1d(x: &[f64], out: &mut [f64]) {
    for (p, o) in out.iter_mut().enumerate() {
        *o = expand_taps(p, x.len()).map(|(w, q)| w * x[q]).sum();
    }
}

fn expand_1d_t(y: &[f64], out: &mut [f64]) {
    let m = out.len();
    for (p, g) in y.iter().enumerate() {
        for (w, q) in expand_taps(p, m) {
            out[q] += w * g;
        }
    }
}

/// Separable correlation over fully-overlapping positions only.
/// Output is `(h - K + 1) x (w - K + 1)`.
pub(crate) fn blur_valid(x: &Grid, k: &[f64]) -> Grid {
    let rows = map_lanes(x, Axis(1), x.ncols() + 1 - k.len(), |i, o| valid_1d(i, k, o));
    map_lanes(&rows, Axis(0), x.nrows() + 1 - k.len(), |i, o| valid_1d(i, k, o))
}

pub(crate) fn blur_valid_t(y: &Grid, k: &[f64]) -> Grid {
    let cols = map_lanes(y, Axis(0), y.nrows() + k.len() - 1, |i, o| valid_1d_t(i, k, o));
    map_lanes(&cols, Axis(1), y.ncols() + k.len() - 1, |i, o| valid_1d_t(i, k, o))
}

/// Blur with the binomial kernel and keep even samples: `ceil(n/2)` per side.
pub(crate) fn reduce(x: &Grid) -> Grid {
    let rows = map_lanes(x, Axis(1), x.ncols().div_ceil(2), reduce_1d);
    map_lanes(&rows, Axis(0), x.nrows().div_ceil(2), reduce_1d)
}

pub(crate) fn reduce_t(y: &Grid, fine: (usize, usize)) -> Grid {
    let cols = map_lanes(y, Axis(0), fine.0, reduce_1d_t);
    map_lanes(&cols, Axis(1), fine.1, reduce_1d_t)
}

/// Upsample to `fine` dimensions by binomial interpolation (gain 2 per axis).
pub(crate) fn expand(x: &Grid, fine: (usize, usize)) -> Grid {
    let rows = map_lanes(x, Axis(1), fine.1, expand_1d);
    map_lanes(&rows, Axis(0), fine.0, expand_1d)
}

pub(crate) fn expand_t(y: &Grid, coarse: (usize, usize)) -> Grid {
    let cols = map_lanes(y, Axis(0), coarse.0, expand_1d_t);
    map_lanes(&cols, Axis(1), coarse.1, expand_1d_t)
}

/// True 2-D convolution with a small kernel, same-size output, symmetric extension.
pub(crate) fn convolve_same(x: &Grid, f: &Grid) -> Grid {
    let (h, w) = x.dim();
    let (ch, cw) = ((f.nrows() / 2) as isize, (f.ncols() / 2) as isize);
    let mut out = Grid::zeros((h, w));
    for ((i, j), o) in out.indexed_iter_mut() {
        let mut acc = 0.0;
        for ((u, v), &fv) in f.indexed_iter() {
            if fv != 0.0 {
                let r = sym_index(i as isize - u as isize + ch, h);
                let c = sym_index(j as isize - v as isize + cw, w);
                acc += fv * x[[r, c]];
            }
        }
        *o = acc;
    }
    out
}

pub(crate) fn convolve_same_t(y: &Grid, f: &Grid) -> Grid {
    let (h, w) = y.dim();
    let (ch, cw) = ((f.nrows() / 2) as isize, (f.ncols() / 2) as isize);
    let mut out = Grid::zeros((h, w));
    for ((i, j), &g) in y.indexed_iter() {
        for ((u, v), &fv) in f.indexed_iter() {
            if fv != 0.0 {
                let r = sym_index(i as isize - u as isize + ch, h);
                let c = sym_index(j as isize - v as isize + cw, w);
                out[[r, c]] += fv * g;
            }
        }
    }
    out
}

/// 2x2 mean pooling; an odd trailing row or column is dropped.
pub(crate) fn mean_pool(x: &Grid) -> Grid {
    let (h, w) = (x.nrows() / 2, x.ncols() / 2);
    Grid::from_shape_fn((h, w), |(i, j)| {
        0.25 * (x[[2 * i, 2 * j]]
            + x[[2 * i, 2 * j + 1]]
            + x[[2 * i + 1, 2 * j]]
            + x[[2 * i + 1, 2 * j + 1]])
    })
}

pub(crate) fn mean_pool_t(y: &Grid, fine: (usize, usize)) -> Grid {
    let mut out = Grid::zeros(fine);
    for ((i, j), &g) in y.indexed_iter() {
        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            out[[2 * i + di, 2 * j + dj]] += 0.25 * g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Grid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid::from_shape_fn((h, w), |_| rng.gen_range(-1.0..1.0))
    }

    fn dot(a: &Grid, b: &Grid) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    /// <A x, y> == <x, A^T y> for every operator and its adjoint.
    #[test]
    fn adjoints_are_exact_transposes() {
        let k = gaussian_window(5, 1.2);
        let mut f = random(5, 5, 9);
        f.mapv_inplace(f64::abs);
        for (h, w) in [(7, 9), (16, 16), (13, 6), (1, 3), (2, 2), (4, 4), (3, 3), (2, 5), (1, 1)] {
            let x = random(h, w, 1);
            let check = |fwd: Grid, y: &Grid, back: Grid| {
                let lhs = dot(&fwd, y);
                let rhs = dot(&x, &back);
                assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
            };

            let y = random(h, w, 2);
            check(convolve_same(&x, &f), &y, convolve_same_t(&y, &f));

            let yc = random(h.div_ceil(2), w.div_ceil(2), 3);
            check(reduce(&x), &yc, reduce_t(&yc, (h, w)));

            let coarse = random(h.div_ceil(2), w.div_ceil(2), 4);
            let yf = random(h, w, 5);
            let lhs = dot(&expand(&coarse, (h, w)), &yf);
            let rhs = dot(&coarse, &expand_t(&yf, coarse.dim()));
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));

            if h >= 2 && w >= 2 {
                let yp = random(h / 2, w / 2, 6);
                check(mean_pool(&x), &yp, mean_pool_t(&yp, (h, w)));
            }
            if h >= 5 && w >= 5 {
                let yv = random(h - 4, w - 4, 7);
                check(blur_valid(&x, &k), &yv, blur_valid_t(&yv, &k));
            }
        }
    }

    #[test]
    fn constants_survive_reduce_and_expand() {
        let x = Grid::from_elem((9, 14), 0.37);
        for v in reduce(&x).iter().chain(expand(&x, (17, 27)).iter()) {
            assert!((v - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_index_folds() {
        let idx: Vec<usize> = (-4..8).map(|i| sym_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(sym_index(-3, 1), 0);
    }
}
