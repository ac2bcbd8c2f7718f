//! Gaussian kernel matrices, bandwidth selection, centering and block
//! extraction.
//!
//! Points are stored as an `m × d` matrix whose rows are samples.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest number of rows used by [`median_heuristic`].
pub const MEDIAN_SUBSAMPLE_CAP: usize = 1000;

/// Which pairwise quantity the median heuristic takes the median of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianRule {
    /// Median Euclidean distance, used directly as `σ²`.
    #[default]
    Distance,
    /// Median squared distance, for sensitivity studies.
    SquaredDistance,
}

/// Symmetric Gaussian kernel matrix together with the `σ²` it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    width_sq: f64,
}

impl KernelMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn width_sq(&self) -> f64 {
        self.width_sq
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn centered(&self) -> DMatrix<f64> {
        center(&self.entries)
    }

    /// Wraps an arbitrary matrix. Intended for tests and for kernels whose
    /// entries were produced elsewhere.
    pub fn from_entries(entries: DMatrix<f64>, width_sq: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidData("kernel matrix must be square".into()));
        }
        if !(width_sq > 0.0) {
            return Err(Error::NonPositiveWidth(width_sq));
        }
        Ok(KernelMatrix { entries, width_sq })
    }
}

/// Stacks columns into an `m × d` point matrix.
pub fn points_from_columns(columns: &[&[f64]]) -> DMatrix<f64> {
    let m = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, columns.len(), |i, j| columns[j][i])
}

fn sq_dist(points: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..points.ncols() {
        let d = points[(a, j)] - points[(b, j)];
        s += d * d;
    }
    s
}

fn fnv1a(points: &DMatrix<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in points.iter() {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median heuristic kernel width with the default [`MedianRule::Distance`].
pub fn median_heuristic(points: &DMatrix<f64>) -> Result<f64> {
    median_heuristic_with(points, MedianRule::Distance)
}

/// Median of pairwise distances (or squared distances) between distinct
/// rows, returned as `σ²`.
///
/// At most [`MEDIAN_SUBSAMPLE_CAP`] rows take part; larger samples are
/// subsampled with a seed derived from the data. When more than half of
/// the pairs coincide (binary domain codes) the median is taken over the
/// nonzero distances.
pub fn median_heuristic_with(points: &DMatrix<f64>, rule: MedianRule) -> Result<f64> {
    let m = points.nrows();
    if m < 2 {
        return Err(Error::DegenerateSample);
    }
    let rows: Vec<usize> = if m > MEDIAN_SUBSAMPLE_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(points));
        let mut idx = sample(&mut rng, m, MEDIAN_SUBSAMPLE_CAP).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..m).collect()
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (k, &a) in rows.iter().enumerate() {
        for &b in &rows[k + 1..] {
            let d2 = sq_dist(points, a, b);
            dists.push(match rule {
                MedianRule::Distance => d2.sqrt(),
                MedianRule::SquaredDistance => d2,
            });
        }
    }
    let mut med = median_in_place(&mut dists);
    if med <= 0.0 {
        let mut nonzero: Vec<f64> = dists.into_iter().filter(|d| *d > 0.0).collect();
        if nonzero.is_empty() {
            return Err(Error::DegenerateSample);
        }
        med = median_in_place(&mut nonzero);
    }
    Ok(med)
}

#[inline]
fn gauss(d2: f64, width_sq: f64) -> f64 {
    (-d2 / (2.0 * width_sq)).exp()
}

/// `K(i, j) = exp(-‖xᵢ − xⱼ‖² / (2σ²))`.
pub fn gaussian_kernel(points: &DMatrix<f64>, width_sq: f64) -> Result<KernelMatrix> {
    if !(width_sq > 0.0) || !width_sq.is_finite() {
        return Err(Error::NonPositiveWidth(width_sq));
    }
    let m = points.nrows();
    let mut entries = DMatrix::from_element(m, m, 1.0);
    for i in 0..m {
        for j in 0..i {
            let v = gauss(sq_dist(points, i, j), width_sq);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(KernelMatrix { entries, width_sq })
}

/// Gaussian kernel with the width chosen by the median heuristic.
pub fn gaussian_kernel_auto(points: &DMatrix<f64>) -> Result<KernelMatrix> {
    gaussian_kernel(points, median_heuristic(points)?)
}

/// Double centering `H·K·H` with `H = I − 𝟙𝟙ᵀ/m`.
pub fn center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let m = k.nrows();
    if m == 0 {
        return k.clone();
    }
    let mf = m as f64;
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).sum() / mf).collect();
    let col_means: Vec<f64> = (0..m).map(|j| k.column(j).sum() / mf).collect();
    let grand = row_means.iter().sum::<f64>() / mf;
    DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Submatrix `K(rows, cols)`.
pub fn cross_block(k: &KernelMatrix, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
    let m = k.size();
    if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= m) {
        return Err(Error::IndexOutOfRange { index: bad, len: m });
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        k.entries[(rows[a], cols[b])]
    }))
}

/// Pivoted incomplete Cholesky factor `G` (`m × r`) with `K ≈ G·Gᵀ` for
/// the Gaussian kernel on `points`.
///
/// Stops once the trace of the residual `K − G·Gᵀ` drops to `tol` or the
/// rank reaches `max_rank`. With `tol = 0` and `max_rank = m` the factor is
/// exact up to rounding. Only the pivot columns of `K` are evaluated.
pub fn incomplete_cholesky(
    points: &DMatrix<f64>,
    width_sq: f64,
    tol: f64,
    max_rank: usize,
) -> Result<DMatrix<f64>> {
    if !(width_sq > 0.0) || !width_sq.is_finite() {
        return Err(Error::NonPositiveWidth(width_sq));
    }
    let m = points.nrows();
    let max_rank = max_rank.min(m);
    let mut diag = vec![1.0; m];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    while cols.len() < max_rank {
        let residual: f64 = diag.iter().sum();
        if residual <= tol {
            break;
        }
        let (p, &dp) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if dp <= 1e-14 {
            break;
        }
        let mut g: Vec<f64> = (0..m).map(|i| gauss(sq_dist(points, i, p), width_sq)).collect();
        for c in &cols {
            let coeff = c[p];
            if coeff != 0.0 {
                for (gi, ci) in g.iter_mut().zip(c) {
                    *gi -= coeff * ci;
                }
            }
        }
        let s = dp.sqrt();
        for gi in g.iter_mut() {
            *gi /= s;
        }
        for &q in &pivots {
            g[q] = 0.0;
        }
        g[p] = s;
        for (d, gi) in diag.iter_mut().zip(&g) {
            *d = (*d - gi * gi).max(0.0);
        }
        diag[p] = 0.0;
        pivots.push(p);
        cols.push(g);
    }
    let r = cols.len();
    Ok(DMatrix::from_fn(m, r, |i, j| cols[j][i]))
}

/// Subtracts column means, so that `F·Fᵀ = H·G·Gᵀ·H`.
pub fn center_factor(g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut f = g.clone();
    let m = g.nrows() as f64;
    for mut col in f.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::Rng;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn median_of_three_points() {
        assert_eq!(median_heuristic(&col(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
        assert_eq!(
            median_heuristic_with(&col(&[0.0, 1.0, 3.0]), MedianRule::SquaredDistance).unwrap(),
            4.0
        );
    }

    #[test]
    fn median_rejects_identical_points() {
        assert_eq!(median_heuristic(&col(&[2.0, 2.0, 2.0])), Err(Error::DegenerateSample));
        assert_eq!(median_heuristic(&col(&[2.0])), Err(Error::DegenerateSample));
    }

    #[test]
    fn median_skips_coincident_pairs() {
        // 6 of 10 pairs are zero distance
        let w = median_heuristic(&col(&[0.0, 0.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn median_subsampling_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..1500).map(|_| rng.gen::<f64>()).collect();
        let p = col(&v);
        assert_eq!(median_heuristic(&p).unwrap(), median_heuristic(&p).unwrap());
    }

    #[test]
    fn kernel_values() {
        let p = col(&[0.0, 2.0_f64.sqrt()]);
        let k = gaussian_kernel(&p, 1.0).unwrap();
        assert_eq!(k.entries()[(0, 0)], 1.0);
        assert!((k.entries()[(0, 1)] - (-1.0_f64).exp()).abs() < 1e-15);
        assert!((k.entries()[(0, 1)] - 0.367879).abs() < 1e-6);
        let wide = gaussian_kernel(&p, 1e12).unwrap();
        assert!((wide.entries()[(0, 1)] - 1.0).abs() < 1e-11);
        assert!(matches!(gaussian_kernel(&p, 0.0), Err(Error::NonPositiveWidth(_))));
        assert!(matches!(gaussian_kernel(&p, -1.0), Err(Error::NonPositiveWidth(_))));
    }

    #[test]
    fn centering() {
        let ones = DMatrix::from_element(4, 4, 1.0);
        assert!(center(&ones).iter().all(|v| v.abs() < 1e-15));
        let one = DMatrix::from_element(1, 1, 0.7);
        assert_eq!(center(&one), DMatrix::zeros(1, 1));

        let p = col(&[0.1, 0.5, -1.0, 2.0, 0.0]);
        let k = gaussian_kernel(&p, 0.8).unwrap();
        let c = k.centered();
        for i in 0..5 {
            assert!(c.row(i).sum().abs() < 1e-8);
            assert!(c.column(i).sum().abs() < 1e-8);
        }
        let cc = center(&c);
        assert!((cc - &c).amax() < 1e-10);
    }

    #[test]
    fn blocks() {
        let p = col(&[0.1, 0.5, -1.0, 2.0]);
        let k = gaussian_kernel(&p, 0.8).unwrap();
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(&cross_block(&k, &all, &all).unwrap(), k.entries());
        let single = cross_block(&k, &[1], &[3]).unwrap();
        assert_eq!(single[(0, 0)], k.entries()[(1, 3)]);
        let ab = cross_block(&k, &[0, 2], &[1, 3, 2]).unwrap();
        let ba = cross_block(&k, &[1, 3, 2], &[0, 2]).unwrap();
        assert_eq!(ab.transpose(), ba);
        assert_eq!(
            cross_block(&k, &[4], &[0]),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        );
    }

    #[test]
    fn incomplete_cholesky_exact_at_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = DMatrix::from_fn(40, 2, |_, _| rng.gen::<f64>() * 3.0);
        let k = gaussian_kernel(&p, 0.7).unwrap();
        let g = incomplete_cholesky(&p, 0.7, 0.0, 40).unwrap();
        assert!((&g * g.transpose() - k.entries()).amax() < 1e-8);
        let g = incomplete_cholesky(&p, 0.7, 1e-6, 40).unwrap();
        let resid = k.entries() - &g * g.transpose();
        assert!(resid.trace() <= 1e-6 + 1e-12);
        let f = center_factor(&g);
        assert!((&f * f.transpose() - center(&(&g * g.transpose()))).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn kernel_is_psd(seed in 0u64..1000, m in 2usize..30, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = DMatrix::from_fn(m, d, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
            let width = median_heuristic(&p).unwrap();
            let k = gaussian_kernel(&p, width).unwrap();
            let e = SymmetricEigen::new(k.entries().clone()).eigenvalues;
            let max = e.max();
            prop_assert!(e.min() >= -1e-8 * max);
            for i in 0..m {
                prop_assert_eq!(k.entries()[(i, i)], 1.0);
                for j in 0..m {
                    prop_assert_eq!(k.entries()[(i, j)], k.entries()[(j, i)]);
                    prop_assert!(k.entries()[(i, j)] > 0.0 && k.entries()[(i, j)] <= 1.0);
                }
            }
        }

        #[test]
        fn kernel_translation_and_dilation(seed in 0u64..1000, shift in -5.0f64..5.0, scale in 0.2f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = DMatrix::from_fn(12, 2, |_, _| rng.gen::<f64>());
            let k = gaussian_kernel(&p, 0.5).unwrap();
            let shifted = p.map(|v| v + shift);
            let ks = gaussian_kernel(&shifted, 0.5).unwrap();
            prop_assert!((ks.entries() - k.entries()).amax() < 1e-12);
            let dilated = p.map(|v| v * scale);
            let kd = gaussian_kernel(&dilated, 0.5 * scale * scale).unwrap();
            prop_assert!((kd.entries() - k.entries()).amax() < 1e-12);
        }
    }
}
