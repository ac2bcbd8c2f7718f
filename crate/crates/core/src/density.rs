//! Product-Gaussian kernel density estimates on full data, windows and
//! domains.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::data::{Dataset, SurrogateIndex};
use crate::error::{Error, Result};
use crate::orient::{Boundary, OrientConfig};

/// Smallest density value used before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    /// Row-major `m × d` sample points.
    points: Vec<f64>,
    dim: usize,
    bandwidths: Vec<f64>,
    norm: f64,
}

fn silverman(col: &[f64]) -> Option<f64> {
    let m = col.len() as f64;
    let mean = col.iter().sum::<f64>() / m;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    (sd > 0.0 && sd.is_finite()).then(|| 1.06 * sd * m.powf(-0.2))
}

impl KdeModel {
    pub fn with_bandwidths(columns: &[&[f64]], bandwidths: Vec<f64>) -> Result<Self> {
        let dim = columns.len();
        if dim == 0 || bandwidths.len() != dim {
            return Err(Error::InvalidData("KDE needs one bandwidth per dimension".into()));
        }
        let m = columns[0].len();
        if m < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: m });
        }
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::InvalidData("KDE columns have different lengths".into()));
        }
        if let Some(&h) = bandwidths.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
            return Err(Error::NonPositiveWidth(h));
        }
        let mut points = Vec::with_capacity(m * dim);
        for i in 0..m {
            points.extend(columns.iter().map(|c| c[i]));
        }
        let norm = bandwidths.iter().map(|h| (2.0 * PI).sqrt() * h).product::<f64>() * m as f64;
        Ok(KdeModel { points, dim, bandwidths, norm })
    }

    pub fn n_points(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "query dimension mismatch");
        let inv: Vec<f64> = self.bandwidths.iter().map(|h| 0.5 / (h * h)).collect();
        let mut sum = 0.0;
        for p in self.points.chunks_exact(self.dim) {
            let mut e = 0.0;
            for j in 0..self.dim {
                let d = x[j] - p[j];
                e += d * d * inv[j];
            }
            sum += (-e).exp();
        }
        sum / self.norm
    }

    /// Model over the dimensions `dims`, keeping their bandwidths.
    pub fn marginal(&self, dims: &[usize]) -> Result<KdeModel> {
        let m = self.n_points();
        let cols: Vec<Vec<f64>> =
            dims.iter().map(|&j| (0..m).map(|i| self.points[i * self.dim + j]).collect()).collect();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        KdeModel::with_bandwidths(&refs, dims.iter().map(|&j| self.bandwidths[j]).collect())
    }
}

/// KDE with Silverman's rule `h = 1.06·σ̂·m^(-1/5)` in every dimension.
pub fn fit_kde(columns: &[&[f64]]) -> Result<KdeModel> {
    let bandwidths = columns
        .iter()
        .map(|c| if c.len() < 2 { None } else { silverman(c) })
        .collect::<Option<Vec<f64>>>()
        .ok_or(Error::DegenerateSample)?;
    KdeModel::with_bandwidths(columns, bandwidths)
}

/// A floored density value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floored {
    pub value: f64,
    pub floored: bool,
}

/// `p̂(y, x) / p̂(x)` with both densities floored at [`DENSITY_FLOOR`].
/// The joint model's leading dimensions are `y`, the rest `x`.
pub fn conditional_density(joint: &KdeModel, marginal: &KdeModel, y: &[f64], x: &[f64]) -> Floored {
    let mut q = y.to_vec();
    q.extend_from_slice(x);
    let pj = joint.density(&q);
    let px = marginal.density(x);
    let floored = pj < DENSITY_FLOOR || px < DENSITY_FLOOR;
    let ratio = pj.max(DENSITY_FLOOR) / px.max(DENSITY_FLOOR);
    Floored { value: ratio.max(DENSITY_FLOOR), floored: floored || ratio < DENSITY_FLOOR }
}

/// Conditional density model `p(effect | causes)`; with no causes it is the
/// marginal density of the effect.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalKde {
    pub joint: KdeModel,
    pub marginal: Option<KdeModel>,
}

impl ConditionalKde {
    /// Fits on the given rows of `d`; the cause marginal reuses the joint's
    /// bandwidths.
    pub fn fit(d: &Dataset, effect: usize, causes: &[usize], rows: &[usize]) -> Result<Self> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(1 + causes.len());
        for &j in std::iter::once(&effect).chain(causes) {
            let c = d.column(j);
            cols.push(rows.iter().map(|&r| c[r]).collect());
        }
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let joint = fit_kde(&refs)?;
        let marginal = if causes.is_empty() {
            None
        } else {
            Some(joint.marginal(&(1..=causes.len()).collect::<Vec<_>>())?)
        };
        Ok(ConditionalKde { joint, marginal })
    }

    pub fn eval(&self, y: f64, x: &[f64]) -> Floored {
        match &self.marginal {
            Some(m) => conditional_density(&self.joint, m, &[y], x),
            None => {
                let p = self.joint.density(&[y]);
                Floored { value: p.max(DENSITY_FLOOR), floored: p < DENSITY_FLOOR }
            }
        }
    }
}

/// Row groups: sliding windows for a time index, one group per domain
/// (in label order) for a domain index.
pub fn window_groups(index: &SurrogateIndex, cfg: &OrientConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let n = index.len();
    let groups: Vec<Vec<usize>> = match index {
        SurrogateIndex::Time(_) => {
            let len = cfg.window_len;
            let stride = cfg.stride();
            let mut out = Vec::new();
            let mut start = 0;
            while start < n {
                let end = (start + len).min(n);
                let full = end - start == len;
                if full || (cfg.boundary == Boundary::Truncate && 2 * (end - start) >= len) {
                    out.push((start..end).collect());
                }
                if end == n {
                    break;
                }
                start += stride;
            }
            out
        }
        SurrogateIndex::Domain(labels) => {
            let mut by_label: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                by_label.entry(*l).or_default().push(i);
            }
            by_label.into_values().collect()
        }
    };
    let needed = match index {
        SurrogateIndex::Time(_) => cfg.min_windows,
        SurrogateIndex::Domain(_) => cfg.min_windows.min(2),
    };
    if groups.len() < needed {
        return Err(Error::InsufficientWindows { needed, got: groups.len() });
    }
    Ok(groups)
}

/// One conditional model per window (or domain), each with its own
/// bandwidths.
pub fn windowed_conditionals(
    d: &Dataset,
    effect: usize,
    causes: &[usize],
    cfg: &OrientConfig,
) -> Result<Vec<ConditionalKde>> {
    window_groups(d.index(), cfg)?
        .iter()
        .map(|rows| ConditionalKde::fit(d, effect, causes, rows))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn standard_normal_at_zero() {
        let x = normals(2000, 1);
        let kde = fit_kde(&[&x]).unwrap();
        let expected = 1.0 / (2.0 * PI).sqrt();
        assert!((kde.density(&[0.0]) - expected).abs() < 0.03);
    }

    #[test]
    fn identical_points_rejected() {
        assert_eq!(fit_kde(&[&[1.0, 1.0]]), Err(Error::DegenerateSample));
    }

    #[test]
    fn integrates_to_one() {
        let x = [0.3, -1.2, 2.5, 0.0, 0.7];
        let kde = fit_kde(&[&x]).unwrap();
        let step = 0.01;
        let total: f64 = (0..2000).map(|k| kde.density(&[-10.0 + k as f64 * step]) * step).sum();
        assert!((total - 1.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn conditional_of_independent_normals() {
        // averaged over replicates so the check is on the estimator, not one draw
        let expected = 1.0 / (2.0 * PI).sqrt();
        let reps = 5;
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let mut mean = [0.0; 5];
        for r in 0..reps {
            let y = normals(2000, 2 * r + 10);
            let x = normals(2000, 2 * r + 11);
            let joint = fit_kde(&[&y, &x]).unwrap();
            let marg = joint.marginal(&[1]).unwrap();
            for (k, &xv) in xs.iter().enumerate() {
                let c = conditional_density(&joint, &marg, &[0.0], &[xv]);
                assert!(!c.floored);
                mean[k] += c.value / reps as f64;
            }
        }
        for (xv, m) in xs.iter().zip(mean) {
            assert!((m - expected).abs() < 0.05, "x = {xv}: {m}");
        }
    }

    #[test]
    fn floor_flags_far_queries() {
        let x = [0.0, 1.0, 2.0];
        let joint = fit_kde(&[&x, &x]).unwrap();
        let marg = joint.marginal(&[1]).unwrap();
        let c = conditional_density(&joint, &marg, &[0.0], &[1e3]);
        assert!(c.floored);
        assert!(c.value.is_finite() && c.value >= DENSITY_FLOOR);
    }

    #[test]
    fn permutation_invariant() {
        let a = normals(50, 4);
        let mut b = a.clone();
        b.reverse();
        let ka = fit_kde(&[&a]).unwrap();
        let kb = fit_kde(&[&b]).unwrap();
        for q in [-2.0, 0.1, 1.7] {
            assert!((ka.density(&[q]) - kb.density(&[q])).abs() < 1e-12);
        }
    }

    fn time_index(n: usize) -> SurrogateIndex {
        SurrogateIndex::row_index(n)
    }

    #[test]
    fn window_counts() {
        let cfg = OrientConfig::default();
        assert_eq!(window_groups(&time_index(600), &cfg).unwrap().len(), 6);
        // trailing 60 rows kept as a truncated window
        let w = window_groups(&time_index(660), &cfg).unwrap();
        assert_eq!(w.len(), 7);
        assert_eq!(w[6].len(), 60);
        let drop = OrientConfig { boundary: Boundary::Drop, ..cfg };
        assert_eq!(window_groups(&time_index(660), &drop).unwrap().len(), 6);
        assert!(matches!(
            window_groups(&time_index(90), &drop),
            Err(Error::InsufficientWindows { .. })
        ));
        let dom = SurrogateIndex::domain(vec![3, 1, 2, 1, 3, 2]);
        assert_eq!(window_groups(&dom, &cfg).unwrap(), vec![vec![1, 3], vec![2, 5], vec![0, 4]]);
    }
}
