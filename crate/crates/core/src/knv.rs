//! Kernel nonstationarity visualization: a Gram matrix over window-wise
//! embeddings of `P(target | parents)` followed by kernel PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, SurrogateIndex};
use crate::error::{Error, Result};
use crate::kernels::{cross_block, gaussian_kernel, median_heuristic, points_from_columns, KernelMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GramKind {
    Linear,
    Gaussian { sigma2_sq: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGram {
    pub m: DMatrix<f64>,
    pub kind: GramKind,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncapsulatorSeries {
    /// `W × K` KPCA scores.
    pub components: DMatrix<f64>,
    /// Top `K` eigenvalues of the centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub window_centers: Vec<f64>,
}

impl EncapsulatorSeries {
    /// `λ₁ / λ₂`; infinite when the second eigenvalue vanishes.
    pub fn dominance(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [l1, l2, ..] if *l2 > 0.0 => l1 / l2,
            _ => f64::INFINITY,
        }
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.components.column(k).iter().copied().collect()
    }
}

/// `M(c, c') = Tr[K_V(c',c)·A_c·K_PA(c,c')·A_c']` with
/// `A_c = (K_PA(c,c) + βI)⁻¹`, from cross blocks of full-sample kernels.
pub fn linear_gram(
    k_v: &KernelMatrix,
    k_pa: &KernelMatrix,
    windows: &[Vec<usize>],
    beta: f64,
) -> Result<EmbeddingGram> {
    if windows.is_empty() || windows.iter().any(|w| w.is_empty()) {
        return Err(Error::InvalidData("windows must be nonempty".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig("beta must be positive".into()));
    }
    let inverses = windows
        .iter()
        .map(|w| {
            let mut block = cross_block(k_pa, w, w)?;
            for i in 0..w.len() {
                block[(i, i)] += beta;
            }
            block.cholesky().map(|c| c.inverse()).ok_or(Error::SingularSolve)
        })
        .collect::<Result<Vec<_>>>()?;
    let nw = windows.len();
    let mut m = DMatrix::zeros(nw, nw);
    for a in 0..nw {
        for b in a..nw {
            let pa = cross_block(k_pa, &windows[a], &windows[b])?;
            let q = &inverses[a] * pa * &inverses[b];
            let kv = cross_block(k_v, &windows[a], &windows[b])?;
            let v = q.component_mul(&kv).sum();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(EmbeddingGram { m, kind: GramKind::Linear, beta })
}

/// Root causes: `M(c, c')` is the mean of the cross block `K_V(c', c)`.
pub fn root_cause_gram(k_v: &KernelMatrix, windows: &[Vec<usize>]) -> Result<EmbeddingGram> {
    if windows.is_empty() || windows.iter().any(|w| w.is_empty()) {
        return Err(Error::InvalidData("windows must be nonempty".into()));
    }
    let nw = windows.len();
    let mut m = DMatrix::zeros(nw, nw);
    for a in 0..nw {
        for b in a..nw {
            let block = cross_block(k_v, &windows[a], &windows[b])?;
            let v = block.mean();
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(EmbeddingGram { m, kind: GramKind::Linear, beta: 0.0 })
}

/// Squared embedding distances `M(c,c) + M(c',c') − 2M(c,c')`, clamped at 0.
fn embedding_distances(ml: &DMatrix<f64>) -> DMatrix<f64> {
    let n = ml.nrows();
    DMatrix::from_fn(n, n, |a, b| (ml[(a, a)] + ml[(b, b)] - 2.0 * ml[(a, b)]).max(0.0))
}

/// Median of the squared embedding distances over distinct pairs, falling
/// back to the nonzero ones; `None` if every distance is zero.
pub fn embedding_median(ml: &EmbeddingGram) -> Option<f64> {
    let d = embedding_distances(&ml.m);
    let n = d.nrows();
    let mut all: Vec<f64> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| d[(a, b)]).collect();
    all.sort_by(f64::total_cmp);
    let median = |v: &[f64]| {
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    };
    if all.is_empty() {
        return None;
    }
    let med = median(&all);
    if med > 0.0 {
        return Some(med);
    }
    let nonzero: Vec<f64> = all.into_iter().filter(|v| *v > 0.0).collect();
    (!nonzero.is_empty()).then(|| median(&nonzero))
}

/// `M^G(c,c') = exp(−‖Û_c − Û_c'‖² / (2σ₂²))`; `σ₂²` defaults to the
/// median squared embedding distance.
pub fn gaussian_gram(ml: &EmbeddingGram, sigma2_sq: Option<f64>) -> Result<EmbeddingGram> {
    if ml.kind != GramKind::Linear {
        return Err(Error::InvalidConfig("gaussian_gram expects a linear Gram matrix".into()));
    }
    let width = match sigma2_sq {
        Some(w) => w,
        // every embedding identical: any width gives the all-ones matrix
        None => embedding_median(ml).unwrap_or(1.0),
    };
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::NonPositiveWidth(width));
    }
    let d = embedding_distances(&ml.m);
    let mut m = d.map(|v| (-v / (2.0 * width)).exp());
    m.fill_diagonal(1.0);
    Ok(EmbeddingGram { m, kind: GramKind::Gaussian { sigma2_sq: width }, beta: ml.beta })
}

/// Kernel PCA on a Gram matrix: double centering, eigendecomposition and
/// scores `eigenvector·√eigenvalue` for the top `k` components.
pub fn kpca_extract(gram: &EmbeddingGram, k: usize, window_centers: Vec<f64>) -> Result<EncapsulatorSeries> {
    let n = gram.m.nrows();
    if n < 3 {
        return Err(Error::InsufficientWindows { needed: 3, got: n });
    }
    if window_centers.len() != n {
        return Err(Error::InvalidData("one center per window required".into()));
    }
    let centered = crate::kernels::center(&gram.m);
    let scale = gram.m.amax().max(1e-300);
    if centered.amax() <= 1e-12 * scale {
        return Err(Error::AllZeroGram);
    }
    let eig = SymmetricEigen::new(centered);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let k = k.min(n).max(1);
    let mut components = DMatrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[idx];
        eigenvalues.push(lambda);
        let s = lambda.max(0.0).sqrt();
        let v = eig.eigenvectors.column(idx);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = v.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            components[(i, col)] = sign * s * v[i];
        }
    }
    Ok(EncapsulatorSeries { components, eigenvalues, window_centers })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SecondKernel {
    Linear,
    /// `None` picks the width by the median heuristic on embeddings.
    Gaussian { sigma2_sq: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnvConfig {
    pub window_len: usize,
    /// Distance between consecutive window centers (time index only).
    pub stride: usize,
    pub beta: f64,
    pub kernel: SecondKernel,
    pub n_components: usize,
}

impl Default for KnvConfig {
    fn default() -> Self {
        KnvConfig {
            window_len: 100,
            stride: 1,
            beta: 0.05,
            kernel: SecondKernel::Gaussian { sigma2_sq: None },
            n_components: 3,
        }
    }
}

impl KnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.stride == 0 || self.n_components == 0 {
            return Err(Error::InvalidConfig(
                "window_len ≥ 2, stride ≥ 1 and n_components ≥ 1 required".into(),
            ));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("beta must be positive".into()));
        }
        Ok(())
    }
}

/// Windows of length `L` centered at every `stride`-th sample, truncated at
/// the series ends; one group per domain for a domain index. Returns the
/// groups with their center values.
pub fn knv_windows(index: &SurrogateIndex, cfg: &KnvConfig) -> (Vec<Vec<usize>>, Vec<f64>) {
    match index {
        SurrogateIndex::Time(_) => {
            let n = index.len();
            let half = cfg.window_len / 2;
            let mut groups = Vec::new();
            let mut centers = Vec::new();
            for c in (0..n).step_by(cfg.stride) {
                let lo = c.saturating_sub(half);
                let hi = (c + cfg.window_len - half).min(n);
                groups.push((lo..hi).collect());
                centers.push(index.value(c));
            }
            (groups, centers)
        }
        SurrogateIndex::Domain(labels) => {
            let domains = index.domains();
            let groups = domains
                .iter()
                .map(|d| (0..labels.len()).filter(|&i| labels[i] == *d).collect())
                .collect();
            (groups, domains.iter().map(|&d| d as f64).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnvOutput {
    pub series: EncapsulatorSeries,
    pub gram: EmbeddingGram,
    /// `σ₁²` of the target and parent kernels.
    pub sigma1_target: f64,
    pub sigma1_parents: Option<f64>,
}

fn standardized_kernel(cols: &[&[f64]]) -> Result<(KernelMatrix, f64)> {
    let std_cols = cols
        .iter()
        .map(|c| standardize(c).ok_or(Error::DegenerateSample))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = std_cols.iter().map(|c| c.as_slice()).collect();
    let points = points_from_columns(&refs);
    let width = median_heuristic(&points)?;
    Ok((gaussian_kernel(&points, width)?, width))
}

/// Nonstationarity encapsulators of the module `P(target | parents)`.
pub fn knv(d: &Dataset, target: &str, parents: &[&str], cfg: &KnvConfig) -> Result<KnvOutput> {
    cfg.validate()?;
    let t = d.var_index(target)?;
    let pa = parents.iter().map(|p| d.var_index(p)).collect::<Result<Vec<_>>>()?;
    let (windows, centers) = knv_windows(d.index(), cfg);
    let (k_v, s_v) = standardized_kernel(&[d.column(t)])?;
    let (lin, s_pa) = if pa.is_empty() {
        (root_cause_gram(&k_v, &windows)?, None)
    } else {
        let cols: Vec<&[f64]> = pa.iter().map(|&p| d.column(p)).collect();
        let (k_pa, s) = standardized_kernel(&cols)?;
        (linear_gram(&k_v, &k_pa, &windows, cfg.beta)?, Some(s))
    };
    let gram = match cfg.kernel {
        SecondKernel::Linear => lin,
        SecondKernel::Gaussian { sigma2_sq } => gaussian_gram(&lin, sigma2_sq)?,
    };
    let series = kpca_extract(&gram, cfg.n_components, centers)?;
    Ok(KnvOutput { series, gram, sigma1_target: s_v, sigma1_parents: s_pa })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> KernelMatrix {
        KernelMatrix::from_entries(DMatrix::from_element(n, n, 1.0), 1.0).unwrap()
    }

    #[test]
    fn single_sample_windows() {
        let k = ones(2);
        let g = linear_gram(&k, &k, &[vec![0], vec![1]], 0.05).unwrap();
        for v in g.m.iter() {
            assert!((v - 1.0 / 1.1025).abs() < 1e-12);
        }
    }

    #[test]
    fn root_cause_means() {
        let g = root_cause_gram(&ones(5), &[vec![0, 1], vec![2, 3, 4]]).unwrap();
        assert!(g.m.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let half = KernelMatrix::from_entries(DMatrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { 0.5 }), 1.0).unwrap();
        let g = root_cause_gram(&half, &[vec![0, 1], vec![2, 3, 4]]).unwrap();
        assert!((g.m[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_gram_arithmetic() {
        let ml = EmbeddingGram { m: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]), kind: GramKind::Linear, beta: 0.05 };
        let g = gaussian_gram(&ml, Some(1.0)).unwrap();
        assert!((g.m[(0, 1)] - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(g.m[(0, 0)], 1.0);
        let same = EmbeddingGram { m: DMatrix::from_element(3, 3, 0.7), kind: GramKind::Linear, beta: 0.05 };
        let g = gaussian_gram(&same, None).unwrap();
        assert!(g.m.iter().all(|v| *v == 1.0));
        assert_eq!(kpca_extract(&g, 2, vec![0.0, 1.0, 2.0]), Err(Error::AllZeroGram));
        assert!(matches!(gaussian_gram(&ml, Some(0.0)), Err(Error::NonPositiveWidth(_))));
    }

    #[test]
    fn kpca_orders_eigenvalues() {
        let pts: [f64; 5] = [0.0, 1.0, 2.0, 3.5, 7.0];
        let m = DMatrix::from_fn(5, 5, |i, j| (-(pts[i] - pts[j]).powi(2) / 8.0).exp());
        let g = EmbeddingGram { m, kind: GramKind::Gaussian { sigma2_sq: 4.0 }, beta: 0.05 };
        let s = kpca_extract(&g, 3, pts.to_vec()).unwrap();
        assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(s.components.shape(), (5, 3));
        // scores reproduce the centered Gram matrix when all components are kept
        let full = kpca_extract(&g, 5, pts.to_vec()).unwrap();
        let recon = &full.components * full.components.transpose();
        let centered = crate::kernels::center(&g.m);
        assert!((recon - centered).amax() < 1e-10);
    }

    #[test]
    fn window_layout() {
        let idx = SurrogateIndex::row_index(10);
        let cfg = KnvConfig { window_len: 4, stride: 3, ..Default::default() };
        let (w, c) = knv_windows(&idx, &cfg);
        assert_eq!(c, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(w[0], vec![0, 1]);
        assert_eq!(w[1], vec![1, 2, 3, 4]);
        assert_eq!(w[3], vec![7, 8, 9]);
    }
}
