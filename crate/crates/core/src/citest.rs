//! Kernel-based (conditional) independence tests.
//!
//! The unconditional statistic is `Tr(K̃ₓ·K̃ᵧ)/m` on centered Gaussian
//! kernels. The conditional statistic residualizes the centered kernels of
//! `(x, Z)` and `y` with `R = ε·(K̃_Z + εI)⁻¹` and takes `Tr(R·K̃ₓ·R·R·K̃ᵧ·R)/m`.
//! Kernels enter through pivoted Cholesky factors `K̃ ≈ F·Fᵀ`, so every
//! quantity above reduces to products with `m × r` factors; the factor
//! tolerance controls how close this is to the dense computation.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::data::{standardize, CITestResult, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{center_factor, incomplete_cholesky, median_heuristic, points_from_columns};

/// Smallest sample accepted by the kernel tests.
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullMethod {
    /// Gamma distribution matching the first two null moments.
    GammaApprox,
    /// Permutation of `y` (within `Z` neighborhoods for conditional tests).
    Permutation { n_perm: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub null_method: NullMethod,
    pub eps_ridge: f64,
    /// Residual trace allowed per sample in the kernel factorizations.
    pub factor_tol: f64,
    /// Rank cap for the kernel factorizations.
    pub max_rank: usize,
    /// Gaussian bandwidth of the surrogate `C` in units of its encoding
    /// (time rescaled to `[0, 1]`, domains as label ranks).
    pub c_bandwidth: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            null_method: NullMethod::GammaApprox,
            eps_ridge: 1e-3,
            factor_tol: 1e-5,
            max_rank: 400,
            c_bandwidth: 0.05,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if let NullMethod::Permutation { n_perm, .. } = self.null_method {
            if n_perm < 100 {
                return Err(Error::InvalidConfig("n_perm must be at least 100".into()));
            }
        }
        if !(self.eps_ridge > 0.0) {
            return Err(Error::InvalidConfig("eps_ridge must be positive".into()));
        }
        if !(self.c_bandwidth > 0.0) || !self.c_bandwidth.is_finite() {
            return Err(Error::InvalidConfig("c_bandwidth must be positive".into()));
        }
        if !(self.factor_tol >= 0.0) || self.max_rank == 0 {
            return Err(Error::InvalidConfig("invalid factorization settings".into()));
        }
        Ok(())
    }

    /// Dense-equivalent settings: exact factorizations.
    pub fn exact(mut self) -> Self {
        self.factor_tol = 0.0;
        self.max_rank = usize::MAX;
        self
    }
}

fn standardized_or_raw(col: &[f64]) -> Vec<f64> {
    standardize(col).unwrap_or_else(|| col.to_vec())
}

/// Centered kernel factor for the joint points formed by `columns`.
fn kernel_factor(columns: &[&[f64]], cfg: &TestConfig) -> Result<DMatrix<f64>> {
    joint_factor(&[columns], None, cfg)
}

/// Centered factor of a product of Gaussian kernels: one per block of
/// columns, each with its own median-heuristic width, times a kernel on `c`
/// with width `cfg.c_bandwidth`.
fn joint_factor(blocks: &[&[&[f64]]], c: Option<&[f64]>, cfg: &TestConfig) -> Result<DMatrix<f64>> {
    let m = blocks
        .iter()
        .find_map(|b| b.first().map(|col| col.len()))
        .or(c.map(|c| c.len()))
        .unwrap_or(0);
    let mut parts = Vec::new();
    for block in blocks.iter().filter(|b| !b.is_empty()) {
        let mut p = points_from_columns(block);
        p /= median_heuristic(&p)?.sqrt();
        parts.push(p);
    }
    if let Some(c) = c {
        parts.push(DMatrix::from_iterator(m, 1, c.iter().map(|v| v / cfg.c_bandwidth)));
    }
    let width: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut points = DMatrix::zeros(m, width);
    let mut k = 0;
    for p in &parts {
        points.columns_mut(k, p.ncols()).copy_from(p);
        k += p.ncols();
    }
    let g = incomplete_cholesky(&points, 1.0, cfg.factor_tol * m as f64, cfg.max_rank)?;
    Ok(center_factor(&g))
}

/// `R = ε·(F·Fᵀ + εI)⁻¹ = I − Q·diag(d)·Qᵀ` for a centered factor `F`.
struct Residualizer {
    basis: DMatrix<f64>,
    shrink: Vec<f64>,
}

impl Residualizer {
    fn new(fz: &DMatrix<f64>, eps: f64) -> Result<Self> {
        let gram = fz.transpose() * fz;
        let eig = SymmetricEigen::try_new(gram, 1e-13, 10_000).ok_or(Error::IllConditioned)?;
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&k| eig.eigenvalues[k] > 1e-12 * top.max(1e-300))
            .collect();
        let m = fz.nrows();
        let mut basis = DMatrix::zeros(m, keep.len());
        let mut shrink = Vec::with_capacity(keep.len());
        for (c, &k) in keep.iter().enumerate() {
            let s2 = eig.eigenvalues[k];
            let v = eig.eigenvectors.column(k);
            let q = fz * v / s2.sqrt();
            basis.set_column(c, &q);
            shrink.push(s2 / (s2 + eps));
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned);
        }
        Ok(Residualizer { basis, shrink })
    }

    fn apply(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut proj = self.basis.transpose() * f;
        for (k, mut row) in proj.row_iter_mut().enumerate() {
            row *= self.shrink[k];
        }
        f - &self.basis * proj
    }
}

fn trace_stat(ax: &DMatrix<f64>, ay: &DMatrix<f64>) -> f64 {
    let cross = ax.transpose() * ay;
    cross.norm_squared() / ax.nrows() as f64
}

fn gamma_p_value(stat: f64, mean: f64, var: f64) -> f64 {
    if !(mean > 0.0) || !(var > 0.0) {
        // no variation left in one of the kernels
        return 1.0;
    }
    let shape = mean * mean / var;
    let rate = mean / var;
    match Gamma::new(shape, rate) {
        Ok(g) => (1.0 - g.cdf(stat)).clamp(0.0, 1.0),
        Err(_) => 1.0,
    }
}

fn permutation_p_value(stat: f64, null: impl Iterator<Item = f64>) -> f64 {
    let mut exceed = 0usize;
    let mut total = 0usize;
    for s in null {
        total += 1;
        if s >= stat {
            exceed += 1;
        }
    }
    (1 + exceed) as f64 / (1 + total) as f64
}

fn permute_rows(f: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(perm[i], j)])
}

fn check_lengths(lens: &[usize]) -> Result<usize> {
    let m = lens[0];
    if lens.iter().any(|&l| l != m) {
        return Err(Error::InvalidData("columns have different lengths".into()));
    }
    if m < MIN_SAMPLES {
        return Err(Error::SampleTooSmall { needed: MIN_SAMPLES, got: m });
    }
    Ok(m)
}

/// Unconditional test on precomputed centered factors.
fn independence_from_factors(fx: &DMatrix<f64>, fy: &DMatrix<f64>, cfg: &TestConfig) -> (f64, f64) {
    let m = fx.nrows() as f64;
    let stat = trace_stat(fx, fy);
    let p = match cfg.null_method {
        NullMethod::GammaApprox => {
            let tr_x = fx.norm_squared();
            let tr_y = fy.norm_squared();
            let fro_x = (fx.transpose() * fx).norm_squared();
            let fro_y = (fy.transpose() * fy).norm_squared();
            let mean = tr_x * tr_y / (m * m);
            let var = 2.0 * fro_x * fro_y / (m * m * m * m);
            gamma_p_value(stat, mean, var)
        }
        NullMethod::Permutation { n_perm, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..fx.nrows()).collect();
            permutation_p_value(
                stat,
                (0..n_perm).map(|_| {
                    perm.shuffle(&mut rng);
                    trace_stat(fx, &permute_rows(fy, &perm))
                }),
            )
        }
    };
    (stat, p)
}

/// Groups samples into cells of a quantile grid over `Z`.
fn neighborhoods(z: &[&[f64]]) -> Vec<Vec<usize>> {
    let m = z[0].len();
    let d = z.len();
    let bins = ((m as f64 / 10.0).powf(1.0 / d as f64).floor() as usize).max(1);
    let mut cell = vec![0usize; m];
    for col in z {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        for (rank, &i) in order.iter().enumerate() {
            cell[i] = cell[i] * bins + rank * bins / m;
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, c) in cell.into_iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.sort();
    groups
}

fn conditional_from_factors(
    fxz: &DMatrix<f64>,
    fy: &DMatrix<f64>,
    resid: &Residualizer,
    z: &[&[f64]],
    cfg: &TestConfig,
) -> (f64, f64) {
    let ax = resid.apply(fxz);
    let ay = resid.apply(fy);
    let stat = trace_stat(&ax, &ay);
    let m = ax.nrows() as f64;
    let p = match cfg.null_method {
        NullMethod::GammaApprox => {
            let gx = &ax * ax.transpose();
            let gy = &ay * ay.transpose();
            let mean = gx.diagonal().dot(&gy.diagonal()) / m;
            let var = 2.0
                * gx.iter().zip(gy.iter()).map(|(a, b)| a * a * b * b).sum::<f64>()
                / (m * m);
            gamma_p_value(stat, mean, var)
        }
        NullMethod::Permutation { n_perm, seed } => {
            let groups = neighborhoods(z);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..fy.nrows()).collect();
            permutation_p_value(
                stat,
                (0..n_perm).map(|_| {
                    for g in &groups {
                        let mut shuffled = g.clone();
                        shuffled.shuffle(&mut rng);
                        for (&dst, &src) in g.iter().zip(&shuffled) {
                            perm[dst] = src;
                        }
                    }
                    trace_stat(&ax, &resid.apply(&permute_rows(fy, &perm)))
                }),
            )
        }
    };
    (stat, p)
}

/// Kernel independence test of `x` and `y`. Independence is declared when
/// the returned p-value exceeds `cfg.alpha`.
pub fn test_independence(x: &[f64], y: &[f64], cfg: &TestConfig) -> Result<CITestResult> {
    check_lengths(&[x.len(), y.len()])?;
    let x = standardized_or_raw(x);
    let y = standardized_or_raw(y);
    let fx = kernel_factor(&[&x], cfg)?;
    let fy = kernel_factor(&[&y], cfg)?;
    let (statistic, p_value) = independence_from_factors(&fx, &fy, cfg);
    Ok(CITestResult { statistic, p_value, conditioning_set: Vec::new() })
}

/// Kernel conditional independence test of `x` and `y` given the columns
/// in `z`. The returned `conditioning_set` is left empty; callers that know
/// the labels fill it in.
pub fn test_conditional_independence(
    x: &[f64],
    y: &[f64],
    z: &[&[f64]],
    cfg: &TestConfig,
) -> Result<CITestResult> {
    if z.is_empty() {
        return test_independence(x, y, cfg);
    }
    let mut lens = vec![x.len(), y.len()];
    lens.extend(z.iter().map(|c| c.len()));
    check_lengths(&lens)?;
    let x = standardized_or_raw(x);
    let y = standardized_or_raw(y);
    let z: Vec<Vec<f64>> = z.iter().map(|c| standardized_or_raw(c)).collect();
    let z_refs: Vec<&[f64]> = z.iter().map(|c| c.as_slice()).collect();
    let fxz = joint_factor(&[&[&x], &z_refs], None, cfg)?;
    let fy = kernel_factor(&[&y], cfg)?;
    let fz = kernel_factor(&z_refs, cfg)?;
    let resid = Residualizer::new(&fz, cfg.eps_ridge)?;
    let (statistic, p_value) = conditional_from_factors(&fxz, &fy, &resid, &z_refs, cfg);
    Ok(CITestResult { statistic, p_value, conditioning_set: Vec::new() })
}

/// Independence decisions over the vertices of an augmented graph.
///
/// Vertices `0..n_vars()` are the observed variables; vertex `n_vars()` is
/// the surrogate `C`.
pub trait CiOracle {
    fn n_vars(&self) -> usize;

    fn label(&self, v: usize) -> String;

    fn test(&self, x: usize, y: usize, s: &[usize]) -> Result<CITestResult>;

    fn c_vertex(&self) -> usize {
        self.n_vars()
    }
}

const FACTOR_CACHE_LIMIT: usize = 128;

/// [`CiOracle`] backed by the kernel tests on a dataset.
///
/// Variables are standardized (unless disabled). `C` enters as its real
/// encoding with its own bandwidth, so kernels on sets containing `C` are
/// products of a median-heuristic kernel on the observed part and a kernel
/// on `C`. Kernel factors are cached per variable set.
pub struct KciOracle {
    columns: Vec<Vec<f64>>,
    labels: Vec<String>,
    cfg: TestConfig,
    factors: RefCell<HashMap<(Option<usize>, Vec<usize>), Rc<DMatrix<f64>>>>,
    residualizers: RefCell<HashMap<Vec<usize>, Rc<Residualizer>>>,
    tests_run: RefCell<usize>,
}

impl KciOracle {
    pub fn new(d: &Dataset, cfg: TestConfig) -> Result<Self> {
        Self::with_standardization(d, cfg, true)
    }

    pub fn with_standardization(d: &Dataset, cfg: TestConfig, standardize_vars: bool) -> Result<Self> {
        cfg.validate()?;
        let mut columns: Vec<Vec<f64>> = d
            .columns()
            .iter()
            .map(|c| if standardize_vars { standardized_or_raw(c) } else { c.clone() })
            .collect();
        let c = d.index().encoded();
        if c.iter().all(|v| *v == c[0]) {
            return Err(Error::DegenerateSample);
        }
        columns.push(c);
        let mut labels = d.names().to_vec();
        labels.push("C".to_string());
        Ok(KciOracle {
            columns,
            labels,
            cfg,
            factors: RefCell::new(HashMap::new()),
            residualizers: RefCell::new(HashMap::new()),
            tests_run: RefCell::new(0),
        })
    }

    pub fn config(&self) -> &TestConfig {
        &self.cfg
    }

    pub fn tests_run(&self) -> usize {
        *self.tests_run.borrow()
    }

    /// Factor of the kernel on `lead` (own width) times the kernel on `vars`.
    fn factor(&self, lead: Option<usize>, vars: &[usize]) -> Result<Rc<DMatrix<f64>>> {
        let key = (lead, vars.to_vec());
        if let Some(f) = self.factors.borrow().get(&key) {
            return Ok(f.clone());
        }
        let c = self.columns.len() - 1;
        let col = |v: usize| self.columns[v].as_slice();
        let lead_cols: Vec<&[f64]> = lead.filter(|&v| v != c).map(col).into_iter().collect();
        let rest: Vec<&[f64]> = vars.iter().filter(|&&v| v != c).map(|&v| col(v)).collect();
        let c_col = (lead == Some(c) || vars.contains(&c)).then(|| col(c));
        let f = Rc::new(joint_factor(&[&lead_cols, &rest], c_col, &self.cfg)?);
        let mut cache = self.factors.borrow_mut();
        if cache.len() >= FACTOR_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, f.clone());
        Ok(f)
    }

    fn residualizer(&self, vars: &[usize]) -> Result<Rc<Residualizer>> {
        if let Some(r) = self.residualizers.borrow().get(vars) {
            return Ok(r.clone());
        }
        let r = Rc::new(Residualizer::new(&*self.factor(None, vars)?, self.cfg.eps_ridge)?);
        let mut cache = self.residualizers.borrow_mut();
        if cache.len() >= FACTOR_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(vars.to_vec(), r.clone());
        Ok(r)
    }
}

impl CiOracle for KciOracle {
    fn n_vars(&self) -> usize {
        self.columns.len() - 1
    }

    fn label(&self, v: usize) -> String {
        self.labels[v].clone()
    }

    fn test(&self, x: usize, y: usize, s: &[usize]) -> Result<CITestResult> {
        let n_vertices = self.columns.len();
        if let Some(&bad) = [x, y].iter().chain(s).find(|&&v| v >= n_vertices) {
            return Err(Error::IndexOutOfRange { index: bad, len: n_vertices });
        }
        check_lengths(&[self.columns[0].len()])?;
        *self.tests_run.borrow_mut() += 1;
        // canonical order so results do not depend on variable positions
        let c = self.columns.len() - 1;
        let (x, y) = if y == c || (x != c && self.labels[x] <= self.labels[y]) {
            (x, y)
        } else {
            (y, x)
        };
        let mut z: Vec<usize> = s.to_vec();
        z.sort_by(|&a, &b| self.labels[a].cmp(&self.labels[b]));
        let conditioning_set = z.iter().map(|&v| self.label(v)).collect();
        let (statistic, p_value) = if z.is_empty() {
            let fx = self.factor(None, &[x])?;
            let fy = self.factor(None, &[y])?;
            independence_from_factors(&fx, &fy, &self.cfg)
        } else {
            let fxz = self.factor(Some(x), &z)?;
            let fy = self.factor(None, &[y])?;
            let resid = self.residualizer(&z)?;
            let z_cols: Vec<&[f64]> = z.iter().map(|&v| self.columns[v].as_slice()).collect();
            conditional_from_factors(&fxz, &fy, &resid, &z_cols, &self.cfg)
        };
        Ok(CITestResult { statistic, p_value, conditioning_set })
    }
}

/// Gaussian partial-correlation test with Fisher's z transform. `C` enters
/// as its numeric encoding.
pub struct FisherZOracle {
    columns: Vec<Vec<f64>>,
    labels: Vec<String>,
    corr: DMatrix<f64>,
}

impl FisherZOracle {
    pub fn new(d: &Dataset) -> Result<Self> {
        let m = d.n_samples();
        if m < 5 {
            return Err(Error::SampleTooSmall { needed: 5, got: m });
        }
        let mut columns = d
            .columns()
            .iter()
            .map(|c| standardize(c).ok_or(Error::DegenerateSample))
            .collect::<Result<Vec<_>>>()?;
        columns.push(standardize(&d.index().encoded()).ok_or(Error::DegenerateSample)?);
        let k = columns.len();
        let corr = DMatrix::from_fn(k, k, |a, b| {
            columns[a].iter().zip(&columns[b]).map(|(u, v)| u * v).sum::<f64>() / (m as f64 - 1.0)
        });
        let mut labels = d.names().to_vec();
        labels.push("C".to_string());
        Ok(FisherZOracle { columns, labels, corr })
    }

    /// Partial correlation of `x` and `y` given `s`.
    pub fn partial_correlation(&self, x: usize, y: usize, s: &[usize]) -> Result<f64> {
        let idx: Vec<usize> = [x, y].into_iter().chain(s.iter().copied()).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.corr[(idx[a], idx[b])]);
        let p = sub.try_inverse().ok_or(Error::SingularSolve)?;
        let r = -p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt();
        Ok(r.clamp(-1.0, 1.0))
    }
}

impl CiOracle for FisherZOracle {
    fn n_vars(&self) -> usize {
        self.columns.len() - 1
    }

    fn label(&self, v: usize) -> String {
        self.labels[v].clone()
    }

    fn test(&self, x: usize, y: usize, s: &[usize]) -> Result<CITestResult> {
        let k = self.columns.len();
        if let Some(&bad) = [x, y].iter().chain(s).find(|&&v| v >= k) {
            return Err(Error::IndexOutOfRange { index: bad, len: k });
        }
        let m = self.columns[0].len() as f64;
        let dof = m - s.len() as f64 - 3.0;
        if dof <= 0.0 {
            return Err(Error::SampleTooSmall { needed: s.len() + 4, got: m as usize });
        }
        let r = self.partial_correlation(x, y, s)?.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
        let z = r.atanh() * dof.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let p_value = (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0);
        Ok(CITestResult {
            statistic: z.abs(),
            p_value,
            conditioning_set: s.iter().map(|&v| self.labels[v].clone()).collect(),
        })
    }
}
