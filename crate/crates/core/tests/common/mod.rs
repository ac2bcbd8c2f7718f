#![allow(dead_code)]

use cdnod::data::{Dataset, SurrogateIndex};
use cdnod::kernels::KernelMatrix;
use cdnod::knv::linear_gram;
use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// `|r|` against the parameter or its absolute value, whichever is larger.
pub fn aligned_r(score: &[f64], param: &[f64]) -> f64 {
    let abs: Vec<f64> = param.iter().map(|v| v.abs()).collect();
    pearson(score, param).abs().max(pearson(score, &abs).abs())
}

fn phi(u: f64) -> Vector2<f64> {
    Vector2::new(u, u * u)
}

fn poly_kernel(u: &[f64]) -> KernelMatrix {
    let m = DMatrix::from_fn(u.len(), u.len(), |i, j| phi(u[i]).dot(&phi(u[j])));
    KernelMatrix::from_entries(m, 1.0).unwrap()
}

/// Explicit `Û_c = Ψ_c (K_c + βI)⁻¹ Φ_cᵀ` with the feature map `u ↦ (u, u²)`
/// on both sides, and `M(c, c') = ⟨Û_c, Û_c'⟩_HS`.
pub fn explicit_linear_gram(x: &[f64], y: &[f64], windows: &[Vec<usize>], beta: f64) -> DMatrix<f64> {
    let ops: Vec<Matrix2<f64>> = windows
        .iter()
        .map(|w| {
            let n = w.len();
            let phi_x = DMatrix::from_fn(2, n, |r, c| phi(x[w[c]])[r]);
            let psi_y = DMatrix::from_fn(2, n, |r, c| phi(y[w[c]])[r]);
            let k = phi_x.transpose() * &phi_x + DMatrix::identity(n, n) * beta;
            let inv = k.try_inverse().unwrap();
            let u = psi_y * inv * phi_x.transpose();
            Matrix2::from_fn(|r, c| u[(r, c)])
        })
        .collect();
    DMatrix::from_fn(windows.len(), windows.len(), |a, b| ops[a].component_mul(&ops[b]).sum())
}

/// Tiny instance: 10 samples, three windows of size ≤ 5.
pub fn tiny_instance() -> (Vec<f64>, Vec<f64>, Vec<Vec<usize>>) {
    let x = vec![-1.2, -0.7, -0.1, 0.3, 0.8, 1.1, -0.4, 0.5, 1.6, -1.5];
    let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 0.5 * v + 0.1 * (i as f64).sin()).collect();
    let windows = vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6, 7], vec![7, 8, 9]];
    (x, y, windows)
}

/// Largest absolute difference between the cross-block and explicit Gram
/// matrices on the tiny instance.
pub fn brute_force_gap(beta: f64) -> f64 {
    let (x, y, windows) = tiny_instance();
    let fast = linear_gram(&poly_kernel(&y), &poly_kernel(&x), &windows, beta).unwrap();
    let slow = explicit_linear_gram(&x, &y, &windows, beta);
    (fast.m - slow).amax()
}

/// `V₁ → V₂ → V₃` over time with every module changing independently:
/// the mean of `V₁`, the coefficient of `V₂` and the noise scale of `V₃`.
pub fn gen_changing_chain(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); 3];
    for t in 0..n {
        let s = t as f64 / n as f64;
        let m1 = (2.0 * std::f64::consts::PI * s).sin();
        let a2 = 0.5 + 0.4 * (3.0 * 2.0 * std::f64::consts::PI * s).cos();
        let s3 = 0.6 + 0.4 * (5.0 * 2.0 * std::f64::consts::PI * s + 1.0).sin();
        let v1 = m1 + rng.gen_range(-0.5..0.5);
        let v2 = a2 * v1 + rng.gen_range(-0.3..0.3);
        let v3 = 0.8 * v2 + s3 * rng.gen_range(-0.5..0.5);
        for (c, v) in cols.iter_mut().zip([v1, v2, v3]) {
            c.push(v);
        }
    }
    let names = vec!["V1".into(), "V2".into(), "V3".into()];
    Dataset::new(cols, names, SurrogateIndex::row_index(n)).unwrap()
}

/// Linear-Gaussian chain `X → Y → Z` with no changes.
pub fn gen_stationary_chain(n: usize, seed: u64) -> Dataset {
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![Vec::with_capacity(n); 3];
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let y = 0.8 * x + rng.sample::<f64, _>(StandardNormal);
        let z = 0.8 * y + rng.sample::<f64, _>(StandardNormal);
        for (c, v) in cols.iter_mut().zip([x, y, z]) {
            c.push(v);
        }
    }
    let names = vec!["X".into(), "Y".into(), "Z".into()];
    Dataset::new(cols, names, SurrogateIndex::row_index(n)).unwrap()
}
