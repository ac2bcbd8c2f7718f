use cdnod::citest::{test_independence, TestConfig};
use cdnod::data::{normalize_dataset, Dataset, SurrogateIndex};
use cdnod::simgen::{gen_single_change, gen_two_env, ChangeKind, SimParams};
use proptest::prelude::*;

fn ols_residual(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    x.iter().zip(y).map(|(a, b)| b - my - slope * (a - mx)).collect()
}

#[test]
fn two_env_mechanism_changes_between_domains() {
    let cfg = TestConfig::default();
    let (mut within, mut pooled) = (0, 0);
    for seed in 0..10 {
        let (d, _) = gen_two_env(seed).unwrap();
        let (v1, v2) = (d.column(0), d.column(1));
        let (a, b) = (&v1[..1000], &v2[..1000]);
        within += (test_independence(a, &ols_residual(a, b), &cfg).unwrap().p_value > 0.05) as usize;
        pooled += (test_independence(v1, &ols_residual(v1, v2), &cfg).unwrap().p_value < 0.05) as usize;
    }
    assert!(within >= 9, "within-domain residual independent in {within}/10");
    assert!(pooled >= 9, "pooled residual dependent in {pooled}/10");
}

#[test]
fn single_change_truth() {
    for kind in [ChangeKind::Stationary, ChangeKind::Coefficient, ChangeKind::NoiseMean, ChangeKind::NoiseScale] {
        let p = SimParams { w: 5.0, n: 600, seed: 3 };
        let (d, truth) = gen_single_change(kind, &p).unwrap();
        assert_eq!(d.n_samples(), 600);
        assert_eq!(truth.edges, vec![(0, 1)]);
        assert_eq!(truth.c_children.is_empty(), kind == ChangeKind::Stationary);
        assert_eq!(d, gen_single_change(kind, &p).unwrap().0);
    }
}

proptest! {
    #[test]
    fn normalization_is_idempotent(cols in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 8), 1..4)) {
        let names = (0..cols.len()).map(|i| format!("X{i}")).collect();
        let Ok(d) = Dataset::new(cols, names, SurrogateIndex::row_index(8)) else { return Ok(()) };
        let Ok(once) = normalize_dataset(&d) else { return Ok(()) };
        let twice = normalize_dataset(&once).unwrap();
        for (a, b) in once.columns().iter().zip(twice.columns()) {
            for (u, v) in a.iter().zip(b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
