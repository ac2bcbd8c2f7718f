//! Synthetic generators with known ground truth, a d-separation oracle on
//! the augmented graph, and skeleton / orientation scoring.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::citest::CiOracle;
use crate::data::{CITestResult, Dataset, SurrogateIndex};
use crate::error::{Error, Result};
use crate::graph::{pair, AugmentedSkeleton, PartiallyDirectedGraph};

/// Noise generator recorded in simulation metadata.
pub const PRNG_NAME: &str = "ChaCha8Rng/rand_chacha-0.3/seed_from_u64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub names: Vec<String>,
    /// Directed edges `(cause, effect)` over observed variables.
    pub edges: Vec<(usize, usize)>,
    /// Variables whose causal module changes with `C`.
    pub c_children: BTreeSet<usize>,
    /// Pairs jointly driven by a common `g(C)`.
    pub confounders: Vec<(usize, usize)>,
}

impl GroundTruth {
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|&(x, y)| pair(x, y) == pair(a, b))
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, t)| t == v).map(|&(f, _)| f).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.edges.iter().any(|&(a, b)| a >= n || b >= n || a == b)
            || self.c_children.iter().any(|&c| c >= n)
        {
            return Err(Error::InvalidData("ground truth refers to unknown variables".into()));
        }
        let mut indeg = vec![0; n];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &(a, b) in &self.edges {
                if a == v {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        queue.push_back(b);
                    }
                }
            }
        }
        if seen != n {
            return Err(Error::InvalidData("ground truth graph has a cycle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Periodicity of the changing parameters.
    pub w: f64,
    pub n: usize,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0) || self.n < 100 {
            return Err(Error::InvalidConfig(format!(
                "need w > 0 and n >= 100 (w = {}, n = {})",
                self.w, self.n
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("V{i}")).collect()
}

/// Changing parameters `(f₁, f₂, f₃)` of the six-variable system at time `t`.
pub fn toy_parameters(w: f64, t: f64, n: f64) -> (f64, f64, f64) {
    let f1 = (w * t / n).sin();
    let f2 = 0.8 * (w * (t / n + 0.5)).sin();
    let f3 = 1.5 * (w * (t / n + 0.5)).cos();
    (f1, f2, f3)
}

/// Six-variable nonlinear system whose root input, `V₄` noise scale and
/// `V₃ → V₅` strength vary sinusoidally with time `t = 1..N`.
pub fn gen_toy_sem(p: &SimParams) -> Result<(Dataset, GroundTruth)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.n;
    let mut cols = vec![Vec::with_capacity(n); 6];
    for step in 1..=n {
        let t = step as f64;
        let (f1, f2, f3) = toy_parameters(p.w, t, n as f64);
        let e0 = uniform(&mut rng, 0.0, 1.0);
        let mut e = [0.0; 7];
        for ei in e.iter_mut().skip(1) {
            *ei = uniform(&mut rng, -0.3, 0.3);
        }
        let v1 = f1 * e0 + e[1];
        let v2 = (v1 * v1).sin() - 0.2 * v1 + e[2];
        let v3 = 0.5 * v1.cos() + e[3];
        let v4 = (v2 + v3).sin() + 0.2 * v2 + f2 * e[4];
        let v5 = f3 * v3.tanh() + 0.2 * v3 + e[5];
        let v6 = 0.5 * (v2 + v5) + e[6];
        for (c, v) in cols.iter_mut().zip([v1, v2, v3, v4, v5, v6]) {
            c.push(v);
        }
    }
    let index = SurrogateIndex::time((1..=n).map(|t| t as f64).collect())?;
    let d = Dataset::new(cols, names(6), index)?;
    let truth = GroundTruth {
        names: names(6),
        edges: vec![(0, 1), (0, 2), (1, 3), (2, 3), (2, 4), (1, 5), (4, 5)],
        c_children: [0, 3, 4].into_iter().collect(),
        confounders: Vec::new(),
    };
    Ok((d, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoEnvParams {
    pub n_per_domain: usize,
    pub coefficients: (f64, f64),
    /// Half-width of the uniform cause `V₁`.
    pub cause_half_width: f64,
    /// Half-width of the uniform noise `E`.
    pub noise_half_width: f64,
}

impl Default for TwoEnvParams {
    fn default() -> Self {
        TwoEnvParams {
            n_per_domain: 1000,
            coefficients: (0.3, 0.7),
            cause_half_width: 1.0,
            noise_half_width: 0.1,
        }
    }
}

/// Two domains sharing `V₁ ~ U` while `V₂ = a·V₁ + E` switches `a`.
pub fn gen_two_env(seed: u64) -> Result<(Dataset, GroundTruth)> {
    gen_two_env_with(&TwoEnvParams::default(), seed)
}

pub fn gen_two_env_with(p: &TwoEnvParams, seed: u64) -> Result<(Dataset, GroundTruth)> {
    if p.n_per_domain < 10 {
        return Err(Error::InvalidConfig("need at least 10 samples per domain".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v1 = Vec::with_capacity(2 * p.n_per_domain);
    let mut v2 = Vec::with_capacity(2 * p.n_per_domain);
    let mut labels = Vec::with_capacity(2 * p.n_per_domain);
    for (label, coef) in [(1i64, p.coefficients.0), (2, p.coefficients.1)] {
        for _ in 0..p.n_per_domain {
            let cause = uniform(&mut rng, -p.cause_half_width, p.cause_half_width);
            let noise = uniform(&mut rng, -p.noise_half_width, p.noise_half_width);
            v1.push(cause);
            v2.push(coef * cause + noise);
            labels.push(label);
        }
    }
    let d = Dataset::new(vec![v1, v2], names(2), SurrogateIndex::domain(labels))?;
    let truth = GroundTruth {
        names: names(2),
        edges: vec![(0, 1)],
        c_children: [1].into_iter().collect(),
        confounders: Vec::new(),
    };
    Ok((d, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub n: usize,
    /// Coefficient of each chain link.
    pub strength: f64,
    /// Coefficient of `g(C)` in the equations of `V₂` and `V₄`.
    pub confounder_strength: f64,
    pub noise_half_width: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams { n: 1000, strength: 0.8, confounder_strength: 1.0, noise_half_width: 0.5 }
    }
}

/// `V₁ → V₂ → V₃ → V₄` with `g(C) = sin(2πt/N)` added to `V₂` and `V₄`.
pub fn gen_confounded_chain(seed: u64) -> Result<(Dataset, GroundTruth)> {
    gen_confounded_chain_with(&ChainParams::default(), seed)
}

pub fn gen_confounded_chain_with(p: &ChainParams, seed: u64) -> Result<(Dataset, GroundTruth)> {
    if p.n < 100 {
        return Err(Error::InvalidConfig("need n >= 100".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = p.noise_half_width;
    let mut cols = vec![Vec::with_capacity(p.n); 4];
    for step in 1..=p.n {
        let g = (2.0 * PI * step as f64 / p.n as f64).sin();
        let v1 = uniform(&mut rng, -h, h) * 2.0;
        let v2 = p.strength * v1 + p.confounder_strength * g + uniform(&mut rng, -h, h);
        let v3 = p.strength * v2 + uniform(&mut rng, -h, h);
        let v4 = p.strength * v3 + p.confounder_strength * g + uniform(&mut rng, -h, h);
        for (c, v) in cols.iter_mut().zip([v1, v2, v3, v4]) {
            c.push(v);
        }
    }
    let index = SurrogateIndex::time((1..=p.n).map(|t| t as f64).collect())?;
    let d = Dataset::new(cols, names(4), index)?;
    let truth = GroundTruth {
        names: names(4),
        edges: vec![(0, 1), (1, 2), (2, 3)],
        c_children: [1, 3].into_iter().collect(),
        confounders: vec![(1, 3)],
    };
    Ok((d, truth))
}

/// Which part of `V₂ = a·V₁ + b + s·E` follows `f(t) = sin(w·t/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Stationary,
    Coefficient,
    NoiseMean,
    NoiseScale,
}

/// Parameters `(a, b, s)` of the single-change module at time `t`.
pub fn single_change_parameters(kind: ChangeKind, w: f64, t: f64, n: f64) -> (f64, f64, f64) {
    let f = (w * t / n).sin();
    match kind {
        ChangeKind::Stationary => (0.5, 0.0, 1.0),
        ChangeKind::Coefficient => (f, 0.0, 1.0),
        ChangeKind::NoiseMean => (0.5, f, 1.0),
        ChangeKind::NoiseScale => (0.5, 0.0, 1.0 + 0.8 * f),
    }
}

/// Two-variable module `V₁ → V₂` with `V₁ ~ U[-1,1]`, `E ~ U[-0.3,0.3]` and
/// at most one parameter changing with time.
pub fn gen_single_change(kind: ChangeKind, p: &SimParams) -> Result<(Dataset, GroundTruth)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut v1 = Vec::with_capacity(p.n);
    let mut v2 = Vec::with_capacity(p.n);
    for step in 1..=p.n {
        let (a, b, s) = single_change_parameters(kind, p.w, step as f64, p.n as f64);
        let x = uniform(&mut rng, -1.0, 1.0);
        v1.push(x);
        v2.push(a * x + b + s * uniform(&mut rng, -0.3, 0.3));
    }
    let index = SurrogateIndex::time((1..=p.n).map(|t| t as f64).collect())?;
    let d = Dataset::new(vec![v1, v2], names(2), index)?;
    let truth = GroundTruth {
        names: names(2),
        edges: vec![(0, 1)],
        c_children: if kind == ChangeKind::Stationary { BTreeSet::new() } else { [1].into_iter().collect() },
        confounders: Vec::new(),
    };
    Ok((d, truth))
}

/// d-separation in the augmented graph: the true DAG plus `C` pointing into
/// every changing module and every confounded pair.
///
/// Conditioning on `C` also fixes every `θᵢ(C)` and `g(C)`, so a single `C`
/// vertex with direct arrows is equivalent for all queries.
pub struct DSeparationOracle {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    hide_c: bool,
}

impl DSeparationOracle {
    pub fn new(truth: &GroundTruth) -> Self {
        let n = truth.n_vars();
        let mut parents = vec![Vec::new(); n + 1];
        let mut children = vec![Vec::new(); n + 1];
        let mut link = |a: usize, b: usize| {
            if !children[a].contains(&b) {
                children[a].push(b);
                parents[b].push(a);
            }
        };
        for &(a, b) in &truth.edges {
            link(a, b);
        }
        for &c in &truth.c_children {
            link(n, c);
        }
        for &(a, b) in &truth.confounders {
            link(n, a);
            link(n, b);
        }
        DSeparationOracle { names: truth.names.clone(), parents, children, hide_c: false }
    }

    /// Oracle in which `C` is latent: it never enters conditioning sets.
    pub fn with_hidden_c(truth: &GroundTruth) -> Self {
        DSeparationOracle { hide_c: true, ..Self::new(truth) }
    }

    /// Whether `x` and `y` are d-separated by `z`.
    pub fn d_separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
        let n = self.parents.len();
        let in_z: Vec<bool> = (0..n).map(|v| z.contains(&v)).collect();
        // ancestors of Z, including Z
        let mut anc = in_z.clone();
        let mut stack: Vec<usize> = z.to_vec();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }
        // (vertex, arrived_from_child)
        let mut visited = vec![[false; 2]; n];
        let mut queue = VecDeque::from([(x, true)]);
        while let Some((v, up)) = queue.pop_front() {
            if visited[v][up as usize] {
                continue;
            }
            visited[v][up as usize] = true;
            if v == y && !in_z[v] {
                return false;
            }
            if up {
                if !in_z[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !in_z[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if anc[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        true
    }
}

impl CiOracle for DSeparationOracle {
    fn n_vars(&self) -> usize {
        self.names.len()
    }

    fn label(&self, v: usize) -> String {
        self.names.get(v).cloned().unwrap_or_else(|| "C".to_string())
    }

    fn test(&self, x: usize, y: usize, s: &[usize]) -> Result<CITestResult> {
        let c = self.names.len();
        if self.hide_c && (x == c || y == c || s.contains(&c)) {
            return Err(Error::InvalidConfig("C is latent in this oracle".into()));
        }
        let sep = self.d_separated(x, y, s);
        Ok(CITestResult {
            statistic: if sep { 0.0 } else { 1.0 },
            p_value: if sep { 1.0 } else { 0.0 },
            conditioning_set: s.iter().map(|&v| self.label(v)).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonScore {
    pub fp_rate: f64,
    pub fn_rate: f64,
    /// Fraction of estimated `C`-neighbors that truly change; 1 when none
    /// are estimated.
    pub c_precision: f64,
    /// Fraction of changing modules detected; 1 when none change.
    pub c_recall: f64,
}

fn check_labels(est: &[String], truth: &GroundTruth) -> Result<()> {
    if est != truth.names.as_slice() {
        return Err(Error::LabelMismatch(format!("{:?} vs {:?}", est, truth.names)));
    }
    Ok(())
}

/// Adjacency FP / FN rates over observed pairs plus `C`-adjacency
/// precision and recall.
pub fn score_skeleton(est: &AugmentedSkeleton, truth: &GroundTruth) -> Result<SkeletonScore> {
    check_labels(est.var_names(), truth)?;
    let n = truth.n_vars();
    let (mut fp, mut fneg, mut true_edges, mut non_edges) = (0usize, 0usize, 0usize, 0usize);
    for a in 0..n {
        for b in a + 1..n {
            let t = truth.has_edge(a, b);
            let e = est.has_edge(a, b);
            if t {
                true_edges += 1;
                fneg += (!e) as usize;
            } else {
                non_edges += 1;
                fp += e as usize;
            }
        }
    }
    let rate = |k: usize, d: usize| if d == 0 { 0.0 } else { k as f64 / d as f64 };
    let est_c: BTreeSet<usize> = est.c_adjacent().into_iter().collect();
    let hits = est_c.intersection(&truth.c_children).count();
    Ok(SkeletonScore {
        fp_rate: rate(fp, non_edges),
        fn_rate: rate(fneg, true_edges),
        c_precision: if est_c.is_empty() { 1.0 } else { hits as f64 / est_c.len() as f64 },
        c_recall: if truth.c_children.is_empty() {
            1.0
        } else {
            hits as f64 / truth.c_children.len() as f64
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationScore {
    /// `None` when no true edge is directed.
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub directed: usize,
    /// True edges present but left undirected.
    pub undirected: usize,
}

/// Fraction of directed true edges whose direction matches the truth.
pub fn score_orientation(est: &PartiallyDirectedGraph, truth: &GroundTruth) -> Result<OrientationScore> {
    check_labels(&est.labels()[..est.n_vars()], truth)?;
    let (mut correct, mut directed, mut undirected) = (0, 0, 0);
    for &(a, b) in &truth.edges {
        if est.is_directed(a, b) {
            correct += 1;
            directed += 1;
        } else if est.is_directed(b, a) {
            directed += 1;
        } else if est.is_undirected(a, b) {
            undirected += 1;
        }
    }
    Ok(OrientationScore {
        accuracy: (directed > 0).then(|| correct as f64 / directed as f64),
        correct,
        directed,
        undirected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Provenance, Sepset};

    #[test]
    fn toy_parameters_at_midpoint() {
        for w in [5.0, 10.0, 30.0] {
            let (f1, _, _) = toy_parameters(w, 500.0, 1000.0);
            assert!((f1 - (w / 2.0).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn toy_sem_shape_and_determinism() {
        let p = SimParams { w: 10.0, n: 300, seed: 4 };
        let (d, truth) = gen_toy_sem(&p).unwrap();
        assert_eq!(d.n_samples(), 300);
        assert_eq!(d.n_vars(), 6);
        assert!(truth.validate().is_ok());
        let (d2, _) = gen_toy_sem(&p).unwrap();
        assert_eq!(d, d2);
        let (d3, _) = gen_toy_sem(&SimParams { seed: 5, ..p }).unwrap();
        assert_ne!(d, d3);
        assert!(gen_toy_sem(&SimParams { n: 50, ..p }).is_err());
    }

    #[test]
    fn toy_sem_noise_bounds() {
        // reconstruct E₂ and E₆ from the structural equations
        let (d, _) = gen_toy_sem(&SimParams { w: 10.0, n: 500, seed: 1 }).unwrap();
        for t in 0..500 {
            let v = |j: usize| d.column(j)[t];
            let e2 = v(1) - ((v(0) * v(0)).sin() - 0.2 * v(0));
            let e3 = v(2) - 0.5 * v(0).cos();
            let e6 = v(5) - 0.5 * (v(1) + v(4));
            for e in [e2, e3, e6] {
                assert!((-0.3..=0.3).contains(&e), "noise {e}");
            }
        }
    }

    #[test]
    fn two_env_domains_equal() {
        let (d, truth) = gen_two_env(3).unwrap();
        let labels = match d.index() {
            SurrogateIndex::Domain(l) => l.clone(),
            _ => panic!("expected domain index"),
        };
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 1000);
        assert_eq!(labels.iter().filter(|&&l| l == 2).count(), 1000);
        assert_eq!(truth.c_children, [1].into_iter().collect());
    }

    #[test]
    fn dsep_basics() {
        // 0 -> 1 -> 2, 3 -> 1
        let truth = GroundTruth {
            names: names(4),
            edges: vec![(0, 1), (1, 2), (3, 1)],
            c_children: BTreeSet::new(),
            confounders: vec![],
        };
        let o = DSeparationOracle::new(&truth);
        assert!(!o.d_separated(0, 2, &[]));
        assert!(o.d_separated(0, 2, &[1]));
        assert!(o.d_separated(0, 3, &[]));
        assert!(!o.d_separated(0, 3, &[1]));
        assert!(!o.d_separated(0, 3, &[2]));
    }

    #[test]
    fn confounded_chain_pooled_independences() {
        // Only V₃ ⟂ V₁ | V₂ survives among the pairs involving the confounded
        // variables once C is latent.
        let (_, truth) = gen_confounded_chain_with(&ChainParams { n: 100, ..Default::default() }, 0).unwrap();
        let o = DSeparationOracle::with_hidden_c(&truth);
        assert!(o.d_separated(2, 0, &[1]));
        for s in [vec![], vec![1], vec![2], vec![1, 2]] {
            assert!(!o.d_separated(0, 3, &s));
        }
        for s in [vec![], vec![0], vec![2], vec![0, 2]] {
            assert!(!o.d_separated(1, 3, &s));
        }
        // with C observed the chain is recovered
        let o = DSeparationOracle::new(&truth);
        assert!(o.d_separated(0, 3, &[2, 4]));
        assert!(o.d_separated(1, 3, &[2, 4]));
    }

    fn skeleton_from(truth: &GroundTruth, edges: &[(usize, usize)], c_adj: &[usize]) -> AugmentedSkeleton {
        let mut sk = AugmentedSkeleton::empty(&truth.names);
        for &(a, b) in edges {
            sk.add_edge(a, b);
        }
        for &c in c_adj {
            sk.add_edge(c, truth.n_vars());
        }
        let n = truth.n_vars();
        for a in 0..n {
            for b in a + 1..n {
                if !sk.has_edge(a, b) {
                    sk.insert_sepset(a, b, Sepset { set: vec![], p_value: 1.0, statistic: 0.0 });
                }
            }
        }
        sk
    }

    #[test]
    fn skeleton_scores() {
        let (_, truth) = gen_toy_sem(&SimParams { w: 5.0, n: 100, seed: 0 }).unwrap();
        let exact = skeleton_from(&truth, &truth.edges, &[0, 3, 4]);
        let s = score_skeleton(&exact, &truth).unwrap();
        assert_eq!((s.fp_rate, s.fn_rate, s.c_precision, s.c_recall), (0.0, 0.0, 1.0, 1.0));

        let all: Vec<(usize, usize)> =
            (0..6).flat_map(|a| (a + 1..6).map(move |b| (a, b))).collect();
        let s = score_skeleton(&skeleton_from(&truth, &all, &[]), &truth).unwrap();
        assert_eq!((s.fp_rate, s.fn_rate), (1.0, 0.0));

        let s = score_skeleton(&skeleton_from(&truth, &[], &[]), &truth).unwrap();
        assert_eq!((s.fp_rate, s.fn_rate), (0.0, 1.0));

        let other = GroundTruth { names: names(5), ..truth.clone() };
        assert!(matches!(score_skeleton(&exact, &other), Err(Error::LabelMismatch(_))));
    }

    #[test]
    fn orientation_scores() {
        let (_, truth) = gen_toy_sem(&SimParams { w: 5.0, n: 100, seed: 0 }).unwrap();
        let sk = skeleton_from(&truth, &truth.edges, &[]);
        let mut g = PartiallyDirectedGraph::from_skeleton(&sk);
        let s = score_orientation(&g, &truth).unwrap();
        assert_eq!(s.accuracy, None);
        assert_eq!(s.undirected, 7);
        for &(a, b) in &truth.edges {
            g.orient(a, b, Provenance::Case1);
        }
        assert_eq!(score_orientation(&g, &truth).unwrap().accuracy, Some(1.0));
        for &(a, b) in &truth.edges {
            g.orient(b, a, Provenance::Case1);
        }
        assert_eq!(score_orientation(&g, &truth).unwrap().accuracy, Some(0.0));
    }

    #[test]
    fn toy_sem_regression_of_v6() {
        // least squares of V₆ on (V₂, V₅) with intercept
        let (d, _) = gen_toy_sem(&SimParams { w: 10.0, n: 1000, seed: 9 }).unwrap();
        let x = nalgebra::DMatrix::from_fn(1000, 3, |i, j| match j {
            0 => 1.0,
            1 => d.column(1)[i],
            _ => d.column(4)[i],
        });
        let y = nalgebra::DVector::from_column_slice(d.column(5));
        let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
        assert!((beta[1] - 0.5).abs() < 0.05);
        assert!((beta[2] - 0.5).abs() < 0.05);
        for j in 0..6 {
            let c = d.column(j);
            let m = c.iter().sum::<f64>() / 1000.0;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0;
            assert!(var.is_finite() && var > 0.0);
        }
    }
}
