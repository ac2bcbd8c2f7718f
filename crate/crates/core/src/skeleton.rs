//! Changing-module detection and skeleton recovery over `V ∪ {C}`.

use std::collections::BTreeMap;

use crate::citest::CiOracle;
use crate::error::{Error, Result};
use crate::graph::{AugmentedSkeleton, Sepset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStrategy {
    /// SGS for at most [`SGS_MAX_VARS`] variables, PC-stable otherwise.
    Auto,
    Sgs,
    PcStable,
}

pub const SGS_MAX_VARS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletonConfig {
    pub alpha: f64,
    /// Largest number of observed variables in a conditioning set.
    pub max_cond: usize,
    pub search: SearchStrategy,
    /// When false `C` is never tested or conditioned on (plain skeleton search).
    pub use_c: bool,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        SkeletonConfig { alpha: 0.05, max_cond: 3, search: SearchStrategy::Auto, use_c: true }
    }
}

impl SkeletonConfig {
    pub fn baseline(self) -> Self {
        SkeletonConfig { use_c: false, ..self }
    }

    pub fn validate(&self, n_vars: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if n_vars == 0 {
            return Err(Error::InvalidData("no variables".into()));
        }
        Ok(())
    }

    /// `max_cond` clamped to `n - 1`.
    pub fn effective_max_cond(&self, n_vars: usize) -> usize {
        self.max_cond.min(n_vars.saturating_sub(1))
    }

    fn use_sgs(&self, n_vars: usize) -> bool {
        match self.search {
            SearchStrategy::Auto => n_vars <= SGS_MAX_VARS,
            SearchStrategy::Sgs => true,
            SearchStrategy::PcStable => false,
        }
    }
}

/// Outcome of the changing-module step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeDetection {
    /// Variables still adjacent to `C`, ascending.
    pub changing: Vec<usize>,
    /// Separating sets for the removed `Vᵢ – C` edges, keyed by `i`.
    pub sepsets: BTreeMap<usize, Sepset>,
}

/// All `k`-subsets of `pool` in lexicographic order.
fn subsets(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..pool.len() {
            if pool.len() - i < k - cur.len() {
                break;
            }
            cur.push(pool[i]);
            rec(pool, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(pool, k, 0, &mut cur, &mut out);
    out
}

/// Conditioning sets of total size `size`, drawn from `pool` plus optionally
/// `c`, with at most `max_cond` members from `pool`.
fn sets_of_size(pool: &[usize], c: Option<usize>, size: usize, max_cond: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size <= max_cond {
        out.extend(subsets(pool, size));
    }
    if let Some(c) = c {
        if size >= 1 && size - 1 <= max_cond {
            for mut s in subsets(pool, size - 1) {
                s.push(c);
                out.push(s);
            }
        }
    }
    out
}

/// First separating set found, trying `sets` in order.
fn first_separator<O: CiOracle + ?Sized>(
    oracle: &O,
    a: usize,
    b: usize,
    sets: &[Vec<usize>],
    alpha: f64,
) -> Result<Option<Sepset>> {
    for s in sets {
        let r = oracle.test(a, b, s)?;
        if r.independent(alpha) {
            return Ok(Some(Sepset { set: s.clone(), p_value: r.p_value, statistic: r.statistic }));
        }
    }
    Ok(None)
}

/// Removes `Vᵢ – C` whenever some set of at most `max_cond` other observed
/// variables renders `Vᵢ` independent of `C`.
pub fn detect_changing_modules<O: CiOracle + ?Sized>(
    oracle: &O,
    cfg: &SkeletonConfig,
) -> Result<ChangeDetection> {
    let n = oracle.n_vars();
    cfg.validate(n)?;
    let cfg = &SkeletonConfig { max_cond: cfg.effective_max_cond(n), ..*cfg };
    let c = oracle.c_vertex();
    let mut changing = Vec::new();
    let mut sepsets = BTreeMap::new();
    for v in 0..n {
        let others: Vec<usize> = (0..n).filter(|&u| u != v).collect();
        let sets: Vec<Vec<usize>> =
            (0..=cfg.max_cond.min(others.len())).flat_map(|k| subsets(&others, k)).collect();
        match first_separator(oracle, v, c, &sets, cfg.alpha)? {
            Some(sep) => {
                log::debug!("{} ⟂ C | {:?} (p = {:.3})", oracle.label(v), sep.set, sep.p_value);
                sepsets.insert(v, sep);
            }
            None => changing.push(v),
        }
    }
    Ok(ChangeDetection { changing, sepsets })
}

fn sgs_pairs<O: CiOracle + ?Sized>(
    oracle: &O,
    cfg: &SkeletonConfig,
    sk: &mut AugmentedSkeleton,
) -> Result<()> {
    let n = oracle.n_vars();
    let c = cfg.use_c.then(|| oracle.c_vertex());
    for a in 0..n {
        for b in a + 1..n {
            let others: Vec<usize> = (0..n).filter(|&u| u != a && u != b).collect();
            let top = cfg.max_cond.min(others.len()) + c.is_some() as usize;
            let sets: Vec<Vec<usize>> =
                (0..=top).flat_map(|k| sets_of_size(&others, c, k, cfg.max_cond)).collect();
            if let Some(sep) = first_separator(oracle, a, b, &sets, cfg.alpha)? {
                sk.remove_edge(a, b, sep);
            }
        }
    }
    Ok(())
}

fn pc_stable_pairs<O: CiOracle + ?Sized>(
    oracle: &O,
    cfg: &SkeletonConfig,
    sk: &mut AugmentedSkeleton,
) -> Result<()> {
    let n = oracle.n_vars();
    let c = cfg.use_c.then(|| oracle.c_vertex());
    let top = cfg.max_cond + c.is_some() as usize;
    for size in 0..=top {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|v| sk.neighbors(v).into_iter().filter(|&u| u < n).collect())
            .collect();
        let mut removals = Vec::new();
        let mut any_candidate = false;
        for (a, b) in sk.observed_edges() {
            for (x, y) in [(a, b), (b, a)] {
                let pool: Vec<usize> = adj[x].iter().copied().filter(|&u| u != y).collect();
                let sets = sets_of_size(&pool, c, size, cfg.max_cond);
                any_candidate |= !sets.is_empty();
                if let Some(sep) = first_separator(oracle, a, b, &sets, cfg.alpha)? {
                    removals.push((a, b, sep));
                    break;
                }
            }
        }
        for (a, b, sep) in removals {
            sk.remove_edge(a, b, sep);
        }
        if !any_candidate {
            break;
        }
    }
    Ok(())
}

/// Full skeleton search: changing-module detection followed by removal of
/// observed edges given subsets of the other variables plus `C`.
pub fn recover_skeleton<O: CiOracle + ?Sized>(
    oracle: &O,
    names: &[String],
    cfg: &SkeletonConfig,
) -> Result<AugmentedSkeleton> {
    let n = oracle.n_vars();
    cfg.validate(n)?;
    let cfg = &SkeletonConfig { max_cond: cfg.effective_max_cond(n), ..*cfg };
    if names.len() != n {
        return Err(Error::LabelMismatch(format!("{} names for {} variables", names.len(), n)));
    }
    let mut sk = AugmentedSkeleton::complete(names);
    let c = sk.c_vertex();
    if cfg.use_c {
        let det = detect_changing_modules(oracle, cfg)?;
        for (v, sep) in det.sepsets {
            sk.remove_edge(v, c, sep);
        }
    } else {
        for v in 0..n {
            sk.remove_edge(v, c, Sepset { set: Vec::new(), p_value: f64::NAN, statistic: f64::NAN });
        }
    }
    if cfg.use_sgs(n) {
        sgs_pairs(oracle, cfg, &mut sk)?;
    } else {
        pc_stable_pairs(oracle, cfg, &mut sk)?;
    }
    Ok(sk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_toy_sem, DSeparationOracle, GroundTruth, SimParams};
    use std::collections::BTreeSet;

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(&[1, 2, 3], 2), vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(subsets(&[1, 2], 0), vec![Vec::<usize>::new()]);
        assert!(subsets(&[1], 2).is_empty());
        let s = sets_of_size(&[0, 1], Some(9), 1, 3);
        assert_eq!(s, vec![vec![0], vec![1], vec![9]]);
        // C does not count against the cap
        let s = sets_of_size(&[0, 1, 2], Some(9), 2, 1);
        assert_eq!(s, vec![vec![0, 9], vec![1, 9], vec![2, 9]]);
    }

    #[test]
    fn oracle_recovers_toy_skeleton() {
        let (d, truth) = gen_toy_sem(&SimParams { w: 10.0, n: 100, seed: 0 }).unwrap();
        let oracle = DSeparationOracle::new(&truth);
        for search in [SearchStrategy::Sgs, SearchStrategy::PcStable] {
            let cfg = SkeletonConfig { search, ..Default::default() };
            let sk = recover_skeleton(&oracle, d.names(), &cfg).unwrap();
            let edges: BTreeSet<_> = sk.observed_edges().into_iter().collect();
            let expected: BTreeSet<_> = truth.edges.iter().copied().collect();
            assert_eq!(edges, expected, "{search:?}");
            assert_eq!(sk.c_adjacent(), vec![0, 3, 4]);
            assert!(sk.validate().is_ok());
        }
    }

    #[test]
    fn baseline_oracle_keeps_spurious_edges() {
        let (d, truth) = gen_toy_sem(&SimParams { w: 10.0, n: 100, seed: 0 }).unwrap();
        let oracle = DSeparationOracle::with_hidden_c(&truth);
        let sk = recover_skeleton(&oracle, d.names(), &SkeletonConfig::default().baseline()).unwrap();
        for (a, b) in [(0, 3), (0, 4), (3, 4)] {
            assert!(sk.has_edge(a, b));
        }
        assert!(sk.c_adjacent().is_empty());
    }

    #[test]
    fn clamps_large_max_cond() {
        let truth = GroundTruth {
            names: vec!["a".into(), "b".into()],
            edges: vec![(0, 1)],
            c_children: BTreeSet::new(),
            confounders: vec![],
        };
        let oracle = DSeparationOracle::new(&truth);
        let cfg = SkeletonConfig { max_cond: 5, ..Default::default() };
        assert_eq!(cfg.effective_max_cond(2), 1);
        let sk = recover_skeleton(&oracle, &truth.names, &cfg).unwrap();
        assert!(sk.has_edge(0, 1));
        assert!(recover_skeleton(&oracle, &truth.names, &SkeletonConfig { alpha: 1.5, ..cfg }).is_err());
    }
}
