//! Edge orientation: unshielded triples (including those through `C`),
//! Meek propagation, and the Δ̂-based search among `C`-specific variables.

use std::collections::{BTreeMap, BTreeSet};

use crate::data::Dataset;
use crate::density::{window_groups, ConditionalKde};
use crate::error::{Error, Result};
use crate::graph::{pair, AugmentedSkeleton, PartiallyDirectedGraph, Provenance};

/// Treatment of the trailing window when it is shorter than `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Keep it if it has at least `L/2` samples.
    Truncate,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientConfig {
    pub window_len: usize,
    /// Defaults to `window_len` (non-overlapping windows).
    pub window_stride: Option<usize>,
    pub boundary: Boundary,
    /// Fewest time windows accepted by Δ̂.
    pub min_windows: usize,
    pub tie_tol: f64,
    pub alpha: f64,
    /// Largest cluster whose orientations are enumerated.
    pub max_cluster: usize,
}

impl Default for OrientConfig {
    fn default() -> Self {
        OrientConfig {
            window_len: 100,
            window_stride: None,
            boundary: Boundary::Truncate,
            min_windows: 3,
            tie_tol: 0.02,
            alpha: 0.05,
            max_cluster: 5,
        }
    }
}

impl OrientConfig {
    pub fn stride(&self) -> usize {
        self.window_stride.unwrap_or(self.window_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 20 {
            return Err(Error::InvalidConfig("window length must be at least 20".into()));
        }
        if self.stride() == 0 {
            return Err(Error::InvalidConfig("window stride must be at least 1".into()));
        }
        if self.min_windows == 0 {
            return Err(Error::InvalidConfig("min_windows must be at least 1".into()));
        }
        if !(self.tie_tol >= 0.0) {
            return Err(Error::InvalidConfig("tie_tol must be nonnegative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} not in (0,1)", self.alpha)));
        }
        Ok(())
    }
}

/// Slack allowed below zero for Δ̂, whose population value is a KL divergence.
pub const DELTA_NEG_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaResult {
    pub delta: f64,
    pub causes: Vec<String>,
    pub effect: String,
    pub n_windows: usize,
    /// Evaluations where a density hit the floor.
    pub n_floored: usize,
}

/// Δ̂ for the module `P(effect | causes)`, using variable indices.
pub fn delta_hat_idx(d: &Dataset, effect: usize, causes: &[usize], cfg: &OrientConfig) -> Result<DeltaResult> {
    let n = d.n_vars();
    if let Some(&bad) = std::iter::once(&effect).chain(causes).find(|&&v| v >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let groups = window_groups(d.index(), cfg)?;
    let all: Vec<usize> = (0..d.n_samples()).collect();
    let global = ConditionalKde::fit(d, effect, causes, &all)?;
    let local = groups
        .iter()
        .map(|rows| ConditionalKde::fit(d, effect, causes, rows))
        .collect::<Result<Vec<_>>>()?;
    let ys = d.column(effect);
    let mut x = vec![0.0; causes.len()];
    let mut total = 0.0;
    let mut n_floored = 0;
    for i in 0..d.n_samples() {
        for (k, &c) in causes.iter().enumerate() {
            x[k] = d.column(c)[i];
        }
        let p_bar = global.eval(ys[i], &x);
        let mut avg = 0.0;
        for m in &local {
            let p = m.eval(ys[i], &x);
            n_floored += p.floored as usize;
            avg += p.value;
        }
        avg /= local.len() as f64;
        n_floored += p_bar.floored as usize;
        total += (p_bar.value / avg).ln();
    }
    let delta = total / d.n_samples() as f64;
    if delta < -DELTA_NEG_TOL {
        log::warn!("Δ̂ = {delta:.4} is below the expected finite-sample slack");
    }
    Ok(DeltaResult {
        delta,
        causes: causes.iter().map(|&c| d.names()[c].clone()).collect(),
        effect: d.names()[effect].clone(),
        n_windows: local.len(),
        n_floored,
    })
}

/// Δ̂ for the module `P(effect | causes)`: the sample average of
/// `log(P̄ / ⟨P̂⟩)`, where `P̄` is fit on all data and `⟨P̂⟩` averages the
/// per-window (or per-domain) fits at each sample.
pub fn delta_hat(d: &Dataset, effect: &str, causes: &[&str], cfg: &OrientConfig) -> Result<DeltaResult> {
    let e = d.var_index(effect)?;
    let c = causes.iter().map(|name| d.var_index(name)).collect::<Result<Vec<_>>>()?;
    delta_hat_idx(d, e, &c, cfg)
}

fn would_cycle(g: &PartiallyDirectedGraph, from: usize, to: usize) -> bool {
    g.has_directed_path(to, from)
}

/// Orients `from → to` unless that points into `C` or closes a cycle.
fn try_orient(g: &mut PartiallyDirectedGraph, from: usize, to: usize, prov: Provenance) -> bool {
    if to == g.c_vertex()
        || !g.is_undirected(from, to)
        || g.is_frozen(from, to)
        || would_cycle(g, from, to)
    {
        return false;
    }
    g.orient(from, to, prov);
    true
}

/// Applies Meek's rules R1–R4 until nothing changes.
pub fn apply_meek_rules(g: &mut PartiallyDirectedGraph) {
    let nv = g.labels().len();
    loop {
        let mut changed = false;
        let undirected: Vec<(usize, usize)> = g.undirected_edges().collect();
        for (u, v) in undirected {
            for (a, b) in [(u, v), (v, u)] {
                if !g.is_undirected(a, b) {
                    break;
                }
                let parents_a = g.parents(a);
                // R1: c → a – b, c and b not adjacent
                let r1 = parents_a.iter().any(|&c| c != b && !g.adjacent(c, b));
                // R2: a → c → b
                let r2 = g.children(a).iter().any(|&c| g.is_directed(c, b));
                // R3: a – c → b, a – d → b, c and d not adjacent
                let mids: Vec<usize> = g
                    .undirected_neighbors(a)
                    .into_iter()
                    .filter(|&c| c != b && g.is_directed(c, b))
                    .collect();
                let r3 = mids
                    .iter()
                    .enumerate()
                    .any(|(i, &c)| mids[i + 1..].iter().any(|&d| !g.adjacent(c, d)));
                // R4: a – d → c → b with a adjacent to c and d, b not adjacent to d
                let r4 = (0..nv).any(|c| {
                    c != a
                        && c != b
                        && g.is_directed(c, b)
                        && g.adjacent(a, c)
                        && g.parents(c).into_iter().any(|d| {
                            d != a && d != b && g.is_undirected(a, d) && !g.adjacent(b, d)
                        })
                });
                if (r1 || r2 || r3 || r4) && try_orient(g, a, b, Provenance::Meek) {
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Unorients the edges of directed cycles until the directed part is acyclic.
fn break_cycles(g: &mut PartiallyDirectedGraph) {
    while !g.is_acyclic() {
        let Some((a, b)) = g
            .directed_edges()
            .find(|&(a, b)| g.has_directed_path(b, a))
        else {
            break;
        };
        g.unorient(a, b);
        g.warn(format!(
            "edge {} – {} left undirected: its orientation closed a cycle",
            g.label(a),
            g.label(b)
        ));
    }
}

/// Orients every `C – Vₖ` edge out of `C`, then resolves unshielded triples:
/// a missing middle vertex in the separating set yields a collider; for
/// `C → Vₖ – Vₗ` with `Vₖ` in the sepset of `(C, Vₗ)`, `Vₖ → Vₗ`.
/// Conflicting proposals leave the edge undirected with a warning. Meek's
/// rules close the result.
pub fn orient_case1(sk: &AugmentedSkeleton) -> Result<PartiallyDirectedGraph> {
    sk.validate()?;
    let mut g = PartiallyDirectedGraph::from_skeleton(sk);
    let c = sk.c_vertex();
    for v in sk.c_adjacent() {
        g.orient(c, v, Provenance::Case1);
    }
    let n_all = sk.labels().len();
    let mut proposals: BTreeMap<(usize, usize), BTreeSet<(usize, usize)>> = BTreeMap::new();
    let mut propose = |from: usize, to: usize| {
        proposals.entry(pair(from, to)).or_default().insert((from, to));
    };
    for mid in 0..sk.n_vars() {
        let nb = sk.neighbors(mid);
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if sk.has_edge(a, b) {
                    continue;
                }
                let Some(sep) = sk.sepset(a, b) else { continue };
                if !sep.set.contains(&mid) {
                    propose(a, mid);
                    propose(b, mid);
                } else if a == c || b == c {
                    let other = if a == c { b } else { a };
                    propose(mid, other);
                }
            }
        }
    }
    debug_assert!(n_all == c + 1);
    for ((a, b), dirs) in proposals {
        if a == c || b == c {
            // C is exogenous; its edges are already oriented.
            continue;
        }
        if dirs.len() > 1 {
            g.warn(format!(
                "conflicting orientations for {} – {}; left undirected",
                g.label(a),
                g.label(b)
            ));
            g.freeze(a, b);
            continue;
        }
        let (from, to) = *dirs.iter().next().expect("nonempty");
        g.orient(from, to, Provenance::Case1);
    }
    break_cycles(&mut g);
    apply_meek_rules(&mut g);
    Ok(g)
}

/// Connected groups of `C`-specific variables joined by undirected edges.
fn clusters(g: &PartiallyDirectedGraph) -> Vec<Vec<usize>> {
    let c = g.c_vertex();
    let specific: BTreeSet<usize> = g.children(c).into_iter().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in &specific {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = vec![start];
        seen.insert(start);
        let mut k = 0;
        while k < comp.len() {
            for u in g.undirected_neighbors(comp[k]) {
                if specific.contains(&u) && seen.insert(u) {
                    comp.push(u);
                }
            }
            k += 1;
        }
        if comp.len() > 1 {
            comp.sort_unstable();
            out.push(comp);
        }
    }
    out
}

struct Candidate {
    directions: Vec<(usize, usize)>,
    total: f64,
    deltas: BTreeMap<usize, f64>,
}

/// Orients undirected edges among `C`-specific variables by enumerating the
/// acyclic orientations of each cluster and picking the one with smallest
/// `Σ Δ̂(Vᵢ | PAⁱ)` over members with parents. Edges on which candidates
/// within `tie_tol` of the best disagree stay undirected.
pub fn orient_case2(
    g: &PartiallyDirectedGraph,
    d: &Dataset,
    cfg: &OrientConfig,
) -> Result<PartiallyDirectedGraph> {
    cfg.validate()?;
    if d.names() != &g.labels()[..g.n_vars()] {
        return Err(Error::LabelMismatch("dataset and graph variables differ".into()));
    }
    let mut out = g.clone();
    let c = g.c_vertex();
    let mut cache: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
    for cluster in clusters(g) {
        if cluster.len() > cfg.max_cluster {
            out.warn(format!(
                "{}",
                Error::ClusterTooLarge(cluster.len())
            ));
            continue;
        }
        let edges: Vec<(usize, usize)> = g
            .undirected_edges()
            .filter(|&(a, b)| cluster.contains(&a) && cluster.contains(&b) && !g.is_frozen(a, b))
            .collect();
        let mut candidates = Vec::new();
        for mask in 0u64..(1u64 << edges.len()) {
            let mut cand = g.clone();
            let directions: Vec<(usize, usize)> = edges
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| if mask >> k & 1 == 0 { (a, b) } else { (b, a) })
                .collect();
            for &(from, to) in &directions {
                cand.orient(from, to, Provenance::Case2);
            }
            if !cand.is_acyclic() {
                continue;
            }
            let mut total = 0.0;
            let mut deltas = BTreeMap::new();
            for &v in &cluster {
                let parents: Vec<usize> = cand.parents(v).into_iter().filter(|&p| p != c).collect();
                if parents.is_empty() {
                    continue;
                }
                let key = (v, parents.clone());
                let delta = match cache.get(&key) {
                    Some(&x) => x,
                    None => {
                        let r = delta_hat_idx(d, v, &parents, cfg)?;
                        cache.insert(key, r.delta);
                        r.delta
                    }
                };
                deltas.insert(v, delta);
                total += delta;
            }
            candidates.push(Candidate { directions, total, deltas });
        }
        let Some(best) = candidates.iter().map(|c| c.total).min_by(f64::total_cmp) else {
            continue;
        };
        let near: Vec<&Candidate> =
            candidates.iter().filter(|c| c.total - best <= cfg.tie_tol).collect();
        let winner = near
            .iter()
            .find(|c| c.total == best)
            .expect("best candidate present");
        for (k, &(from, to)) in winner.directions.iter().enumerate() {
            if near.iter().all(|c| c.directions[k] == (from, to)) {
                out.orient(from, to, Provenance::Case2);
                if let Some(&delta) = winner.deltas.get(&to) {
                    out.set_delta(from, to, delta);
                }
                out.warn(format!(
                    "{} → {} inferred from distribution shift; both endpoints change with C, \
                     so a confounder driven by C could mislead this direction",
                    g.label(from),
                    g.label(to)
                ));
            } else {
                out.warn(format!(
                    "{} – {} left undirected: candidate orientations tie within {}",
                    g.label(from),
                    g.label(to),
                    cfg.tie_tol
                ));
            }
        }
    }
    apply_meek_rules(&mut out);
    break_cycles(&mut out);
    Ok(out)
}

/// Case 1 followed by Case 2.
pub fn orient(sk: &AugmentedSkeleton, d: &Dataset, cfg: &OrientConfig) -> Result<PartiallyDirectedGraph> {
    let g = orient_case1(sk)?;
    orient_case2(&g, d, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Sepset;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("V{i}")).collect()
    }

    fn sep(set: Vec<usize>) -> Sepset {
        Sepset { set, p_value: 0.5, statistic: 0.0 }
    }

    /// Skeleton from observed edges, C-adjacent vertices and sepsets.
    fn skeleton(n: usize, edges: &[(usize, usize)], c_adj: &[usize], seps: &[((usize, usize), Vec<usize>)]) -> AugmentedSkeleton {
        let mut sk = AugmentedSkeleton::empty(&names(n));
        for &(a, b) in edges {
            sk.add_edge(a, b);
        }
        for &v in c_adj {
            sk.add_edge(v, n);
        }
        for ((a, b), s) in seps {
            sk.insert_sepset(*a, *b, sep(s.clone()));
        }
        for a in 0..=n {
            for b in a + 1..=n {
                if !sk.has_edge(a, b) && sk.sepset(a, b).is_none() {
                    sk.insert_sepset(a, b, sep(vec![]));
                }
            }
        }
        sk
    }

    #[test]
    fn no_c_edges_no_orientation() {
        // chain 0 - 1 - 2 with 1 in the sepset
        let sk = skeleton(3, &[(0, 1), (1, 2)], &[], &[((0, 2), vec![1])]);
        let g = orient_case1(&sk).unwrap();
        assert_eq!(g.directed_edges().count(), 0);
        assert_eq!(g.undirected_edges().count(), 2);
    }

    #[test]
    fn c_non_collider_propagates() {
        // C → V1 – V2, V1 separates C and V2
        let sk = skeleton(2, &[(0, 1)], &[0], &[((1, 2), vec![0])]);
        let g = orient_case1(&sk).unwrap();
        assert!(g.is_directed(2, 0));
        assert!(g.is_directed(0, 1));
        assert_eq!(g.edge_info(0, 1).unwrap().provenance, Provenance::Case1);
    }

    #[test]
    fn c_collider() {
        // C → V1 ← V2 when V1 is not in the sepset of (C, V2)
        let sk = skeleton(2, &[(0, 1)], &[0], &[((1, 2), vec![])]);
        let g = orient_case1(&sk).unwrap();
        assert!(g.is_directed(1, 0));
    }

    #[test]
    fn conflicting_colliders_left_undirected() {
        // 0 → 1 ← 2 and 1 → 2 ← 3 both proposed on edge 1 – 2
        let sk = skeleton(
            4,
            &[(0, 1), (1, 2), (2, 3)],
            &[],
            &[((0, 2), vec![]), ((1, 3), vec![]), ((0, 3), vec![])],
        );
        let g = orient_case1(&sk).unwrap();
        assert!(g.is_undirected(1, 2));
        assert!(g.is_directed(0, 1) && g.is_directed(3, 2));
        assert!(!g.warnings().is_empty());
    }

    #[test]
    fn meek_rules() {
        let labels: Vec<String> = names(4).into_iter().chain(["C".to_string()]).collect();
        // R2: 0 → 1 → 2 and 0 – 2
        let mut g = PartiallyDirectedGraph::with_labels(labels.clone());
        g.add_undirected(0, 1);
        g.add_undirected(1, 2);
        g.add_undirected(0, 2);
        g.orient(0, 1, Provenance::Case1);
        g.orient(1, 2, Provenance::Case1);
        apply_meek_rules(&mut g);
        assert!(g.is_directed(0, 2));
        // R3: 0 – 1, 0 – 2, 0 – 3, 2 → 1 ← 3, 2 and 3 not adjacent
        let mut g = PartiallyDirectedGraph::with_labels(labels);
        for (a, b) in [(0, 1), (0, 2), (0, 3), (2, 1), (3, 1)] {
            g.add_undirected(a, b);
        }
        g.orient(2, 1, Provenance::Case1);
        g.orient(3, 1, Provenance::Case1);
        apply_meek_rules(&mut g);
        assert!(g.is_directed(0, 1));
        assert!(g.is_undirected(0, 2) && g.is_undirected(0, 3));
    }

    #[test]
    fn config_validation() {
        assert!(OrientConfig { window_len: 10, ..Default::default() }.validate().is_err());
        assert!(OrientConfig { window_stride: Some(0), ..Default::default() }.validate().is_err());
        assert_eq!(OrientConfig::default().stride(), 100);
    }
}
