//! Augmented skeletons and partially directed graphs over `V ∪ {C}`.
//!
//! Vertices `0..n` are observed variables, vertex `n` is the surrogate `C`.
//! Unordered pairs are stored as `(min, max)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used for the surrogate vertex.
pub const C_LABEL: &str = "C";

pub fn pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Conditioning set that separated a pair, with the accepting test outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Sepset {
    pub set: Vec<usize>,
    pub p_value: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSkeleton {
    labels: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
    sepsets: BTreeMap<(usize, usize), Sepset>,
}

impl AugmentedSkeleton {
    /// Complete graph over `names ∪ {C}`.
    pub fn complete(names: &[String]) -> Self {
        let mut sk = Self::empty(names);
        let n = names.len();
        for a in 0..=n {
            for b in a + 1..=n {
                sk.edges.insert((a, b));
            }
        }
        sk
    }

    /// Graph over `names ∪ {C}` without edges or sepsets.
    pub fn empty(names: &[String]) -> Self {
        let mut labels = names.to_vec();
        labels.push(C_LABEL.to_string());
        AugmentedSkeleton { labels, edges: BTreeSet::new(), sepsets: BTreeMap::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn c_vertex(&self) -> usize {
        self.n_vars()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn var_names(&self) -> &[String] {
        &self.labels[..self.n_vars()]
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn vertex(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&pair(a, b))
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert_ne!(a, b, "self-loops are not allowed");
        self.edges.insert(pair(a, b));
        self.sepsets.remove(&pair(a, b));
    }

    pub fn remove_edge(&mut self, a: usize, b: usize, sepset: Sepset) {
        self.edges.remove(&pair(a, b));
        self.sepsets.insert(pair(a, b), sepset);
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&u| u != v && self.has_edge(u, v)).collect()
    }

    pub fn sepset(&self, a: usize, b: usize) -> Option<&Sepset> {
        self.sepsets.get(&pair(a, b))
    }

    pub fn sepsets(&self) -> impl Iterator<Item = ((usize, usize), &Sepset)> + '_ {
        self.sepsets.iter().map(|(k, v)| (*k, v))
    }

    pub fn insert_sepset(&mut self, a: usize, b: usize, sepset: Sepset) {
        self.sepsets.insert(pair(a, b), sepset);
    }

    /// Observed variables adjacent to `C`.
    pub fn c_adjacent(&self) -> Vec<usize> {
        self.neighbors(self.c_vertex())
    }

    /// Edges between observed variables.
    pub fn observed_edges(&self) -> Vec<(usize, usize)> {
        let c = self.c_vertex();
        self.edges().filter(|&(a, b)| a != c && b != c).collect()
    }

    /// Checks the structural invariants: no self-loops, and a sepset for
    /// every missing pair of observed variables.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for &(a, b) in &self.edges {
            if a == b || b > n {
                return Err(Error::InvalidData(format!("bad edge ({a}, {b})")));
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                if !self.has_edge(a, b) && self.sepset(a, b).is_none() {
                    return Err(Error::InvalidData(format!(
                        "missing sepset for {} and {}",
                        self.labels[a], self.labels[b]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How an edge received its final mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Case1,
    Case2,
    Meek,
    Undirected,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Case1 => "case1",
            Provenance::Case2 => "case2",
            Provenance::Meek => "meek",
            Provenance::Undirected => "undirected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeInfo {
    pub provenance: Provenance,
    pub delta: Option<f64>,
}

/// Skeleton edges each carrying either a direction or no mark.
#[derive(Debug, Clone, PartialEq)]
pub struct PartiallyDirectedGraph {
    labels: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
    info: BTreeMap<(usize, usize), EdgeInfo>,
    frozen: BTreeSet<(usize, usize)>,
    warnings: Vec<String>,
}

impl PartiallyDirectedGraph {
    /// Every skeleton edge undirected.
    pub fn from_skeleton(sk: &AugmentedSkeleton) -> Self {
        let mut g = PartiallyDirectedGraph {
            labels: sk.labels().to_vec(),
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
            info: BTreeMap::new(),
            frozen: BTreeSet::new(),
            warnings: Vec::new(),
        };
        for (a, b) in sk.edges() {
            g.add_undirected(a, b);
        }
        g
    }

    /// Graph with the given labels (`C` last) and no edges.
    pub fn with_labels(labels: Vec<String>) -> Self {
        PartiallyDirectedGraph {
            labels,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
            info: BTreeMap::new(),
            frozen: BTreeSet::new(),
            warnings: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn c_vertex(&self) -> usize {
        self.n_vars()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn vertex(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) {
        self.directed.remove(&(a, b));
        self.directed.remove(&(b, a));
        self.undirected.insert(pair(a, b));
        self.info
            .insert(pair(a, b), EdgeInfo { provenance: Provenance::Undirected, delta: None });
    }

    /// Marks the skeleton edge between `from` and `to` as `from → to`.
    pub fn orient(&mut self, from: usize, to: usize, provenance: Provenance) {
        self.undirected.remove(&pair(from, to));
        self.directed.remove(&(to, from));
        self.directed.insert((from, to));
        let delta = self.info.get(&pair(from, to)).and_then(|i| i.delta);
        self.info.insert(pair(from, to), EdgeInfo { provenance, delta });
    }

    /// Drops any direction on the edge between `a` and `b`.
    pub fn unorient(&mut self, a: usize, b: usize) {
        if self.adjacent(a, b) {
            let delta = self.info.get(&pair(a, b)).and_then(|i| i.delta);
            self.add_undirected(a, b);
            if let Some(i) = self.info.get_mut(&pair(a, b)) {
                i.delta = delta;
            }
        }
    }

    /// Marks an edge whose orientation evidence conflicts; rule-based
    /// propagation leaves it alone.
    pub fn freeze(&mut self, a: usize, b: usize) {
        self.frozen.insert(pair(a, b));
    }

    pub fn is_frozen(&self, a: usize, b: usize) -> bool {
        self.frozen.contains(&pair(a, b))
    }

    pub fn set_delta(&mut self, a: usize, b: usize, delta: f64) {
        if let Some(i) = self.info.get_mut(&pair(a, b)) {
            i.delta = Some(delta);
        }
    }

    pub fn is_directed(&self, from: usize, to: usize) -> bool {
        self.directed.contains(&(from, to))
    }

    pub fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&pair(a, b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.is_undirected(a, b) || self.is_directed(a, b) || self.is_directed(b, a)
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected.iter().copied()
    }

    pub fn edge_info(&self, a: usize, b: usize) -> Option<&EdgeInfo> {
        self.info.get(&pair(a, b))
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.directed.iter().filter(|&&(_, t)| t == v).map(|&(f, _)| f).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.directed.iter().filter(|&&(f, _)| f == v).map(|&(_, t)| t).collect()
    }

    pub fn undirected_neighbors(&self, v: usize) -> Vec<usize> {
        self.undirected
            .iter()
            .filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
            .collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&u| u != v && self.adjacent(u, v)).collect()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    /// Whether `to` can be reached from `from` along directed edges.
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.labels.len()];
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for c in self.children(v) {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        false
    }

    /// Topological order of the directed part, or `None` if it has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.labels.len();
        let mut indeg = vec![0usize; n];
        for &(_, t) in &self.directed {
            indeg[t] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Checks the partition and `C`-source invariants.
    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.directed {
            if self.undirected.contains(&pair(a, b)) || self.directed.contains(&(b, a)) {
                return Err(Error::InvalidData(format!("edge ({a}, {b}) marked twice")));
            }
            if b == self.c_vertex() {
                return Err(Error::InvalidData("edge directed into C".into()));
            }
        }
        Ok(())
    }
}
