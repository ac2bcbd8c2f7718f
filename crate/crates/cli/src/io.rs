//! Dataset CSV, ground-truth and graph JSON, DOT and encapsulator files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cdnod::data::{Dataset, SurrogateIndex};
use cdnod::graph::{AugmentedSkeleton, PartiallyDirectedGraph, Provenance, Sepset, C_LABEL};
use cdnod::knv::KnvOutput;
use cdnod::simgen::GroundTruth;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reserved column holding the surrogate index.
pub const C_COLUMN: &str = "c_index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CMode {
    /// Time if `c_index` is strictly increasing, domain otherwise.
    Auto,
    /// `c_index` as time stamps, or the row number when the column is absent.
    Time,
    /// `c_index` as integer domain labels.
    Domain,
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(CliError::io(dir, "directory does not exist"));
        }
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn dataset_to_csv(d: &Dataset) -> String {
    let mut out = String::new();
    let mut header: Vec<&str> = d.names().iter().map(|s| s.as_str()).collect();
    header.push(C_COLUMN);
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..d.n_samples() {
        let mut row: Vec<String> = (0..d.n_vars()).map(|j| format!("{}", d.column(j)[i])).collect();
        row.push(match d.index() {
            SurrogateIndex::Time(v) => format!("{}", v[i]),
            SurrogateIndex::Domain(v) => format!("{}", v[i]),
        });
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn build_index(c: Option<Vec<f64>>, mode: CMode, n: usize) -> CliResult<SurrogateIndex> {
    let as_labels = |v: &[f64]| -> CliResult<Vec<i64>> {
        v.iter()
            .map(|x| {
                if x.fract() == 0.0 && x.abs() < 9e15 {
                    Ok(*x as i64)
                } else {
                    Err(CliError::Usage(format!("domain label {x} is not an integer")))
                }
            })
            .collect()
    };
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    match (mode, c) {
        (CMode::Time, None) => Ok(SurrogateIndex::time((1..=n).map(|t| t as f64).collect())?),
        (_, None) => Err(CliError::Usage(format!(
            "no `{C_COLUMN}` column; add one or pass --c-mode time to use the row number"
        ))),
        (CMode::Time, Some(v)) => {
            if !increasing(&v) {
                return Err(CliError::Usage(format!("`{C_COLUMN}` is not strictly increasing")));
            }
            Ok(SurrogateIndex::time(v)?)
        }
        (CMode::Domain, Some(v)) => Ok(SurrogateIndex::domain(as_labels(&v)?)),
        (CMode::Auto, Some(v)) => {
            if increasing(&v) {
                Ok(SurrogateIndex::time(v)?)
            } else {
                Ok(SurrogateIndex::domain(as_labels(&v)?))
            }
        }
    }
}

pub fn dataset_from_csv(text: &str, mode: CMode) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("bad CSV header: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let c_pos = header.iter().position(|h| h == C_COLUMN);
    let names: Vec<String> = header.iter().filter(|h| h.as_str() != C_COLUMN).cloned().collect();
    if names.is_empty() {
        return Err(CliError::Usage("the CSV has no variable columns".into()));
    }
    let mut columns = vec![Vec::new(); names.len()];
    let mut c = c_pos.map(|_| Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("bad CSV row {}: {e}", line + 2)))?;
        if record.len() != header.len() {
            return Err(CliError::Usage(format!("CSV row {} has {} fields", line + 2, record.len())));
        }
        let mut k = 0;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::Usage(format!("CSV row {}: `{field}` is not a number", line + 2)))?;
            if Some(j) == c_pos {
                c.as_mut().unwrap().push(v);
            } else {
                columns[k].push(v);
                k += 1;
            }
        }
    }
    let n = columns[0].len();
    let index = build_index(c, mode, n)?;
    Dataset::new(columns, names, index).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn read_dataset(path: &Path, mode: CMode) -> CliResult<Dataset> {
    dataset_from_csv(&read_text(path)?, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthJson {
    pub edges: Vec<[String; 2]>,
    pub c_children: Vec<String>,
    pub confounders: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl TruthJson {
    pub fn from_truth(t: &GroundTruth, metadata: Option<serde_json::Value>) -> Self {
        let name = |v: usize| t.names[v].clone();
        TruthJson {
            edges: t.edges.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
            c_children: t.c_children.iter().map(|&v| name(v)).collect(),
            confounders: t.confounders.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
            metadata,
        }
    }

    /// Ground truth over `names`, the variable order of a dataset.
    pub fn to_truth(&self, names: &[String]) -> CliResult<GroundTruth> {
        let idx = |s: &String| {
            names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| CliError::Usage(format!("truth refers to unknown variable `{s}`")))
        };
        let pairs = |v: &[[String; 2]]| -> CliResult<Vec<(usize, usize)>> {
            v.iter().map(|[a, b]| Ok((idx(a)?, idx(b)?))).collect()
        };
        let t = GroundTruth {
            names: names.to_vec(),
            edges: pairs(&self.edges)?,
            c_children: self.c_children.iter().map(idx).collect::<CliResult<_>>()?,
            confounders: pairs(&self.confounders)?,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub a: String,
    pub b: String,
    pub directed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepsetJson {
    pub a: String,
    pub b: String,
    pub set: Vec<String>,
    /// Absent when the pair was removed without a test.
    pub p_value: Option<f64>,
    pub statistic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeJson>,
    pub sepsets: Vec<SepsetJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn sepsets_json(sk: &AugmentedSkeleton) -> Vec<SepsetJson> {
    sk.sepsets()
        .map(|((a, b), s)| SepsetJson {
            a: sk.label(a).to_string(),
            b: sk.label(b).to_string(),
            set: s.set.iter().map(|&v| sk.label(v).to_string()).collect(),
            p_value: finite(s.p_value),
            statistic: finite(s.statistic),
        })
        .collect()
}

impl GraphJson {
    pub fn from_skeleton(sk: &AugmentedSkeleton, metadata: Option<serde_json::Value>) -> Self {
        let edges = sk
            .edges()
            .map(|(a, b)| EdgeJson {
                a: sk.label(a).to_string(),
                b: sk.label(b).to_string(),
                directed: false,
                from: None,
                provenance: Provenance::Undirected,
                delta: None,
                frozen: false,
            })
            .collect();
        GraphJson { vertices: sk.labels().to_vec(), edges, sepsets: sepsets_json(sk), warnings: Vec::new(), metadata }
    }

    /// Oriented graph; sepsets are carried over from the skeleton it came from.
    pub fn from_graph(g: &PartiallyDirectedGraph, sk: &AugmentedSkeleton, metadata: Option<serde_json::Value>) -> Self {
        let mut edges: Vec<EdgeJson> = Vec::new();
        let info = |a: usize, b: usize| g.edge_info(a, b).cloned();
        for (from, to) in g.directed_edges() {
            let i = info(from, to);
            let (a, b) = cdnod::graph::pair(from, to);
            edges.push(EdgeJson {
                a: g.label(a).to_string(),
                b: g.label(b).to_string(),
                directed: true,
                from: Some(g.label(from).to_string()),
                provenance: i.as_ref().map_or(Provenance::Case1, |i| i.provenance),
                delta: i.and_then(|i| i.delta),
                frozen: g.is_frozen(a, b),
            });
        }
        for (a, b) in g.undirected_edges() {
            edges.push(EdgeJson {
                a: g.label(a).to_string(),
                b: g.label(b).to_string(),
                directed: false,
                from: None,
                provenance: Provenance::Undirected,
                delta: info(a, b).and_then(|i| i.delta),
                frozen: g.is_frozen(a, b),
            });
        }
        let pos = |s: &str| g.labels().iter().position(|l| l == s).unwrap_or(usize::MAX);
        edges.sort_by_key(|e| (pos(&e.a), pos(&e.b)));
        GraphJson {
            vertices: g.labels().to_vec(),
            edges,
            sepsets: sepsets_json(sk),
            warnings: g.warnings().to_vec(),
            metadata,
        }
    }

    fn vertex(&self, label: &str) -> CliResult<usize> {
        self.vertices
            .iter()
            .position(|v| v == label)
            .ok_or_else(|| CliError::Usage(format!("graph refers to unknown vertex `{label}`")))
    }

    fn endpoints(&self, e: &EdgeJson) -> CliResult<(usize, usize)> {
        let (a, b) = (self.vertex(&e.a)?, self.vertex(&e.b)?);
        if a == b {
            return Err(CliError::Usage(format!("self-loop on `{}`", e.a)));
        }
        Ok((a, b))
    }

    fn check_vertices(&self) -> CliResult<()> {
        if self.vertices.last().map(|s| s.as_str()) != Some(C_LABEL) {
            return Err(CliError::Usage(format!("graph vertices must end with `{C_LABEL}`")));
        }
        Ok(())
    }

    pub fn to_skeleton(&self) -> CliResult<AugmentedSkeleton> {
        self.check_vertices()?;
        let names = &self.vertices[..self.vertices.len() - 1];
        let mut sk = AugmentedSkeleton::empty(names);
        for e in &self.edges {
            let (a, b) = self.endpoints(e)?;
            sk.add_edge(a, b);
        }
        for s in &self.sepsets {
            let set = s.set.iter().map(|v| self.vertex(v)).collect::<CliResult<Vec<_>>>()?;
            let sep = Sepset {
                set,
                p_value: s.p_value.unwrap_or(f64::NAN),
                statistic: s.statistic.unwrap_or(f64::NAN),
            };
            sk.insert_sepset(self.vertex(&s.a)?, self.vertex(&s.b)?, sep);
        }
        sk.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(sk)
    }

    pub fn to_graph(&self) -> CliResult<PartiallyDirectedGraph> {
        self.check_vertices()?;
        let mut g = PartiallyDirectedGraph::with_labels(self.vertices.clone());
        for e in &self.edges {
            let (a, b) = self.endpoints(e)?;
            g.add_undirected(a, b);
            if e.directed {
                let from = self.vertex(e.from.as_deref().unwrap_or(&e.a))?;
                if from != a && from != b {
                    return Err(CliError::Usage(format!("edge {}–{} directed from `{}`", e.a, e.b, g.label(from))));
                }
                g.orient(from, if from == a { b } else { a }, e.provenance);
            }
            if let Some(d) = e.delta {
                g.set_delta(a, b, d);
            }
            if e.frozen {
                g.freeze(a, b);
            }
        }
        g.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(g)
    }
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}

/// Graphviz rendering; `C` is drawn as a box.
pub fn graph_to_dot(g: &GraphJson) -> String {
    let mut out = String::from("digraph cdnod {\n");
    for v in &g.vertices {
        let shape = if v == C_LABEL { "box" } else { "ellipse" };
        out.push_str(&format!("  {} [shape={shape}];\n", dot_id(v)));
    }
    for e in &g.edges {
        if e.directed {
            let from = e.from.as_deref().unwrap_or(&e.a);
            let to = if from == e.a { &e.b } else { &e.a };
            out.push_str(&format!("  {} -> {};\n", dot_id(from), dot_id(to)));
        } else {
            out.push_str(&format!("  {} -> {} [dir=none];\n", dot_id(&e.a), dot_id(&e.b)));
        }
    }
    out.push_str("}\n");
    out
}

pub fn encapsulators_to_csv(out: &KnvOutput) -> String {
    let s = &out.series;
    let k = s.components.ncols();
    let mut text = String::from("window_center");
    for j in 1..=k {
        text.push_str(&format!(",lambda_{j}"));
    }
    text.push('\n');
    for (i, c) in s.window_centers.iter().enumerate() {
        text.push_str(&format!("{c}"));
        for j in 0..k {
            text.push_str(&format!(",{}", s.components[(i, j)]));
        }
        text.push('\n');
    }
    text
}

/// Path of the eigenvalue sidecar written next to an encapsulator CSV.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("eigen.json")
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// `metadata` object with a wall-clock timestamp; everything else in the
/// outputs is a pure function of the arguments.
pub fn metadata(command: &str, config: serde_json::Value) -> serde_json::Value {
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut m = BTreeMap::new();
    m.insert("command".to_string(), serde_json::Value::from(command));
    m.insert("version".to_string(), serde_json::Value::from(env!("CARGO_PKG_VERSION")));
    m.insert("config".to_string(), config);
    m.insert("timestamp".to_string(), serde_json::Value::from(ts));
    serde_json::to_value(m).expect("serializable")
}
