//! Datasets over observed variables plus the surrogate index `C`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Time,
    Domain,
}

/// Time or domain index attached to every sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateIndex {
    /// Strictly increasing time stamps.
    Time(Vec<f64>),
    /// Integer domain labels.
    Domain(Vec<i64>),
}

impl SurrogateIndex {
    pub fn time(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("time index must be finite".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(
                "time index must be strictly increasing".into(),
            ));
        }
        Ok(SurrogateIndex::Time(values))
    }

    pub fn domain(labels: Vec<i64>) -> Self {
        SurrogateIndex::Domain(labels)
    }

    /// Time index `0, 1, ..., n-1`.
    pub fn row_index(n: usize) -> Self {
        SurrogateIndex::Time((0..n).map(|i| i as f64).collect())
    }

    pub fn kind(&self) -> IndexKind {
        match self {
            SurrogateIndex::Time(_) => IndexKind::Time,
            SurrogateIndex::Domain(_) => IndexKind::Domain,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SurrogateIndex::Time(v) => v.len(),
            SurrogateIndex::Domain(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw index value of sample `i` as a real.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            SurrogateIndex::Time(v) => v[i],
            SurrogateIndex::Domain(v) => v[i] as f64,
        }
    }

    /// Sorted distinct domain labels; empty for a time index.
    pub fn domains(&self) -> Vec<i64> {
        match self {
            SurrogateIndex::Time(_) => Vec::new(),
            SurrogateIndex::Domain(v) => {
                let mut labels = v.clone();
                labels.sort_unstable();
                labels.dedup();
                labels
            }
        }
    }

    /// One-dimensional real encoding used by kernels and CI tests.
    ///
    /// Time is rescaled to `[0, 1]`; domain labels map to their rank among
    /// the distinct labels.
    pub fn encoded(&self) -> Vec<f64> {
        match self {
            SurrogateIndex::Time(v) => {
                let lo = v.first().copied().unwrap_or(0.0);
                let hi = v.last().copied().unwrap_or(0.0);
                let span = hi - lo;
                if span > 0.0 {
                    v.iter().map(|t| (t - lo) / span).collect()
                } else {
                    vec![0.0; v.len()]
                }
            }
            SurrogateIndex::Domain(v) => {
                let labels = self.domains();
                v.iter()
                    .map(|l| labels.binary_search(l).unwrap_or(0) as f64)
                    .collect()
            }
        }
    }

    fn permuted(&self, order: &[usize]) -> Self {
        match self {
            SurrogateIndex::Time(v) => SurrogateIndex::Time(order.iter().map(|&i| v[i]).collect()),
            SurrogateIndex::Domain(v) => {
                SurrogateIndex::Domain(order.iter().map(|&i| v[i]).collect())
            }
        }
    }
}

/// `N` samples of `n` observed variables, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    index: SurrogateIndex,
}

impl Dataset {
    pub fn new(columns: Vec<Vec<f64>>, names: Vec<String>, index: SurrogateIndex) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidData("dataset needs at least one variable".into()));
        }
        if columns.len() != names.len() {
            return Err(Error::InvalidData(format!(
                "{} columns but {} names",
                columns.len(),
                names.len()
            )));
        }
        let n_samples = columns[0].len();
        if n_samples < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: n_samples });
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n_samples {
                return Err(Error::InvalidData(format!("column `{name}` has wrong length")));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("column `{name}` has non-finite values")));
            }
        }
        if index.len() != n_samples {
            return Err(Error::InvalidData(format!(
                "index has {} entries for {} samples",
                index.len(),
                n_samples
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &names {
            if name == "C" || !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate or reserved name `{name}`")));
            }
        }
        Ok(Dataset { columns, names, index })
    }

    /// Builds a dataset from row-major samples.
    pub fn from_rows(rows: &[Vec<f64>], names: Vec<String>, index: SurrogateIndex) -> Result<Self> {
        let n = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidData("ragged rows".into()));
            }
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        Dataset::new(columns, names, index)
    }

    pub fn n_samples(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self) -> &SurrogateIndex {
        &self.index
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[f64]> {
        Ok(self.column(self.var_index(name)?))
    }

    /// Reorders variables; `order[k]` is the old position of new variable `k`.
    pub fn with_variable_order(&self, order: &[usize]) -> Result<Self> {
        let columns = order.iter().map(|&i| self.columns[i].clone()).collect();
        let names = order.iter().map(|&i| self.names[i].clone()).collect();
        Dataset::new(columns, names, self.index.clone())
    }

    /// Keeps only the rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let index = match self.index.permuted(rows) {
            SurrogateIndex::Time(v) => SurrogateIndex::time(v)?,
            other => other,
        };
        Dataset::new(columns, self.names.clone(), index)
    }
}

/// Standardizes every variable to sample mean 0 and unbiased variance 1.
pub fn normalize_dataset(d: &Dataset) -> Result<Dataset> {
    let columns = d
        .columns
        .iter()
        .zip(&d.names)
        .map(|(col, name)| {
            standardize(col).ok_or_else(|| Error::ConstantColumn(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(columns, d.names.clone(), d.index.clone())
}

/// Returns `None` for a zero-variance column.
pub fn standardize(col: &[f64]) -> Option<Vec<f64>> {
    let n = col.len();
    if n < 2 {
        return None;
    }
    let mean = col.iter().sum::<f64>() / n as f64;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return None;
    }
    Some(col.iter().map(|v| (v - mean) / sd).collect())
}

/// Outcome of one (conditional) independence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CITestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub conditioning_set: Vec<String>,
}

impl CITestResult {
    pub fn independent(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}
