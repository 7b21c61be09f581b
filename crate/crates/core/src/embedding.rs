//! Endpoint signatures by principal component analysis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SampleMatrix;
use crate::linalg::{dot, symmetric_eigen};

pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

/// Eigenvalues below this (after scaling) indicate a broken decomposition.
const NEGATIVE_EIGENVALUE_LIMIT: f64 = -1e-8;

/// How many principal directions to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    /// Smallest dimension whose cumulative explained variance reaches the fraction.
    VarianceFraction(f64),
    /// Exact dimension, capped at `min(rows - 1, input dimension)`.
    FixedDim(usize),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::VarianceFraction(DEFAULT_VARIANCE_FRACTION)
    }
}

impl fmt::Display for PcaTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PcaTarget::VarianceFraction(v) => write!(f, "{v}"),
            PcaTarget::FixedDim(d) => write!(f, "dim:{d}"),
        }
    }
}

impl FromStr for PcaTarget {
    type Err = Error;

    /// `0.95` is a variance fraction, `dim:12` a fixed dimension.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("invalid pca target {s:?}"));
        if let Some(dim) = s.strip_prefix("dim:") {
            return Ok(PcaTarget::FixedDim(dim.trim().parse().map_err(|_| bad())?));
        }
        let frac: f64 = s.parse().map_err(|_| bad())?;
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(bad());
        }
        Ok(PcaTarget::VarianceFraction(frac))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_dim: usize,
    pub mean: Vec<f64>,
    /// Orthonormal principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of every eigenvalue seen at fit time, retained or not.
    pub total_variance: f64,
    pub retained_dim: usize,
    #[serde(default)]
    pub schema_fingerprint: Option<String>,
}

pub fn fit_pca(matrix: &SampleMatrix, target: PcaTarget) -> Result<PcaModel> {
    fit_pca_rows(&matrix.values(), target)
}

/// Fit on row vectors using the sample covariance (divisor `n - 1`).
pub fn fit_pca_rows(rows: &[Vec<f64>], target: PcaTarget) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Embedding(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Embedding("rows must share a non-zero dimension".into()));
    }
    match target {
        PcaTarget::FixedDim(0) => {
            return Err(Error::Embedding("fixed_dim must be at least 1".into()))
        }
        PcaTarget::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::Embedding(format!("variance fraction {f} outside (0, 1]")))
        }
        _ => {}
    }

    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![vec![0.0; d]; d];
    let mut centered = vec![0.0; d];
    for row in rows {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let cov_row = &mut cov[i];
            for j in i..d {
                cov_row[j] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    #[allow(clippy::needless_range_loop)]
    for i in 0..d {
        for j in i..d {
            let v = cov[i][j] / denom;
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }

    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let floor = NEGATIVE_EIGENVALUE_LIMIT * trace.max(1.0);
    let mut eigenvalues = Vec::with_capacity(d);
    for &i in &order {
        if values[i] < floor {
            return Err(Error::Internal(format!(
                "covariance eigenvalue {} is negative beyond tolerance",
                values[i]
            )));
        }
        eigenvalues.push(values[i].max(0.0));
    }
    let total_variance: f64 = eigenvalues.iter().sum();
    if total_variance <= 0.0 {
        return Err(Error::Embedding("all columns have zero variance".into()));
    }

    let retained_dim = match target {
        PcaTarget::FixedDim(m) => m.min(n - 1).min(d),
        PcaTarget::VarianceFraction(frac) => {
            let mut cumulative = 0.0;
            let mut m = d;
            for (i, ev) in eigenvalues.iter().enumerate() {
                cumulative += ev;
                if cumulative / total_variance >= frac - 1e-12 {
                    m = i + 1;
                    break;
                }
            }
            m
        }
    };
    if retained_dim == 0 {
        return Err(Error::Embedding("no component retained".into()));
    }

    let components = order[..retained_dim]
        .iter()
        .map(|&i| {
            let mut c = vectors[i].clone();
            let norm = dot(&c, &c).sqrt();
            c.iter_mut().for_each(|x| *x /= norm);
            // largest-magnitude entry positive, first index on ties
            let pivot = c
                .iter()
                .enumerate()
                .fold(0, |best, (j, x)| if x.abs() > c[best].abs() { j } else { best });
            if c[pivot] < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();
    eigenvalues.truncate(retained_dim);

    Ok(PcaModel {
        input_dim: d,
        mean,
        components,
        eigenvalues,
        total_variance,
        retained_dim,
        schema_fingerprint: None,
    })
}

impl PcaModel {
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.input_dim {
            return Err(Error::Embedding(format!(
                "expected a {}-dimensional vector, got {}",
                self.input_dim,
                vector.len()
            )));
        }
        let centered: Vec<f64> = vector.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    /// Map a signature back into the input space.
    pub fn reconstruct(&self, signature: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (coef, comp) in signature.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += coef * c;
            }
        }
        out
    }

    /// Copy keeping only the first `dim` components.
    pub fn truncated(&self, dim: usize) -> PcaModel {
        let dim = dim.min(self.retained_dim);
        PcaModel {
            components: self.components[..dim].to_vec(),
            eigenvalues: self.eigenvalues[..dim].to_vec(),
            retained_dim: dim,
            ..self.clone()
        }
    }

    pub fn explained_variance(&self) -> Vec<f64> {
        explained_variance(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PcaModel = serde_json::from_str(text)
            .map_err(|e| Error::Artifact(format!("pca model: {e}")))?;
        if model.components.len() != model.retained_dim
            || model.eigenvalues.len() != model.retained_dim
            || model.mean.len() != model.input_dim
        {
            return Err(Error::Artifact("pca model: inconsistent dimensions".into()));
        }
        Ok(model)
    }
}

/// Retained eigenvalues as fractions of the total variance at fit time.
pub fn explained_variance(model: &PcaModel) -> Vec<f64> {
    model
        .eigenvalues
        .iter()
        .map(|ev| ev / model.total_variance)
        .collect()
}
