//! Clustered survival data, design matrices and the per-record parameters `τ`, `γ`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear predictors beyond this magnitude are treated as a diverged iterate.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub cluster: String,
    pub time: f64,
    /// `true` for an observed event, `false` for a censored time.
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// Validated collection of clustered records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    records: Vec<SurvivalRecord>,
    cluster_labels: Vec<String>,
    cluster_of: Vec<usize>,
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<SurvivalRecord>) -> Result<Self> {
        let p = covariate_names.len();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut cluster_labels = Vec::new();
        let mut cluster_of = Vec::with_capacity(records.len());
        for (row, rec) in records.iter().enumerate() {
            if !(rec.time.is_finite() && rec.time > 0.0) {
                return Err(Error::InvalidData(format!("record {row}: time must be positive, got {}", rec.time)));
            }
            if rec.covariates.len() != p {
                return Err(Error::InvalidData(format!(
                    "record {row}: expected {p} covariates, got {}",
                    rec.covariates.len()
                )));
            }
            if let Some(bad) = rec.covariates.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidData(format!("record {row}: non-finite covariate {bad}")));
            }
            let next = index.len();
            let id = *index.entry(rec.cluster.as_str()).or_insert_with(|| {
                cluster_labels.push(rec.cluster.clone());
                next
            });
            cluster_of.push(id);
        }
        Ok(Self { covariate_names, records, cluster_labels, cluster_of })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn q(&self) -> usize {
        self.cluster_labels.len()
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Cluster labels in order of first appearance.
    pub fn cluster_labels(&self) -> &[String] {
        &self.cluster_labels
    }

    /// Cluster index of each record, into [`cluster_labels`](Self::cluster_labels).
    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.q()];
        for &c in &self.cluster_of {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn censoring_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| !r.event).count() as f64 / self.n() as f64
    }
}

/// Reference information about one covariate, kept with a fit for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateInfo {
    pub name: String,
    /// Most frequent value; ties go to the smallest value.
    pub mode: f64,
    /// Every value is 0 or 1.
    pub binary: bool,
}

impl CovariateInfo {
    pub fn from_values(name: &str, values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut mode = sorted.first().copied().unwrap_or(0.0);
        let mut best = 0usize;
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            if j - i > best {
                best = j - i;
                mode = sorted[i];
            }
            i = j;
        }
        let binary = values.iter().all(|&x| x == 0.0 || x == 1.0);
        Self { name: name.to_string(), mode, binary }
    }
}

/// Response, design matrices and cluster incidence for one dataset.
///
/// `x_scale` and `x_shape` carry a leading intercept column. The incidence
/// matrix `Z` is stored as the cluster index of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub x_scale: DMatrix<f64>,
    pub x_shape: DMatrix<f64>,
    pub cluster: Vec<usize>,
    pub cluster_labels: Vec<String>,
    pub cluster_sizes: Vec<usize>,
    pub scale_names: Vec<String>,
    pub shape_names: Vec<String>,
    pub covariates: Vec<CovariateInfo>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn q(&self) -> usize {
        self.cluster_labels.len()
    }

    pub fn p_scale(&self) -> usize {
        self.x_scale.ncols()
    }

    pub fn p_shape(&self) -> usize {
        self.x_shape.ncols()
    }

    /// Dense `n × q` zero/one incidence matrix.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n(), self.q());
        for (row, &c) in self.cluster.iter().enumerate() {
            z[(row, c)] = 1.0;
        }
        z
    }
}

fn design_matrix(dataset: &Dataset, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(dataset.n(), columns.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            dataset.records[i].covariates[columns[j - 1]]
        }
    })
}

/// Builds the scale and shape designs plus the cluster incidence.
///
/// Clusters are ordered by first appearance, so the same dataset always gives
/// the same matrices.
pub fn build_design<S: AsRef<str>>(
    dataset: &Dataset,
    scale_covariates: &[S],
    shape_covariates: &[S],
) -> Result<Design> {
    if dataset.n() == 0 {
        return Err(Error::InvalidData("dataset is empty".to_string()));
    }
    let resolve =
        |names: &[S]| -> Result<Vec<usize>> { names.iter().map(|n| dataset.covariate_index(n.as_ref())).collect() };
    let scale_cols = resolve(scale_covariates)?;
    let shape_cols = resolve(shape_covariates)?;

    let mut used: Vec<usize> = scale_cols.iter().chain(shape_cols.iter()).copied().collect();
    used.sort_unstable();
    used.dedup();
    let covariates = used
        .iter()
        .map(|&c| {
            let values: Vec<f64> = dataset.records.iter().map(|r| r.covariates[c]).collect();
            CovariateInfo::from_values(&dataset.covariate_names[c], &values)
        })
        .collect();

    Ok(Design {
        times: dataset.records.iter().map(|r| r.time).collect(),
        events: dataset.records.iter().map(|r| r.event).collect(),
        x_scale: design_matrix(dataset, &scale_cols),
        x_shape: design_matrix(dataset, &shape_cols),
        cluster: dataset.cluster_of.clone(),
        cluster_labels: dataset.cluster_labels.clone(),
        cluster_sizes: dataset.cluster_sizes(),
        scale_names: scale_cols.iter().map(|&c| dataset.covariate_names[c].clone()).collect(),
        shape_names: shape_cols.iter().map(|&c| dataset.covariate_names[c].clone()).collect(),
        covariates,
    })
}

/// Fixed effects `θ = (β, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Cluster random effects. Structurally absent components are all zero; under
/// the common structure `v_alpha = φ v_beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffects {
    pub v_beta: Vec<f64>,
    pub v_alpha: Vec<f64>,
}

impl RandomEffects {
    pub fn zeros(q: usize) -> Self {
        Self { v_beta: vec![0.0; q], v_alpha: vec![0.0; q] }
    }
}

/// Scale and shape linear predictors `(x'β + v_β, x'α + v_α)` for every record.
pub fn linear_predictor_logs(design: &Design, theta: &FixedParams, v: &RandomEffects) -> Result<(Vec<f64>, Vec<f64>)> {
    if theta.beta.len() != design.p_scale() || theta.alpha.len() != design.p_shape() {
        return Err(Error::Dimension(format!(
            "coefficients ({}, {}) do not match design ({}, {})",
            theta.beta.len(),
            theta.alpha.len(),
            design.p_scale(),
            design.p_shape()
        )));
    }
    if v.v_beta.len() != design.q() || v.v_alpha.len() != design.q() {
        return Err(Error::Dimension(format!("random effects must have length {}", design.q())));
    }
    let eta_b = &design.x_scale * DVector::from_column_slice(&theta.beta);
    let eta_a = &design.x_shape * DVector::from_column_slice(&theta.alpha);
    let mut log_tau = Vec::with_capacity(design.n());
    let mut log_gamma = Vec::with_capacity(design.n());
    for (row, &c) in design.cluster.iter().enumerate() {
        let b = eta_b[row] + v.v_beta[c];
        let a = eta_a[row] + v.v_alpha[c];
        for value in [b, a] {
            if !(value.abs() <= MAX_LINEAR_PREDICTOR) {
                return Err(Error::Diverged { record: row, value });
            }
        }
        log_tau.push(b);
        log_gamma.push(a);
    }
    Ok((log_tau, log_gamma))
}

/// `τ_ij = exp(x'β + v_βi)` and `γ_ij = exp(x'α + v_αi)`.
pub fn linear_predictors(design: &Design, theta: &FixedParams, v: &RandomEffects) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lt, lg) = linear_predictor_logs(design, theta, v)?;
    Ok((lt.into_iter().map(f64::exp).collect(), lg.into_iter().map(f64::exp).collect()))
}
