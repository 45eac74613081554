//! PCA by eigendecomposition of the sample covariance matrix.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};
use crate::telemetry::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_names: Vec<String>,
    pub input_mean: Array1<f64>,
    /// Retained components, one orthonormal row each (k×n).
    pub component_vectors: Array2<f64>,
    /// Full spectrum in descending order; the first k belong to the retained components.
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub cumulative_threshold: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.component_vectors.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_mean.len()
    }

    pub fn retained_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.n_components()]
    }

    pub fn cumulative_ratio(&self, k: usize) -> f64 {
        self.explained_variance_ratio[..k].iter().sum()
    }

    pub fn write_ratios_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["component", "eigenvalue", "ratio", "cumulative", "retained"])?;
        let mut cumulative = 0.0;
        for (i, (l, r)) in self
            .eigenvalues
            .iter()
            .zip(&self.explained_variance_ratio)
            .enumerate()
        {
            cumulative += r;
            out.write_record([
                format!("pc{}", i + 1),
                l.to_string(),
                r.to_string(),
                cumulative.to_string(),
                (i < self.n_components()).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `(X - mean) V^T`, columns named `pc1..pck`.
    pub fn project(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.n_features() != self.n_inputs() {
            return Err(CdfError::ShapeMismatch {
                expected: self.n_inputs(),
                found: matrix.n_features(),
            });
        }
        let centered = matrix.values() - &self.input_mean.view().insert_axis(Axis(0));
        let scores = centered.dot(&self.component_vectors.t());
        Ok(FeatureMatrix::with_prefix("pc", scores))
    }
}

/// Population covariance (divisor N) of the columns of `values`.
pub fn covariance(values: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = values.nrows() as f64;
    let mean = values.mean_axis(Axis(0)).expect("non-empty matrix");
    let centered = values - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / n;
    (mean, cov)
}

/// Minimal `k` whose cumulative ratio strictly exceeds `threshold`, at most `ratios.len()`.
pub fn components_for_threshold(ratios: &[f64], threshold: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, r) in ratios.iter().enumerate() {
        cumulative += r;
        if cumulative > threshold {
            return i + 1;
        }
    }
    ratios.len()
}

pub fn fit_pca(matrix: &FeatureMatrix, cumulative_threshold: f64) -> Result<PcaModel> {
    if !(cumulative_threshold > 0.0 && cumulative_threshold <= 1.0) {
        return Err(CdfError::InvalidConfig(format!(
            "cumulative threshold {cumulative_threshold} must lie in (0, 1]"
        )));
    }
    if matrix.n_samples() < 2 {
        return Err(CdfError::InsufficientData(format!(
            "PCA needs at least 2 rows, got {}",
            matrix.n_samples()
        )));
    }
    if !matrix.is_finite() {
        return Err(CdfError::InvalidData(
            "PCA input contains non-finite values".into(),
        ));
    }
    let n = matrix.n_features();
    let (mean, cov) = covariance(matrix.values());
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eigen = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(CdfError::DegenerateData(
            "PCA input has zero total variance".into(),
        ));
    }
    let explained_variance_ratio: Vec<f64> = eigenvalues.iter().map(|l| l / total).collect();
    let k = components_for_threshold(&explained_variance_ratio, cumulative_threshold);

    let mut component_vectors = Array2::zeros((k, n));
    for (row, &i) in order.iter().take(k).enumerate() {
        let v = eigen.eigenvectors.column(i);
        let pivot = (0..n).fold(
            0,
            |best, j| if v[j].abs() > v[best].abs() { j } else { best },
        );
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            component_vectors[[row, j]] = sign * v[j];
        }
    }

    Ok(PcaModel {
        input_names: matrix.names().to_vec(),
        input_mean: mean,
        component_vectors,
        eigenvalues,
        explained_variance_ratio,
        cumulative_threshold,
    })
}
