//! Entropy-based unsupervised feature selection.

use std::io::Write;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};
use crate::telemetry::FeatureMatrix;

/// Default histogram resolution for `n` samples: `ceil(sqrt(n))`.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(1)
}

/// Shannon entropy in nats of an equal-width histogram over `[min, max]`.
pub fn feature_entropy(column: ArrayView1<'_, f64>, bins: usize) -> Result<f64> {
    if column.is_empty() {
        return Err(CdfError::InsufficientData(
            "entropy of an empty column".into(),
        ));
    }
    if bins == 0 {
        return Err(CdfError::InvalidConfig(
            "bin count must be at least 1".into(),
        ));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(CdfError::InvalidData(
            "entropy input contains non-finite values".into(),
        ));
    }
    let (min, max) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if min == max {
        return Ok(0.0);
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in column {
        let k = ((v - min) / width) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let n = column.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntropy {
    pub feature: String,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Sorted by descending entropy.
    pub entropies: Vec<FeatureEntropy>,
    pub threshold: f64,
    /// Surviving features in input column order.
    pub selected: Vec<String>,
    pub bin_count: usize,
}

impl EntropyReport {
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        matrix.select_by_name(&self.selected)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["feature", "entropy", "selected"])?;
        for e in &self.entropies {
            let selected = e.entropy > self.threshold;
            out.write_record([
                e.feature.clone(),
                e.entropy.to_string(),
                selected.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Keeps the columns with entropy strictly above `h_min`.
pub fn select_features(
    matrix: &FeatureMatrix,
    h_min: f64,
    bins: usize,
) -> Result<(FeatureMatrix, EntropyReport)> {
    let mut entropies = Vec::with_capacity(matrix.n_features());
    let mut keep = Vec::new();
    for (j, name) in matrix.names().iter().enumerate() {
        let entropy = feature_entropy(matrix.column(j), bins)?;
        if entropy > h_min {
            keep.push(j);
        }
        entropies.push(FeatureEntropy {
            feature: name.clone(),
            entropy,
        });
    }
    if keep.is_empty() {
        return Err(CdfError::EmptyResult(format!(
            "no feature has entropy above {h_min}"
        )));
    }
    entropies.sort_by(|a, b| b.entropy.total_cmp(&a.entropy));
    let out = matrix.select_columns(&keep);
    let report = EntropyReport {
        entropies,
        threshold: h_min,
        selected: out.names().to_vec(),
        bin_count: bins,
    };
    Ok((out, report))
}
