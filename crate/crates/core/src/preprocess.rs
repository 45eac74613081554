//! Cleaning and standardization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};
use crate::telemetry::FeatureMatrix;

/// Names of features to drop regardless of their content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub drop: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    AllMissing,
    /// Bitwise copy of the named earlier column.
    Duplicate,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub reason: DropReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
}

impl CleanReport {
    /// Applies the same column selection to another matrix.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        matrix.select_by_name(&self.kept)
    }
}

fn same_bits(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> bool {
    a.iter()
        .zip(b.iter())
        .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Drops all-missing, repeated and explicitly irrelevant columns.
pub fn clean(matrix: &FeatureMatrix, config: &CleanConfig) -> Result<(FeatureMatrix, CleanReport)> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in matrix.names().iter().enumerate() {
        let column = matrix.column(j);
        let drop = |reason, duplicate_of| DroppedFeature {
            name: name.clone(),
            reason,
            duplicate_of,
        };
        if config.drop.iter().any(|d| d == name) {
            dropped.push(drop(DropReason::Irrelevant, None));
        } else if column.iter().all(|v| v.is_nan()) {
            dropped.push(drop(DropReason::AllMissing, None));
        } else if let Some(&earlier) = kept.iter().find(|&&k| same_bits(matrix.column(k), column)) {
            dropped.push(drop(
                DropReason::Duplicate,
                Some(matrix.names()[earlier].clone()),
            ));
        } else {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(CdfError::EmptyResult(
            "cleaning removed every feature".into(),
        ));
    }
    let out = matrix.select_columns(&kept);
    let report = CleanReport {
        kept: out.names().to_vec(),
        dropped,
    };
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledFeature {
    pub name: String,
    pub mean: f64,
    pub deviation: f64,
    /// Zero spread in the fitting data; transforms to 0.
    pub constant: bool,
}

/// Per-feature standardization with the population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerModel {
    pub features: Vec<ScaledFeature>,
}

impl ScalerModel {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn constant_features(&self) -> Vec<&str> {
        self.features
            .iter()
            .filter(|f| f.constant)
            .map(|f| f.name.as_str())
            .collect()
    }

    pub fn transform(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.n_features() != self.n_features() {
            return Err(CdfError::ShapeMismatch {
                expected: self.n_features(),
                found: matrix.n_features(),
            });
        }
        let mut values = matrix.values().to_owned();
        for (mut column, f) in values.columns_mut().into_iter().zip(&self.features) {
            if f.constant {
                column.fill(0.0);
            } else {
                column.mapv_inplace(|v| (v - f.mean) / f.deviation);
            }
        }
        FeatureMatrix::new(matrix.names().to_vec(), values)
    }
}

pub fn fit_scaler(matrix: &FeatureMatrix) -> Result<ScalerModel> {
    let n = matrix.n_samples();
    if n < 2 {
        return Err(CdfError::InsufficientData(format!(
            "scaler needs at least 2 rows, got {n}"
        )));
    }
    if !matrix.is_finite() {
        return Err(CdfError::InvalidData(
            "scaler input contains non-finite values".into(),
        ));
    }
    let features = matrix
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let column = matrix.column(j);
            let mean = column.sum() / n as f64;
            let first = column[0];
            let constant = column.iter().all(|v| *v == first);
            let deviation = if constant {
                0.0
            } else {
                (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
            };
            ScaledFeature {
                name: name.clone(),
                mean: if constant { first } else { mean },
                deviation,
                constant: constant || deviation == 0.0,
            }
        })
        .collect();
    Ok(ScalerModel { features })
}

/// Population mean and standard deviation of each column.
pub fn column_moments(values: &Array2<f64>) -> Vec<(f64, f64)> {
    let n = values.nrows() as f64;
    values
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn named(values: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::with_prefix("f", values)
    }

    #[test]
    fn duplicate_column_is_dropped() {
        let m = named(array![[1.0, 2.0, 1.0], [3.0, 4.0, 3.0]]);
        let (out, report) = clean(&m, &CleanConfig::default()).unwrap();
        assert_eq!(out.names(), &["f1", "f2"]);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].name, "f3");
        assert_eq!(report.dropped[0].reason, DropReason::Duplicate);
        assert_eq!(report.dropped[0].duplicate_of.as_deref(), Some("f1"));
    }

    #[test]
    fn clean_matrix_is_untouched() {
        let m = named(array![[1.0, 2.0], [3.0, 5.0]]);
        let (out, report) = clean(&m, &CleanConfig::default()).unwrap();
        assert_eq!(out, m);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn all_nan_column_is_dropped() {
        let mut values = Array2::from_shape_fn((5, 41), |(i, j)| (i * 41 + j) as f64);
        values.column_mut(7).fill(f64::NAN);
        let (out, report) = clean(&named(values), &CleanConfig::default()).unwrap();
        assert_eq!(out.n_features(), 40);
        assert_eq!(report.dropped[0].reason, DropReason::AllMissing);
    }

    #[test]
    fn irrelevant_by_name_and_empty_result() {
        let m = named(array![[1.0, 2.0], [3.0, 5.0]]);
        let config = CleanConfig {
            drop: vec!["f2".into()],
        };
        let (out, report) = clean(&m, &config).unwrap();
        assert_eq!(out.names(), &["f1"]);
        assert_eq!(report.dropped[0].reason, DropReason::Irrelevant);
        assert_eq!(report.apply(&m).unwrap(), out);
        let all = CleanConfig {
            drop: vec!["f1".into(), "f2".into()],
        };
        assert!(matches!(clean(&m, &all), Err(CdfError::EmptyResult(_))));
    }

    #[test]
    fn scaler_simple_columns() {
        let m = named(array![[1.0, 0.0], [1.0, 2.0]]);
        let s = fit_scaler(&m).unwrap();
        assert_eq!(s.features[0].mean, 1.0);
        assert_eq!(s.features[0].deviation, 0.0);
        assert!(s.features[0].constant);
        assert_eq!(s.features[1].mean, 1.0);
        assert_eq!(s.features[1].deviation, 1.0);
        assert!(!s.features[1].constant);
        let t = s.transform(&m).unwrap();
        assert_eq!(t.values(), &array![[0.0, -1.0], [0.0, 1.0]]);
    }

    #[test]
    fn constant_column_of_three() {
        let m = named(array![[1.0], [1.0], [1.0]]);
        let s = fit_scaler(&m).unwrap();
        assert!(s.features[0].constant);
        assert!(s.transform(&m).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scaler_errors() {
        assert!(matches!(
            fit_scaler(&named(array![[1.0, 2.0]])),
            Err(CdfError::InsufficientData(_))
        ));
        let s = fit_scaler(&named(array![[1.0, 2.0], [2.0, 3.0]])).unwrap();
        assert!(matches!(
            s.transform(&named(array![[1.0]])),
            Err(CdfError::ShapeMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(fit_scaler(&named(array![[f64::NAN], [1.0]])).is_err());
    }

    #[test]
    fn random_matrix_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values = Array2::from_shape_fn((100, 5), |(_, j)| {
            rng.random_range(-3.0..7.0) * (j + 1) as f64
        });
        let m = named(values);
        let t = fit_scaler(&m).unwrap().transform(&m).unwrap();
        // Independent recomputation of the moments on the output.
        for j in 0..5 {
            let c: Vec<f64> = t.column(j).to_vec();
            let mean = c.iter().sum::<f64>() / 100.0;
            let sd = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 100.0).sqrt();
            assert!(mean.abs() < 1e-12, "{mean}");
            assert!((sd - 1.0).abs() < 1e-12, "{sd}");
        }
    }

    #[test]
    fn identical_rows_transform_identically() {
        let m = named(array![[1.0, 5.0], [2.0, 7.0], [4.0, 1.0]]);
        let s = fit_scaler(&m).unwrap();
        assert_eq!(s.transform(&m).unwrap(), s.transform(&m.clone()).unwrap());
    }

    #[test]
    fn scaler_json_round_trip() {
        let m = named(array![[0.1, 3.0], [0.7, 3.0], [1.3, 3.0]]);
        let s = fit_scaler(&m).unwrap();
        let back: ScalerModel = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn affine_invariance(
            rows in prop::collection::vec(-100.0f64..100.0, 3..40),
            a in 0.01f64..100.0,
            b in -1e3f64..1e3,
        ) {
            prop_assume!(rows.iter().any(|v| (v - rows[0]).abs() > 1e-3));
            let values = Array2::from_shape_vec((rows.len(), 1), rows.iter().map(|v| a * v + b).collect()).unwrap();
            let m = named(values);
            let t = fit_scaler(&m).unwrap().transform(&m).unwrap();
            let (mean, sd) = column_moments(t.values())[0];
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
        }

        #[test]
        fn clean_is_idempotent(
            cols in prop::collection::vec(prop::collection::vec(prop::sample::select(vec![0.0, 1.0, f64::NAN]), 4), 1..8),
        ) {
            let n = cols.len();
            let values = Array2::from_shape_fn((4, n), |(i, j)| cols[j][i]);
            let m = named(values);
            if let Ok((once, _)) = clean(&m, &CleanConfig::default()) {
                let (twice, report) = clean(&once, &CleanConfig::default()).unwrap();
                prop_assert!(report.dropped.is_empty());
                prop_assert_eq!(once.names(), twice.names());
            }
        }
    }
}
