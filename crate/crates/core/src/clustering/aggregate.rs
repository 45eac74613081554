use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_assignments, fit, predict, Algorithm, ClusterConfig, FitResult};
use crate::error::{CdfError, Result};
use crate::telemetry::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub mse_train: f64,
    pub mse_test: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub algorithm: Algorithm,
    pub runs: Vec<RunResult>,
    pub mse_train_mean: f64,
    pub mse_train_std: f64,
    pub mse_test_mean: f64,
    pub mse_test_std: f64,
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn one_run(
    algorithm: Algorithm,
    train: &FeatureMatrix,
    train_labels: &[u8],
    test: &FeatureMatrix,
    test_labels: &[u8],
    config: &ClusterConfig,
    seed: u64,
) -> Result<(RunResult, FitResult)> {
    let fitted = fit(algorithm, train, config, seed)?;
    let test_assign = predict(&fitted.model, test)?.argmax();
    let eval = evaluate_assignments(
        &fitted.memberships.argmax(),
        train_labels,
        &test_assign,
        test_labels,
        config.clusters,
    )?;
    let run = RunResult {
        seed,
        mse_train: eval.mse_train,
        mse_test: eval.mse_test,
        iterations: fitted.trace.iterations_used,
        converged: fitted.trace.converged,
    };
    Ok((run, fitted))
}

/// Independent fits with seeds `base_seed, base_seed + 1, ...`, run in parallel.
///
/// Results are in seed order and do not depend on the thread count.
pub fn fit_averaged(
    algorithm: Algorithm,
    train: &FeatureMatrix,
    train_labels: &[u8],
    test: &FeatureMatrix,
    test_labels: &[u8],
    config: &ClusterConfig,
    runs: usize,
    base_seed: u64,
) -> Result<AggregateResult> {
    if runs == 0 {
        return Err(CdfError::InvalidConfig("runs must be at least 1".into()));
    }
    if train_labels.len() != train.n_samples() {
        return Err(CdfError::ShapeMismatch {
            expected: train.n_samples(),
            found: train_labels.len(),
        });
    }
    let results: Vec<RunResult> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            one_run(
                algorithm,
                train,
                train_labels,
                test,
                test_labels,
                config,
                base_seed + r,
            )
            .map(|(run, _)| run)
        })
        .collect::<Result<_>>()?;
    let train_errors: Vec<f64> = results.iter().map(|r| r.mse_train).collect();
    let test_errors: Vec<f64> = results.iter().map(|r| r.mse_test).collect();
    let (mse_train_mean, mse_train_std) = mean_std(&train_errors);
    let (mse_test_mean, mse_test_std) = mean_std(&test_errors);
    Ok(AggregateResult {
        algorithm,
        runs: results,
        mse_train_mean,
        mse_train_std,
        mse_test_mean,
        mse_test_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let values = Array2::from_shape_fn((n, 2), |(i, _)| {
            rng.random_range(-1.0..1.0) + 1.5 * labels[i] as f64
        });
        (FeatureMatrix::with_prefix("x", values), labels)
    }

    #[test]
    fn single_run_equals_plain_fit() {
        let (train, yl) = data(60, 1);
        let (test, yt) = data(30, 2);
        let config = ClusterConfig::default();
        let agg = fit_averaged(Algorithm::Fcm, &train, &yl, &test, &yt, &config, 1, 40).unwrap();
        let (run, _) = one_run(Algorithm::Fcm, &train, &yl, &test, &yt, &config, 40).unwrap();
        assert_eq!(agg.runs, vec![run.clone()]);
        assert_eq!(agg.mse_test_mean, run.mse_test);
        assert_eq!(agg.mse_test_std, 0.0);
    }

    #[test]
    fn repeated_aggregate_is_deterministic_and_bounded() {
        let (train, yl) = data(80, 3);
        let (test, yt) = data(40, 4);
        let config = ClusterConfig::default();
        let a = fit_averaged(Algorithm::ProbCp, &train, &yl, &test, &yt, &config, 25, 0).unwrap();
        let b = fit_averaged(Algorithm::ProbCp, &train, &yl, &test, &yt, &config, 25, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 25);
        let lo = a
            .runs
            .iter()
            .map(|r| r.mse_test)
            .fold(f64::INFINITY, f64::min);
        let hi = a
            .runs
            .iter()
            .map(|r| r.mse_test)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= a.mse_test_mean && a.mse_test_mean <= hi);
        assert!(fit_averaged(Algorithm::Fcm, &train, &yl, &test, &yt, &config, 0, 0).is_err());
    }
}
