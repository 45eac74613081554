use ndarray::Array2;

use super::{
    frobenius_change, membership_pass, Algorithm, ClusterConfig, ClusterModel, FitResult,
    MembershipMatrix, TrainingTrace,
};

/// Alternating membership / weighted-mean updates from the given centers.
pub(super) fn run(
    data: &Array2<f64>,
    mut centers: Array2<f64>,
    scale: Vec<f64>,
    config: &ClusterConfig,
) -> FitResult {
    let beta = config.fuzzifier;
    let (mut weights, _) = membership_pass(
        Algorithm::Fcm,
        &data.view(),
        &centers.view(),
        &scale,
        beta,
        None,
    );
    let mut trace = TrainingTrace {
        errors: Vec::new(),
        weight_changes: Vec::new(),
        iterations_used: 0,
        converged: false,
    };
    for iteration in 1..=config.max_iterations {
        update_centers(data, &weights, beta, &mut centers);
        let (next, objective) = membership_pass(
            Algorithm::Fcm,
            &data.view(),
            &centers.view(),
            &scale,
            beta,
            None,
        );
        let change = frobenius_change(&next, &weights);
        weights = next;
        trace.errors.push(objective);
        trace.weight_changes.push(change);
        trace.iterations_used = iteration;
        if change <= config.epsilon {
            trace.converged = true;
            break;
        }
    }
    FitResult {
        model: ClusterModel {
            algorithm: Algorithm::Fcm,
            centers,
            spread: None,
            spread_clamped: false,
            fuzzifier: beta,
            scale,
            learning_rate: config.learning_rate,
            epsilon: config.epsilon,
            max_iterations: config.max_iterations,
        },
        memberships: MembershipMatrix { weights },
        trace,
    }
}

fn update_centers(data: &Array2<f64>, weights: &Array2<f64>, beta: f64, centers: &mut Array2<f64>) {
    for (j, mut center) in centers.rows_mut().into_iter().enumerate() {
        let mut num = vec![0.0; data.ncols()];
        let mut den = 0.0;
        for (x, w) in data.rows().into_iter().zip(weights.column(j)) {
            let wb = if beta == 2.0 { w * w } else { w.powf(beta) };
            den += wb;
            for (n, xi) in num.iter_mut().zip(x) {
                *n += wb * xi;
            }
        }
        // A cluster with no mass keeps its position.
        if den > 0.0 {
            for (c, n) in center.iter_mut().zip(num) {
                *c = n / den;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{fcm_fit, fit_from_centers, predict, ClusterConfig};
    use crate::telemetry::FeatureMatrix;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain fixed-point iteration written out with nested vectors.
    fn oracle(points: &[Vec<f64>], mut c: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        for _ in 0..100_000 {
            let mut w = vec![vec![0.0; c.len()]; points.len()];
            for (k, x) in points.iter().enumerate() {
                let d: Vec<f64> = c
                    .iter()
                    .map(|cj| cj.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum())
                    .collect();
                if let Some(z) = d.iter().position(|v| *v == 0.0) {
                    w[k][z] = 1.0;
                    continue;
                }
                let inv: f64 = d.iter().map(|v| 1.0 / v).sum();
                for j in 0..c.len() {
                    w[k][j] = (1.0 / d[j]) / inv;
                }
            }
            let mut next = c.clone();
            for (j, cj) in next.iter_mut().enumerate() {
                let den: f64 = w.iter().map(|r| r[j] * r[j]).sum();
                for (i, ci) in cj.iter_mut().enumerate() {
                    *ci = points
                        .iter()
                        .zip(&w)
                        .map(|(x, r)| r[j] * r[j] * x[i])
                        .sum::<f64>()
                        / den;
                }
            }
            let shift: f64 = next
                .iter()
                .zip(&c)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            c = next;
            if shift == 0.0 {
                break;
            }
        }
        c
    }

    #[test]
    fn four_point_square() {
        let data = FeatureMatrix::with_prefix(
            "x",
            array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]],
        );
        let config = ClusterConfig {
            epsilon: 1e-14,
            max_iterations: 1000,
            ..ClusterConfig::default()
        };
        let fit = fcm_fit(&data, &config, 3).unwrap();
        let mut centers: Vec<[f64; 2]> = fit
            .model
            .centers
            .rows()
            .into_iter()
            .map(|r| [r[0], r[1]])
            .collect();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let pts: Vec<Vec<f64>> = data
            .values()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        let want = oracle(&pts, vec![vec![0.0, 0.0], vec![10.0, 1.0]]);
        let mut want: Vec<[f64; 2]> = want.iter().map(|c| [c[0], c[1]]).collect();
        want.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (got, exp) in centers.iter().zip(&want) {
            assert!((got[0] - exp[0]).abs() < 1e-6 && (got[1] - exp[1]).abs() < 1e-6);
        }
        assert!((want[0][1] - 0.5).abs() < 1e-6 && (want[1][1] - 0.5).abs() < 1e-6);
        assert!(want[0][0].abs() < 0.05 && (want[1][0] - 10.0).abs() < 0.05);
    }

    #[test]
    fn matches_oracle_from_same_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let n = rng.random_range(4..=12);
            let d = rng.random_range(1..=3);
            let values = Array2::from_shape_fn((n, d), |_| rng.random_range(-5.0..5.0));
            let start = values.select(ndarray::Axis(0), &[0, 1]);
            let data = FeatureMatrix::with_prefix("x", values.clone());
            let config = ClusterConfig {
                epsilon: 1e-13,
                max_iterations: 100_000,
                ..ClusterConfig::default()
            };
            let fit =
                fit_from_centers(super::Algorithm::Fcm, &data, &config, start.clone()).unwrap();
            let pts: Vec<Vec<f64>> = values.rows().into_iter().map(|r| r.to_vec()).collect();
            let c0: Vec<Vec<f64>> = start.rows().into_iter().map(|r| r.to_vec()).collect();
            let want = oracle(&pts, c0);
            for (j, row) in fit.model.centers.rows().into_iter().enumerate() {
                for (a, b) in row.iter().zip(&want[j]) {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn rows_sum_to_one_and_predict_reproduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = Array2::from_shape_fn((60, 3), |(i, _)| {
            rng.random_range(0.0..1.0) + if i < 30 { 0.0 } else { 4.0 }
        });
        let data = FeatureMatrix::with_prefix("x", values);
        let fit = fcm_fit(&data, &ClusterConfig::default(), 1).unwrap();
        for row in fit.memberships.weights.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        assert!(fit.trace.converged);
        assert!(*fit.trace.weight_changes.last().unwrap() <= 1e-4);
        let again = predict(&fit.model, &data).unwrap();
        assert_eq!(again, fit.memberships);
        assert!(fit.model.spread.is_none());
    }

    #[test]
    fn deterministic_for_seed() {
        let data =
            FeatureMatrix::with_prefix("x", array![[0.0], [0.2], [0.1], [5.0], [5.3], [4.9]]);
        let a = fcm_fit(&data, &ClusterConfig::default(), 9).unwrap();
        let b = fcm_fit(&data, &ClusterConfig::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
