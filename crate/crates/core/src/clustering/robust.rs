use ndarray::Array2;

use super::{
    distances, frobenius_change, membership_pass, row_weights, Algorithm, ClusterConfig,
    ClusterModel, FitResult, MembershipMatrix, TrainingTrace, SPREAD_FLOOR,
};

/// Moves `center` by `step * tanh((x - c) / b)` per coordinate.
///
/// This is a descent step on the robust distance: the direction equals
/// `-grad_c D(x, c)` (see [`robust_gradient`]).
#[inline]
pub fn online_step(center: &mut [f64], x: &[f64], scale: &[f64], step: f64) {
    for ((c, xi), b) in center.iter_mut().zip(x).zip(scale) {
        *c += step * ((xi - *c) / b).tanh();
    }
}

/// Gradient of the robust distance with respect to the center.
pub fn robust_gradient(x: &[f64], c: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(c)
        .zip(scale)
        .map(|((xi, ci), b)| -((xi - ci) / b).tanh())
        .collect()
}

fn empty_trace() -> TrainingTrace {
    TrainingTrace {
        errors: Vec::new(),
        weight_changes: Vec::new(),
        iterations_used: 0,
        converged: false,
    }
}

/// One fixed-order pass of online center updates.
fn epoch(
    algorithm: Algorithm,
    data: &Array2<f64>,
    centers: &mut Array2<f64>,
    scale: &[f64],
    fuzzifier: f64,
    spread: Option<&[f64]>,
    eta: f64,
) {
    let m = centers.nrows();
    let mut d = vec![0.0; m];
    let mut w = vec![0.0; m];
    for x in data.rows() {
        let x = x.as_slice().expect("standard layout data");
        distances(algorithm, x, &centers.view(), scale, &mut d);
        row_weights(algorithm, &d, fuzzifier, spread, &mut w);
        for (j, wj) in w.iter().enumerate() {
            let step = eta
                * if fuzzifier == 2.0 {
                    wj * wj
                } else {
                    wj.powf(fuzzifier)
                };
            let mut row = centers.row_mut(j);
            online_step(
                row.as_slice_mut().expect("standard layout centers"),
                x,
                scale,
                step,
            );
        }
    }
}

/// `w^beta`-weighted mean robust distance per cluster, floored.
fn spreads(
    data: &Array2<f64>,
    centers: &Array2<f64>,
    weights: &Array2<f64>,
    scale: &[f64],
    fuzzifier: f64,
) -> (Vec<f64>, bool) {
    let m = centers.nrows();
    let mut num = vec![0.0; m];
    let mut den = vec![0.0; m];
    let mut d = vec![0.0; m];
    for (x, w) in data.rows().into_iter().zip(weights.rows()) {
        distances(
            Algorithm::PossCp,
            x.as_slice().unwrap(),
            &centers.view(),
            scale,
            &mut d,
        );
        for j in 0..m {
            let wb = w[j].powf(fuzzifier);
            num[j] += wb * d[j];
            den[j] += wb;
        }
    }
    let mut clamped = false;
    let mu = num
        .iter()
        .zip(&den)
        .map(|(n, d)| {
            let v = if *d > 0.0 { n / d } else { 0.0 };
            if !(v >= SPREAD_FLOOR) {
                clamped = true;
                SPREAD_FLOOR
            } else {
                v
            }
        })
        .collect();
    (mu, clamped)
}

fn model(
    algorithm: Algorithm,
    centers: Array2<f64>,
    spread: Option<Vec<f64>>,
    spread_clamped: bool,
    scale: Vec<f64>,
    config: &ClusterConfig,
) -> ClusterModel {
    ClusterModel {
        algorithm,
        centers,
        spread,
        spread_clamped,
        fuzzifier: config.fuzzifier,
        scale,
        learning_rate: config.learning_rate,
        epsilon: config.epsilon,
        max_iterations: config.max_iterations,
    }
}

pub(super) fn run_probabilistic(
    data: &Array2<f64>,
    mut centers: Array2<f64>,
    scale: Vec<f64>,
    config: &ClusterConfig,
) -> FitResult {
    let beta = config.fuzzifier;
    let alg = Algorithm::ProbCp;
    let (mut weights, _) = membership_pass(alg, &data.view(), &centers.view(), &scale, beta, None);
    let mut trace = empty_trace();
    for iteration in 1..=config.max_iterations {
        let eta = config.learning_rate.at(iteration - 1);
        epoch(alg, data, &mut centers, &scale, beta, None, eta);
        let (next, objective) =
            membership_pass(alg, &data.view(), &centers.view(), &scale, beta, None);
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
        model: model(alg, centers, None, false, scale, config),
        memberships: MembershipMatrix { weights },
        trace,
    }
}

/// Spreads start from a normalized membership pass at the initial centers,
/// then follow the centers once per epoch.
pub(super) fn run_possibilistic(
    data: &Array2<f64>,
    mut centers: Array2<f64>,
    scale: Vec<f64>,
    config: &ClusterConfig,
) -> FitResult {
    let beta = config.fuzzifier;
    let alg = Algorithm::PossCp;
    let (provisional, _) = membership_pass(
        Algorithm::ProbCp,
        &data.view(),
        &centers.view(),
        &scale,
        beta,
        None,
    );
    let (mut mu, mut clamped) = spreads(data, &centers, &provisional, &scale, beta);
    let (mut weights, _) =
        membership_pass(alg, &data.view(), &centers.view(), &scale, beta, Some(&mu));
    let mut trace = empty_trace();
    for iteration in 1..=config.max_iterations {
        let eta = config.learning_rate.at(iteration - 1);
        epoch(alg, data, &mut centers, &scale, beta, Some(&mu), eta);
        let (at_centers, _) =
            membership_pass(alg, &data.view(), &centers.view(), &scale, beta, Some(&mu));
        let (next_mu, hit_floor) = spreads(data, &centers, &at_centers, &scale, beta);
        mu = next_mu;
        clamped |= hit_floor;
        let (next, objective) =
            membership_pass(alg, &data.view(), &centers.view(), &scale, beta, Some(&mu));
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
        model: model(alg, centers, Some(mu), clamped, scale, config),
        memberships: MembershipMatrix { weights },
        trace,
    }
}
