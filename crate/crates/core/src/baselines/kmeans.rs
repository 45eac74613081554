use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::clustering::{initial_centers, squared_euclidean};
use crate::error::{CdfError, Result};

pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Weighted within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn nearest(x: &[f64], centers: &ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.rows().into_iter().enumerate() {
        let d = squared_euclidean(x, c.as_slice().expect("standard layout centers"));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd iterations from `k` distinct seeded data points.
pub fn kmeans_fit(data: &ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    let weights = vec![1.0; data.nrows()];
    kmeans_fit_weighted(data, &weights, k, seed)
}

pub fn kmeans_fit_weighted(
    data: &ArrayView2<'_, f64>,
    weights: &[f64],
    k: usize,
    seed: u64,
) -> Result<KMeansFit> {
    validate(data, weights, k)?;
    let data = data.as_standard_layout();
    let centers = initial_centers(&data.view(), k, seed)?;
    Ok(lloyd(&data.view(), weights, centers, KMEANS_MAX_ITERATIONS))
}

/// Lloyd iterations from explicit starting centers.
pub fn kmeans_from_centers(
    data: &ArrayView2<'_, f64>,
    weights: &[f64],
    centers: Array2<f64>,
    max_iterations: usize,
) -> Result<KMeansFit> {
    validate(data, weights, centers.nrows())?;
    if centers.ncols() != data.ncols() {
        return Err(CdfError::ShapeMismatch {
            expected: data.ncols(),
            found: centers.ncols(),
        });
    }
    let data = data.as_standard_layout();
    Ok(lloyd(
        &data.view(),
        weights,
        centers.as_standard_layout().into_owned(),
        max_iterations,
    ))
}

fn validate(data: &ArrayView2<'_, f64>, weights: &[f64], k: usize) -> Result<()> {
    if k < 1 {
        return Err(CdfError::InvalidConfig("k must be at least 1".into()));
    }
    if data.nrows() < k {
        return Err(CdfError::InsufficientData(format!(
            "{} samples for k = {k}",
            data.nrows()
        )));
    }
    if weights.len() != data.nrows() {
        return Err(CdfError::ShapeMismatch {
            expected: data.nrows(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(CdfError::InvalidData(
            "sample weights must be positive".into(),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CdfError::InvalidData(
            "k-means input contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Empty clusters are re-seeded at the point farthest from its own center.
fn lloyd(
    data: &ArrayView2<'_, f64>,
    weights: &[f64],
    mut centers: Array2<f64>,
    max_iterations: usize,
) -> KMeansFit {
    let (n, dim) = data.dim();
    let k = centers.nrows();
    let mut assignments = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut dist = vec![0.0; n];
    while iterations < max_iterations {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        for (i, x) in data.rows().into_iter().enumerate() {
            let (j, d) = nearest(x.as_slice().unwrap(), &centers.view());
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            dist[i] = d;
            total += weights[i] * d;
        }
        inertia.push(total);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut mass = vec![0.0; k];
        for (i, x) in data.rows().into_iter().enumerate() {
            let j = assignments[i];
            mass[j] += weights[i];
            sums.row_mut(j).scaled_add(weights[i], &x);
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                centers.row_mut(j).assign(&(&sums.row(j) / mass[j]));
            } else {
                let far = (0..n).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                centers.row_mut(j).assign(&data.row(far));
                dist[far] = 0.0;
            }
        }
    }
    KMeansFit {
        centers,
        assignments,
        inertia,
        iterations,
        converged,
    }
}
