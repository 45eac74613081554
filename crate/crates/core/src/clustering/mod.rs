//! Fuzzy c-means and the robust probabilistic / possibilistic clustering procedures.

mod aggregate;
mod fcm;
mod metrics;
mod robust;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};
use crate::telemetry::FeatureMatrix;

pub use aggregate::{fit_averaged, AggregateResult, RunResult};
pub use metrics::{
    best_mapping, evaluate_assignments, mapped_error, stratified_split, Evaluation, LabeledSplit,
};
pub use robust::{online_step, robust_gradient};

/// Lower bound applied to possibilistic spreads.
pub const SPREAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "FCM")]
    Fcm,
    #[serde(rename = "ProbCP")]
    ProbCp,
    #[serde(rename = "PossCP")]
    PossCp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Fcm, Algorithm::ProbCp, Algorithm::PossCp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fcm => "FCM",
            Algorithm::ProbCp => "ProbCP",
            Algorithm::PossCp => "PossCP",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = CdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fcm" => Ok(Algorithm::Fcm),
            "probcp" | "prob_cp" | "prob" => Ok(Algorithm::ProbCp),
            "posscp" | "poss_cp" | "poss" => Ok(Algorithm::PossCp),
            _ => Err(CdfError::InvalidConfig(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Step size of the online center updates, indexed by epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum LearningRate {
    Fixed {
        eta: f64,
    },
    /// `eta / (1 + decay * epoch)`.
    InverseTime {
        eta: f64,
        decay: f64,
    },
}

impl LearningRate {
    pub fn at(&self, epoch: usize) -> f64 {
        match *self {
            LearningRate::Fixed { eta } => eta,
            LearningRate::InverseTime { eta, decay } => eta / (1.0 + decay * epoch as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRate::Fixed { eta } => eta > 0.0 && eta.is_finite(),
            LearningRate::InverseTime { eta, decay } => {
                eta > 0.0 && eta.is_finite() && decay >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CdfError::InvalidConfig(
                "learning rate must be positive and finite".into(),
            ))
        }
    }
}

impl Default for LearningRate {
    fn default() -> Self {
        LearningRate::Fixed { eta: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub clusters: usize,
    /// Fuzzifier, > 1.
    pub fuzzifier: f64,
    /// Per-dimension scale of the robust distance; `None` means all ones.
    pub scale: Option<Vec<f64>>,
    pub learning_rate: LearningRate,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            fuzzifier: 2.0,
            scale: None,
            learning_rate: LearningRate::default(),
            epsilon: 1e-4,
            max_iterations: 100,
        }
    }
}

impl ClusterConfig {
    fn validate(&self, dim: usize) -> Result<Vec<f64>> {
        if self.clusters < 2 {
            return Err(CdfError::InvalidConfig(
                "at least 2 clusters are required".into(),
            ));
        }
        if !(self.fuzzifier > 1.0 && self.fuzzifier.is_finite()) {
            return Err(CdfError::InvalidConfig("fuzzifier must exceed 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(CdfError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(CdfError::InvalidConfig(
                "max_iterations must be positive".into(),
            ));
        }
        self.learning_rate.validate()?;
        let scale = self.scale.clone().unwrap_or_else(|| vec![1.0; dim]);
        validate_scale(&scale, dim)?;
        Ok(scale)
    }
}

fn validate_scale(scale: &[f64], dim: usize) -> Result<()> {
    if scale.len() != dim {
        return Err(CdfError::ShapeMismatch {
            expected: dim,
            found: scale.len(),
        });
    }
    if scale.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(CdfError::InvalidConfig(
            "distance scales must be positive".into(),
        ));
    }
    Ok(())
}

/// Fitted clustering: centers plus everything needed to recompute memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub algorithm: Algorithm,
    pub centers: Array2<f64>,
    /// Per-cluster spread, possibilistic only.
    pub spread: Option<Vec<f64>>,
    /// Set when a spread hit [`SPREAD_FLOOR`] during training.
    #[serde(default)]
    pub spread_clamped: bool,
    pub fuzzifier: f64,
    pub scale: Vec<f64>,
    pub learning_rate: LearningRate,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }
}

/// N×m membership weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipMatrix {
    pub weights: Array2<f64>,
}

impl MembershipMatrix {
    pub fn n_samples(&self) -> usize {
        self.weights.nrows()
    }

    /// Hard assignment by largest weight (first on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.weights
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (j, w) in row.iter().enumerate() {
                    if *w > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Mean weighted distance `sum_j w^beta D` per sample, after each iteration.
    pub errors: Vec<f64>,
    /// Frobenius norm of the membership change at each iteration.
    pub weight_changes: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl TrainingTrace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["iteration", "error", "weight_change"])?;
        for (i, (e, dw)) in self.errors.iter().zip(&self.weight_changes).enumerate() {
            out.write_record([(i + 1).to_string(), e.to_string(), dw.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ClusterModel,
    pub memberships: MembershipMatrix,
    pub trace: TrainingTrace,
}

/// `sum_i b_i ln cosh((x_i - c_i) / b_i)`, evaluated without overflow.
pub fn robust_distance(x: &[f64], c: &[f64], scale: &[f64]) -> Result<f64> {
    if x.len() != c.len() {
        return Err(CdfError::ShapeMismatch {
            expected: x.len(),
            found: c.len(),
        });
    }
    validate_scale(scale, x.len())?;
    Ok(robust_distance_unchecked(x, c, scale))
}

#[inline]
pub(crate) fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[inline]
pub(crate) fn robust_distance_unchecked(x: &[f64], c: &[f64], scale: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .zip(scale)
        .map(|((xi, ci), bi)| bi * log_cosh((xi - ci) / bi))
        .sum()
}

#[inline]
pub(crate) fn squared_euclidean(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Distances from `x` to every center under the algorithm's metric.
pub(crate) fn distances(
    algorithm: Algorithm,
    x: &[f64],
    centers: &ArrayView2<'_, f64>,
    scale: &[f64],
    out: &mut [f64],
) {
    for (j, d) in out.iter_mut().enumerate() {
        let c = centers.row(j);
        let c = c.as_slice().expect("standard layout centers");
        *d = match algorithm {
            Algorithm::Fcm => squared_euclidean(x, c),
            Algorithm::ProbCp | Algorithm::PossCp => robust_distance_unchecked(x, c, scale),
        };
    }
}

/// Normalized inverse-power memberships `D_j^e / sum_l D_l^e` with `e < 0`.
///
/// A zero distance takes the whole membership (first such cluster).
pub(crate) fn normalized_weights(d: &[f64], exponent: f64, out: &mut [f64]) {
    if let Some(z) = d.iter().position(|v| *v == 0.0) {
        out.fill(0.0);
        out[z] = 1.0;
        return;
    }
    for (j, w) in out.iter_mut().enumerate() {
        let s: f64 = d
            .iter()
            .map(|dl| {
                let r = dl / d[j];
                if exponent == -1.0 {
                    1.0 / r
                } else {
                    r.powf(exponent)
                }
            })
            .sum();
        *w = 1.0 / s;
    }
}

/// Possibilistic membership `(1 + (D/mu)^(1/(beta-1)))^-1`.
#[inline]
pub fn possibilistic_weight(d: f64, spread: f64, fuzzifier: f64) -> f64 {
    let r = d / spread;
    let p = if fuzzifier == 2.0 {
        r
    } else {
        r.powf(1.0 / (fuzzifier - 1.0))
    };
    1.0 / (1.0 + p)
}

pub(crate) fn row_weights(
    algorithm: Algorithm,
    d: &[f64],
    fuzzifier: f64,
    spread: Option<&[f64]>,
    out: &mut [f64],
) {
    match algorithm {
        Algorithm::Fcm => normalized_weights(d, -1.0 / (fuzzifier - 1.0), out),
        Algorithm::ProbCp => normalized_weights(d, 1.0 / (1.0 - fuzzifier), out),
        Algorithm::PossCp => {
            let spread = spread.expect("possibilistic model carries spreads");
            for ((w, dj), mu) in out.iter_mut().zip(d).zip(spread) {
                *w = possibilistic_weight(*dj, *mu, fuzzifier);
            }
        }
    }
}

/// Memberships of every row together with the mean weighted distance.
pub(crate) fn membership_pass(
    algorithm: Algorithm,
    data: &ArrayView2<'_, f64>,
    centers: &ArrayView2<'_, f64>,
    scale: &[f64],
    fuzzifier: f64,
    spread: Option<&[f64]>,
) -> (Array2<f64>, f64) {
    let m = centers.nrows();
    let mut weights = Array2::zeros((data.nrows(), m));
    let mut d = vec![0.0; m];
    let mut objective = 0.0;
    for (x, mut w) in data.rows().into_iter().zip(weights.rows_mut()) {
        let x = x.as_slice().expect("standard layout data");
        distances(algorithm, x, centers, scale, &mut d);
        let w = w.as_slice_mut().expect("standard layout weights");
        row_weights(algorithm, &d, fuzzifier, spread, w);
        objective += w
            .iter()
            .zip(&d)
            .map(|(wj, dj)| wj.powf(fuzzifier) * dj)
            .sum::<f64>();
    }
    let n = data.nrows().max(1) as f64;
    (weights, objective / n)
}

pub(crate) fn frobenius_change(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Memberships at fixed centers.
pub fn predict(model: &ClusterModel, data: &FeatureMatrix) -> Result<MembershipMatrix> {
    if data.n_features() != model.dim() {
        return Err(CdfError::ShapeMismatch {
            expected: model.dim(),
            found: data.n_features(),
        });
    }
    let values = data.values().as_standard_layout();
    let (weights, _) = membership_pass(
        model.algorithm,
        &values.view(),
        &model.centers.view(),
        &model.scale,
        model.fuzzifier,
        model.spread.as_deref(),
    );
    Ok(MembershipMatrix { weights })
}

/// Checks shared by all fits; returns the distance scale vector.
fn validate_fit(data: &FeatureMatrix, config: &ClusterConfig) -> Result<Vec<f64>> {
    let scale = config.validate(data.n_features())?;
    let n = data.n_samples();
    if n <= config.clusters {
        return Err(CdfError::InsufficientData(format!(
            "{n} samples cannot form {} clusters",
            config.clusters
        )));
    }
    if !data.is_finite() {
        return Err(CdfError::InvalidData(
            "clustering input contains non-finite values".into(),
        ));
    }
    let first = data.values().row(0);
    if data.values().rows().into_iter().all(|r| r == first) {
        return Err(CdfError::DegenerateData("all samples are identical".into()));
    }
    Ok(scale)
}

/// `m` distinct data points chosen by a seeded shuffle.
pub(crate) fn initial_centers(
    data: &ArrayView2<'_, f64>,
    m: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for i in order {
        if chosen.iter().all(|&c| data.row(c) != data.row(i)) {
            chosen.push(i);
            if chosen.len() == m {
                break;
            }
        }
    }
    if chosen.len() < m {
        return Err(CdfError::DegenerateData(format!(
            "fewer than {m} distinct samples to seed the centers"
        )));
    }
    Ok(data.select(ndarray::Axis(0), &chosen))
}

/// Fits `algorithm` with centers seeded from `seed`.
pub fn fit(
    algorithm: Algorithm,
    data: &FeatureMatrix,
    config: &ClusterConfig,
    seed: u64,
) -> Result<FitResult> {
    let scale = validate_fit(data, config)?;
    let values = data.values().as_standard_layout().into_owned();
    let centers = initial_centers(&values.view(), config.clusters, seed)?;
    match algorithm {
        Algorithm::Fcm => Ok(fcm::run(&values, centers, scale, config)),
        Algorithm::ProbCp => Ok(robust::run_probabilistic(&values, centers, scale, config)),
        Algorithm::PossCp => {
            // Seed from a converged c-means solution.
            let warm = fcm::run(&values, centers, scale.clone(), config);
            Ok(robust::run_possibilistic(
                &values,
                warm.model.centers,
                scale,
                config,
            ))
        }
    }
}

/// Fits with centers given explicitly rather than seeded.
pub fn fit_from_centers(
    algorithm: Algorithm,
    data: &FeatureMatrix,
    config: &ClusterConfig,
    centers: Array2<f64>,
) -> Result<FitResult> {
    let scale = validate_fit(data, config)?;
    if centers.dim() != (config.clusters, data.n_features()) {
        return Err(CdfError::ShapeMismatch {
            expected: config.clusters * data.n_features(),
            found: centers.len(),
        });
    }
    let values = data.values().as_standard_layout().into_owned();
    let centers = centers.as_standard_layout().into_owned();
    Ok(match algorithm {
        Algorithm::Fcm => fcm::run(&values, centers, scale, config),
        Algorithm::ProbCp => robust::run_probabilistic(&values, centers, scale, config),
        Algorithm::PossCp => robust::run_possibilistic(&values, centers, scale, config),
    })
}

pub fn fcm_fit(data: &FeatureMatrix, config: &ClusterConfig, seed: u64) -> Result<FitResult> {
    fit(Algorithm::Fcm, data, config, seed)
}

pub fn probcp_fit(data: &FeatureMatrix, config: &ClusterConfig, seed: u64) -> Result<FitResult> {
    fit(Algorithm::ProbCp, data, config, seed)
}

pub fn posscp_fit(data: &FeatureMatrix, config: &ClusterConfig, seed: u64) -> Result<FitResult> {
    fit(Algorithm::PossCp, data, config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn direct(x: &[f64], c: &[f64], b: &[f64]) -> f64 {
        x.iter()
            .zip(c)
            .zip(b)
            .map(|((x, c), b)| b * ((x - c) / b).cosh().ln())
            .sum()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            robust_distance(&[1.5, -2.0], &[1.5, -2.0], &[1.0, 3.0]).unwrap(),
            0.0
        );
        let d = robust_distance(&[1.0], &[0.0], &[1.0]).unwrap();
        assert!((d - 0.433_780_830_483_027).abs() < 1e-12);
        let far = robust_distance(&[20.0], &[0.0], &[1.0]).unwrap();
        assert!((far - (20.0 - std::f64::consts::LN_2)).abs() < 1e-8);
        let huge = robust_distance(&[1e6], &[0.0], &[1.0]).unwrap();
        assert!(huge.is_finite());
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(
            robust_distance(&[1.0], &[1.0, 2.0], &[1.0]),
            Err(CdfError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            robust_distance(&[1.0], &[2.0], &[0.0]),
            Err(CdfError::InvalidConfig(_))
        ));
        assert!(robust_distance(&[1.0], &[2.0], &[-1.0]).is_err());
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let mut w = [0.0; 2];
        normalized_weights(&[2.5, 2.5], -1.0, &mut w);
        assert_eq!(w, [0.5, 0.5]);
        normalized_weights(&[0.0, 2.5], -1.0, &mut w);
        assert_eq!(w, [1.0, 0.0]);
    }

    #[test]
    fn possibilistic_examples() {
        assert_eq!(possibilistic_weight(0.7, 0.7, 2.0), 0.5);
        assert_eq!(possibilistic_weight(0.0, 0.7, 2.0), 1.0);
        assert_eq!(possibilistic_weight(2.1, 0.7, 2.0), 0.25);
        assert!((possibilistic_weight(0.7, 0.7, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predict_on_empty_and_duplicates() {
        let model = ClusterModel {
            algorithm: Algorithm::ProbCp,
            centers: array![[0.0, 0.0], [3.0, 1.0]],
            spread: None,
            spread_clamped: false,
            fuzzifier: 2.0,
            scale: vec![1.0, 1.0],
            learning_rate: LearningRate::default(),
            epsilon: 1e-4,
            max_iterations: 100,
        };
        let empty = FeatureMatrix::with_prefix("x", Array2::zeros((0, 2)));
        assert_eq!(predict(&model, &empty).unwrap().n_samples(), 0);
        let dup = FeatureMatrix::with_prefix("x", array![[0.4, 0.2], [0.4, 0.2]]);
        let w = predict(&model, &dup).unwrap().weights;
        assert_eq!(w.row(0), w.row(1));
        let wrong = FeatureMatrix::with_prefix("x", array![[0.4]]);
        assert!(matches!(
            predict(&model, &wrong),
            Err(CdfError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fit_preconditions() {
        let config = ClusterConfig::default();
        let tiny = FeatureMatrix::with_prefix("x", array![[0.0], [1.0]]);
        assert!(matches!(
            fcm_fit(&tiny, &config, 0),
            Err(CdfError::InsufficientData(_))
        ));
        let same = FeatureMatrix::with_prefix("x", Array2::from_elem((5, 2), 1.0));
        for alg in Algorithm::ALL {
            assert!(matches!(
                fit(alg, &same, &config, 0),
                Err(CdfError::DegenerateData(_))
            ));
        }
        let one = ClusterConfig {
            clusters: 1,
            ..ClusterConfig::default()
        };
        let ok = FeatureMatrix::with_prefix("x", array![[0.0], [1.0], [2.0]]);
        assert!(fcm_fit(&ok, &one, 0).is_err());
    }

    #[test]
    fn algorithm_names_parse() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("kmeans".parse::<Algorithm>().is_err());
    }

    #[test]
    fn learning_rate_schedules() {
        assert_eq!(LearningRate::default().at(50), 1e-3);
        let decay = LearningRate::InverseTime {
            eta: 1e-2,
            decay: 1.0,
        };
        assert_eq!(decay.at(0), 1e-2);
        assert_eq!(decay.at(1), 5e-3);
    }

    proptest! {
        #[test]
        fn distance_matches_direct_form(
            v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.1f64..5.0), 1..8),
        ) {
            let x: Vec<f64> = v.iter().map(|t| t.0).collect();
            let c: Vec<f64> = v.iter().map(|t| t.1).collect();
            let b: Vec<f64> = v.iter().map(|t| t.2).collect();
            let d = robust_distance(&x, &c, &b).unwrap();
            prop_assert!((d - direct(&x, &c, &b)).abs() < 1e-12 * (1.0 + d));
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, robust_distance(&c, &x, &b).unwrap());
        }

        #[test]
        fn distance_monotone_per_coordinate(a in 0.0f64..30.0, extra in 0.0f64..5.0, b in 0.1f64..3.0) {
            let near = robust_distance(&[a], &[0.0], &[b]).unwrap();
            let far = robust_distance(&[a + extra], &[0.0], &[b]).unwrap();
            prop_assert!(far >= near);
        }

        #[test]
        fn normalized_rows_sum_to_one(d in prop::collection::vec(1e-12f64..1e6, 2..6), e in -3.0f64..-0.2) {
            let mut w = vec![0.0; d.len()];
            normalized_weights(&d, e, &mut w);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
