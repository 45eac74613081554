//! Classical reference clusterers: k-means, agglomerative and BIRCH.

mod agglomerative;
mod birch;
mod kmeans;

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use agglomerative::{dendrogram, Dendrogram, Linkage, Merge};
pub use birch::{build_tree, leaf_centroids, CfTree, ClusteringFeature};
pub use kmeans::{
    kmeans_fit, kmeans_fit_weighted, kmeans_from_centers, KMeansFit, KMEANS_MAX_ITERATIONS,
};

use crate::clustering::{evaluate_assignments, Evaluation};
use crate::error::{CdfError, Result};
use crate::telemetry::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    KMeans,
    Hierarchical,
    Birch,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::KMeans,
        BaselineKind::Hierarchical,
        BaselineKind::Birch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::KMeans => "KMeans",
            BaselineKind::Hierarchical => "Hierarchical",
            BaselineKind::Birch => "BIRCH",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub k: usize,
    pub linkage: Linkage,
    pub birch_threshold: f64,
    pub birch_branching: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 2,
            linkage: Linkage::Average,
            birch_threshold: 0.5,
            birch_branching: 50,
        }
    }
}

/// A fitted baseline. `centers` are the k-means centers, the final BIRCH
/// centers, or the member centroids of each agglomerative cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub config: BaselineConfig,
    pub centers: Array2<f64>,
    /// Cluster of each training row.
    pub train_assignments: Vec<usize>,
    /// Leaf subclusters of the CF tree (BIRCH only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subclusters: Option<usize>,
}

impl BaselineModel {
    /// Nearest-center assignment.
    pub fn assign(&self, data: &ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        if data.ncols() != self.centers.ncols() {
            return Err(CdfError::ShapeMismatch {
                expected: self.centers.ncols(),
                found: data.ncols(),
            });
        }
        let data = data.as_standard_layout();
        let centers = self.centers.as_standard_layout();
        Ok(data
            .rows()
            .into_iter()
            .map(|x| kmeans::nearest(x.as_slice().unwrap(), &centers.view()).0)
            .collect())
    }
}

fn member_centroids(data: &ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut centers = Array2::zeros((k, data.ncols()));
    let mut counts = vec![0.0; k];
    for (x, &l) in data.rows().into_iter().zip(labels) {
        centers.row_mut(l).scaled_add(1.0, &x);
        counts[l] += 1.0;
    }
    for (mut c, n) in centers.rows_mut().into_iter().zip(counts) {
        c /= n;
    }
    centers
}

pub fn fit_baseline(
    kind: BaselineKind,
    data: &FeatureMatrix,
    config: &BaselineConfig,
    seed: u64,
) -> Result<BaselineModel> {
    let k = config.k;
    if k < 2 {
        return Err(CdfError::InvalidConfig("baselines need k >= 2".into()));
    }
    let values = data.values().view();
    let (centers, train_assignments, subclusters) = match kind {
        BaselineKind::KMeans => {
            if data.n_samples() <= k {
                return Err(CdfError::InsufficientData(format!(
                    "{} samples for k = {k}",
                    data.n_samples()
                )));
            }
            let fit = kmeans_fit(&values, k, seed)?;
            (fit.centers, fit.assignments, None)
        }
        BaselineKind::Hierarchical => {
            if data.n_samples() < k {
                return Err(CdfError::InsufficientData(format!(
                    "{} samples for k = {k}",
                    data.n_samples()
                )));
            }
            let labels = dendrogram(&values, config.linkage)?.cut(k)?;
            (member_centroids(&values, &labels, k), labels, None)
        }
        BaselineKind::Birch => {
            let tree = build_tree(&values, config.birch_threshold, config.birch_branching)?;
            let (centroids, weights) = leaf_centroids(&tree);
            let subclusters = centroids.nrows();
            if subclusters < k {
                return Err(CdfError::InsufficientData(format!(
                    "{subclusters} CF subclusters cannot form {k} clusters"
                )));
            }
            let fit = kmeans_fit_weighted(&centroids.view(), &weights, k, seed)?;
            let model = BaselineModel {
                kind,
                config: config.clone(),
                centers: fit.centers,
                train_assignments: Vec::new(),
                subclusters: Some(subclusters),
            };
            let assignments = model.assign(&values)?;
            (model.centers, assignments, Some(subclusters))
        }
    };
    Ok(BaselineModel {
        kind,
        config: config.clone(),
        centers,
        train_assignments,
        subclusters,
    })
}

/// Train error from the fitted assignments, test error from nearest centers,
/// with the cluster-to-label mapping fixed on the training part.
pub fn evaluate_baseline(
    model: &BaselineModel,
    train_labels: &[u8],
    test: &FeatureMatrix,
    test_labels: &[u8],
) -> Result<Evaluation> {
    if model.train_assignments.len() != train_labels.len() {
        return Err(CdfError::ShapeMismatch {
            expected: model.train_assignments.len(),
            found: train_labels.len(),
        });
    }
    let test_assign = model.assign(&test.values().view())?;
    evaluate_assignments(
        &model.train_assignments,
        train_labels,
        &test_assign,
        test_labels,
        model.config.k,
    )
}
