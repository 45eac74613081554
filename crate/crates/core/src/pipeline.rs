//! Cleaning, standardization, entropy selection, PCA and clustering chained
//! into one fitted, serializable model.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{evaluate_baseline, fit_baseline, BaselineConfig, BaselineKind};
use crate::clustering::{
    evaluate_assignments, fit, fit_averaged, predict, stratified_split, Algorithm, ClusterConfig,
    ClusterModel, Evaluation, LabeledSplit, MembershipMatrix, TrainingTrace,
};
use crate::error::{CdfError, Result};
use crate::feature_extract::{fit_pca, PcaModel};
use crate::feature_select::{default_bins, select_features, EntropyReport};
use crate::preprocess::{clean, fit_scaler, CleanConfig, CleanReport, ScalerModel};
use crate::telemetry::FeatureMatrix;

/// Which optional stages run between scaling and clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "RAW")]
    Raw,
    #[serde(rename = "EA")]
    Ea,
    #[serde(rename = "PCA")]
    Pca,
    #[serde(rename = "EA_PCA")]
    EaPca,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Raw, Variant::Ea, Variant::Pca, Variant::EaPca];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Raw => "RAW",
            Variant::Ea => "EA",
            Variant::Pca => "PCA",
            Variant::EaPca => "EA_PCA",
        }
    }

    pub fn uses_entropy(self) -> bool {
        matches!(self, Variant::Ea | Variant::EaPca)
    }

    pub fn uses_pca(self) -> bool {
        matches!(self, Variant::Pca | Variant::EaPca)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['+', '-'], "_").as_str() {
            "RAW" => Ok(Variant::Raw),
            "EA" => Ok(Variant::Ea),
            "PCA" => Ok(Variant::Pca),
            "EA_PCA" | "PCA_EA" => Ok(Variant::EaPca),
            _ => Err(CdfError::InvalidConfig(format!(
                "unknown pipeline variant `{s}`"
            ))),
        }
    }
}

/// Stage settings shared by every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub clean: CleanConfig,
    pub entropy_threshold: f64,
    /// Histogram bins; `None` uses `ceil(sqrt(N))` of the training part.
    pub entropy_bins: Option<usize>,
    pub pca_threshold: f64,
    pub cluster: ClusterConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            clean: CleanConfig::default(),
            entropy_threshold: 0.0,
            entropy_bins: None,
            pca_threshold: 0.95,
            cluster: ClusterConfig::default(),
            train_fraction: 0.7,
            split_seed: 0,
        }
    }
}

/// The deterministic feature stages, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStages {
    pub variant: Variant,
    pub clean: CleanReport,
    pub scaler: ScalerModel,
    pub entropy: Option<EntropyReport>,
    pub pca: Option<PcaModel>,
}

impl FeatureStages {
    pub fn fit(
        train: &FeatureMatrix,
        variant: Variant,
        config: &StageConfig,
    ) -> Result<(Self, FeatureMatrix)> {
        let (cleaned, clean_report) =
            clean(train, &config.clean).map_err(|e| e.in_stage("clean"))?;
        let scaler = fit_scaler(&cleaned).map_err(|e| e.in_stage("scale"))?;
        let mut current = scaler
            .transform(&cleaned)
            .map_err(|e| e.in_stage("scale"))?;
        let entropy = if variant.uses_entropy() {
            let bins = config
                .entropy_bins
                .unwrap_or_else(|| default_bins(current.n_samples()));
            let (selected, report) = select_features(&current, config.entropy_threshold, bins)
                .map_err(|e| e.in_stage("entropy"))?;
            current = selected;
            Some(report)
        } else {
            None
        };
        let pca = if variant.uses_pca() {
            let model = fit_pca(&current, config.pca_threshold).map_err(|e| e.in_stage("pca"))?;
            current = model.project(&current).map_err(|e| e.in_stage("pca"))?;
            Some(model)
        } else {
            None
        };
        let stages = FeatureStages {
            variant,
            clean: clean_report,
            scaler,
            entropy,
            pca,
        };
        Ok((stages, current))
    }

    /// Applies the frozen stages to raw telemetry.
    pub fn transform(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix> {
        let cleaned = self.clean.apply(raw).map_err(|e| e.in_stage("clean"))?;
        let mut current = self
            .scaler
            .transform(&cleaned)
            .map_err(|e| e.in_stage("scale"))?;
        if let Some(report) = &self.entropy {
            current = report.apply(&current).map_err(|e| e.in_stage("entropy"))?;
        }
        if let Some(pca) = &self.pca {
            current = pca.project(&current).map_err(|e| e.in_stage("pca"))?;
        }
        Ok(current)
    }

    pub fn output_dim(&self) -> usize {
        match (&self.pca, &self.entropy) {
            (Some(p), _) => p.n_components(),
            (None, Some(e)) => e.selected.len(),
            (None, None) => self.scaler.n_features(),
        }
    }
}

/// Fitted detection pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineModel {
    pub stages: FeatureStages,
    pub cluster: ClusterModel,
    /// Cluster mapped to the drifted label on the training part.
    pub anomaly_cluster_index: usize,
    pub split_seed: u64,
    pub seed: u64,
}

impl PipelineModel {
    pub fn variant(&self) -> Variant {
        self.stages.variant
    }

    pub fn algorithm(&self) -> Algorithm {
        self.cluster.algorithm
    }

    pub fn memberships(&self, raw: &FeatureMatrix) -> Result<MembershipMatrix> {
        let features = self.stages.transform(raw)?;
        predict(&self.cluster, &features).map_err(|e| e.in_stage("cluster"))
    }

    /// 1 where the hard assignment is the anomaly cluster.
    pub fn classify(&self, raw: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self
            .memberships(raw)?
            .argmax()
            .into_iter()
            .map(|c| u8::from(c == self.anomaly_cluster_index))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: PipelineModel = serde_json::from_str(text)?;
        model.check_chain()?;
        Ok(model)
    }

    fn check_chain(&self) -> Result<()> {
        let dim = self.stages.output_dim();
        if dim != self.cluster.dim() {
            return Err(CdfError::ShapeMismatch {
                expected: dim,
                found: self.cluster.dim(),
            });
        }
        if self.anomaly_cluster_index >= self.cluster.n_clusters() {
            return Err(CdfError::InvalidData(
                "anomaly cluster index out of range".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub model: PipelineModel,
    pub evaluation: Evaluation,
    pub trace: TrainingTrace,
}

/// Training / test rows after the feature stages, ready for clustering.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub stages: FeatureStages,
    pub split: LabeledSplit,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub train_labels: Vec<u8>,
    pub test_labels: Vec<u8>,
}

fn pick(labels: &[u8], rows: &[usize]) -> Vec<u8> {
    rows.iter().map(|&i| labels[i]).collect()
}

/// Splits, then fits the feature stages on the training rows only.
pub fn prepare(
    data: &FeatureMatrix,
    labels: &[u8],
    variant: Variant,
    config: &StageConfig,
) -> Result<PreparedData> {
    if labels.len() != data.n_samples() {
        return Err(CdfError::ShapeMismatch {
            expected: data.n_samples(),
            found: labels.len(),
        });
    }
    let split = stratified_split(labels, config.train_fraction, config.split_seed)?;
    let raw_train = data.select_rows(&split.train);
    let raw_test = data.select_rows(&split.test);
    let (stages, train) = FeatureStages::fit(&raw_train, variant, config)?;
    let test = stages.transform(&raw_test)?;
    Ok(PreparedData {
        stages,
        train_labels: pick(labels, &split.train),
        test_labels: pick(labels, &split.test),
        split,
        train,
        test,
    })
}

/// Fits the clustering stage on prepared data.
pub fn fit_prepared(
    prepared: &PreparedData,
    algorithm: Algorithm,
    config: &StageConfig,
    seed: u64,
) -> Result<PipelineFit> {
    let fitted = fit(algorithm, &prepared.train, &config.cluster, seed)
        .map_err(|e| e.in_stage("cluster"))?;
    let test_assign = predict(&fitted.model, &prepared.test)?.argmax();
    let evaluation = evaluate_assignments(
        &fitted.memberships.argmax(),
        &prepared.train_labels,
        &test_assign,
        &prepared.test_labels,
        config.cluster.clusters,
    )?;
    let anomaly_cluster_index = evaluation
        .anomaly_cluster()
        .ok_or_else(|| CdfError::EmptyResult("no cluster maps to the drifted label".into()))?;
    Ok(PipelineFit {
        model: PipelineModel {
            stages: prepared.stages.clone(),
            cluster: fitted.model,
            anomaly_cluster_index,
            split_seed: config.split_seed,
            seed,
        },
        evaluation,
        trace: fitted.trace,
    })
}

pub fn fit_pipeline(
    data: &FeatureMatrix,
    labels: &[u8],
    variant: Variant,
    algorithm: Algorithm,
    config: &StageConfig,
    seed: u64,
) -> Result<PipelineFit> {
    let prepared = prepare(data, labels, variant, config)?;
    fit_prepared(&prepared, algorithm, config, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: Variant,
    pub algorithm: Algorithm,
    pub mse_train: f64,
    pub mse_test: f64,
    /// Standard deviation of the test error over runs.
    pub std: f64,
    pub mse_train_std: f64,
    pub runs: usize,
    pub converged_runs: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTrace {
    pub config: Variant,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trace: TrainingTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Trace of the first run of each cell.
    pub traces: Vec<CellTrace>,
    pub base_seed: u64,
}

impl AblationTable {
    pub fn row(&self, variant: Variant, algorithm: Algorithm) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.config == variant && r.algorithm == algorithm)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["config", "algorithm", "mse_train", "mse_test", "std"])?;
        for r in &self.rows {
            out.write_record([
                r.config.name().to_string(),
                r.algorithm.name().to_string(),
                r.mse_train.to_string(),
                r.mse_test.to_string(),
                r.std.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Long-format traces: config, algorithm, iteration, error, weight change.
    pub fn write_traces_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["config", "algorithm", "iteration", "error", "weight_change"])?;
        for t in &self.traces {
            for (i, (e, dw)) in t
                .trace
                .errors
                .iter()
                .zip(&t.trace.weight_changes)
                .enumerate()
            {
                out.write_record([
                    t.config.name().to_string(),
                    t.algorithm.name().to_string(),
                    (i + 1).to_string(),
                    e.to_string(),
                    dw.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Averaged train / test error for every (variant, algorithm) cell.
///
/// Feature stages are fitted once per variant; each cell then runs `runs`
/// seeded clusterings starting at `base_seed`.
pub fn run_ablation(
    data: &FeatureMatrix,
    labels: &[u8],
    variants: &[Variant],
    algorithms: &[Algorithm],
    config: &StageConfig,
    runs: usize,
    base_seed: u64,
) -> Result<AblationTable> {
    if runs == 0 {
        return Err(CdfError::InvalidConfig("runs must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &variant in variants {
        let prepared = prepare(data, labels, variant, config)?;
        let cells: Vec<(AblationRow, CellTrace)> = algorithms
            .par_iter()
            .map(|&algorithm| {
                let agg = fit_averaged(
                    algorithm,
                    &prepared.train,
                    &prepared.train_labels,
                    &prepared.test,
                    &prepared.test_labels,
                    &config.cluster,
                    runs,
                    base_seed,
                )
                .map_err(|e| e.in_stage("cluster"))?;
                let first = fit(algorithm, &prepared.train, &config.cluster, base_seed)?;
                let row = AblationRow {
                    config: variant,
                    algorithm,
                    mse_train: agg.mse_train_mean,
                    mse_test: agg.mse_test_mean,
                    std: agg.mse_test_std,
                    mse_train_std: agg.mse_train_std,
                    runs,
                    converged_runs: agg.runs.iter().filter(|r| r.converged).count(),
                    mean_iterations: agg.runs.iter().map(|r| r.iterations as f64).sum::<f64>()
                        / runs as f64,
                    max_iterations: agg.runs.iter().map(|r| r.iterations).max().unwrap_or(0),
                    feature_dim: prepared.train.n_features(),
                };
                let trace = CellTrace {
                    config: variant,
                    algorithm,
                    seed: base_seed,
                    trace: first.trace,
                };
                Ok((row, trace))
            })
            .collect::<Result<_>>()?;
        for (row, trace) in cells {
            rows.push(row);
            traces.push(trace);
        }
    }
    Ok(AblationTable {
        rows,
        traces,
        base_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub mse_train: f64,
    pub mse_test: f64,
    pub std: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Representation the baselines cluster.
    pub baseline_variant: Variant,
    pub cdf_variant: Variant,
    pub cdf_algorithm: Algorithm,
}

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["method", "mse_train", "mse_test", "std", "repeats"])?;
        for r in &self.rows {
            out.write_record([
                r.method.clone(),
                r.mse_train.to_string(),
                r.mse_test.to_string(),
                r.std.to_string(),
                r.repeats.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn comparison_row(method: &str, evals: &[Evaluation]) -> ComparisonRow {
    let train: Vec<f64> = evals.iter().map(|e| e.mse_train).collect();
    let test: Vec<f64> = evals.iter().map(|e| e.mse_test).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let m = mean(&test);
    let std = (test.iter().map(|x| (x - m).powi(2)).sum::<f64>() / test.len() as f64).sqrt();
    ComparisonRow {
        method: method.to_string(),
        mse_train: mean(&train),
        mse_test: m,
        std,
        repeats: evals.len(),
    }
}

/// Baselines on the cleaned, standardized features against the CDF pipeline,
/// each averaged over `repeats` seeds.
///
/// Agglomerative clustering has no random element, so it is fitted once and
/// its result counted for every repeat.
#[allow(clippy::too_many_arguments)]
pub fn run_comparison(
    data: &FeatureMatrix,
    labels: &[u8],
    config: &StageConfig,
    baselines: &BaselineConfig,
    cdf_variant: Variant,
    cdf_algorithm: Algorithm,
    repeats: usize,
    base_seed: u64,
) -> Result<ComparisonTable> {
    if repeats == 0 {
        return Err(CdfError::InvalidConfig("repeats must be at least 1".into()));
    }
    let baseline_variant = Variant::Raw;
    let plain = prepare(data, labels, baseline_variant, config)?;
    let mut rows = Vec::new();
    for kind in BaselineKind::ALL {
        let evals: Vec<Evaluation> = if kind == BaselineKind::Hierarchical {
            let model = fit_baseline(kind, &plain.train, baselines, base_seed)?;
            let e =
                evaluate_baseline(&model, &plain.train_labels, &plain.test, &plain.test_labels)?;
            vec![e; repeats]
        } else {
            (0..repeats as u64)
                .into_par_iter()
                .map(|r| {
                    let model = fit_baseline(kind, &plain.train, baselines, base_seed + r)?;
                    evaluate_baseline(&model, &plain.train_labels, &plain.test, &plain.test_labels)
                })
                .collect::<Result<_>>()?
        };
        rows.push(comparison_row(kind.name(), &evals));
    }
    let prepared = prepare(data, labels, cdf_variant, config)?;
    let evals: Vec<Evaluation> = (0..repeats as u64)
        .into_par_iter()
        .map(|r| {
            fit_prepared(&prepared, cdf_algorithm, config, base_seed + r).map(|f| f.evaluation)
        })
        .collect::<Result<_>>()?;
    rows.push(comparison_row("CDF", &evals));
    Ok(ComparisonTable {
        rows,
        baseline_variant,
        cdf_variant,
        cdf_algorithm,
    })
}
