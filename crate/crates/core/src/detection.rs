//! Turning per-inspection memberships into OK / nOK decisions: moving-average
//! smoothing, transition detection, minimal detectable drift.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};
use crate::pipeline::PipelineModel;
use crate::telemetry::{
    generate_stream, DriftProfile, DriftSchedule, GeneratorConfig, InspectionStream,
};

/// A smoothed value strictly above this is nOK.
pub const DECISION_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum State {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "nOK")]
    NotOk,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            State::Ok => "OK",
            State::NotOk => "nOK",
        })
    }
}

/// Trailing mean over the last `min(window, t + 1)` values.
pub fn trailing_mean(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(CdfError::InvalidConfig(
            "smoothing window must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for t in 0..values.len() {
        sum += values[t];
        if t >= window {
            sum -= values[t - window];
        }
        let n = (t + 1).min(window);
        out.push(sum / n as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    /// 1 where the inspection's hard assignment is the anomaly cluster.
    pub raw: Vec<u8>,
    pub smoothed: Vec<f64>,
    pub states: Vec<State>,
    /// First nOK inspection.
    pub transition_index: Option<usize>,
    pub window: usize,
}

impl DetectionVerdict {
    pub fn from_raw(raw: Vec<u8>, window: usize) -> Result<Self> {
        let as_f64: Vec<f64> = raw.iter().map(|r| f64::from(*r)).collect();
        let smoothed = trailing_mean(&as_f64, window)?;
        let states: Vec<State> = smoothed
            .iter()
            .map(|s| {
                if *s > DECISION_LEVEL {
                    State::NotOk
                } else {
                    State::Ok
                }
            })
            .collect();
        let transition_index = states.iter().position(|s| *s == State::NotOk);
        Ok(Self {
            raw,
            smoothed,
            states,
            transition_index,
            window,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn not_ok_fraction(&self) -> f64 {
        if self.states.is_empty() {
            return 0.0;
        }
        self.states.iter().filter(|s| **s == State::NotOk).count() as f64 / self.states.len() as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["inspection", "raw", "smoothed", "state"])?;
        for (t, ((r, s), st)) in self
            .raw
            .iter()
            .zip(&self.smoothed)
            .zip(&self.states)
            .enumerate()
        {
            out.write_record([t.to_string(), r.to_string(), s.to_string(), st.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Classifies every inspection of a stream with a fitted pipeline.
pub fn classify_stream(
    pipeline: &PipelineModel,
    stream: &InspectionStream,
    window: usize,
) -> Result<DetectionVerdict> {
    if stream.is_empty() {
        return Err(CdfError::InsufficientData("empty inspection stream".into()));
    }
    let raw = pipeline.classify(&stream.samples)?;
    DetectionVerdict::from_raw(raw, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpdConfig {
    /// Candidate drift ratios, searched in increasing order.
    pub grid: Vec<f64>,
    pub length: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for CpdConfig {
    fn default() -> Self {
        Self {
            grid: (1..=15).map(|p| p as f64 / 100.0).collect(),
            length: 150,
            window: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdPoint {
    pub ratio: f64,
    pub not_ok_fraction: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdResult {
    pub algorithm: crate::clustering::Algorithm,
    /// Smallest grid ratio that is detected; `None` if none is.
    pub minimal_ratio: Option<f64>,
    pub points: Vec<CpdPoint>,
}

impl CpdResult {
    pub fn detected(&self) -> bool {
        self.minimal_ratio.is_some()
    }
}

/// Smallest drift ratio on the grid that a pipeline detects.
///
/// Each candidate ratio is applied as a step from the first inspection of a
/// stream; it counts as detected when more than half of the smoothed
/// decisions are nOK. Every ratio uses the same nominal realisation.
pub fn minimal_cpd(
    pipeline: &PipelineModel,
    base: &GeneratorConfig,
    config: &CpdConfig,
) -> Result<CpdResult> {
    if config.grid.is_empty() {
        return Err(CdfError::InvalidConfig("empty drift grid".into()));
    }
    let mut grid = config.grid.clone();
    if grid
        .iter()
        .any(|g| !(g.is_finite() && *g > 0.0 && *g <= 1.0))
    {
        return Err(CdfError::InvalidConfig(
            "drift grid values must lie in (0, 1]".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(grid.len());
    for ratio in grid {
        let stream = generate_stream(
            base,
            &DriftSchedule::step(ratio, 0),
            config.length,
            config.seed,
        )?;
        let verdict = classify_stream(pipeline, &stream, config.window)?;
        let f = verdict.not_ok_fraction();
        points.push(CpdPoint {
            ratio,
            not_ok_fraction: f,
            detected: f > DECISION_LEVEL,
        });
    }
    let minimal_ratio = points.iter().find(|p| p.detected).map(|p| p.ratio);
    Ok(CpdResult {
        algorithm: pipeline.algorithm(),
        minimal_ratio,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub rates: Vec<f64>,
    pub length: usize,
    pub window: usize,
    pub onset: usize,
    pub profile: DriftProfile,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            rates: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            length: 150,
            window: 40,
            onset: 20,
            profile: DriftProfile::LinearRamp,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub rate: f64,
    pub drift: Vec<f64>,
    pub verdict: DetectionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub config: StreamConfig,
    pub outcomes: Vec<StreamOutcome>,
}

impl AnomalyReport {
    pub fn outcome(&self, rate: f64) -> Option<&StreamOutcome> {
        self.outcomes.iter().find(|o| o.rate == rate)
    }

    /// Smoothed curves, one column per degradation rate.
    pub fn write_curves_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["inspection".to_string()];
        header.extend(self.outcomes.iter().map(|o| format!("rate_{}", o.rate)));
        out.write_record(&header)?;
        for t in 0..self.config.length {
            let mut row = vec![t.to_string()];
            row.extend(
                self.outcomes
                    .iter()
                    .map(|o| o.verdict.smoothed[t].to_string()),
            );
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_transitions_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["rate", "transition_index", "not_ok_fraction"])?;
        for o in &self.outcomes {
            let t = o
                .verdict
                .transition_index
                .map(|t| t.to_string())
                .unwrap_or_default();
            out.write_record([
                o.rate.to_string(),
                t,
                o.verdict.not_ok_fraction().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Classifies one stream per degradation rate. All streams share the nominal
/// telemetry, so curves differ only through the injected drift.
pub fn run_anomaly_identification(
    pipeline: &PipelineModel,
    base: &GeneratorConfig,
    config: &StreamConfig,
) -> Result<AnomalyReport> {
    if config.rates.is_empty() {
        return Err(CdfError::InvalidConfig("no degradation rates given".into()));
    }
    let mut outcomes = Vec::with_capacity(config.rates.len());
    for &rate in &config.rates {
        let schedule = DriftSchedule {
            degradation_rate: rate,
            onset_inspection: config.onset,
            profile: config.profile,
        };
        let stream = generate_stream(base, &schedule, config.length, config.seed)?;
        let verdict = classify_stream(pipeline, &stream, config.window)?;
        outcomes.push(StreamOutcome {
            rate,
            drift: stream.drift,
            verdict,
        });
    }
    Ok(AnomalyReport {
        config: config.clone(),
        outcomes,
    })
}
