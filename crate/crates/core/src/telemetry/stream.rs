use serde::{Deserialize, Serialize};

use super::generator::{generate_dataset, inject_drift_rows, GeneratorConfig};
use super::matrix::FeatureMatrix;
use crate::error::{CdfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftProfile {
    LinearRamp,
    Step,
}

/// Pump-current drift over an inspection timeline.
///
/// A linear ramp rises from `rate / (len - onset)` at the onset inspection to
/// exactly `rate` at the last one; a step holds `rate` from the onset on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSchedule {
    pub degradation_rate: f64,
    pub onset_inspection: usize,
    pub profile: DriftProfile,
}

impl DriftSchedule {
    pub fn linear(rate: f64, onset: usize) -> Self {
        Self {
            degradation_rate: rate,
            onset_inspection: onset,
            profile: DriftProfile::LinearRamp,
        }
    }

    pub fn step(rate: f64, onset: usize) -> Self {
        Self {
            degradation_rate: rate,
            onset_inspection: onset,
            profile: DriftProfile::Step,
        }
    }

    pub fn validate(&self, length: usize) -> Result<()> {
        if !(self.degradation_rate.is_finite() && (0.0..=1.0).contains(&self.degradation_rate)) {
            return Err(CdfError::InvalidConfig(format!(
                "degradation rate {} must lie in [0, 1]",
                self.degradation_rate
            )));
        }
        if self.onset_inspection >= length {
            return Err(CdfError::InvalidConfig(format!(
                "onset {} is not before stream end {length}",
                self.onset_inspection
            )));
        }
        Ok(())
    }

    /// Drift ratio `I/I0 - 1` at inspection `t` of a stream of `length`.
    pub fn drift_at(&self, t: usize, length: usize) -> f64 {
        if t < self.onset_inspection || self.degradation_rate == 0.0 {
            return 0.0;
        }
        match self.profile {
            DriftProfile::Step => self.degradation_rate,
            DriftProfile::LinearRamp => {
                let span = (length - self.onset_inspection) as f64;
                self.degradation_rate * (t - self.onset_inspection + 1) as f64 / span
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionStream {
    pub samples: FeatureMatrix,
    pub schedule: DriftSchedule,
    pub drift: Vec<f64>,
    pub ground_truth: Vec<bool>,
}

impl InspectionStream {
    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }
}

/// Generates `length` inspections and applies the schedule's drift.
///
/// The nominal telemetry depends only on `(base, length, seed)`, so streams
/// that differ only in their schedule share the same noise realisation.
pub fn generate_stream(
    base: &GeneratorConfig,
    schedule: &DriftSchedule,
    length: usize,
    seed: u64,
) -> Result<InspectionStream> {
    if length == 0 {
        return Err(CdfError::InvalidConfig(
            "stream length must be at least 1".into(),
        ));
    }
    schedule.validate(length)?;
    let config = GeneratorConfig {
        samples: length,
        ..base.clone()
    };
    let nominal = generate_dataset(&config, seed)?;
    let drift: Vec<f64> = (0..length).map(|t| schedule.drift_at(t, length)).collect();
    let samples = inject_drift_rows(&nominal, &drift)?;
    let ground_truth = drift.iter().map(|d| *d > 0.0).collect();
    Ok(InspectionStream {
        samples,
        schedule: *schedule,
        drift,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::is_pump_current;

    fn base() -> GeneratorConfig {
        GeneratorConfig::default()
    }

    #[test]
    fn zero_rate_is_nominal() {
        let s = generate_stream(&base(), &DriftSchedule::linear(0.0, 0), 150, 3).unwrap();
        assert_eq!(s.len(), 150);
        assert!(s.ground_truth.iter().all(|g| !g));
        let nominal = generate_dataset(
            &GeneratorConfig {
                samples: 150,
                ..base()
            },
            3,
        )
        .unwrap();
        assert_eq!(s.samples, nominal);
    }

    #[test]
    fn step_from_start_scales_pump_currents() {
        let s = generate_stream(&base(), &DriftSchedule::step(0.5, 0), 20, 3).unwrap();
        let nominal = generate_dataset(
            &GeneratorConfig {
                samples: 20,
                ..base()
            },
            3,
        )
        .unwrap();
        let j = nominal.column_index("pump1_current").unwrap();
        for i in 0..20 {
            assert_eq!(s.samples.values()[[i, j]], nominal.values()[[i, j]] * 1.5);
        }
        assert!(s.ground_truth.iter().all(|g| *g));
    }

    #[test]
    fn ramp_ends_at_rate() {
        let sched = DriftSchedule::linear(0.1, 30);
        let s = generate_stream(&base(), &sched, 150, 1).unwrap();
        assert_eq!(*s.drift.last().unwrap(), 0.1);
        assert_eq!(s.drift[29], 0.0);
        assert!(s.drift[30] > 0.0);
        assert!(s.drift.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn step_ground_truth_counts_post_onset() {
        for onset in [0, 1, 77, 149] {
            let s = generate_stream(&base(), &DriftSchedule::step(0.2, onset), 150, 9).unwrap();
            assert_eq!(s.ground_truth.iter().filter(|g| **g).count(), 150 - onset);
        }
    }

    #[test]
    fn only_pump_currents_change() {
        let s = generate_stream(&base(), &DriftSchedule::step(0.3, 5), 10, 2).unwrap();
        let nominal = generate_dataset(
            &GeneratorConfig {
                samples: 10,
                ..base()
            },
            2,
        )
        .unwrap();
        for (j, name) in nominal.names().iter().enumerate() {
            let changed = (0..10).any(|i| s.samples.values()[[i, j]] != nominal.values()[[i, j]]);
            assert_eq!(changed, is_pump_current(name), "{name}");
        }
    }

    #[test]
    fn invalid_schedules() {
        let b = base();
        assert!(generate_stream(&b, &DriftSchedule::linear(-0.1, 0), 10, 0).is_err());
        assert!(generate_stream(&b, &DriftSchedule::linear(0.1, 10), 10, 0).is_err());
        assert!(generate_stream(&b, &DriftSchedule::linear(0.1, 0), 0, 0).is_err());
    }

    #[test]
    fn schedule_json_round_trip() {
        let s = DriftSchedule::linear(0.3, 12);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("linear_ramp"));
        assert_eq!(serde_json::from_str::<DriftSchedule>(&text).unwrap(), s);
    }
}
