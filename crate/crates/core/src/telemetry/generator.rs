//! Synthetic EDFA telemetry.
//!
//! Every non-constant channel is a base value modulated by two operating
//! latents (signal input level and gain setting) plus Gaussian measurement
//! noise proportional to the base value. Pump currents follow pump power
//! through a threshold-current model: only the slope share
//! `1 - threshold_fraction` of a current tracks the operating point, so a
//! multiplicative current drift moves the pump-current block off its
//! nominal relation to pump power.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::error::{CdfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Optical,
    Electrical,
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub samples: usize,
    pub features: usize,
    pub constant_features: usize,
    /// Noise standard deviation relative to each feature's base value.
    pub noise_level: f64,
    /// Standard deviation of the relative operating-point modulation.
    pub operating_spread: f64,
    /// Share of pump current drawn below lasing threshold (does not follow pump power).
    pub threshold_fraction: f64,
    pub input_power_dbm: Range,
    pub gain_db: Range,
    pub max_output_power_dbm: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            samples: 11_886,
            features: 41,
            constant_features: 14,
            noise_level: 0.01,
            operating_spread: 0.06,
            threshold_fraction: 0.9,
            input_power_dbm: Range {
                min: -35.0,
                max: 1.0,
            },
            gain_db: Range {
                min: 19.0,
                max: 35.0,
            },
            max_output_power_dbm: 20.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(CdfError::InvalidConfig(
                "sample count must be positive".into(),
            ));
        }
        if self.features == 0 {
            return Err(CdfError::InvalidConfig(
                "feature count must be positive".into(),
            ));
        }
        if self.constant_features > self.features {
            return Err(CdfError::InvalidConfig(format!(
                "{} constant features requested but only {} features",
                self.constant_features, self.features
            )));
        }
        let variable = self.features - self.constant_features;
        if variable > variable_catalogue(self).len() {
            return Err(CdfError::InvalidConfig(format!(
                "at most {} non-constant features are available, {variable} requested",
                variable_catalogue(self).len()
            )));
        }
        for (what, v) in [
            ("noise_level", self.noise_level),
            ("operating_spread", self.operating_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CdfError::InvalidConfig(format!(
                    "{what} must be finite and >= 0"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold_fraction) {
            return Err(CdfError::InvalidConfig(
                "threshold_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.input_power_dbm.min > self.input_power_dbm.max
            || self.gain_db.min > self.gain_db.max
        {
            return Err(CdfError::InvalidConfig("range min exceeds max".into()));
        }
        Ok(())
    }
}

/// One telemetry channel of the synthetic amplifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub group: FeatureGroup,
    pub base: f64,
    /// Relative sensitivity to the (input level, gain setting) latents; zero for constants.
    pub loading: [f64; 2],
    pub constant: bool,
}

impl ChannelSpec {
    fn variable(
        name: impl Into<String>,
        group: FeatureGroup,
        base: f64,
        loading: [f64; 2],
    ) -> Self {
        Self {
            name: name.into(),
            group,
            base,
            loading,
            constant: false,
        }
    }

    fn constant(name: impl Into<String>, group: FeatureGroup, base: f64) -> Self {
        Self {
            name: name.into(),
            group,
            base,
            loading: [0.0, 0.0],
            constant: true,
        }
    }
}

/// Pump-current channels are the ones a current drift scales.
pub fn is_pump_current(name: &str) -> bool {
    name.contains("pump") && name.contains("current")
}

// Stage-1 pumps respond mostly to the gain setting, stage-2 pumps to the input level.
fn pump_loading(pump: usize) -> [f64; 2] {
    if pump < 2 {
        [0.1, 1.0]
    } else {
        [1.0, 0.1]
    }
}

fn pump_channel(name: String, base: f64, loading: [f64; 2]) -> ChannelSpec {
    ChannelSpec::variable(name, FeatureGroup::Electrical, base, loading)
}

/// Channels in layout order: the sixteen per-pump current readings and the
/// stage-1 current total, the optical and pump-power channels that track the
/// operating point, then auxiliary channels used only when more variable
/// features are requested.
fn variable_catalogue(config: &GeneratorConfig) -> Vec<ChannelSpec> {
    use FeatureGroup::*;
    let input = config.input_power_dbm.mid();
    let gain = config.gain_db.mid();
    let output = (input + gain).min(config.max_output_power_dbm);
    let stage1_out = input + 0.5 * gain;
    let slope = 1.0 - config.threshold_fraction;

    let mut channels = Vec::new();
    for (kind, scale) in [
        ("current", 1.0),
        ("drive_current", 1.02),
        ("current_monitor", 0.98),
        ("bias_current", 0.95),
    ] {
        for p in 0..4 {
            let [a, b] = pump_loading(p);
            let base = (400.0 + 50.0 * p as f64) * scale;
            channels.push(pump_channel(
                format!("pump{}_{kind}", p + 1),
                base,
                [a * slope, b * slope],
            ));
        }
    }
    let total = |name: &str, base: f64, [a, b]: [f64; 2]| {
        pump_channel(name.to_string(), base, [a * slope, b * slope])
    };
    channels.push(total("stage1_pump_current_total", 850.0, [0.1, 1.0]));
    channels.extend([
        ChannelSpec::variable("optical_input_power", Optical, input, [1.0, 0.0]),
        ChannelSpec::variable("optical_output_power", Optical, output, [0.2, 1.0]),
        ChannelSpec::variable("stage1_output_power", Optical, stage1_out, [1.0, 0.1]),
        ChannelSpec::variable("stage2_input_power", Optical, stage1_out - 1.5, [1.0, 0.1]),
    ]);
    for p in 0..4 {
        channels.push(pump_channel(
            format!("pump{}_power", p + 1),
            200.0 + 30.0 * p as f64,
            pump_loading(p),
        ));
    }
    channels.extend([
        ChannelSpec::variable("stage1_gain", Optical, 0.5 * gain, [0.1, 1.0]),
        ChannelSpec::variable("stage2_gain", Optical, 0.5 * gain, [0.1, 1.0]),
        ChannelSpec::variable("ase_output_power", Optical, output - 15.0, [0.1, 0.8]),
        ChannelSpec::variable("monitor_tap_power", Optical, output - 20.0, [0.2, 1.0]),
        ChannelSpec::variable("reflected_power", Optical, output - 30.0, [0.5, 0.5]),
    ]);
    for p in 0..4 {
        channels.push(pump_channel(
            format!("pump{}_backfacet_monitor", p + 1),
            2.0 + 0.3 * p as f64,
            pump_loading(p),
        ));
    }
    channels.extend([
        ChannelSpec::variable("module_case_temperature", Temperature, 45.0, [0.3, 0.3]),
        ChannelSpec::variable("pump_heatsink_temperature", Temperature, 40.0, [0.5, 0.5]),
    ]);
    channels.push(total("stage2_pump_current_total", 1050.0, [1.0, 0.1]));
    channels.push(total("total_pump_current", 1900.0, [0.55, 0.55]));
    channels
}

fn constant_catalogue(config: &GeneratorConfig) -> Vec<ChannelSpec> {
    use FeatureGroup::*;
    let mut channels = vec![
        ChannelSpec::constant("channel_count", Optical, 10.0),
        ChannelSpec::constant("output_power_limit", Optical, config.max_output_power_dbm),
        ChannelSpec::constant("voa_attenuation_setpoint", Optical, 2.0),
        ChannelSpec::constant("tilt_setpoint", Optical, 0.5),
        ChannelSpec::constant("supply_voltage_3v3", Electrical, 3.3),
        ChannelSpec::constant("supply_voltage_5v", Electrical, 5.0),
        ChannelSpec::constant("supply_voltage_neg5v", Electrical, -5.0),
        ChannelSpec::constant("supply_voltage_12v", Electrical, 12.0),
        ChannelSpec::constant("reference_voltage", Electrical, 2.5),
        ChannelSpec::constant("adc_reference_voltage", Electrical, 1.25),
    ];
    for p in 0..4 {
        channels.push(ChannelSpec::constant(
            format!("pump{}_chip_temperature", p + 1),
            Temperature,
            25.0 + 0.5 * p as f64,
        ));
    }
    channels
}

/// Channel layout for a configuration, in column order.
pub fn channel_layout(config: &GeneratorConfig) -> Result<Vec<ChannelSpec>> {
    config.validate()?;
    let variable = config.features - config.constant_features;
    let mut channels: Vec<ChannelSpec> = variable_catalogue(config)
        .into_iter()
        .take(variable)
        .collect();
    let constants = constant_catalogue(config);
    let available = constants.len();
    channels.extend(constants.into_iter().take(config.constant_features));
    for i in available..config.constant_features {
        channels.push(ChannelSpec::constant(
            format!("aux_constant_{}", i - available + 1),
            FeatureGroup::Electrical,
            100.0 + i as f64,
        ));
    }
    Ok(channels)
}

/// Nominal telemetry, deterministic in `(config, seed)`.
///
/// Rows are drawn sequentially from one seeded stream, so the first `k`
/// rows do not depend on `config.samples`.
pub fn generate_dataset(config: &GeneratorConfig, seed: u64) -> Result<FeatureMatrix> {
    let channels = channel_layout(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::<f64>::zeros((config.samples, channels.len()));
    for mut row in values.rows_mut() {
        let input_level: f64 = rng.sample(StandardNormal);
        let gain_level: f64 = rng.sample(StandardNormal);
        for (value, channel) in row.iter_mut().zip(&channels) {
            if channel.constant {
                *value = channel.base;
                continue;
            }
            let noise: f64 = rng.sample(StandardNormal);
            let modulation = config.operating_spread
                * (channel.loading[0] * input_level + channel.loading[1] * gain_level);
            *value = channel.base + channel.base.abs() * (modulation + config.noise_level * noise);
        }
    }
    let names = channels.into_iter().map(|c| c.name).collect();
    FeatureMatrix::new(names, values)
}

fn pump_current_columns(matrix: &FeatureMatrix) -> Result<Vec<usize>> {
    let columns: Vec<usize> = matrix
        .names()
        .iter()
        .enumerate()
        .filter(|(_, name)| is_pump_current(name))
        .map(|(j, _)| j)
        .collect();
    if columns.is_empty() {
        return Err(CdfError::MissingFeature("no pump-current feature".into()));
    }
    Ok(columns)
}

/// Copy of `matrix` with every pump-current column scaled by `1 + ratio`.
pub fn inject_drift(matrix: &FeatureMatrix, ratio: f64) -> Result<FeatureMatrix> {
    inject_drift_rows(matrix, &vec![ratio; matrix.n_samples()])
}

/// Per-row variant of [`inject_drift`].
pub fn inject_drift_rows(matrix: &FeatureMatrix, ratios: &[f64]) -> Result<FeatureMatrix> {
    if ratios.len() != matrix.n_samples() {
        return Err(CdfError::ShapeMismatch {
            expected: matrix.n_samples(),
            found: ratios.len(),
        });
    }
    if let Some(bad) = ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(CdfError::InvalidConfig(format!(
            "drift ratio {bad} must be finite and >= 0"
        )));
    }
    let columns = pump_current_columns(matrix)?;
    let mut values = matrix.values().clone();
    for (mut row, &ratio) in values.rows_mut().into_iter().zip(ratios) {
        if ratio == 0.0 {
            continue;
        }
        for &j in &columns {
            row[j] *= 1.0 + ratio;
        }
    }
    FeatureMatrix::new(matrix.names().to_vec(), values)
}

/// How drifted samples are mixed into a labeled benchmark set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabeledConfig {
    /// Fraction of samples carrying pump-current drift.
    pub drift_fraction: f64,
    /// Fraction of drifted samples in the incipient regime, drift uniform in `[incipient_min, onset]`.
    pub incipient_fraction: f64,
    pub incipient_min: f64,
    /// Established drift is `onset + Exp(tail_scale)`.
    pub onset: f64,
    pub tail_scale: f64,
}

impl Default for LabeledConfig {
    fn default() -> Self {
        Self {
            drift_fraction: 0.5,
            incipient_fraction: 0.1,
            incipient_min: 0.005,
            onset: 0.08,
            tail_scale: 0.025,
        }
    }
}

impl LabeledConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("drift_fraction", self.drift_fraction),
            ("incipient_fraction", self.incipient_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CdfError::InvalidConfig(format!(
                    "{what} must lie in [0, 1]"
                )));
            }
        }
        if !(self.incipient_min > 0.0 && self.incipient_min <= self.onset) {
            return Err(CdfError::InvalidConfig(
                "need 0 < incipient_min <= onset".into(),
            ));
        }
        if !(self.tail_scale > 0.0) {
            return Err(CdfError::InvalidConfig(
                "tail_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Telemetry with ground truth: label 1 marks drifted samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub matrix: FeatureMatrix,
    pub labels: Vec<u8>,
    pub drift: Vec<f64>,
}

pub fn generate_labeled(
    config: &GeneratorConfig,
    labeled: &LabeledConfig,
    seed: u64,
) -> Result<LabeledDataset> {
    labeled.validate()?;
    let nominal = generate_dataset(config, seed)?;
    // Separate stream for the drift schedule so labels don't perturb the telemetry draws.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let tail =
        Exp::new(1.0 / labeled.tail_scale).map_err(|e| CdfError::InvalidConfig(e.to_string()))?;
    let mut labels = Vec::with_capacity(config.samples);
    let mut drift = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let drifted = rng.random::<f64>() < labeled.drift_fraction;
        let incipient = rng.random::<f64>() < labeled.incipient_fraction;
        let established = labeled.onset + tail.sample(&mut rng);
        let early = rng.random_range(labeled.incipient_min..=labeled.onset);
        labels.push(u8::from(drifted));
        drift.push(match (drifted, incipient) {
            (false, _) => 0.0,
            (true, true) => early,
            (true, false) => established,
        });
    }
    let matrix = inject_drift_rows(&nominal, &drift)?;
    Ok(LabeledDataset {
        matrix,
        labels,
        drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(samples: usize) -> GeneratorConfig {
        GeneratorConfig {
            samples,
            ..GeneratorConfig::default()
        }
    }

    fn constant_columns(m: &FeatureMatrix) -> usize {
        (0..m.n_features())
            .filter(|&j| {
                let c = m.column(j);
                c.iter().all(|v| *v == c[0])
            })
            .count()
    }

    #[test]
    fn default_layout_has_fourteen_constants() {
        let m = generate_dataset(&small(1000), 7).unwrap();
        assert_eq!(m.n_samples(), 1000);
        assert_eq!(m.n_features(), 41);
        assert_eq!(constant_columns(&m), 14);
        assert!(m.is_finite());
    }

    #[test]
    fn full_size_dataset() {
        let m = generate_dataset(&GeneratorConfig::default(), 1).unwrap();
        assert_eq!((m.n_samples(), m.n_features()), (11_886, 41));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = generate_dataset(&small(500), 7).unwrap();
        let b = generate_dataset(&small(500), 7).unwrap();
        assert!(a
            .values()
            .iter()
            .zip(b.values().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = generate_dataset(&small(500), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rows_are_prefix_stable() {
        let a = generate_dataset(&small(50), 3).unwrap();
        let b = generate_dataset(&small(80), 3).unwrap();
        let rows: Vec<usize> = (0..50).collect();
        assert_eq!(a, b.select_rows(&rows));
    }

    #[test]
    fn invalid_counts_are_rejected() {
        for cfg in [
            GeneratorConfig {
                samples: 0,
                ..small(1)
            },
            GeneratorConfig {
                features: 0,
                constant_features: 0,
                ..small(10)
            },
            GeneratorConfig {
                features: 10,
                constant_features: 11,
                ..small(10)
            },
            GeneratorConfig {
                features: 60,
                constant_features: 0,
                ..small(10)
            },
        ] {
            assert!(matches!(
                generate_dataset(&cfg, 0),
                Err(CdfError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn extra_constants_get_auxiliary_names() {
        let cfg = GeneratorConfig {
            features: 30,
            constant_features: 20,
            ..small(20)
        };
        let m = generate_dataset(&cfg, 0).unwrap();
        assert_eq!(constant_columns(&m), 20);
        assert!(m.column_index("aux_constant_6").is_some());
    }

    #[test]
    fn layout_groups_cover_all_three_kinds() {
        let layout = channel_layout(&GeneratorConfig::default()).unwrap();
        for group in [
            FeatureGroup::Optical,
            FeatureGroup::Electrical,
            FeatureGroup::Temperature,
        ] {
            assert!(layout.iter().any(|c| c.group == group));
        }
        let currents = layout.iter().filter(|c| is_pump_current(&c.name)).count();
        assert_eq!(currents, 17);
        assert!(layout
            .iter()
            .any(|c| c.name == "pump1_power" && !is_pump_current(&c.name)));
    }

    #[test]
    fn every_catalogue_channel_varies() {
        let cfg = GeneratorConfig::default();
        let catalogue = variable_catalogue(&cfg);
        let wide = GeneratorConfig {
            samples: 50,
            features: catalogue.len() + cfg.constant_features,
            ..cfg
        };
        let m = generate_dataset(&wide, 2).unwrap();
        assert_eq!(constant_columns(&m), wide.constant_features);
    }

    #[test]
    fn inject_drift_scales_only_pump_currents() {
        let m = generate_dataset(&small(20), 5).unwrap();
        let same = inject_drift(&m, 0.0).unwrap();
        assert_eq!(same, m);
        for ratio in [0.081, 0.049] {
            let d = inject_drift(&m, ratio).unwrap();
            for (j, name) in m.names().iter().enumerate() {
                for i in 0..m.n_samples() {
                    let expected = if is_pump_current(name) {
                        m.values()[[i, j]] * (1.0 + ratio)
                    } else {
                        m.values()[[i, j]]
                    };
                    assert_eq!(d.values()[[i, j]], expected);
                }
            }
        }
    }

    #[test]
    fn inject_drift_requires_pump_current() {
        let m = FeatureMatrix::with_prefix("x", Array2::zeros((3, 2)));
        assert!(matches!(
            inject_drift(&m, 0.1),
            Err(CdfError::MissingFeature(_))
        ));
        let g = generate_dataset(&small(3), 0).unwrap();
        assert!(matches!(
            inject_drift(&g, -0.1),
            Err(CdfError::InvalidConfig(_))
        ));
    }

    #[test]
    fn labeled_set_marks_drifted_rows() {
        let set = generate_labeled(&small(2000), &LabeledConfig::default(), 11).unwrap();
        let drifted = set.labels.iter().filter(|&&l| l == 1).count();
        assert!((800..1200).contains(&drifted));
        for (label, drift) in set.labels.iter().zip(&set.drift) {
            assert_eq!(*label == 1, *drift > 0.0);
        }
        let early = set.drift.iter().filter(|d| **d > 0.0 && **d < 0.08).count();
        assert!(early > 0 && early < drifted / 4);
    }
}
