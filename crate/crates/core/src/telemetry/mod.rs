//! Telemetry data model and the synthetic amplifier generator.

mod generator;
mod matrix;
mod stream;

pub use generator::{
    channel_layout, generate_dataset, generate_labeled, inject_drift, inject_drift_rows,
    is_pump_current, ChannelSpec, FeatureGroup, GeneratorConfig, LabeledConfig, LabeledDataset,
    Range,
};
pub use matrix::FeatureMatrix;
pub use stream::{generate_stream, DriftProfile, DriftSchedule, InspectionStream};
