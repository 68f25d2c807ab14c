//! Self-adaptive contractive estimation of dynamic phasors, frequency,
//! ROCOF, damping and ROCOD from baseband three-phase measurements.

pub mod design;
pub mod dfb;
pub mod error;
pub mod io;
pub mod metrics;
pub mod sac;
pub mod scenarios;
pub mod signal_model;
pub mod suite;

pub use design::{design_prototype, DesignReport, DesignSpec};
pub use dfb::{apply_filter_bank, FilterBank, RawEstimates};
pub use error::{Error, Result};
pub use sac::{EstimateFrame, SacOptions, SacState, SacThresholds};
pub use scenarios::{generate, GroundTruthTrack, ScenarioId, ScenarioSpec};
pub use signal_model::{PriorParams, SampleStream, SystemConfig, WindowVector};
