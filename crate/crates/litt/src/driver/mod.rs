//! End-to-end workflows: synthetic vessels, measurement generation and
//! smoothing, sequential identification, error metrics, configuration, and
//! file I/O.

pub mod config;
pub mod experiments;
pub mod io;
pub mod measurement;
pub mod metrics;
pub mod vessels;

pub use config::RunConfig;
pub use experiments::{prediction_errors, reference_run, sequential_identify, SequentialOutcome};
pub use measurement::{make_measurement, make_measurement_refined, smooth_measurement, MeasurementSet};
pub use metrics::{compare_metrics, temperature_error_evolution, ErrorTable, QuantityErrors};
pub use vessels::{default_vessel_layout, synthesize_perfusion, VesselKind, VesselSpec};
