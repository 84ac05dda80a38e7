//! Simulation, analysis, and file formats for vehicular CRL distribution
//! experiments. The protocol itself lives in `vcrl-core`; this crate adds
//! the deterministic event-driven network simulator, scenario configs,
//! metrics output, the analytical calculators, and golden-vector export.

pub mod analyze;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod plot;
pub mod runner;
pub mod vectors;

pub use config::{Mode, SimConfig};
pub use engine::run_simulation;
pub use metrics::MetricsLog;
