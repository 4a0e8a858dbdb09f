//! Configuration-driven Monte-Carlo experiments.

pub mod checks;
pub mod config;
pub mod runners;
pub mod sim;
pub mod table;

pub use checks::{run_bound_check, BoundCheckReport, CheckRow};
pub use config::{ExperimentConfig, ExperimentKind, Profile, SCHEMA_VERSION};
pub use runners::{
    optimal_order, run_iq_sweep, run_mimo_sweep, run_order_sweep, run_pilot_compare, run_pilot_length_sweep,
    run_select_pilot, PilotKind,
};
pub use table::{Manifest, ResultRow, ResultTable, Summary};
