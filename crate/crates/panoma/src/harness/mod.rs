//! Experiment harness: configuration, seeded Monte-Carlo sweeps, the
//! brute-force grid oracle, and CSV/JSON result emission.

pub mod config;
pub mod emit;
pub mod oracle;
pub mod sweep;

pub use config::{
    build_scenario, dbm_to_watts, fig3_config, fig4_config, trial_seed, watts_to_dbm,
    GeometryConfig, MaterialConfig, ScenarioConfig, SweepAxis, SweepConfig,
};
pub use emit::{emit_results, write_aggregate_csv, write_trial_traces, write_trials_csv};
pub use oracle::{oracle_grid, project_and_evaluate, OracleError, OracleOpts, OracleResult};
pub use sweep::{run_sweep, run_trial, TrialResult};
