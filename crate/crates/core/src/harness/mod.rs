//! Scenario loading, the Monte-Carlo driver and report output.

pub mod config;
pub mod engine;
pub mod report;

pub use config::{load_scenario, parse_scenario, scenario_from_value, set_dotted, ScenarioConfig};
pub use engine::{cycle_rng, cycle_seed, run, run_sweep, RunOptions, RunOutput, Stats, SweepRow, SweepSpec};
pub use report::{emit, EmitOptions, RunReport, SweepTable, Timing};
