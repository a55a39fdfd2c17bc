//! Experiment plumbing behind the command-line tool: configs, simulation,
//! sweeps and verification suites.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{BuyerMode, BuyerSpec, Cell, ExperimentConfig, ValuationSpec};
pub use run::{run_game, run_sweep, simulate, sweep, GameOutcome, SimulateSummary, SweepSummary};
pub use verify::{verify, Suite, VerifyReport};
