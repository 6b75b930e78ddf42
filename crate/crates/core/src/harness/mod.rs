//! Experiment scenarios and their CSV/TOML artifacts.
//!
//! Each scenario turns an [`ExperimentSpec`] into a [`RunResult`]: named
//! tables that are written as `<out>/<scenario>/<case>/<name>.csv`, scalar
//! metrics, and a `manifest.toml` echoing the spec. Jobs run on the current
//! rayon pool and are merged in grid order, so output does not depend on
//! the number of threads.

mod analysis;
mod anneal;
mod dynamics;
mod output;
mod rate;
mod spec;
mod stats;
mod steady;

pub use analysis::{fixed_points_doc, sweep, sweep_table, write_json, FixedPointsDoc};
pub use anneal::{predicted_threshold, run_anneal, Family};
pub use dynamics::{ensemble_tables, ode_trajectory, run_dynamics, schedule_tag, sgd_trajectory};
pub use output::{format_f64, Cell, Manifest, RunInfo, RunResult, Table};
pub use rate::{max_deviation, run_rate_check};
pub use spec::{linear_grid, log_grid, ExperimentSpec, Scenario};
pub use stats::{linear_fit, mean, std_dev, LinearFit};
pub use steady::{most_stable, run_fig2};

use crate::error::Result;

/// Runs the scenario named in the spec.
pub fn run(spec: &ExperimentSpec) -> Result<RunResult> {
    match spec.scenario {
        Scenario::Fig1 | Scenario::Custom => run_dynamics(spec),
        Scenario::Fig2 => run_fig2(spec),
        Scenario::Fig3 | Scenario::SuppLinear => run_anneal(spec),
        Scenario::RateCheck => run_rate_check(spec),
    }
}
