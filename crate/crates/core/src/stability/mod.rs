//! Fixed points of the small-step dynamics, their stability, and the
//! thresholds that follow from them.

mod anneal;
mod fixed_points;
mod jacobian;
mod sweep;

pub use anneal::{
    anneal_slowdown_threshold, jmax, jmax_alt_radicand, jmax_band, jmax_numeric, JmaxCheck,
};
pub use fixed_points::{
    collapse_threshold, discover_other_fixed_points, fixed_points, fixed_points_matched,
    fixed_points_mismatched, newton_root, report, small_step_params, Case, FixedPointJson,
    FixedPointKind, FixedPointReport,
};
pub use jacobian::{
    classify, jacobian, jacobian_annealed, max_real, spectrum, Verdict, JACOBIAN_STEP, MARGINAL_TOL,
};
pub use sweep::{stability_exchanges, stability_sweep, Exchange, SweepRow};
