//! Order parameters, their averaged dynamics and its integration.

mod integrate;
mod ode;
mod state;

pub use integrate::{
    convergence_time, default_dt, integrate, integrate_to_steady, max_difference, IntegrateOptions,
    SteadyState, Trajectory,
};
pub use ode::{best_matching, generalization_error, helper_h, ode_rhs, OdeParams};
pub use state::{measure_macro, Layout, MacroState, SymMatrix};
