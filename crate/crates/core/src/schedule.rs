//! Time-dependent KL weights β(t).
//!
//! All schedules are evaluated in rescaled time `t = step / N`, so the SGD
//! driver and the ODE integrator see the same β trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A β(t) policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSchedule {
    /// Fixed β.
    Constant { beta: f64 },
    /// Monotonic annealing in increments: `β ← β + ε` once per `interval`
    /// of rescaled time, capped at `cap`. With `interval = 1/N` this is one
    /// increment per SGD step.
    Step {
        beta0: f64,
        epsilon: f64,
        interval: f64,
        #[serde(default = "default_cap")]
        cap: f64,
    },
    /// `β(t) = min(γ t, cap)`.
    Linear {
        gamma: f64,
        #[serde(default = "default_cap")]
        cap: f64,
    },
    /// `β(t) = tanh(γ t)`, the solution of `dβ/dt = γ (1 − β²)`, `β(0) = 0`.
    Tanh { gamma: f64 },
}

fn default_cap() -> f64 {
    1.0
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Constant { beta: 1.0 }
    }
}

impl BetaSchedule {
    pub fn constant(beta: f64) -> Self {
        BetaSchedule::Constant { beta }
    }

    pub fn tanh(gamma: f64) -> Self {
        BetaSchedule::Tanh { gamma }
    }

    pub fn linear(gamma: f64) -> Self {
        BetaSchedule::Linear { gamma, cap: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("schedule: {msg}")));
        match *self {
            BetaSchedule::Constant { beta } => {
                if !(beta >= 0.0 && beta.is_finite()) {
                    return bad("beta must be finite and nonnegative");
                }
            }
            BetaSchedule::Step {
                beta0,
                epsilon,
                interval,
                cap,
            } => {
                if !(beta0 >= 0.0 && epsilon >= 0.0 && interval > 0.0 && cap >= beta0) {
                    return bad(
                        "step requires beta0 >= 0, epsilon >= 0, interval > 0, cap >= beta0",
                    );
                }
            }
            BetaSchedule::Linear { gamma, cap } => {
                if !(gamma > 0.0 && cap >= 0.0) {
                    return bad("linear requires gamma > 0 and cap >= 0");
                }
            }
            BetaSchedule::Tanh { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return bad("tanh requires finite gamma > 0");
                }
            }
        }
        Ok(())
    }

    /// β at rescaled time `t ≥ 0`.
    pub fn beta_at(&self, t: f64) -> f64 {
        match *self {
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Step {
                beta0,
                epsilon,
                interval,
                cap,
            } => {
                // small slack so that t = k * interval lands on index k
                let k = (t / interval + 1e-9).floor().max(0.0);
                (beta0 + epsilon * k).min(cap)
            }
            BetaSchedule::Linear { gamma, cap } => (gamma * t).min(cap),
            BetaSchedule::Tanh { gamma } => (gamma * t).tanh(),
        }
    }

    /// For schedules defined by an autonomous ODE in β, its right-hand side.
    ///
    /// The integrator carries β as an extra state component when this is
    /// `Some`; otherwise it evaluates [`beta_at`](Self::beta_at) at each
    /// stage time.
    pub fn autonomous_rate(&self, beta: f64) -> Option<f64> {
        match *self {
            BetaSchedule::Tanh { gamma } => Some(gamma * (1.0 - beta * beta)),
            _ => None,
        }
    }

    /// The β the schedule settles to as `t → ∞`.
    pub fn terminal_beta(&self) -> f64 {
        match *self {
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Step {
                cap,
                epsilon,
                beta0,
                ..
            } => {
                if epsilon > 0.0 {
                    cap
                } else {
                    beta0
                }
            }
            BetaSchedule::Linear { cap, .. } => cap,
            BetaSchedule::Tanh { .. } => 1.0,
        }
    }

    /// Short label used in file names.
    pub fn label(&self) -> String {
        match *self {
            BetaSchedule::Constant { beta } => format!("const_beta{beta}"),
            BetaSchedule::Step { epsilon, .. } => format!("step_eps{epsilon}"),
            BetaSchedule::Linear { gamma, .. } => format!("linear_gamma{gamma}"),
            BetaSchedule::Tanh { gamma } => format!("tanh_gamma{gamma}"),
        }
    }
}
