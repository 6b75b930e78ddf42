//! Convergence time under KL annealing as a function of the rate γ.

use rayon::prelude::*;

use super::output::{Cell, RunResult, Table};
use super::spec::{ExperimentSpec, Scenario};
use crate::error::Result;
use crate::macroscopic::{convergence_time, integrate, IntegrateOptions, Trajectory};
use crate::schedule::BetaSchedule;
use crate::stability::{anneal_slowdown_threshold, Case};

/// Annealing family swept against γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Tanh,
    Linear,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Tanh => "tanh",
            Family::Linear => "linear",
        }
    }

    pub fn schedule(&self, gamma: f64, cap: f64) -> BetaSchedule {
        match self {
            Family::Tanh => BetaSchedule::tanh(gamma),
            Family::Linear => BetaSchedule::Linear { gamma, cap },
        }
    }
}

/// Predicted slowdown rate `−J_max / 2`, or NaN when the spec is outside
/// the setting it was derived for: `ρ + η = 2`, equal learning rates and
/// the small-step dynamics.
pub fn predicted_threshold(spec: &ExperimentSpec) -> f64 {
    let equal_tau = spec.tau_w == spec.tau_v && spec.tau_v == spec.tau_d;
    if (spec.rho + spec.eta - 2.0).abs() < 1e-12
        && equal_tau
        && !spec.include_tau_squared
        && spec.lambda == 0.0
    {
        anneal_slowdown_threshold(spec.eta, spec.tau_w)
    } else {
        f64::NAN
    }
}

fn run_schedule(spec: &ExperimentSpec, case: Case, schedule: &BetaSchedule) -> Result<Trajectory> {
    let opts = IntegrateOptions {
        dt: spec.dt,
        records: spec.records,
        step_doubling_check: false,
    };
    integrate(
        &spec.initial_state(case),
        &spec.ode_params(),
        schedule,
        spec.t_end,
        &opts,
    )
}

struct Sweep {
    times: Vec<Option<f64>>,
    trajs: Vec<Trajectory>,
}

impl Sweep {
    /// Index of the smallest convergence time, first one on ties.
    fn best(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.times.iter().enumerate() {
            if let Some(t) = *t {
                if best.is_none_or(|(_, b)| t < b) {
                    best = Some((i, t));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Shared driver of fig3 (tanh only) and supp_linear (tanh and linear).
///
/// The baseline is constant `β = 1`; `ε*` is its final ε_g and a run has
/// converged once ε_g stays within `ε* + delta`. Tables per case:
/// `<scenario>/<case>/sweep` with columns `gamma, below_threshold` and per
/// family `t_conv_<f>, converged_<f>, ratio_<f>` (`t_conv` NaN when a run
/// never converges, `ratio` relative to the baseline), plus `rel_gap` for
/// supp_linear; trajectories `<scenario>/<case>/constant` and
/// `<scenario>/<case>/<f>_opt` at the fastest γ.
pub fn run_anneal(spec: &ExperimentSpec) -> Result<RunResult> {
    spec.validate()?;
    let scn = spec.scenario.as_str();
    let families: &[Family] = if spec.scenario == Scenario::SuppLinear {
        &[Family::Tanh, Family::Linear]
    } else {
        &[Family::Tanh]
    };
    let threshold = predicted_threshold(spec);
    let mut result = RunResult::new(spec);
    result.metrics.insert("gamma_threshold".into(), threshold);
    if threshold.is_nan() {
        result.notes.push(
            "slowdown threshold only defined for rho + eta = 2, equal tau, small-step dynamics"
                .into(),
        );
    }

    for &case in &spec.cases {
        let base = run_schedule(spec, case, &BetaSchedule::constant(1.0))
            .map_err(|e| e.at(format!("case={case} constant")))?;
        let eps_star = base.final_eps_g();
        let t_const = convergence_time(&base, eps_star, spec.delta);

        let sweeps: Vec<Sweep> = families
            .iter()
            .map(|fam| {
                let trajs: Vec<Trajectory> = spec
                    .gammas
                    .par_iter()
                    .map(|&g| {
                        run_schedule(spec, case, &fam.schedule(g, spec.beta_cap))
                            .map_err(|e| e.at(format!("case={case} {} gamma={g}", fam.as_str())))
                    })
                    .collect::<Result<_>>()?;
                let times = trajs
                    .iter()
                    .map(|t| convergence_time(t, eps_star, spec.delta))
                    .collect();
                Ok(Sweep { times, trajs })
            })
            .collect::<Result<_>>()?;

        let mut header = vec!["gamma".to_string(), "below_threshold".into()];
        for f in families {
            for col in ["t_conv", "converged", "ratio"] {
                header.push(format!("{col}_{}", f.as_str()));
            }
        }
        if families.len() == 2 {
            header.push("rel_gap".into());
        }
        let mut table = Table::new(format!("{scn}/{case}/sweep"), header);
        let tc_base = t_const.unwrap_or(f64::NAN);
        let mut max_gap = 0.0f64;
        for (i, &g) in spec.gammas.iter().enumerate() {
            let below = if threshold.is_nan() {
                f64::NAN
            } else {
                (g < threshold) as u8 as f64
            };
            let mut row: Vec<Cell> = vec![g.into(), below.into()];
            for (f, sw) in families.iter().zip(&sweeps) {
                let tc = sw.times[i].unwrap_or(f64::NAN);
                if sw.times[i].is_none() {
                    result.notes.push(format!(
                        "{case} {} gamma={g}: no convergence by t={}",
                        f.as_str(),
                        spec.t_end
                    ));
                }
                row.extend([
                    tc.into(),
                    (sw.times[i].is_some() as u8 as f64).into(),
                    (tc / tc_base).into(),
                ]);
            }
            if let [a, b] = &sweeps[..] {
                let gap = match (a.times[i], b.times[i]) {
                    (Some(x), Some(y)) => (y - x).abs() / x,
                    _ => f64::NAN,
                };
                if gap.is_finite() {
                    max_gap = max_gap.max(gap);
                }
                row.push(gap.into());
            }
            table.push(row);
        }
        result.tables.push(table);
        result.tables.push(Table::from_trajectory(
            format!("{scn}/{case}/constant"),
            &base,
        ));

        let key = |q: &str| format!("{case}/{q}");
        result.metrics.insert(key("eps_star"), eps_star);
        result.metrics.insert(key("t_conv_constant"), tc_base);
        let mut opt_times = Vec::new();
        for (f, sw) in families.iter().zip(&sweeps) {
            let name = f.as_str();
            match sw.best() {
                Some(i) => {
                    let t = sw.times[i].expect("best has a time");
                    opt_times.push(t);
                    result
                        .metrics
                        .insert(key(&format!("gamma_opt_{name}")), spec.gammas[i]);
                    result.metrics.insert(key(&format!("t_conv_opt_{name}")), t);
                    result
                        .metrics
                        .insert(key(&format!("speedup_{name}")), tc_base / t);
                    result.tables.push(Table::from_trajectory(
                        format!("{scn}/{case}/{name}_opt"),
                        &sw.trajs[i],
                    ));
                }
                None => result.notes.push(format!("{case} {name}: no γ converged")),
            }
        }
        if let [a, b] = opt_times[..] {
            result.metrics.insert(key("opt_rel_gap"), (b - a).abs() / a);
            result.metrics.insert(key("max_rel_gap"), max_gap);
        }
    }
    Ok(result)
}
