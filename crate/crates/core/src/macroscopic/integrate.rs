//! Fixed-step RK4 for the order parameters coupled to β(t).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ode::{generalization_error, ode_rhs, OdeParams};
use super::state::{Layout, MacroState};
use crate::error::{Error, Result};
use crate::schedule::BetaSchedule;

/// Step size and recording cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateOptions {
    /// Step in rescaled time; `None` means [`default_dt`].
    #[serde(default)]
    pub dt: Option<f64>,
    /// Number of evenly spaced recording intervals. The initial state is
    /// recorded as well, so a trajectory holds `records + 1` rows.
    #[serde(default = "IntegrateOptions::default_records")]
    pub records: usize,
    /// Re-run with half the step and report the largest change in any
    /// recorded observable.
    #[serde(default)]
    pub step_doubling_check: bool,
}

impl IntegrateOptions {
    pub const DEFAULT_RECORDS: usize = 200;

    fn default_records() -> usize {
        Self::DEFAULT_RECORDS
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_records(mut self, records: usize) -> Self {
        self.records = records;
        self
    }
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            dt: None,
            records: Self::DEFAULT_RECORDS,
            step_doubling_check: false,
        }
    }
}

/// Default RK4 step: `0.01 / τ_max`, which keeps the step-doubling
/// difference below 1e-8 on the standard scenarios.
pub fn default_dt(params: &OdeParams) -> f64 {
    0.01 / params.tau_max()
}

/// Recorded solution of the averaged dynamics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: Layout,
    pub times: Vec<f64>,
    pub states: Vec<MacroState>,
    pub eps_g: Vec<f64>,
    pub beta: Vec<f64>,
    /// Step actually used.
    pub dt: f64,
    /// Filled in when the step-doubling check was requested.
    pub doubling_error: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &MacroState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn final_eps_g(&self) -> f64 {
        *self.eps_g.last().expect("trajectory is never empty")
    }

    /// Row `k` as `[t, β, ε_g, flattened state...]`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        let mut out = vec![self.times[k], self.beta[k], self.eps_g[k]];
        out.extend(self.states[k].flatten().iter());
        out
    }

    /// Header matching [`row`](Self::row).
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "beta".into(), "eps_g".into()];
        h.extend(self.layout.column_names());
        h
    }
}

struct System<'a> {
    layout: Layout,
    params: &'a OdeParams,
    schedule: &'a BetaSchedule,
    /// β carried in the state vector
    augmented: bool,
}

impl System<'_> {
    fn beta(&self, t: f64, y: &DVector<f64>) -> f64 {
        if self.augmented {
            y[self.layout.dim()]
        } else {
            self.schedule.beta_at(t)
        }
    }

    fn rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.layout.dim();
        let beta = self.beta(t, y);
        let st = MacroState::unflatten(self.layout, &y.as_slice()[..n])?;
        let f = ode_rhs(&st, self.params, beta)?.flatten();
        if !self.augmented {
            return Ok(f);
        }
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&f);
        out[n] = self.schedule.autonomous_rate(beta).unwrap_or(0.0);
        Ok(out)
    }

    fn rk4(&self, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let k1 = self.rhs(t, y)?;
        let k2 = self.rhs(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
        let k3 = self.rhs(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
        let k4 = self.rhs(t + h, &(y + &k3 * h))?;
        Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }
}

/// Integrates from `m0` at `t = 0` to `t_end`.
///
/// The step is shrunk slightly if needed so that recording times fall on
/// step boundaries. Fails on a non-positive posterior variance or a
/// non-finite value, reporting the time at which it happened.
pub fn integrate(
    m0: &MacroState,
    params: &OdeParams,
    schedule: &BetaSchedule,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let mut traj = integrate_once(m0, params, schedule, t_end, opts)?;
    if opts.step_doubling_check {
        let fine = IntegrateOptions {
            dt: Some(traj.dt / 2.0),
            step_doubling_check: false,
            ..*opts
        };
        let other = integrate_once(m0, params, schedule, t_end, &fine)?;
        traj.doubling_error = Some(max_difference(&traj, &other));
    }
    Ok(traj)
}

/// Largest absolute difference in any recorded column between two
/// trajectories with the same recording times.
pub fn max_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..a.len().min(b.len()) {
        for (x, y) in a.row(k).iter().zip(b.row(k)).skip(1) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn integrate_once(
    m0: &MacroState,
    params: &OdeParams,
    schedule: &BetaSchedule,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    params.validate()?;
    schedule.validate()?;
    let dt_req = opts.dt.unwrap_or_else(|| default_dt(params));
    if !(dt_req > 0.0 && dt_req.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt_req}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if opts.records == 0 {
        return Err(Error::Config("records must be at least 1".into()));
    }
    if let Some(i) = m0.var.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositiveVariance {
            index: i,
            value: m0.var[i],
            context: " in initial state".into(),
        });
    }
    let layout = m0.layout();
    let n = layout.dim();
    let records = opts.records;
    let per_record = ((t_end / records as f64) / dt_req).ceil().max(1.0) as usize;
    let steps = per_record * records;
    let dt = t_end / steps as f64;

    let sys = System {
        layout,
        params,
        schedule,
        augmented: schedule.autonomous_rate(0.0).is_some(),
    };
    let mut y = DVector::zeros(if sys.augmented { n + 1 } else { n });
    y.rows_mut(0, n).copy_from(&m0.flatten());
    if sys.augmented {
        y[n] = schedule.beta_at(0.0);
    }

    let mut traj = Trajectory {
        layout,
        times: Vec::with_capacity(records + 1),
        states: Vec::with_capacity(records + 1),
        eps_g: Vec::with_capacity(records + 1),
        beta: Vec::with_capacity(records + 1),
        dt,
        doubling_error: None,
    };
    let push = |traj: &mut Trajectory, t: f64, y: &DVector<f64>| -> Result<()> {
        let st = MacroState::unflatten(layout, &y.as_slice()[..n])?;
        traj.eps_g.push(generalization_error(&st, params.rho));
        traj.beta.push(sys.beta(t, y));
        traj.times.push(t);
        traj.states.push(st);
        Ok(())
    };
    push(&mut traj, 0.0, &y)?;

    for k in 0..steps {
        let t = k as f64 * dt;
        y = sys.rk4(t, &y, dt).map_err(|e| match e {
            Error::NonPositiveVariance { index, value, .. } => Error::NonPositiveVariance {
                index,
                value,
                context: format!(" during integration near t = {t}; reduce dt"),
            },
            other => other,
        })?;
        let t1 = (k + 1) as f64 * dt;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                t: t1,
                what: "integrated state".into(),
            });
        }
        if let Some(i) = (0..layout.m).find(|&i| !(y[layout.var_offset() + i] > 0.0)) {
            return Err(Error::NonPositiveVariance {
                index: i,
                value: y[layout.var_offset() + i],
                context: format!(" at t = {t1}; reduce dt"),
            });
        }
        if (k + 1) % per_record == 0 {
            let rec = (k + 1) / per_record;
            push(&mut traj, rec as f64 * t_end / records as f64, &y)?;
        }
    }
    Ok(traj)
}

/// Long-time limit of a constant-β run.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: MacroState,
    pub eps_g: f64,
    /// Time at which integration stopped.
    pub t: f64,
    /// `‖F‖_∞` at the final state.
    pub residual: f64,
    /// Whether the residual dropped below the tolerance before `t_max`.
    pub converged: bool,
}

/// Integrates at constant β until `‖F‖_∞ < tol` or `t_max` is reached.
///
/// Near marginal points the approach is algebraic rather than
/// exponential, so `converged = false` there is expected for any
/// practical `t_max`.
pub fn integrate_to_steady(
    m0: &MacroState,
    params: &OdeParams,
    beta: f64,
    dt: Option<f64>,
    tol: f64,
    t_max: f64,
) -> Result<SteadyState> {
    const CHECK_EVERY: usize = 100;
    params.validate()?;
    let schedule = BetaSchedule::constant(beta);
    schedule.validate()?;
    let dt = dt.unwrap_or_else(|| default_dt(params));
    if !(dt > 0.0 && dt.is_finite() && t_max > 0.0 && tol > 0.0) {
        return Err(Error::Config(
            "steady-state integration needs dt, t_max, tol > 0".into(),
        ));
    }
    let layout = m0.layout();
    let sys = System {
        layout,
        params,
        schedule: &schedule,
        augmented: false,
    };
    let residual = |y: &DVector<f64>| -> Result<f64> { Ok(sys.rhs(0.0, y)?.amax()) };
    let mut y = m0.flatten();
    let steps = (t_max / dt).ceil() as usize;
    let mut k = 0;
    let mut res = residual(&y)?;
    while res >= tol && k < steps {
        let chunk = CHECK_EVERY.min(steps - k);
        for _ in 0..chunk {
            y = sys.rk4(k as f64 * dt, &y, dt)?;
            k += 1;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                t: k as f64 * dt,
                what: "integrated state".into(),
            });
        }
        res = residual(&y)?;
    }
    let state = MacroState::unflatten(layout, y.as_slice())?;
    Ok(SteadyState {
        eps_g: generalization_error(&state, params.rho),
        state,
        t: k as f64 * dt,
        residual: res,
        converged: res < tol,
    })
}

/// First recorded time from which `ε_g ≤ eps_star + delta` holds for the
/// rest of the trajectory.
pub fn convergence_time(traj: &Trajectory, eps_star: f64, delta: f64) -> Option<f64> {
    let bound = eps_star + delta;
    let mut first = None;
    for (k, &e) in traj.eps_g.iter().enumerate().rev() {
        if e <= bound {
            first = Some(k);
        } else {
            break;
        }
    }
    first.map(|k| traj.times[k])
}
