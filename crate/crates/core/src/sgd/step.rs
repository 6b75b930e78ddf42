//! One-pass SGD and the driver that records order parameters along the way.

use nalgebra::DVector;
use rand::Rng;

use super::model::MicroState;
use super::teacher::{GenerativeConfig, Sample};
use crate::error::{Error, Result};
use crate::macroscopic::{generalization_error, measure_macro, Trajectory};
use crate::schedule::BetaSchedule;

/// Applies one update with the sample, returning the new state.
pub fn sgd_step(state: &MicroState, sample: &Sample, cfg: &GenerativeConfig) -> Result<MicroState> {
    if sample.x.len() != state.n() || cfg.n() != state.n() {
        return Err(Error::Dimension(format!(
            "state has N = {}, sample has {}, teacher has {}",
            state.n(),
            sample.x.len(),
            cfg.n()
        )));
    }
    let mut next = state.clone();
    step_in_place(&mut next, &sample.x)?;
    Ok(next)
}

/// In-place form of [`sgd_step`].
///
/// With `μ = Vᵀx/√N`, `ν = Wᵀx/√N` and `Q = WᵀW/N`, every column moves by
///
/// ```text
/// w_m ← w_m − (τ_W/N) (Σ_n w_n μ_n μ_m + (D_m + λ) w_m − √N x μ_m)
/// v_m ← v_m − (τ_V/N) (√N x (Σ_n Q_mn μ_n + β μ_m − ν_m) + λ v_m)
/// D_m ← D_m − (τ_D/(2N)) (Q_mm + β − β/D_m)
/// ```
///
/// all evaluated at the old parameters.
pub fn step_in_place(state: &mut MicroState, x: &DVector<f64>) -> Result<()> {
    let h = state.hyper;
    let n = state.n() as f64;
    let sn = n.sqrt();
    let mu = state.v.tr_mul(x) / sn;
    let nu = state.w.tr_mul(x) / sn;
    let q = state.w.tr_mul(&state.w) / n;
    let s = &state.w * &mu;
    let a = &q * &mu + &mu * h.beta - &nu;

    for m in 0..state.m() {
        let dm = state.d[m];
        let new_d = dm - h.tau_d / (2.0 * n) * (q[(m, m)] + h.beta - h.beta / dm);
        if !(new_d > 0.0) {
            return Err(Error::NonPositiveVariance {
                index: m,
                value: new_d,
                context: " after an SGD step; reduce tau_D".into(),
            });
        }
        state.d[m] = new_d;

        let mut w = state.w.column_mut(m);
        w *= 1.0 - h.tau_w * (dm + h.lambda) / n;
        w.axpy(-h.tau_w * mu[m] / n, &s, 1.0);
        w.axpy(h.tau_w * mu[m] / sn, x, 1.0);

        let mut v = state.v.column_mut(m);
        v *= 1.0 - h.tau_v * h.lambda / n;
        v.axpy(-h.tau_v * a[m] / sn, x, 1.0);
    }
    Ok(())
}

/// Runs `round(t_end · N)` SGD steps with β taken from the schedule at
/// `t = step / N`, recording the order parameters `records + 1` times.
///
/// `records` must divide the step count; pick `t_end` accordingly.
pub fn simulate<R: Rng + ?Sized>(
    cfg: &GenerativeConfig,
    init: MicroState,
    schedule: &BetaSchedule,
    t_end: f64,
    records: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    init.check()?;
    schedule.validate()?;
    let n = cfg.n();
    if init.n() != n {
        return Err(Error::Dimension(format!(
            "state has N = {}, teacher has N = {n}",
            init.n()
        )));
    }
    if records == 0 {
        return Err(Error::Config("records must be at least 1".into()));
    }
    let steps = (t_end * n as f64).round() as usize;
    if steps == 0 || steps % records != 0 {
        return Err(Error::Config(format!(
            "t_end * N = {steps} steps is not a positive multiple of records = {records}"
        )));
    }
    let per_record = steps / records;
    let mut state = init;
    let mut traj = Trajectory {
        layout: crate::macroscopic::Layout::new(state.m(), cfg.m_star()),
        times: Vec::with_capacity(records + 1),
        states: Vec::with_capacity(records + 1),
        eps_g: Vec::with_capacity(records + 1),
        beta: Vec::with_capacity(records + 1),
        dt: 1.0 / n as f64,
        doubling_error: None,
    };
    // record r sits at r * t_end / records, the same arithmetic the ODE
    // integrator uses, so the time columns agree exactly
    let record = |traj: &mut Trajectory, state: &MicroState, k: usize| {
        let t = (k / per_record) as f64 * t_end / records as f64;
        let ms = measure_macro(state, cfg);
        traj.eps_g.push(generalization_error(&ms, cfg.rho));
        traj.beta.push(schedule.beta_at(t));
        traj.times.push(t);
        traj.states.push(ms);
    };
    record(&mut traj, &state, 0);
    for k in 0..steps {
        state.hyper.beta = schedule.beta_at(k as f64 / n as f64);
        let x = super::draw_sample(cfg, rng).x;
        step_in_place(&mut state, &x)?;
        if (k + 1) % per_record == 0 {
            if !state.w.iter().chain(state.v.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    t: (k + 1) as f64 / n as f64,
                    what: "SGD parameters".into(),
                });
            }
            record(&mut traj, &state, k + 1);
        }
    }
    Ok(traj)
}
