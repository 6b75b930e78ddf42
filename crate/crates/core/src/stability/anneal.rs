//! Slowest relaxation rate near the optimum and the tanh-annealing threshold.
//!
//! Parameterisation: `ρ = 2 − ν`, `η = ν`, so that `ρ + η = 2`, with
//! annealing towards `β = 1`.

use super::fixed_points::{fixed_points_matched, small_step_params, FixedPointKind};
use super::jacobian::{jacobian_annealed, spectrum};
use crate::error::{Error, Result};

/// Edges `[τ(1 − 2√2 + √5)/4, τ(1 + 2√2 + √5)/4]` of the ν-band on which
/// the slowest rate is constant.
pub fn jmax_band(tau: f64) -> (f64, f64) {
    let (s2, s5) = (2f64.sqrt(), 5f64.sqrt());
    (
        tau * (1.0 - 2.0 * s2 + s5) / 4.0,
        tau * (1.0 + 2.0 * s2 + s5) / 4.0,
    )
}

/// Largest real part among the Jacobian eigenvalues at the learnable
/// `β = 1` point, excluding the annealing mode:
/// `τ(√5 − 3)/2` inside [`jmax_band`], `−τ(2ν + 1) + τ √(4ν(2ν − 1) + 1)`
/// outside.
pub fn jmax(nu: f64, tau: f64) -> f64 {
    let (lo, hi) = jmax_band(tau);
    if (lo..=hi).contains(&nu) {
        0.5 * tau * (5f64.sqrt() - 3.0)
    } else {
        -tau * (2.0 * nu + 1.0) + tau * (4.0 * nu * (2.0 * nu - 1.0) + 1.0).sqrt()
    }
}

/// Variant with radicand `1 − 4ν(1 − 4ν)` outside the band. Kept for
/// comparison; it does not match the numerical spectrum, see
/// [`jmax_numeric`].
pub fn jmax_alt_radicand(nu: f64, tau: f64) -> f64 {
    let (lo, hi) = jmax_band(tau);
    if (lo..=hi).contains(&nu) {
        0.5 * tau * (5f64.sqrt() - 3.0)
    } else {
        -tau * (2.0 * nu + 1.0) + tau * (1.0 - 4.0 * nu * (1.0 - 4.0 * nu)).sqrt()
    }
}

/// Rate `γ = −J_max / 2` below which tanh annealing slows convergence.
pub fn anneal_slowdown_threshold(nu: f64, tau: f64) -> f64 {
    -jmax(nu, tau) / 2.0
}

/// Closed form and numerical value of the slowest rate side by side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JmaxCheck {
    pub nu: f64,
    pub tau: f64,
    pub closed_form: f64,
    pub alt_radicand: f64,
    pub numeric: f64,
}

/// Largest real part of the spectrum of the annealing-augmented Jacobian at
/// the learnable `β = 1` point, after removing the eigenvalue closest to
/// `−2γ`. Learning rates are all `τ`.
pub fn jmax_numeric(nu: f64, tau: f64, gamma: f64) -> Result<JmaxCheck> {
    if !(nu > 0.0 && nu < 2.0 && tau > 0.0 && gamma > 0.0) {
        return Err(Error::Config(format!(
            "need 0 < nu < 2, tau > 0, gamma > 0, got nu = {nu}, tau = {tau}, gamma = {gamma}"
        )));
    }
    let (rho, eta) = (2.0 - nu, nu);
    let point = fixed_points_matched(1.0, rho, eta)?
        .into_iter()
        .find(|r| r.kind == FixedPointKind::Learnable)
        .expect("learnable point exists below the collapse threshold")
        .point;
    let mut params = small_step_params(rho, eta);
    params.tau_w = tau;
    params.tau_v = tau;
    params.tau_d = tau;
    let mut ev = spectrum(&jacobian_annealed(&point, &params, 1.0, gamma)?)?;
    let k = ev
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.re + 2.0 * gamma).hypot(a.1.im);
            let db = (b.1.re + 2.0 * gamma).hypot(b.1.im);
            da.total_cmp(&db)
        })
        .map(|(k, _)| k)
        .expect("nonempty spectrum");
    ev.remove(k);
    let numeric = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(JmaxCheck {
        nu,
        tau,
        closed_form: jmax(nu, tau),
        alt_radicand: jmax_alt_radicand(nu, tau),
        numeric,
    })
}
