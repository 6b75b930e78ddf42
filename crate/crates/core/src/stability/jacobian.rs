//! Numerical Jacobians of the averaged dynamics and their spectra.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macroscopic::{ode_rhs, Layout, MacroState, OdeParams};

/// Relative base step of the difference quotients.
pub const JACOBIAN_STEP: f64 = 1e-3;

/// Default tolerance on real parts when deciding stability.
pub const MARGINAL_TOL: f64 = 1e-9;

fn rhs_flat(layout: Layout, x: &[f64], params: &OdeParams, beta: f64) -> Result<DVector<f64>> {
    let st = MacroState::unflatten(layout, x)?;
    Ok(ode_rhs(&st, params, beta)?.flatten())
}

/// Probe steps for the flattened state: relative for posterior variances so
/// the probe never reaches zero, otherwise relative to `max(1, |x|)`.
fn steps_for(layout: Layout, x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(j, v)| {
            if (layout.var_offset()..layout.dim()).contains(&j) {
                JACOBIAN_STEP * v.abs()
            } else {
                JACOBIAN_STEP * v.abs().max(1.0)
            }
        })
        .collect()
}

/// Central differences of `f` around `x`, refined by one Richardson step.
fn central_jacobian(
    x: &DVector<f64>,
    steps: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        let mut quotient = |h: f64| -> Result<DVector<f64>> {
            probe[j] = x[j] + h;
            let up = f(probe.as_slice())?;
            probe[j] = x[j] - h;
            let down = f(probe.as_slice())?;
            probe[j] = x[j];
            Ok((up - down) / (2.0 * h))
        };
        let coarse = quotient(steps[j])?;
        let fine = quotient(0.5 * steps[j])?;
        jac.set_column(j, &((fine * 4.0 - coarse) / 3.0));
    }
    Ok(jac)
}

fn check_var(state: &MacroState) -> Result<()> {
    match state.var.iter().position(|&v| !(v > 0.0)) {
        Some(i) => Err(Error::NonPositiveVariance {
            index: i,
            value: state.var[i],
            context: " in jacobian".into(),
        }),
        None => Ok(()),
    }
}

/// Jacobian of the flattened right-hand side at fixed β.
pub fn jacobian(state: &MacroState, params: &OdeParams, beta: f64) -> Result<DMatrix<f64>> {
    check_var(state)?;
    let layout = state.layout();
    let x = state.flatten();
    let steps = steps_for(layout, x.as_slice());
    central_jacobian(&x, &steps, |y| rhs_flat(layout, y, params, beta))
}

/// Jacobian of the system extended by `dβ/dt = γ (1 − β²)`, with β as the
/// last coordinate.
pub fn jacobian_annealed(
    state: &MacroState,
    params: &OdeParams,
    beta: f64,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    check_var(state)?;
    let layout = state.layout();
    let n = layout.dim();
    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(&state.flatten());
    x[n] = beta;
    let mut steps = steps_for(layout, &x.as_slice()[..n]);
    steps.push(JACOBIAN_STEP * beta.abs().max(1.0));
    central_jacobian(&x, &steps, |y| {
        let (s, b) = (&y[..n], y[n]);
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n)
            .copy_from(&rhs_flat(layout, s, params, b)?);
        out[n] = gamma * (1.0 - b * b);
        Ok(out)
    })
}

/// Eigenvalues sorted by decreasing real part.
///
/// The real Schur iteration stalls on some block-structured matrices at a
/// tolerance of one ulp, so the tolerance is relaxed step by step up to
/// `1e-13`, each attempt with a bounded number of sweeps.
pub fn spectrum(jac: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let sweeps = 1000 * jac.nrows().max(1);
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13] {
        if let Some(schur) = Schur::try_new(jac.clone(), eps, sweeps) {
            let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
            return Ok(ev);
        }
    }
    Err(Error::Numerical(
        "eigenvalue iteration did not converge".into(),
    ))
}

/// Stability of a fixed point from the real parts of its spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Marginal => "marginal",
            Verdict::Unstable => "unstable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn max_real(spectrum: &[Complex<f64>]) -> f64 {
    spectrum
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Stable if every real part is below `-tol`, marginal if the largest is
/// within `tol` of zero, unstable otherwise.
///
/// # Panics
///
/// On an empty spectrum.
pub fn classify(spectrum: &[Complex<f64>], tol: f64) -> Verdict {
    assert!(
        !spectrum.is_empty(),
        "classify needs at least one eigenvalue"
    );
    let top = max_real(spectrum);
    if top < -tol {
        Verdict::Stable
    } else if top <= tol {
        Verdict::Marginal
    } else {
        Verdict::Unstable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reals(v: &[f64]) -> Vec<Complex<f64>> {
        v.iter().map(|&x| Complex::new(x, 0.0)).collect()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(&reals(&[-1.0, -1.0]), MARGINAL_TOL),
            Verdict::Stable
        );
        assert_eq!(
            classify(&reals(&[-1.0, 0.0]), MARGINAL_TOL),
            Verdict::Marginal
        );
        assert_eq!(
            classify(&reals(&[-1.0, 1e-3]), MARGINAL_TOL),
            Verdict::Unstable
        );
        let pair = [Complex::new(-0.5, 2.0), Complex::new(-0.5, -2.0)];
        assert_eq!(classify(&pair, MARGINAL_TOL), Verdict::Stable);
    }

    #[test]
    fn directional_derivative_matches() {
        let layout = Layout::new(2, 1);
        let x: Vec<f64> = (0..layout.dim())
            .map(|i| 0.3 + 0.1 * ((i * 7 % 5) as f64) - 0.2 * ((i % 3) as f64))
            .collect();
        let mut st = MacroState::unflatten(layout, &x).unwrap();
        st.var = DVector::from_vec(vec![0.7, 1.3]);
        let mut p = OdeParams::first_order(1.2, 0.8);
        p.include_tau_squared = true;
        p.tau_w = 0.4;
        let j = jacobian(&st, &p, 0.9).unwrap();
        let dir = DVector::from_fn(layout.dim(), |i, _| ((i as f64) * 0.37).sin());
        let base = st.flatten();
        let eps = 1e-5;
        let f = |y: DVector<f64>| rhs_flat(layout, y.as_slice(), &p, 0.9).unwrap();
        let fd = (f(&base + &dir * eps) - f(&base - &dir * eps)) / (2.0 * eps);
        assert!((j * dir - fd).amax() < 1e-6);
    }

    #[test]
    fn annealed_jacobian_has_minus_two_gamma() {
        let st =
            MacroState::unflatten(Layout::new(1, 1), &[1.0, 0.5, 1.0, 0.25, 0.5, 0.5]).unwrap();
        let p = OdeParams::first_order(1.0, 1.0);
        let j = jacobian_annealed(&st, &p, 1.0, 0.3).unwrap();
        assert_eq!(j.nrows(), 7);
        assert!((j[(6, 6)] + 0.6).abs() < 1e-10);
        let ev = spectrum(&j).unwrap();
        assert!(ev.iter().any(|z| (z.re + 0.6).abs() < 1e-8));
    }
}
