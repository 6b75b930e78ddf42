//! Closed-form fixed points of the small-step dynamics and their spectra.

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use super::jacobian::{classify, jacobian, max_real, spectrum, Verdict, MARGINAL_TOL};
use crate::error::{Error, Result};
use crate::macroscopic::{generalization_error, ode_rhs, Layout, MacroState, OdeParams};

/// Families of stationary states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    /// Every overlap zero, `D = 1`: the posterior equals the prior.
    Collapsed,
    /// One latent recovers the feature, any extra latent is switched off.
    Learnable,
    /// An extra latent fits the isotropic noise.
    Overfitting,
    /// Found numerically, not one of the above.
    Other,
}

impl FixedPointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FixedPointKind::Collapsed => "collapsed",
            FixedPointKind::Learnable => "learnable",
            FixedPointKind::Overfitting => "overfitting",
            FixedPointKind::Other => "other",
        }
    }
}

impl std::fmt::Display for FixedPointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// One latent, one feature.
    Matched,
    /// Two latents, one feature.
    Mismatched,
}

impl Case {
    pub fn layout(&self) -> Layout {
        match self {
            Case::Matched => Layout::new(1, 1),
            Case::Mismatched => Layout::new(2, 1),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Case::Matched => "matched",
            Case::Mismatched => "mismatched",
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(Case::Matched),
            "mismatched" => Ok(Case::Mismatched),
            _ => Err(Error::Parse(format!(
                "unknown case '{s}', expected matched or mismatched"
            ))),
        }
    }
}

/// A fixed point with its spectrum.
///
/// Eigenvalues are those of the small-step dynamics with unit learning
/// rates, i.e. rates per unit `τ`.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub kind: FixedPointKind,
    /// `+` or `-` for the sign of the recovered overlap; mismatched twins
    /// with the roles of the two latents exchanged carry a `swapped` suffix.
    pub branch: String,
    pub beta: f64,
    pub rho: f64,
    pub eta: f64,
    pub point: MacroState,
    pub eigenvalues: Vec<Complex<f64>>,
    pub verdict: Verdict,
    pub eps_g: f64,
}

impl FixedPointReport {
    pub fn max_real(&self) -> f64 {
        max_real(&self.eigenvalues)
    }

    /// Sup norm of the right-hand side at the point.
    pub fn residual(&self) -> Result<f64> {
        let f = ode_rhs(
            &self.point,
            &small_step_params(self.rho, self.eta),
            self.beta,
        )?;
        Ok(f.flatten().amax())
    }

    pub fn to_json(&self) -> FixedPointJson {
        FixedPointJson {
            kind: self.kind,
            branch: self.branch.clone(),
            beta: self.beta,
            rho: self.rho,
            eta: self.eta,
            columns: self.point.layout().column_names(),
            point: self.point.flatten().iter().copied().collect(),
            eigenvalues: self.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            max_re_eig: self.max_real(),
            verdict: self.verdict,
            eps_g: self.eps_g,
        }
    }
}

/// Serialised form of a [`FixedPointReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointJson {
    pub kind: FixedPointKind,
    pub branch: String,
    pub beta: f64,
    pub rho: f64,
    pub eta: f64,
    pub columns: Vec<String>,
    pub point: Vec<f64>,
    /// `[re, im]` pairs, by decreasing real part.
    pub eigenvalues: Vec<[f64; 2]>,
    pub max_re_eig: f64,
    pub verdict: Verdict,
    pub eps_g: f64,
}

/// Small-step dynamics with `λ = 0` and unit learning rates.
pub fn small_step_params(rho: f64, eta: f64) -> OdeParams {
    OdeParams::first_order(rho, eta)
}

/// `ρ + η`: above it the collapsed point is the only stable one.
pub fn collapse_threshold(rho: f64, eta: f64) -> f64 {
    rho + eta
}

fn check_inputs(beta: f64, rho: f64, eta: f64) -> Result<()> {
    if [beta, rho, eta].iter().all(|v| v.is_finite() && *v >= 0.0) && rho + eta > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "need finite beta, rho, eta >= 0 with rho + eta > 0, got beta = {beta}, rho = {rho}, eta = {eta}"
        )))
    }
}

/// Builds a report by evaluating the Jacobian spectrum at `point`.
pub fn report(
    kind: FixedPointKind,
    branch: impl Into<String>,
    point: MacroState,
    beta: f64,
    rho: f64,
    eta: f64,
) -> Result<FixedPointReport> {
    let params = small_step_params(rho, eta);
    let eigenvalues = spectrum(&jacobian(&point, &params, beta)?)?;
    let verdict = classify(&eigenvalues, MARGINAL_TOL);
    let eps_g = generalization_error(&point, rho);
    Ok(FixedPointReport {
        kind,
        branch: branch.into(),
        beta,
        rho,
        eta,
        point,
        eigenvalues,
        verdict,
        eps_g,
    })
}

/// Values carried by a latent that has aligned with a direction of
/// strength `s` (`P` for the feature, `η` for pure noise).
struct Active {
    q: f64,
    e: f64,
    r: f64,
    var: f64,
}

fn active(beta: f64, s: f64) -> Active {
    let a = s - beta;
    Active {
        q: a,
        e: a / (s * s),
        r: a / s,
        var: beta / s,
    }
}

fn collapsed(layout: Layout) -> MacroState {
    let mut st = MacroState::zeros(layout);
    st.var.fill(1.0);
    st
}

/// Latent `i` recovers the feature with sign `sign`; `noise` optionally
/// puts latent `j` on the noise.
fn build(
    layout: Layout,
    beta: f64,
    p: f64,
    eta: f64,
    i: usize,
    sign: f64,
    noise: Option<usize>,
) -> MacroState {
    let mut st = collapsed(layout);
    let a = active(beta, p);
    let m = sign * (p - beta).max(0.0).sqrt();
    st.m[(i, 0)] = m;
    st.d[(i, 0)] = m / p;
    st.q.set(i, i, a.q);
    st.e.set(i, i, a.e);
    st.r[(i, i)] = a.r;
    st.var[i] = a.var;
    if let Some(j) = noise {
        let b = active(beta, eta);
        st.q.set(j, j, b.q);
        st.e.set(j, j, b.e);
        st.r[(j, j)] = b.r;
        st.var[j] = b.var;
    }
    st
}

/// Fixed points with one latent and one feature: the collapsed point, and
/// for `0 < β ≤ ρ + η` the learnable pair
/// `m = ±√(P − β)`, `d = m / P`, `Q = P − β`, `E = (P − β)/P²`,
/// `R = (P − β)/P`, `D = β/P` with `P = ρ + η`.
///
/// At `β = 0` the learnable variance vanishes and the pair is not emitted.
pub fn fixed_points_matched(beta: f64, rho: f64, eta: f64) -> Result<Vec<FixedPointReport>> {
    check_inputs(beta, rho, eta)?;
    let layout = Layout::new(1, 1);
    let p = rho + eta;
    let mut out = vec![report(
        FixedPointKind::Collapsed,
        "+",
        collapsed(layout),
        beta,
        rho,
        eta,
    )?];
    if beta > 0.0 && beta <= p {
        for (sign, label) in [(1.0, "+"), (-1.0, "-")] {
            let st = build(layout, beta, p, eta, 0, sign, None);
            out.push(report(
                FixedPointKind::Learnable,
                label,
                st,
                beta,
                rho,
                eta,
            )?);
        }
    }
    Ok(out)
}

/// Fixed points with two latents and one feature.
///
/// * collapsed;
/// * learnable (`0 < β ≤ ρ + η`): one latent as in the matched case, the
///   other at zero with `D = 1`;
/// * overfitting (`0 < β ≤ η`): as learnable, but the extra latent carries
///   `Q = η − β`, `E = (η − β)/η²`, `R = (η − β)/η`, `D = β/η`.
///
/// Each non-collapsed family comes in both signs and with both latent
/// orderings. Every cross term between the two latents is zero.
pub fn fixed_points_mismatched(beta: f64, rho: f64, eta: f64) -> Result<Vec<FixedPointReport>> {
    check_inputs(beta, rho, eta)?;
    let layout = Layout::new(2, 1);
    let p = rho + eta;
    let mut out = vec![report(
        FixedPointKind::Collapsed,
        "+",
        collapsed(layout),
        beta,
        rho,
        eta,
    )?];
    let variants = [(0usize, 1usize, ""), (1, 0, ",swapped")];
    if beta > 0.0 && beta <= p {
        for &(i, _, suffix) in &variants {
            for (sign, label) in [(1.0, "+"), (-1.0, "-")] {
                let st = build(layout, beta, p, eta, i, sign, None);
                out.push(report(
                    FixedPointKind::Learnable,
                    format!("{label}{suffix}"),
                    st,
                    beta,
                    rho,
                    eta,
                )?);
            }
        }
    }
    if beta > 0.0 && beta <= eta {
        for &(i, j, suffix) in &variants {
            for (sign, label) in [(1.0, "+"), (-1.0, "-")] {
                let st = build(layout, beta, p, eta, i, sign, Some(j));
                out.push(report(
                    FixedPointKind::Overfitting,
                    format!("{label}{suffix}"),
                    st,
                    beta,
                    rho,
                    eta,
                )?);
            }
        }
    }
    Ok(out)
}

pub fn fixed_points(case: Case, beta: f64, rho: f64, eta: f64) -> Result<Vec<FixedPointReport>> {
    match case {
        Case::Matched => fixed_points_matched(beta, rho, eta),
        Case::Mismatched => fixed_points_mismatched(beta, rho, eta),
    }
}

/// Damped Newton iteration on the right-hand side from `start`.
///
/// Returns the root if the residual falls below `tol` with positive
/// variances, `None` otherwise.
pub fn newton_root(
    start: &MacroState,
    rho: f64,
    eta: f64,
    beta: f64,
    tol: f64,
) -> Option<MacroState> {
    let params = small_step_params(rho, eta);
    let layout = start.layout();
    let mut x = start.flatten();
    let res = |x: &DVector<f64>| -> Option<f64> {
        let st = MacroState::unflatten(layout, x.as_slice()).ok()?;
        Some(ode_rhs(&st, &params, beta).ok()?.flatten().norm())
    };
    for _ in 0..200 {
        let st = MacroState::unflatten(layout, x.as_slice()).ok()?;
        let f = ode_rhs(&st, &params, beta).ok()?.flatten();
        let r0 = f.norm();
        if f.amax() < tol {
            return Some(st);
        }
        let j = jacobian(&st, &params, beta).ok()?;
        let step = j.clone().lu().solve(&(-&f)).or_else(|| {
            // fall back to least squares on singular Jacobians
            j.clone().svd(true, true).solve(&(-&f), 1e-12).ok()
        })?;
        let mut alpha = 1.0;
        loop {
            let trial = &x + &step * alpha;
            let ok_var = (layout.var_offset()..layout.dim()).all(|k| trial[k] > 0.0);
            if ok_var {
                if let Some(r) = res(&trial) {
                    if r < r0 {
                        x = trial;
                        break;
                    }
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return None;
            }
        }
    }
    None
}

/// Fixed points reached by Newton's method from the given starts that are
/// not within `1e-6` of any closed-form point, labelled [`FixedPointKind::Other`].
pub fn discover_other_fixed_points(
    case: Case,
    beta: f64,
    rho: f64,
    eta: f64,
    starts: &[MacroState],
) -> Result<Vec<FixedPointReport>> {
    let known: Vec<DVector<f64>> = fixed_points(case, beta, rho, eta)?
        .into_iter()
        .map(|r| r.point.flatten())
        .collect();
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for s in starts {
        if s.layout() != case.layout() {
            return Err(Error::Dimension(
                "start does not match the case layout".into(),
            ));
        }
        if let Some(root) = newton_root(s, rho, eta, beta, 1e-11) {
            let v = root.flatten();
            let close = |w: &DVector<f64>| (w - &v).amax() < 1e-6;
            if known.iter().any(close) || found.iter().any(close) {
                continue;
            }
            found.push(v);
            let label = format!("#{}", out.len() + 1);
            out.push(report(FixedPointKind::Other, label, root, beta, rho, eta)?);
        }
    }
    Ok(out)
}
