//! Deterministic large-`N` dynamics of the order parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::state::{Layout, MacroState, SymMatrix};
use crate::error::{Error, Result};
use crate::sgd::Hyperparams;

/// Data model, learning rates and which corrections to include.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeParams {
    pub rho: f64,
    pub eta: f64,
    pub tau_w: f64,
    pub tau_v: f64,
    pub tau_d: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Keep the terms quadratic in the learning rates. Without them the
    /// right-hand side is the small-step limit, whose fixed points are the
    /// ones stated in closed form in [`crate::stability`].
    #[serde(default = "yes")]
    pub include_tau_squared: bool,
    /// Use `τ_D / 2` in the variance drift, which is what one gradient step
    /// on `D` produces. `false` keeps the factor one.
    #[serde(default = "yes")]
    pub d_drift_half_factor: bool,
}

fn yes() -> bool {
    true
}

impl OdeParams {
    pub fn new(rho: f64, eta: f64, hyper: &Hyperparams) -> Self {
        Self {
            rho,
            eta,
            tau_w: hyper.tau_w,
            tau_v: hyper.tau_v,
            tau_d: hyper.tau_d,
            lambda: hyper.lambda,
            include_tau_squared: true,
            d_drift_half_factor: true,
        }
    }

    /// Small-step dynamics with unit learning rates, whose Jacobian
    /// eigenvalues are rates per unit `τ`.
    pub fn first_order(rho: f64, eta: f64) -> Self {
        Self {
            rho,
            eta,
            tau_w: 1.0,
            tau_v: 1.0,
            tau_d: 1.0,
            lambda: 0.0,
            include_tau_squared: false,
            d_drift_half_factor: true,
        }
    }

    /// Signal plus noise strength `ρ + η`.
    pub fn p(&self) -> f64 {
        self.rho + self.eta
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_w.max(self.tau_v).max(self.tau_d)
    }

    pub fn validate(&self) -> Result<()> {
        let fin = [
            self.rho,
            self.eta,
            self.tau_w,
            self.tau_v,
            self.tau_d,
            self.lambda,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !fin || self.rho < 0.0 || self.eta < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config(
                "rho, eta, lambda must be finite and nonnegative".into(),
            ));
        }
        if !(self.tau_w > 0.0 && self.tau_v > 0.0 && self.tau_d > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// `h(A, B, C) = ρ ⟨A, B⟩ + η C` for rows `A`, `B` of overlap matrices.
pub fn helper_h(rho: f64, eta: f64, a: &[f64], b: &[f64], c: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    rho * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() + eta * c
}

struct Ctx<'a> {
    s: &'a MacroState,
    rho: f64,
    eta: f64,
}

impl Ctx<'_> {
    fn dot_rows(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
        (0..a.ncols()).map(|l| a[(i, l)] * b[(j, l)]).sum()
    }
    /// `h(d_a, d_b, E_ab)`
    fn hdd(&self, a: usize, b: usize) -> f64 {
        self.rho * Self::dot_rows(&self.s.d, a, &self.s.d, b) + self.eta * self.s.e.get(a, b)
    }
    /// `h(m_a, d_b, R_ab)`
    fn hmd(&self, a: usize, b: usize) -> f64 {
        self.rho * Self::dot_rows(&self.s.m, a, &self.s.d, b) + self.eta * self.s.r[(a, b)]
    }
    /// `h(m_a, m_b, Q_ab)`
    fn hmm(&self, a: usize, b: usize) -> f64 {
        self.rho * Self::dot_rows(&self.s.m, a, &self.s.m, b) + self.eta * self.s.q.get(a, b)
    }
}

/// Time derivative of every order parameter at KL weight `beta`.
///
/// Fails if any posterior variance is not strictly positive.
pub fn ode_rhs(state: &MacroState, params: &OdeParams, beta: f64) -> Result<MacroState> {
    if let Some(i) = state.var.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositiveVariance {
            index: i,
            value: state.var[i],
            context: " in ode_rhs".into(),
        });
    }
    let Layout { m: mm, m_star: ms } = state.layout();
    let (rho, eta) = (params.rho, params.eta);
    let p = rho + eta;
    let (tw, tv, td, lam) = (params.tau_w, params.tau_v, params.tau_d, params.lambda);
    let second = params.include_tau_squared;
    let c = Ctx { s: state, rho, eta };
    let s = state;
    let q = |a: usize, b: usize| s.q.get(a, b);
    let dv = &s.var;

    let hdd = DMatrix::from_fn(mm, mm, |a, b| c.hdd(a, b));
    let hmd = DMatrix::from_fn(mm, mm, |a, b| c.hmd(a, b));
    let hmm = DMatrix::from_fn(mm, mm, |a, b| c.hmm(a, b));

    let fm = DMatrix::from_fn(mm, ms, |a, l| {
        let sum: f64 = (0..mm).map(|n| s.m[(n, l)] * hdd[(a, n)]).sum();
        -tw * (sum + s.m[(a, l)] * (dv[a] + lam) - p * s.d[(a, l)])
    });

    let fd = DMatrix::from_fn(mm, ms, |a, l| {
        let sum: f64 = (0..mm).map(|n| q(a, n) * s.d[(n, l)]).sum();
        -tv * (p * sum + beta * p * s.d[(a, l)] - p * s.m[(a, l)] + lam * s.d[(a, l)])
    });

    // Σ_n Q_an hdd(b, n)
    let qh = |a: usize, b: usize| -> f64 { (0..mm).map(|n| q(a, n) * hdd[(b, n)]).sum() };

    let fq = SymMatrix::from_fn(mm, |a, b| {
        let mut v = -tw
            * (q(a, b) * (dv[a] + dv[b] + 2.0 * lam) - hmd[(b, a)] - hmd[(a, b)]
                + qh(a, b)
                + qh(b, a));
        if second {
            v += eta * tw * tw * hdd[(a, b)];
        }
        v
    });

    let fe = SymMatrix::from_fn(mm, |a, b| {
        let mut v = -tv
            * (2.0 * beta * hdd[(a, b)] - hmd[(a, b)] - hmd[(b, a)]
                + 2.0 * lam * s.e.get(a, b)
                + qh(b, a)
                + qh(a, b));
        if second {
            let mut quad = 0.0;
            for i in 0..mm {
                for j in 0..mm {
                    quad += q(a, i) * q(b, j) * hdd[(i, j)];
                }
            }
            let qhm = |a: usize, b: usize| -> f64 { (0..mm).map(|n| q(a, n) * hmd[(b, n)]).sum() };
            let sab = quad
                + beta * (qh(a, b) + qh(b, a) + beta * hdd[(a, b)] - hmd[(b, a)] - hmd[(a, b)])
                + hmm[(a, b)]
                - qhm(a, b)
                - qhm(b, a);
            v += eta * tv * tv * sab;
        }
        v
    });

    let fr = DMatrix::from_fn(mm, mm, |a, b| {
        let dec: f64 = (0..mm).map(|n| s.r[(n, b)] * hdd[(a, n)]).sum::<f64>() - hdd[(a, b)]
            + (dv[a] + lam) * s.r[(a, b)];
        let enc: f64 = (0..mm).map(|n| q(b, n) * hmd[(a, n)]).sum::<f64>() + beta * hmd[(a, b)]
            - hmm[(a, b)]
            + lam * s.r[(a, b)];
        let mut v = -tw * dec - tv * enc;
        if second {
            let cross: f64 = (0..mm).map(|n| q(b, n) * hdd[(a, n)]).sum::<f64>()
                + beta * hdd[(a, b)]
                - hmd[(b, a)];
            v -= eta * tw * tv * cross;
        }
        v
    });

    let k = if params.d_drift_half_factor { 0.5 } else { 1.0 };
    let fvar = DVector::from_fn(mm, |a, _| k * td * (beta / dv[a] - q(a, a) - beta));

    Ok(MacroState {
        m: fm,
        d: fd,
        q: fq,
        e: fe,
        r: fr,
        var: fvar,
    })
}

/// `(1/N) E ‖√ρ W* c − W c‖²` at the best assignment of latents to
/// features, up to sign:
/// `ρ M* − 2 √ρ max_π Σ_l |m_{π(l), l}| + tr Q`.
///
/// The maximisation runs over injective matchings between latents and
/// features, by exhaustive search.
pub fn generalization_error(state: &MacroState, rho: f64) -> f64 {
    let best = best_matching(&state.m);
    rho * state.m.ncols() as f64 - 2.0 * rho.sqrt() * best + state.q.trace()
}

/// Largest `Σ |a_{i, j}|` over injective pairings of rows and columns.
pub fn best_matching(a: &DMatrix<f64>) -> f64 {
    let (rows, cols) = a.shape();
    if rows >= cols {
        let mut used = vec![false; rows];
        search(&|i, j| a[(i, j)].abs(), cols, rows, 0, &mut used)
    } else {
        let mut used = vec![false; cols];
        search(&|i, j| a[(j, i)].abs(), rows, cols, 0, &mut used)
    }
}

// assigns each of `k` items a distinct slot out of `slots`, maximising the sum
fn search(
    w: &dyn Fn(usize, usize) -> f64,
    k: usize,
    slots: usize,
    item: usize,
    used: &mut [bool],
) -> f64 {
    if item == k {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for s in 0..slots {
        if !used[s] {
            used[s] = true;
            best = best.max(w(s, item) + search(w, k, slots, item + 1, used));
            used[s] = false;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(m: f64, d: f64, q: f64, e: f64, r: f64, var: f64) -> MacroState {
        MacroState::unflatten(Layout::new(1, 1), &[m, d, q, e, r, var]).unwrap()
    }

    #[test]
    fn helper_h_values() {
        assert_eq!(
            helper_h(2.0, 3.0, &[1.0, 2.0], &[3.0, 4.0], 5.0),
            2.0 * 11.0 + 15.0
        );
        // h(e_l, d_a, d_al) = (ρ + η) d_al
        assert_eq!(helper_h(0.7, 1.3, &[1.0], &[0.4], 0.4), 2.0 * 0.4);
    }

    #[test]
    fn collapsed_point_is_stationary() {
        // m = d = Q = E = R = 0, D = 1
        let s = scalar(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let mut p = OdeParams::first_order(1.0, 1.0);
        p.include_tau_squared = true;
        p.tau_w = 0.3;
        let f = ode_rhs(&s, &p, 0.7).unwrap();
        assert!(f.flatten().amax() < 1e-15);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let s = scalar(0.1, 0.1, 0.1, 0.1, 0.1, 0.0);
        let e = ode_rhs(&s, &OdeParams::first_order(1.0, 1.0), 1.0).unwrap_err();
        assert!(matches!(e, Error::NonPositiveVariance { index: 0, .. }));
    }

    #[test]
    fn variance_drift_factor() {
        let s = scalar(0.2, 0.1, 0.5, 0.3, 0.1, 0.8);
        let mut p = OdeParams::first_order(1.0, 1.0);
        let half = ode_rhs(&s, &p, 1.0).unwrap().var[0];
        p.d_drift_half_factor = false;
        let full = ode_rhs(&s, &p, 1.0).unwrap().var[0];
        assert!((full - 2.0 * half).abs() < 1e-15);
        assert!((half - 0.5 * (1.0 / 0.8 - 0.5 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn gen_error_of_perfect_recovery() {
        // W = √ρ W* gives m = √ρ, Q = ρ, so the error is zero
        let rho: f64 = 1.7;
        let s = scalar(rho.sqrt(), 0.0, rho, 0.0, 0.0, 1.0);
        assert!(generalization_error(&s, rho).abs() < 1e-14);
        let s = scalar(-rho.sqrt(), 0.0, rho, 0.0, 0.0, 1.0);
        assert!(generalization_error(&s, rho).abs() < 1e-14);
    }

    #[test]
    fn matching_picks_best_permutation() {
        let a = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.8, 0.2, -0.5, 0.85]);
        assert!((best_matching(&a) - (0.9 + 0.8)).abs() < 1e-15);
        let b = a.transpose();
        assert!((best_matching(&b) - 1.7).abs() < 1e-15);
    }
}
