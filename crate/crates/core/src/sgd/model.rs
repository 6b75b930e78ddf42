//! Linear VAE parameters, loss and gradient.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::teacher::GenerativeConfig;
use crate::error::{Error, Result};

/// Learning rates, KL weight and weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    pub tau_w: f64,
    pub tau_v: f64,
    pub tau_d: f64,
}

impl Hyperparams {
    /// Equal learning rates `τ` for all three parameter groups.
    pub fn uniform(beta: f64, tau: f64) -> Self {
        Self {
            beta,
            lambda: 0.0,
            tau_w: tau,
            tau_v: tau,
            tau_d: tau,
        }
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_w.max(self.tau_v).max(self.tau_d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.beta) && ok(self.lambda)) {
            return Err(Error::Config(
                "beta and lambda must be finite and nonnegative".into(),
            ));
        }
        if !(self.tau_w > 0.0 && self.tau_v > 0.0 && self.tau_d > 0.0)
            || !(self.tau_w.is_finite() && self.tau_v.is_finite() && self.tau_d.is_finite())
        {
            return Err(Error::Config(
                "learning rates must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::uniform(1.0, 0.01)
    }
}

/// Parameters of the model: decoder `W`, encoder `V` (both `N × M`) and
/// posterior variances `D`.
#[derive(Debug, Clone)]
pub struct MicroState {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub d: DVector<f64>,
    pub hyper: Hyperparams,
}

impl MicroState {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn m(&self) -> usize {
        self.w.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let (n, m) = (self.w.nrows(), self.w.ncols());
        if self.v.shape() != (n, m) || self.d.len() != m {
            return Err(Error::Dimension(format!(
                "W is {n}x{m}, V is {}x{}, D has {} entries",
                self.v.nrows(),
                self.v.ncols(),
                self.d.len()
            )));
        }
        if let Some(i) = self.d.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::NonPositiveVariance {
                index: i,
                value: self.d[i],
                context: String::new(),
            });
        }
        Ok(())
    }
}

/// How the initial weights are drawn.
///
/// Decoder column `i` is `a_i w*_{l(i)} + s g_i` with `l(i) = i mod M*`,
/// `a_i = overlap / (1 + ⌊i / M*⌋)` and `g_i` standard Gaussian. Encoder
/// columns are `s g'_i`. Posterior variances start at one.
///
/// A strictly positive decoder overlap is needed to leave the `m = d = 0`
/// subspace, which the averaged dynamics never exit on their own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub scale: f64,
    #[serde(default = "InitSpec::default_overlap")]
    pub overlap: f64,
    /// Accept `scale = 0`, which with zero overlap gives the stationary
    /// all-zero start.
    #[serde(default)]
    pub allow_degenerate: bool,
}

impl InitSpec {
    pub const DEFAULT_SCALE: f64 = 0.1;
    pub const DEFAULT_OVERLAP: f64 = 0.1;

    fn default_overlap() -> f64 {
        Self::DEFAULT_OVERLAP
    }

    pub fn new(scale: f64, overlap: f64) -> Self {
        Self {
            scale,
            overlap,
            allow_degenerate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.overlap.is_finite() && self.scale >= 0.0) {
            return Err(Error::Config(
                "init scale must be finite and nonnegative".into(),
            ));
        }
        if self.scale == 0.0 && !self.allow_degenerate {
            return Err(Error::Config(
                "init scale 0 gives a degenerate start; set allow_degenerate to force it".into(),
            ));
        }
        Ok(())
    }

    /// Overlap of decoder column `i` with its assigned feature.
    pub fn column_overlap(&self, i: usize, m_star: usize) -> f64 {
        self.overlap / (1.0 + (i / m_star) as f64)
    }
}

impl Default for InitSpec {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SCALE, Self::DEFAULT_OVERLAP)
    }
}

pub fn init_micro<R: Rng + ?Sized>(
    cfg: &GenerativeConfig,
    m: usize,
    hyper: Hyperparams,
    init: &InitSpec,
    rng: &mut R,
) -> Result<MicroState> {
    init.validate()?;
    hyper.validate()?;
    if m == 0 {
        return Err(Error::Config("latent dimension M must be positive".into()));
    }
    let n = cfg.n();
    let ms = cfg.m_star();
    let mut w = DMatrix::<f64>::from_fn(n, m, |_, _| {
        init.scale * rng.sample::<f64, _>(StandardNormal)
    });
    let v = DMatrix::<f64>::from_fn(n, m, |_, _| {
        init.scale * rng.sample::<f64, _>(StandardNormal)
    });
    for i in 0..m {
        let a = init.column_overlap(i, ms);
        if a != 0.0 {
            let mut col = w.column_mut(i);
            col.axpy(a, &cfg.w_star.column(i % ms), 1.0);
        }
    }
    Ok(MicroState {
        w,
        v,
        d: DVector::from_element(m, 1.0),
        hyper,
    })
}

/// Per-sample negative ELBO split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub distortion: f64,
    pub rate: f64,
    pub regularizer: f64,
    pub total: f64,
}

fn encode(state: &MicroState, x: &DVector<f64>) -> DVector<f64> {
    state.v.tr_mul(x) / (state.n() as f64).sqrt()
}

pub fn elbo_loss(state: &MicroState, x: &DVector<f64>) -> Loss {
    let n = state.n() as f64;
    let mu = encode(state, x);
    let recon = x - &state.w * &mu / n.sqrt();
    let col_sq: f64 = (0..state.m())
        .map(|i| state.d[i] * state.w.column(i).norm_squared())
        .sum();
    let distortion = 0.5 * recon.norm_squared()
        + col_sq / (2.0 * n)
        + 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    let rate = 0.5
        * (0..state.m())
            .map(|i| state.d[i] + mu[i] * mu[i] - state.d[i].ln() - 1.0)
            .sum::<f64>();
    let regularizer =
        state.hyper.lambda / (2.0 * n) * (state.w.norm_squared() + state.v.norm_squared());
    Loss {
        distortion,
        rate,
        regularizer,
        total: distortion + state.hyper.beta * rate + regularizer,
    }
}

/// Gradient of [`elbo_loss`]`.total` with respect to `(W, V, D)`.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub d: DVector<f64>,
}

pub fn elbo_gradient(state: &MicroState, x: &DVector<f64>) -> Gradient {
    let n = state.n() as f64;
    let sn = n.sqrt();
    let h = &state.hyper;
    let mu = encode(state, x);
    let recon = x - &state.w * &mu / sn;

    let mut gw = -(&recon * mu.transpose()) / sn;
    for i in 0..state.m() {
        let mut col = gw.column_mut(i);
        col.axpy((state.d[i] + h.lambda) / n, &state.w.column(i), 1.0);
    }

    let mut g_mu = -state.w.tr_mul(&recon) / sn;
    g_mu.axpy(h.beta, &mu, 1.0);
    let mut gv = x * g_mu.transpose() / sn;
    gv += &state.v * (h.lambda / n);

    let gd = DVector::from_fn(state.m(), |i, _| {
        state.w.column(i).norm_squared() / (2.0 * n) + 0.5 * h.beta * (1.0 - 1.0 / state.d[i])
    });
    Gradient {
        w: gw,
        v: gv,
        d: gd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn instance(
        seed: u64,
        n: usize,
        m: usize,
        ms: usize,
    ) -> (GenerativeConfig, MicroState, DVector<f64>) {
        let mut rng = seeded(seed);
        let cfg = GenerativeConfig::random(n, ms, 1.3, 0.7, &mut rng).unwrap();
        let mut h = Hyperparams::uniform(0.8, 0.1);
        h.lambda = 0.3;
        let mut st = init_micro(&cfg, m, h, &InitSpec::new(0.5, 0.4), &mut rng).unwrap();
        st.d = DVector::from_fn(m, |i, _| 0.5 + 0.3 * i as f64);
        let x = cfg.sample(&mut rng).x;
        (cfg, st, x)
    }

    #[test]
    fn zero_scale_rejected_by_default() {
        let mut rng = seeded(0);
        let cfg = GenerativeConfig::random(8, 1, 1.0, 1.0, &mut rng).unwrap();
        let h = Hyperparams::default();
        let err = init_micro(&cfg, 1, h, &InitSpec::new(0.0, 0.0), &mut rng).unwrap_err();
        assert!(err.is_config());
        let mut spec = InitSpec::new(0.0, 0.0);
        spec.allow_degenerate = true;
        let st = init_micro(&cfg, 1, h, &spec, &mut rng).unwrap();
        assert_eq!(st.w.amax(), 0.0);
        assert_eq!(st.v.amax(), 0.0);
        assert_eq!(st.d[0], 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let eps = 1e-6;
        for seed in 0..4 {
            let (_, st, x) = instance(seed, 12, 2, 1);
            let g = elbo_gradient(&st, &x);
            let f = |s: &MicroState| elbo_loss(s, &x).total;
            for (r, c) in [(0, 0), (5, 1), (11, 0)] {
                let mut p = st.clone();
                p.w[(r, c)] += eps;
                let mut q = st.clone();
                q.w[(r, c)] -= eps;
                let fd = (f(&p) - f(&q)) / (2.0 * eps);
                assert!(
                    (fd - g.w[(r, c)]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "W {fd} {}",
                    g.w[(r, c)]
                );
                let mut p = st.clone();
                p.v[(r, c)] += eps;
                let mut q = st.clone();
                q.v[(r, c)] -= eps;
                let fd = (f(&p) - f(&q)) / (2.0 * eps);
                assert!(
                    (fd - g.v[(r, c)]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "V {fd} {}",
                    g.v[(r, c)]
                );
            }
            for i in 0..2 {
                let mut p = st.clone();
                p.d[i] += eps;
                let mut q = st.clone();
                q.d[i] -= eps;
                let fd = (f(&p) - f(&q)) / (2.0 * eps);
                assert!((fd - g.d[i]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn rate_vanishes_at_prior() {
        let (_, mut st, _) = instance(2, 10, 1, 1);
        st.v.fill(0.0);
        st.d.fill(1.0);
        let x = DVector::from_element(10, 0.3);
        assert!(elbo_loss(&st, &x).rate.abs() < 1e-15);
    }
}
