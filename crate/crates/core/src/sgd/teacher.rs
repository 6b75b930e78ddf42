//! The spiked-covariance data model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance on `W*ᵀ W* / N = I`.
pub const TEACHER_NORM_TOL: f64 = 1e-10;

/// Ground-truth generative process `x = √(ρ/N) W* c + √η n`.
#[derive(Debug, Clone)]
pub struct GenerativeConfig {
    /// Feature matrix, `N × M*`, with `W*ᵀ W* / N = I`.
    pub w_star: DMatrix<f64>,
    pub rho: f64,
    pub eta: f64,
}

impl GenerativeConfig {
    /// Draws random orthogonal features of norm `√N` each.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        m_star: usize,
        rho: f64,
        eta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if m_star == 0 || n < m_star {
            return Err(Error::Config(format!(
                "need 1 <= M* <= N, got N = {n}, M* = {m_star}"
            )));
        }
        let g = DMatrix::<f64>::from_fn(n, m_star, |_, _| rng.sample(StandardNormal));
        let mut q = g.qr().q();
        q *= (n as f64).sqrt();
        Self::new(q, rho, eta)
    }

    /// Wraps a user-supplied feature matrix after checking its normalisation.
    pub fn new(w_star: DMatrix<f64>, rho: f64, eta: f64) -> Result<Self> {
        if !(rho >= 0.0 && eta >= 0.0 && rho.is_finite() && eta.is_finite()) {
            return Err(Error::Config(format!(
                "rho and eta must be finite and nonnegative, got rho = {rho}, eta = {eta}"
            )));
        }
        let n = w_star.nrows();
        if n == 0 || w_star.ncols() == 0 {
            return Err(Error::Dimension("empty feature matrix".into()));
        }
        let gram = w_star.transpose() * &w_star / n as f64;
        let dev = (gram - DMatrix::identity(w_star.ncols(), w_star.ncols())).amax();
        if dev > TEACHER_NORM_TOL {
            return Err(Error::Config(format!(
                "feature matrix not normalised: max |W*^T W*/N - I| = {dev:e}"
            )));
        }
        Ok(Self { w_star, rho, eta })
    }

    pub fn n(&self) -> usize {
        self.w_star.nrows()
    }

    pub fn m_star(&self) -> usize {
        self.w_star.ncols()
    }

    /// `ρ + η`.
    pub fn snr_total(&self) -> f64 {
        self.rho + self.eta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        draw_sample(self, rng)
    }
}

/// One observation together with the latent draws that produced it.
#[derive(Debug, Clone)]
pub struct Sample {
    pub x: DVector<f64>,
    pub c: DVector<f64>,
    pub noise: DVector<f64>,
}

pub fn draw_sample<R: Rng + ?Sized>(cfg: &GenerativeConfig, rng: &mut R) -> Sample {
    let n = cfg.n();
    let c = DVector::<f64>::from_fn(cfg.m_star(), |_, _| rng.sample(StandardNormal));
    let noise = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let mut x = &cfg.w_star * &c;
    x *= (cfg.rho / n as f64).sqrt();
    x.axpy(cfg.eta.sqrt(), &noise, 1.0);
    Sample { x, c, noise }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn random_teacher_is_normalised() {
        let mut rng = seeded(3);
        for (n, ms) in [(10, 1), (200, 2), (500, 3)] {
            let cfg = GenerativeConfig::random(n, ms, 1.0, 1.0, &mut rng).unwrap();
            let gram = cfg.w_star.transpose() * &cfg.w_star / n as f64;
            assert!((gram - DMatrix::identity(ms, ms)).amax() < TEACHER_NORM_TOL);
        }
    }

    #[test]
    fn rejects_unnormalised_features() {
        let w = DMatrix::from_element(4, 1, 1.5);
        assert!(GenerativeConfig::new(w, 1.0, 1.0).unwrap_err().is_config());
    }

    #[test]
    fn sample_second_moment() {
        // E[x xᵀ] = (ρ/N) W* W*ᵀ + η I, so E[(w*ᵀx)²]/N = ρ + η and E|x|²/N = η + ρ M*/N
        let mut rng = seeded(11);
        let (rho, eta) = (2.0, 0.5);
        let cfg = GenerativeConfig::random(100, 1, rho, eta, &mut rng).unwrap();
        let k = 20_000;
        let mut proj = 0.0;
        for _ in 0..k {
            let s = cfg.sample(&mut rng);
            let p = cfg.w_star.column(0).dot(&s.x);
            proj += p * p / 100.0;
        }
        proj /= k as f64;
        assert!((proj - (rho + eta)).abs() < 0.06, "{proj}");
    }
}
