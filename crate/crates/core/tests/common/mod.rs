//! Oracles shared by the integration tests. Everything here is computed
//! independently of the library's closed forms.

#![allow(dead_code)]

use lvae_dynamics::macroscopic::{measure_macro, ode_rhs, MacroState, OdeParams};
use lvae_dynamics::rng::seeded;
use lvae_dynamics::sgd::{
    elbo_gradient, elbo_loss, init_micro, step_in_place, GenerativeConfig, Hyperparams, InitSpec,
    MicroState,
};
use nalgebra::{Complex, DVector};
use rand::Rng;

/// Matched spectrum at the collapsed point, per unit learning rate.
pub fn collapsed_spectrum(beta: f64, rho: f64, eta: f64) -> Vec<f64> {
    let p = rho + eta;
    let a = 1.0 + beta * eta;
    let ra = (a * a + 4.0 * eta * (eta - beta)).sqrt();
    let b = 1.0 + beta * p;
    let rb = (b * b + 4.0 * p * (p - beta)).sqrt();
    vec![
        -beta / 2.0,
        -a,
        -(a + ra),
        -(a - ra),
        -0.5 * (b + rb),
        -0.5 * (b - rb),
    ]
}

/// The three explicit matched eigenvalues at the learnable point.
pub fn learnable_spectrum_explicit(rho: f64, eta: f64) -> Vec<f64> {
    let p = rho + eta;
    let a = 1.0 + eta * p;
    let r = (a * a - 4.0 * eta * rho).sqrt();
    vec![-a, -(a + r), -(a - r)]
}

/// Roots of the cubic governing the remaining learnable eigenvalues for a
/// latent aligned with a direction of strength `s`. The polynomial is in
/// `y = 2 β s² λ`; its roots are returned rescaled to `λ`.
pub fn learnable_cubic_roots(beta: f64, s: f64) -> Vec<Complex<f64>> {
    let c2 = s * s * (s * s + 2.0 * beta * (1.0 + s * s));
    let c1 = 2.0
        * beta
        * s.powi(4)
        * (s * s * (1.0 + s * s) - 8.0 * beta.powi(3) + 2.0 * (1.0 + 4.0 * s) * beta * beta
            - 2.0 * s * beta);
    let c0 = 8.0 * s.powi(8) * (s - beta) * beta.powi(3);
    let companion = nalgebra::Matrix3::new(0.0, 0.0, -c0, 1.0, 0.0, -c1, 0.0, 1.0, -c2);
    let scale = 2.0 * beta * s * s;
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z / scale)
        .collect()
}

/// Full matched spectrum at the learnable point.
pub fn learnable_spectrum(beta: f64, rho: f64, eta: f64) -> Vec<Complex<f64>> {
    let mut out: Vec<Complex<f64>> = learnable_spectrum_explicit(rho, eta)
        .into_iter()
        .map(Complex::from)
        .collect();
    out.extend(learnable_cubic_roots(beta, rho + eta));
    out
}

/// Full spectrum of the two-latent model at the collapsed point: the
/// matched values with multiplicities 2, 4, 3, 3, 2, 2.
pub fn mismatched_collapsed_spectrum(beta: f64, rho: f64, eta: f64) -> Vec<Complex<f64>> {
    let one = collapsed_spectrum(beta, rho, eta);
    [2, 4, 3, 3, 2, 2]
        .iter()
        .zip(&one)
        .flat_map(|(&k, &v)| std::iter::repeat(Complex::from(v)).take(k))
        .collect()
}

/// Full spectrum of the two-latent model at the overfitting point.
pub fn overfitting_spectrum(beta: f64, rho: f64, eta: f64) -> Vec<Complex<f64>> {
    let p = rho + eta;
    let a = 1.0 + eta * p;
    let r = Complex::from(a * a - 4.0 * eta * rho).sqrt();
    let mut out: Vec<Complex<f64>> = vec![
        Complex::from(-2.0 * (1.0 + eta * eta)),
        Complex::from(-a),
        -(r + a + 2.0 * (1.0 + eta * eta)) * 0.5,
        (r - a - 2.0 * (1.0 + eta * eta)) * 0.5,
        -(r + a),
        r - a,
    ];
    let inner = ((beta - eta) * (beta - p)).sqrt();
    for sign in [1.0, -1.0] {
        let rad = Complex::from(a * a + 8.0 * beta * (sign * inner + beta - p + rho / 2.0)).sqrt();
        out.push(-(rad + a) * 0.5);
        out.push((rad - a) * 0.5);
    }
    out.extend(learnable_cubic_roots(beta, p));
    out.extend(learnable_cubic_roots(beta, eta));
    out
}

/// Full spectrum of the two-latent model at the learnable point with the
/// extra latent switched off.
pub fn mismatched_learnable_spectrum(beta: f64, rho: f64, eta: f64) -> Vec<Complex<f64>> {
    let p = rho + eta;
    let be = 1.0 + beta * eta;
    let ep = 1.0 + eta * p;
    let c = Complex::from;
    let r1 = c(be * be + 4.0 * eta * (eta - beta)).sqrt();
    let bp = 1.0 + beta * p;
    let r2 = c(bp * bp + 4.0 * beta * (beta - p)).sqrt();
    let r3 = c(ep * ep - 4.0 * eta * rho).sqrt();
    let mut out = vec![
        c(-beta / 2.0),
        c(-ep),
        c(-be),
        -(r1 + be),
        r1 - be,
        -(r2 + bp) * 0.5,
        (r2 - bp) * 0.5,
        -(r3 + ep),
        r3 - ep,
    ];
    let head = 2.0 + eta * (beta + p);
    let x = (1.0 - beta * eta).powi(2) + ep * ep + 4.0 * eta * (eta - rho);
    let y =
        2.0 * (((1.0 - beta * eta).powi(2) + 4.0 * eta * eta) * (ep * ep - 4.0 * eta * rho)).sqrt();
    for inner in [x + y, x - y] {
        let s = c(inner).sqrt();
        out.push(-(s + head) * 0.5);
        out.push((s - head) * 0.5);
    }
    out.extend(learnable_cubic_roots(beta, p));
    out
}

/// Pairs each numeric eigenvalue with a distinct expected one and returns
/// the largest distance. Both lists must have the same length.
pub fn spectrum_distance(numeric: &[Complex<f64>], expected: &[Complex<f64>]) -> f64 {
    assert_eq!(numeric.len(), expected.len());
    let mut used = vec![false; expected.len()];
    let mut worst = 0.0f64;
    let mut order: Vec<&Complex<f64>> = numeric.iter().collect();
    order.sort_by(|a, b| a.re.total_cmp(&b.re));
    for z in order {
        let (i, d) = expected
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, e)| (i, (z - e).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        used[i] = true;
        worst = worst.max(d);
    }
    worst
}

/// A random parameter state with `D` in `[0.5, 1.5]`.
pub fn random_micro(
    seed: u64,
    n: usize,
    m: usize,
    rho: f64,
    eta: f64,
    hyper: Hyperparams,
) -> (GenerativeConfig, MicroState) {
    let mut rng = seeded(seed);
    let cfg = GenerativeConfig::random(n, 1, rho, eta, &mut rng).unwrap();
    let init = InitSpec::new(rng.gen_range(0.2..0.8), rng.gen_range(-0.8..0.8));
    let mut st = init_micro(&cfg, m, hyper, &init, &mut rng).unwrap();
    st.d = DVector::from_fn(m, |_, _| rng.gen_range(0.5..1.5));
    (cfg, st)
}

/// Monte-Carlo estimate of `N · E[ΔM]` over `samples` single steps from
/// the same state, with its standard error.
pub struct DriftEstimate {
    pub start: MacroState,
    pub mean: DVector<f64>,
    pub se: DVector<f64>,
}

pub fn drift_estimate(
    cfg: &GenerativeConfig,
    st: &MicroState,
    samples: usize,
    seed: u64,
) -> DriftEstimate {
    let mut rng = seeded(seed);
    let n = st.n() as f64;
    let start = measure_macro(st, cfg);
    let m0 = start.flatten();
    let dim = m0.len();
    let mut sum = DVector::<f64>::zeros(dim);
    let mut sq = DVector::<f64>::zeros(dim);
    let mut next = st.clone();
    for _ in 0..samples {
        next.w.copy_from(&st.w);
        next.v.copy_from(&st.v);
        next.d.copy_from(&st.d);
        let x = cfg.sample(&mut rng).x;
        step_in_place(&mut next, &x).unwrap();
        let inc = (measure_macro(&next, cfg).flatten() - &m0) * n;
        sq += inc.component_mul(&inc);
        sum += inc;
    }
    let k = samples as f64;
    let mean = &sum / k;
    let var = (sq / k - mean.component_mul(&mean)) * (k / (k - 1.0));
    let se = var.map(|v| (v.max(0.0) / k).sqrt());
    DriftEstimate { start, mean, se }
}

/// Largest `|MC − F| / SE` over components, with an absolute floor for
/// components that are deterministic given the state.
pub fn drift_z(est: &DriftEstimate, params: &OdeParams, beta: f64) -> f64 {
    let f = ode_rhs(&est.start, params, beta).unwrap().flatten();
    (0..f.len())
        .map(|i| (est.mean[i] - f[i]).abs() / est.se[i].max(1e-9))
        .fold(0.0, f64::max)
}

/// Relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)` of the analytic
/// gradient against central differences over every parameter.
pub fn gradient_rel_error(st: &MicroState, x: &DVector<f64>) -> f64 {
    let h = 1e-5;
    let g = elbo_gradient(st, x);
    let f = |s: &MicroState| elbo_loss(s, x).total;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut probe = st.clone();
    for idx in 0..st.w.len() {
        probe.w[idx] = st.w[idx] + h;
        let up = f(&probe);
        probe.w[idx] = st.w[idx] - h;
        let down = f(&probe);
        probe.w[idx] = st.w[idx];
        numeric.push((up - down) / (2.0 * h));
        analytic.push(g.w[idx]);
    }
    for idx in 0..st.v.len() {
        probe.v[idx] = st.v[idx] + h;
        let up = f(&probe);
        probe.v[idx] = st.v[idx] - h;
        let down = f(&probe);
        probe.v[idx] = st.v[idx];
        numeric.push((up - down) / (2.0 * h));
        analytic.push(g.v[idx]);
    }
    for idx in 0..st.d.len() {
        probe.d[idx] = st.d[idx] + h;
        let up = f(&probe);
        probe.d[idx] = st.d[idx] - h;
        let down = f(&probe);
        probe.d[idx] = st.d[idx];
        numeric.push((up - down) / (2.0 * h));
        analytic.push(g.d[idx]);
    }
    let a = DVector::from_vec(analytic);
    let b = DVector::from_vec(numeric);
    (&a - &b).norm() / a.norm().max(b.norm())
}

/// A random small instance for the gradient check.
pub fn gradient_instance(seed: u64) -> (MicroState, DVector<f64>) {
    let mut rng = seeded(1000 + seed);
    let n = rng.gen_range(4..12);
    let m = rng.gen_range(1..4);
    let mut hyper = Hyperparams::uniform(rng.gen_range(0.1..3.0), 0.1);
    hyper.lambda = rng.gen_range(0.0..0.5);
    let (rho, eta) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
    let (cfg, st) = random_micro(seed, n, m, rho, eta, hyper);
    let x = cfg.sample(&mut rng).x;
    (st, x)
}
