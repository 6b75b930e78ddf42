//! Finite-size deviation of SGD from the averaged dynamics.

use rayon::prelude::*;

use super::dynamics::{schedule_tag, sgd_trajectory};
use super::output::{Cell, RunResult, Table};
use super::spec::ExperimentSpec;
use super::stats::{linear_fit, mean, std_dev};
use crate::error::Result;
use crate::macroscopic::{integrate, IntegrateOptions};
use crate::schedule::BetaSchedule;
use crate::stability::Case;

/// Largest Frobenius distance over the recorded times between one SGD
/// run and the ODE started from that run's measured initial state.
pub fn max_deviation(
    spec: &ExperimentSpec,
    case: Case,
    beta: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let schedule = BetaSchedule::constant(beta);
    let sgd = sgd_trajectory(spec, case, &schedule, n, seed)?;
    let opts = IntegrateOptions {
        dt: spec.dt,
        records: spec.records,
        step_doubling_check: false,
    };
    let ode = integrate(
        &sgd.states[0],
        &spec.ode_params(),
        &schedule,
        spec.t_end,
        &opts,
    )?;
    Ok(sgd
        .states
        .iter()
        .zip(&ode.states)
        .map(|(a, b)| a.frobenius_distance(b))
        .fold(0.0, f64::max))
}

/// Tables per case and β: `rate_check/<case>/<tag>_per_seed` with columns
/// `n, seed, max_dev`, and `rate_check/<case>/<tag>_summary` with columns
/// `n, mean_max_dev, std_max_dev, sem_max_dev`.
///
/// Metrics under `<case>/<tag>/`: `slope` (least squares of log mean
/// against log N), `slope_pooled` with `slope_ci_low`/`slope_ci_high`
/// (95%, fitted to every seed's log deviation) and `monotone` (1 if the
/// mean strictly decreases with N).
pub fn run_rate_check(spec: &ExperimentSpec) -> Result<RunResult> {
    spec.validate()?;
    let mut ns = spec.ns.clone();
    ns.sort_unstable();
    let mut jobs = Vec::new();
    for &case in &spec.cases {
        for &beta in &spec.betas {
            for &n in &ns {
                for &seed in &spec.seeds {
                    jobs.push((case, beta, n, seed));
                }
            }
        }
    }
    let devs: Vec<f64> = jobs
        .par_iter()
        .map(|&(case, beta, n, seed)| {
            max_deviation(spec, case, beta, n, seed)
                .map_err(|e| e.at(format!("case={case} beta={beta} n={n} seed={seed}")))
        })
        .collect::<Result<_>>()?;

    let mut result = RunResult::new(spec);
    let mut it = devs.into_iter();
    for &case in &spec.cases {
        for &beta in &spec.betas {
            let tag = schedule_tag(&BetaSchedule::constant(beta));
            let prefix = format!("rate_check/{case}/{tag}");
            let mut per_seed = Table::new(
                format!("{prefix}_per_seed"),
                vec!["n".into(), "seed".into(), "max_dev".into()],
            );
            let mut summary = Table::new(
                format!("{prefix}_summary"),
                ["n", "mean_max_dev", "std_max_dev", "sem_max_dev"]
                    .map(String::from)
                    .to_vec(),
            );
            let (mut lx, mut ly, mut px, mut py) = (vec![], vec![], vec![], vec![]);
            for &n in &ns {
                let d: Vec<f64> = (0..spec.seeds.len())
                    .map(|_| it.next().expect("job per seed"))
                    .collect();
                for (s, v) in spec.seeds.iter().zip(&d) {
                    per_seed.push(vec![
                        Cell::Num(n as f64),
                        Cell::Num(*s as f64),
                        Cell::Num(*v),
                    ]);
                    px.push((n as f64).ln());
                    py.push(v.ln());
                }
                let (m, sd) = (mean(&d), std_dev(&d));
                summary.push(vec![
                    Cell::Num(n as f64),
                    Cell::Num(m),
                    Cell::Num(sd),
                    Cell::Num(sd / (d.len() as f64).sqrt()),
                ]);
                lx.push((n as f64).ln());
                ly.push(m.ln());
            }
            let key = |q: &str| format!("{case}/{tag}/{q}");
            let monotone = ly.windows(2).all(|w| w[1] < w[0]);
            result
                .metrics
                .insert(key("monotone"), monotone as u8 as f64);
            // two sizes give a line but no interval
            let slope_means = if lx.len() == 2 {
                (ly[1] - ly[0]) / (lx[1] - lx[0])
            } else {
                linear_fit(&lx, &ly).map_or(f64::NAN, |f| f.slope)
            };
            result.metrics.insert(key("slope"), slope_means);
            if let Some(f) = linear_fit(&px, &py) {
                result.metrics.insert(key("slope_pooled"), f.slope);
                result.metrics.insert(key("slope_se"), f.slope_se);
                result.metrics.insert(key("slope_ci_low"), f.slope_ci.0);
                result.metrics.insert(key("slope_ci_high"), f.slope_ci.1);
            }
            result.tables.push(per_seed);
            result.tables.push(summary);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Scenario;

    #[test]
    fn deviation_shrinks_with_n() {
        let mut spec = ExperimentSpec::preset(Scenario::RateCheck);
        spec.ns = vec![50, 800];
        spec.seeds = vec![1, 2, 3];
        spec.t_end = 5.0;
        spec.records = 50;
        let r = run_rate_check(&spec).unwrap();
        assert_eq!(r.metric("matched/beta1/monotone"), Some(1.0));
        let t = r.table("rate_check/matched/beta1_summary").unwrap();
        assert_eq!(t.column("n").unwrap(), vec![50.0, 800.0]);
        assert_eq!(
            r.table("rate_check/matched/beta1_per_seed")
                .unwrap()
                .rows
                .len(),
            6
        );
    }
}
