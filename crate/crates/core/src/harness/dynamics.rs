//! Trajectories: ODE curves next to seed ensembles of SGD runs.

use rayon::prelude::*;

use super::output::{format_f64, Cell, RunResult, Table};
use super::spec::ExperimentSpec;
use super::stats::{mean, std_dev};
use crate::error::{Error, Result};
use crate::macroscopic::{integrate, IntegrateOptions, Trajectory};
use crate::schedule::BetaSchedule;
use crate::sgd::{init_micro, simulate, GenerativeConfig};
use crate::stability::Case;

/// File-name tag for a schedule, e.g. `beta0.5` or `tanh_gamma0.2`.
pub fn schedule_tag(s: &BetaSchedule) -> String {
    match s {
        BetaSchedule::Constant { beta } => format!("beta{}", format_f64(*beta)),
        other => other.label(),
    }
}

/// The scenario's ODE curve for one case and schedule.
///
/// Runs to `ode_t_end` (or `t_end`) on the recording interval
/// `t_end / records`, so the first `records + 1` rows line up with the
/// SGD records.
pub fn ode_trajectory(
    spec: &ExperimentSpec,
    case: Case,
    schedule: &BetaSchedule,
) -> Result<Trajectory> {
    let horizon = spec.ode_t_end.unwrap_or(spec.t_end);
    let interval = spec.t_end / spec.records as f64;
    let records = (horizon / interval).round() as usize;
    if ((records as f64) * interval - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Config(format!(
            "ode_t_end = {horizon} is not a multiple of the recording interval {interval}"
        )));
    }
    let opts = IntegrateOptions {
        dt: spec.dt,
        records,
        step_doubling_check: false,
    };
    integrate(
        &spec.initial_state(case),
        &spec.ode_params(),
        schedule,
        horizon,
        &opts,
    )
}

/// One SGD run of size `n`. The seed fixes the teacher, the initial
/// weights and the sample stream, in that order.
pub fn sgd_trajectory(
    spec: &ExperimentSpec,
    case: Case,
    schedule: &BetaSchedule,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    let layout = case.layout();
    let mut rng = crate::rng::seeded(seed);
    let cfg = GenerativeConfig::random(n, layout.m_star, spec.rho, spec.eta, &mut rng)?;
    let hyper = spec.hyperparams(schedule.beta_at(0.0));
    let init = init_micro(&cfg, layout.m, hyper, &spec.init, &mut rng)?;
    simulate(&cfg, init, schedule, spec.t_end, spec.records, &mut rng)
}

/// Per-column mean and sample standard deviation across trajectories of
/// equal length.
pub fn ensemble_tables(name: &str, runs: &[Trajectory]) -> (Table, Table) {
    let header = runs[0].header();
    let mut mean_t = Table::new(format!("{name}_mean"), header.clone());
    let mut std_t = Table::new(format!("{name}_std"), header);
    for k in 0..runs[0].len() {
        let rows: Vec<Vec<f64>> = runs.iter().map(|r| r.row(k)).collect();
        let width = rows[0].len();
        let col = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
        mean_t.push((0..width).map(|j| Cell::Num(mean(&col(j)))).collect());
        std_t.push((0..width).map(|j| Cell::Num(std_dev(&col(j)))).collect());
    }
    // time and β are shared, keep them in the spread table too
    for (s, m) in std_t.rows.iter_mut().zip(&mean_t.rows) {
        s[0] = m[0].clone();
        s[1] = m[1].clone();
    }
    (mean_t, std_t)
}

enum Job {
    Ode(Case, usize),
    Sgd(Case, usize, u64),
}

/// Shared driver of the fig1 and custom scenarios.
///
/// Tables, for every case and schedule tag:
/// `ode_<tag>`, `sgd_<tag>_seed<s>`, `sgd_<tag>_mean`, `sgd_<tag>_std`,
/// all with columns `t, beta, eps_g, m_i_l, d_i_l, Q_i_j, E_i_j, R_i_j, D_i`.
pub fn run_dynamics(spec: &ExperimentSpec) -> Result<RunResult> {
    spec.validate()?;
    let scn = spec.scenario.as_str();
    let schedules = spec.schedules();
    let mut jobs = Vec::new();
    for &case in &spec.cases {
        for i in 0..schedules.len() {
            jobs.push(Job::Ode(case, i));
            for &seed in &spec.seeds {
                jobs.push(Job::Sgd(case, i, seed));
            }
        }
    }
    let trajs: Vec<Trajectory> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Ode(case, i) => ode_trajectory(spec, case, &schedules[i])
                .map_err(|e| e.at(format!("case={case} {} ode", schedule_tag(&schedules[i])))),
            Job::Sgd(case, i, seed) => sgd_trajectory(spec, case, &schedules[i], spec.n, seed)
                .map_err(|e| {
                    e.at(format!(
                        "case={case} {} seed={seed}",
                        schedule_tag(&schedules[i])
                    ))
                }),
        })
        .collect::<Result<_>>()?;

    let mut result = RunResult::new(spec);
    let mut it = trajs.into_iter();
    for &case in &spec.cases {
        for s in &schedules {
            let tag = schedule_tag(s);
            let prefix = format!("{scn}/{case}");
            let ode = it.next().expect("one ode job per grid point");
            let sgd: Vec<Trajectory> = (0..spec.seeds.len())
                .map(|_| it.next().expect("seed job"))
                .collect();
            result
                .tables
                .push(Table::from_trajectory(format!("{prefix}/ode_{tag}"), &ode));
            let key = |q: &str| format!("{case}/{tag}/{q}");
            result
                .metrics
                .insert(key("ode_final_eps_g"), ode.final_eps_g());
            if sgd.is_empty() {
                continue;
            }
            for (seed, tr) in spec.seeds.iter().zip(&sgd) {
                result.tables.push(Table::from_trajectory(
                    format!("{prefix}/sgd_{tag}_seed{seed}"),
                    tr,
                ));
            }
            let (mean_t, std_t) = ensemble_tables(&format!("{prefix}/sgd_{tag}"), &sgd);
            let m = mean_t.column("eps_g").expect("eps_g column");
            let sd = std_t.column("eps_g").expect("eps_g column");
            let mut max_dev = 0.0f64;
            let mut max_z = 0.0f64;
            for k in 0..m.len() {
                let dev = (m[k] - ode.eps_g[k]).abs();
                max_dev = max_dev.max(dev);
                if sd[k] > 0.0 {
                    max_z = max_z.max(dev / sd[k]);
                }
            }
            result
                .metrics
                .insert(key("sgd_final_eps_g_mean"), *m.last().expect("rows"));
            result
                .metrics
                .insert(key("sgd_final_eps_g_std"), *sd.last().expect("rows"));
            result.metrics.insert(key("max_abs_dev_eps_g"), max_dev);
            result.metrics.insert(key("max_dev_over_std_eps_g"), max_z);
            result.tables.push(mean_t);
            result.tables.push(std_t);
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Scenario;

    fn small_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::preset(Scenario::Fig1);
        spec.n = 40;
        spec.t_end = 5.0;
        spec.ode_t_end = Some(10.0);
        spec.records = 10;
        spec.tau_w = 0.2;
        spec.tau_v = 0.2;
        spec.tau_d = 0.2;
        spec.betas = vec![0.5, 2.5];
        spec.seeds = vec![3, 4, 5];
        spec
    }

    #[test]
    fn tables_and_alignment() {
        let spec = small_spec();
        let r = run_dynamics(&spec).unwrap();
        // per case and beta: ode, 3 seeds, mean, std
        assert_eq!(r.tables.len(), 2 * 2 * 6);
        let ode = r.table("fig1/mismatched/ode_beta0.5").unwrap();
        assert_eq!(ode.rows.len(), 21);
        assert_eq!(ode.header.len(), 3 + 16);
        let mean_t = r.table("fig1/mismatched/sgd_beta0.5_mean").unwrap();
        assert_eq!(mean_t.rows.len(), 11);
        assert_eq!(
            mean_t.column("t").unwrap(),
            ode.column("t").unwrap()[..11].to_vec()
        );
    }

    #[test]
    fn aggregates_recompute_from_seeds() {
        let spec = small_spec();
        let r = run_dynamics(&spec).unwrap();
        let per_seed: Vec<Vec<f64>> = spec
            .seeds
            .iter()
            .map(|s| {
                r.table(&format!("fig1/matched/sgd_beta2.5_seed{s}"))
                    .unwrap()
                    .column("Q_1_1")
                    .unwrap()
            })
            .collect();
        let m = r
            .table("fig1/matched/sgd_beta2.5_mean")
            .unwrap()
            .column("Q_1_1")
            .unwrap();
        let sd = r
            .table("fig1/matched/sgd_beta2.5_std")
            .unwrap()
            .column("Q_1_1")
            .unwrap();
        for k in 0..m.len() {
            let xs: Vec<f64> = per_seed.iter().map(|c| c[k]).collect();
            assert_eq!(m[k], mean(&xs));
            assert_eq!(sd[k], std_dev(&xs));
        }
    }

    #[test]
    fn ode_curve_equals_standalone_integration() {
        let spec = small_spec();
        let r = run_dynamics(&spec).unwrap();
        let opts = IntegrateOptions::default().with_records(20);
        let alone = integrate(
            &spec.initial_state(Case::Matched),
            &spec.ode_params(),
            &BetaSchedule::constant(0.5),
            10.0,
            &opts,
        )
        .unwrap();
        assert_eq!(
            r.table("fig1/matched/ode_beta0.5").unwrap(),
            &Table::from_trajectory("fig1/matched/ode_beta0.5", &alone)
        );
    }

    #[test]
    fn deterministic() {
        let spec = small_spec();
        let a = run_dynamics(&spec).unwrap();
        let b = run_dynamics(&spec).unwrap();
        assert_eq!(a.tables, b.tables);
    }

    #[test]
    fn failure_names_grid_point() {
        let mut spec = small_spec();
        spec.records = 7;
        let e = run_dynamics(&spec).unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("seed="), "{e}");
    }
}
