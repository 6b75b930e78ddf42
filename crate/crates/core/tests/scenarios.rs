use std::fs;

use lvae_dynamics::harness::{
    ensemble_tables, ode_trajectory, run, run_anneal, run_fig2, run_rate_check, sgd_trajectory,
    ExperimentSpec, Manifest, Scenario,
};
use lvae_dynamics::macroscopic::{integrate, IntegrateOptions, Trajectory};
use lvae_dynamics::schedule::BetaSchedule;
use lvae_dynamics::stability::Case;

fn fig1(t_end: f64, records: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::preset(Scenario::Fig1);
    spec.t_end = t_end;
    spec.ode_t_end = None;
    spec.records = records;
    spec
}

fn sgd_runs(spec: &ExperimentSpec, beta: f64) -> Vec<Trajectory> {
    spec.seeds
        .iter()
        .map(|&s| {
            sgd_trajectory(
                spec,
                Case::Matched,
                &BetaSchedule::constant(beta),
                spec.n,
                s,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn sgd_ensemble_envelopes_the_ode_at_optimal_beta() {
    let spec = fig1(1000.0, 50);
    let ode = ode_trajectory(&spec, Case::Matched, &BetaSchedule::constant(1.0)).unwrap();
    let (mean, std) = ensemble_tables("sgd", &sgd_runs(&spec, 1.0));
    let m = mean.column("eps_g").unwrap();
    let s = std.column("eps_g").unwrap();
    for k in 0..ode.len() {
        assert!(
            (m[k] - ode.eps_g[k]).abs() <= 2.0 * s[k],
            "t = {}: mean {} std {} ode {}",
            ode.times[k],
            m[k],
            s[k],
            ode.eps_g[k]
        );
    }
}

#[test]
fn large_beta_stays_collapsed_in_both_methods() {
    // the overlap decays on a time scale of several hundred
    let spec = fig1(2000.0, 20);
    let ode = ode_trajectory(&spec, Case::Matched, &BetaSchedule::constant(2.5)).unwrap();
    let runs = sgd_runs(&spec, 2.5);
    let half = ode.len() / 2;
    for k in half..ode.len() {
        assert!((ode.eps_g[k] - 1.0).abs() < 0.05);
        for r in &runs {
            assert!(
                (r.eps_g[k] - 1.0).abs() < 0.05,
                "t = {}: {}",
                r.times[k],
                r.eps_g[k]
            );
        }
    }
}

#[test]
fn small_beta_sgd_overfits_late() {
    let spec = fig1(2000.0, 100);
    let (mean, _) = ensemble_tables("sgd", &sgd_runs(&spec, 0.2));
    let e = mean.column("eps_g").unwrap();
    let (k_min, e_min) =
        e.iter().enumerate().fold(
            (0, f64::INFINITY),
            |a, (k, &v)| if v < a.1 { (k, v) } else { a },
        );
    assert!(k_min > 0 && k_min + 1 < e.len());
    assert!(*e.last().unwrap() > e_min);
}

#[test]
fn steady_state_examples() {
    let mut spec = ExperimentSpec::preset(Scenario::Fig2);
    spec.betas = vec![0.25, 0.55, 0.85, 2.5, 3.1];
    let r = run_fig2(&spec).unwrap();
    let col = |case: &str, c: &str| {
        r.table(&format!("fig2/{case}/steady"))
            .unwrap()
            .column(c)
            .unwrap()
    };
    let (mat, mis) = (
        col("matched", "eps_closed"),
        col("mismatched", "eps_closed"),
    );
    for (k, &beta) in spec.betas.iter().enumerate() {
        if beta < spec.eta {
            assert!((mis[k] - mat[k] - (spec.eta - beta)).abs() < 1e-12);
        }
        if beta > spec.rho + spec.eta {
            for case in ["matched", "mismatched"] {
                assert!((col(case, "eps_closed")[k] - spec.rho).abs() < 1e-4);
                assert!((col(case, "eps_ode")[k] - spec.rho).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn linear_and_tanh_annealing_compared() {
    let spec = ExperimentSpec::preset(Scenario::SuppLinear);
    let r = run_anneal(&spec).unwrap();
    let tanh = r.metric("matched/t_conv_opt_tanh").unwrap();
    let linear = r.metric("matched/t_conv_opt_linear").unwrap();
    assert!((tanh - linear).abs() <= 0.25 * tanh, "{tanh} vs {linear}");

    // one constant-β baseline serves both families
    let base = r.table("supp_linear/matched/constant").unwrap();
    let alone = integrate(
        &spec.initial_state(Case::Matched),
        &spec.ode_params(),
        &BetaSchedule::constant(1.0),
        spec.t_end,
        &IntegrateOptions {
            dt: spec.dt,
            records: spec.records,
            step_doubling_check: false,
        },
    )
    .unwrap();
    assert_eq!(base.column("eps_g").unwrap(), alone.eps_g);
}

#[test]
fn uncapped_linear_schedule_collapses() {
    let spec = ExperimentSpec::preset(Scenario::SuppLinear);
    let schedule = BetaSchedule::Linear {
        gamma: 1.0,
        cap: f64::INFINITY,
    };
    let traj = integrate(
        &spec.initial_state(Case::Matched),
        &spec.ode_params(),
        &schedule,
        60.0,
        &IntegrateOptions::default().with_records(60),
    )
    .unwrap();
    assert!(
        (traj.final_eps_g() - spec.rho).abs() < 1e-3,
        "{}",
        traj.final_eps_g()
    );
}

#[test]
fn more_seeds_narrow_the_slope_interval() {
    let mut spec = ExperimentSpec::preset(Scenario::RateCheck);
    spec.ns = vec![250, 500, 1000];
    spec.t_end = 20.0;
    spec.records = 100;
    let width = |seeds: u64| {
        let mut s = spec.clone();
        s.seeds = (1..=seeds).collect();
        let r = run_rate_check(&s).unwrap();
        r.metric("matched/beta1/slope_ci_high").unwrap()
            - r.metric("matched/beta1/slope_ci_low").unwrap()
    };
    let (few, many) = (width(3), width(6));
    assert!(many < few, "{many} vs {few}");
}

#[test]
fn manifest_reproduces_identical_csvs() {
    let mut spec = ExperimentSpec::preset(Scenario::Custom);
    spec.cases = vec![Case::Matched, Case::Mismatched];
    spec.betas = vec![0.5, 1.0];
    spec.seeds = vec![3, 4];
    spec.n = 100;
    spec.t_end = 20.0;
    spec.records = 20;
    let first = tempfile::tempdir().unwrap();
    let manifest = run(&spec).unwrap().write(first.path()).unwrap();

    let m = Manifest::read(&manifest).unwrap();
    assert_eq!(m.spec, spec);
    let second = tempfile::tempdir().unwrap();
    run(&m.spec).unwrap().write(second.path()).unwrap();
    assert!(!m.run.files.is_empty());
    for f in &m.run.files {
        let a = fs::read(first.path().join(f)).unwrap();
        let b = fs::read(second.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}
