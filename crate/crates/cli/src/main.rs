//! `lvae`: command-line front end for lvae-dynamics.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lvae_dynamics::harness::{self, ExperimentSpec, FixedPointsDoc, RunResult, Scenario, Table};
use lvae_dynamics::macroscopic::{integrate, IntegrateOptions, Layout, MacroState};
use lvae_dynamics::schedule::BetaSchedule;
use lvae_dynamics::stability::{stability_exchanges, stability_sweep, Case};
use lvae_dynamics::Error;

const TRAJECTORY_SCHEMA: &str = "\
Trajectory CSV columns: t, beta, eps_g, then the order parameters
  m_i_l (i = latent, l = feature), d_i_l, Q_i_j and E_i_j (i <= j),
  R_i_j, D_i, all 1-based. Matched: 6 order parameters; mismatched: 16.
Numbers are written at full double precision (shortest round-trip form).";

const PRECEDENCE: &str = "\
Configuration precedence, lowest first: scenario preset, --config file,
--set KEY=VALUE overrides (in order), then dedicated flags such as --seed
and --out. Unknown keys are rejected. The effective configuration is
echoed under [spec] in <out>/<scenario>/manifest.toml.";

const EXIT_CODES: &str = "\
Exit status: 0 success, 1 i/o failure, 2 invalid configuration or usage,
3 numerical failure. Errors are printed to stderr as one JSON line
{\"error\": <kind>, \"message\": <text>}.";

#[derive(Parser)]
#[command(
    name = "lvae",
    version,
    about = "Online SGD, order-parameter ODEs and fixed-point analysis for linear VAEs",
    after_long_help = EXIT_CODES
)]
struct Cli {
    /// Output root; overrides out_dir from the configuration.
    #[arg(long, global = true, env = "LVAE_OUT", value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for grid points and seeds [default: all cores].
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Print metrics and notes to stderr; repeat for progress lines.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SpecArgs {
    /// TOML configuration; keys it omits come from the scenario preset.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set init.scale=0.3 or
    /// --set betas=[0.5,1.0]. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// First seed; replaces the seed list by SEED, SEED+1, ... of the same
    /// length (length 1 if the list was empty).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Matched,
    Mismatched,
}

impl From<CaseArg> for Case {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Matched => Case::Matched,
            CaseArg::Mismatched => Case::Mismatched,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
    SuppLinear,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded SGD runs with their ODE reference (custom scenario).
    #[command(after_long_help = format!(
        "Preset: custom scenario, matched case, beta = 1, tau = 0.01, N = 500, \
         t_end = 100, 100 records, seed 1.\n\
         Writes <out>/custom/<case>/ode_<tag>.csv, sgd_<tag>_seed<s>.csv, \
         sgd_<tag>_mean.csv and sgd_<tag>_std.csv, where <tag> is beta<value> \
         or the schedule label.\n\n{TRAJECTORY_SCHEMA}\n\n{PRECEDENCE}"))]
    SimulateSgd {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum)]
        case: Option<CaseArg>,
        #[arg(long)]
        beta: Option<f64>,
        /// Input dimension N.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Integrate the order-parameter ODE.
    #[command(after_long_help = format!(
        "Without --from-fixed-point: custom scenario preset (matched, beta = 1, \
         tau = 0.01 with the O(tau^2) terms, t_end = 100, dt = 0.01/tau), written to \
         <out>/custom/<case>/ode_<tag>.csv.\n\
         With --from-fixed-point FILE: starts from entry --index of a document \
         written by `fixed-points` and integrates the small-step dynamics at its \
         beta, rho and eta; written to <out>/integrate_ode/<case>/<kind>_<index>.csv.\n\n\
         {TRAJECTORY_SCHEMA}\n\n{PRECEDENCE}"))]
    IntegrateOde {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum)]
        case: Option<CaseArg>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        /// JSON document produced by `fixed-points`.
        #[arg(long, value_name = "FILE")]
        from_fixed_point: Option<PathBuf>,
        /// Entry of the document to start from.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Closed-form fixed points with their Jacobian spectra, as JSON.
    #[command(after_long_help = "\
Prints a JSON document to stdout and writes it to
<out>/fixed_points/<case>/beta<b>_rho<r>_eta<e>.json. Fields: case, beta,
rho, eta, fixed_points[] with kind (collapsed|learnable|overfitting),
branch, columns, point (values in column order), eigenvalues ([re, im]
pairs, decreasing real part, per unit learning rate), max_re_eig,
verdict (stable|marginal|unstable) and eps_g.")]
    FixedPoints {
        #[arg(long, value_enum, default_value = "matched")]
        case: CaseArg,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Stability of every fixed-point family along a beta grid.
    #[command(after_long_help = "\
Writes <out>/stability_sweep/<case>/rho<r>_eta<e>.csv with columns
beta, kind, max_re_eig, verdict (one row per family and beta; branches
of a family share a spectrum). Prints a JSON summary with the CSV path
and the beta values where the stable family changes.")]
    StabilitySweep {
        #[arg(long, value_enum, default_value = "matched")]
        case: CaseArg,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 0.05)]
        beta_min: f64,
        #[arg(long, default_value_t = 3.0)]
        beta_max: f64,
        #[arg(long, default_value_t = 0.05)]
        beta_step: f64,
    },
    /// Convergence time against the annealing rate gamma.
    #[command(after_long_help = format!(
        "Runs the fig3 preset (matched, rho = eta = 1, tau = 1, small-step \
         dynamics, 31 log-spaced gamma from 0.01 to 10, t_end = 1000, init scale 0.5, \
         overlap 0.01, delta = 1e-3); with --linear the supp_linear preset, which adds \
         linear annealing capped at beta_cap = 1.\n\
         Writes <out>/<scenario>/<case>/sweep.csv with columns gamma, \
         below_threshold, t_conv_<f>, converged_<f>, ratio_<f> for f in tanh \
         (and linear), plus rel_gap with --linear; t_conv is NaN when a run never \
         converges. Also constant.csv and <f>_opt.csv trajectories.\n\n\
         {TRAJECTORY_SCHEMA}\n\n{PRECEDENCE}"))]
    AnnealSweep {
        #[command(flatten)]
        spec: SpecArgs,
        /// Add linear annealing (supp_linear scenario).
        #[arg(long)]
        linear: bool,
    },
    /// Deviation of SGD from the ODE against system size.
    #[command(after_long_help = format!(
        "Runs the rate_check preset: matched, beta = 1, tau = 0.2 with the O(tau^2) \
         terms, t_end = 50, 250 records, N in 250, 500, 1000, 2000, seeds 1..=5, init \
         scale 0.3, overlap 0.5.\n\
         Writes <out>/rate_check/<case>/beta<b>_per_seed.csv (n, seed, max_dev) and \
         beta<b>_summary.csv (n, mean_max_dev, std_max_dev, sem_max_dev). max_dev \
         is the largest Frobenius distance over recorded times between the measured \
         order parameters and the ODE started from the same measured initial state. \
         The manifest holds the log-log slope and its 95% interval.\n\n{PRECEDENCE}"))]
    VerifyRate {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Regenerate the data behind a figure.
    #[command(after_long_help = format!(
        "fig1: both cases, beta in 0.2, 0.5, 1, 1.5, 2, 2.5, tau = 0.01, N = 500, \
         seeds 1..=5, SGD to t = 2000 and ODE to t = 40000 on a common recording \
         interval of 10. Trajectory CSVs as for simulate-sgd under <out>/fig1/<case>/.\n\
         fig2: both cases, beta = 0.1, 0.25, ..., 3.1, small-step dynamics integrated \
         until |F| < 1e-12 or t = 40000. <out>/fig2/<case>/steady.csv with columns beta, \
         eps_closed, eps_ode, abs_gap, kind_closed, residual, converged, t_stop and \
         the final order parameters.\n\
         fig3, supp-linear: as anneal-sweep.\n\n{TRAJECTORY_SCHEMA}\n\n{PRECEDENCE}"))]
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        spec: SpecArgs,
    },
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

struct Ctx {
    out: Option<PathBuf>,
    verbose: u8,
}

impl Ctx {
    fn out_root(&self, spec: Option<&ExperimentSpec>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| spec.map(|s| s.out_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn load_spec(
    scenario: Scenario,
    args: &SpecArgs,
    extra: &[String],
    ctx: &Ctx,
) -> Result<ExperimentSpec, Error> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            ExperimentSpec::from_toml_str_for(&text, scenario)?
        }
        None => ExperimentSpec::preset(scenario),
    };
    for kv in args.set.iter().chain(extra) {
        spec.apply_override(kv)?;
    }
    if let Some(seed) = args.seed {
        let count = spec.seeds.len().max(1) as u64;
        spec.seeds = (seed..seed + count).collect();
    }
    if let Some(out) = &ctx.out {
        spec.out_dir = out.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn finish(result: &RunResult, ctx: &Ctx) -> Result<(), Error> {
    let manifest = result.write(&ctx.out_root(Some(&result.spec)))?;
    if ctx.verbose > 0 {
        for (k, v) in &result.metrics {
            eprintln!("{k} = {v}");
        }
        for n in &result.notes {
            eprintln!("note: {n}");
        }
    }
    let summary = serde_json::json!({
        "scenario": result.spec.scenario.as_str(),
        "manifest": manifest,
        "files": result.tables.len(),
        "metrics": result.metrics,
        "notes": result.notes,
    });
    emit(summary);
    Ok(())
}

fn run_scenario(spec: ExperimentSpec, ctx: &Ctx) -> Result<(), Error> {
    if ctx.verbose > 1 {
        eprintln!(
            "running {} with {} thread(s)",
            spec.scenario,
            rayon::current_num_threads()
        );
    }
    let result = harness::run(&spec)?;
    finish(&result, ctx)
}

fn opt_set(key: &str, v: Option<impl ToString>) -> Option<String> {
    v.map(|v| format!("{key}={}", v.to_string()))
}

fn case_name(c: Option<CaseArg>) -> Option<&'static str> {
    c.map(|c| Case::from(c).as_str())
}

fn integrate_from_fixed_point(
    path: &Path,
    index: usize,
    args: &SpecArgs,
    t_end: Option<f64>,
    ctx: &Ctx,
) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let doc: FixedPointsDoc = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let fp = doc
        .fixed_points
        .get(index)
        .ok_or_else(|| Error::Config(format!("{} has no entry {index}", path.display())))?;
    let mut extra = vec![
        format!("rho={}", doc.rho),
        format!("eta={}", doc.eta),
        "include_tau_squared=false".into(),
        "lambda=0".into(),
    ];
    extra.extend(opt_set("t_end", t_end));
    let spec = load_spec(Scenario::Custom, args, &extra, ctx)?;
    let layout: Layout = doc.case.layout();
    let m0 = MacroState::unflatten(layout, &fp.point)?;
    let opts = IntegrateOptions {
        dt: spec.dt,
        records: spec.records,
        step_doubling_check: false,
    };
    let traj = integrate(
        &m0,
        &spec.ode_params(),
        &BetaSchedule::constant(doc.beta),
        spec.t_end,
        &opts,
    )?;
    let name = format!("integrate_ode/{}/{}_{index}", doc.case, fp.kind.as_str());
    let table = Table::from_trajectory(name.clone(), &traj);
    let file = ctx.out_root(Some(&spec)).join(format!("{name}.csv"));
    table.write_csv(&file)?;
    let drift = traj
        .states
        .iter()
        .map(|s| s.frobenius_distance(&m0))
        .fold(0.0, f64::max);
    emit(serde_json::json!({ "csv": file, "max_drift": drift, "final_eps_g": traj.final_eps_g() }));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let ctx = Ctx {
        out: cli.out,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::SimulateSgd {
            spec,
            case,
            beta,
            n,
            t_end,
        } => {
            let mut extra: Vec<String> = [
                opt_set("cases", case_name(case)),
                opt_set("betas", beta),
                opt_set("n", n),
                opt_set("t_end", t_end),
            ]
            .into_iter()
            .flatten()
            .collect();
            let mut s = load_spec(Scenario::Custom, &spec, &extra, &ctx)?;
            if s.seeds.is_empty() {
                extra.push(format!("seeds=[{}]", spec.seed.unwrap_or(1)));
                s = load_spec(Scenario::Custom, &spec, &extra, &ctx)?;
            }
            run_scenario(s, &ctx)
        }
        Command::IntegrateOde {
            spec,
            case,
            beta,
            t_end,
            from_fixed_point,
            index,
        } => {
            if let Some(path) = from_fixed_point {
                return integrate_from_fixed_point(&path, index, &spec, t_end, &ctx);
            }
            let mut extra: Vec<String> = [
                opt_set("cases", case_name(case)),
                opt_set("betas", beta),
                opt_set("t_end", t_end),
            ]
            .into_iter()
            .flatten()
            .collect();
            extra.push("seeds=[]".into());
            run_scenario(load_spec(Scenario::Custom, &spec, &extra, &ctx)?, &ctx)
        }
        Command::FixedPoints {
            case,
            beta,
            rho,
            eta,
        } => {
            let case = Case::from(case);
            let doc = harness::fixed_points_doc(case, beta, rho, eta)?;
            let name = format!(
                "fixed_points/{case}/beta{}_rho{}_eta{}.json",
                harness::format_f64(beta),
                harness::format_f64(rho),
                harness::format_f64(eta)
            );
            harness::write_json(&doc, &ctx.out_root(None).join(name))?;
            let text =
                serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))?;
            emit(text);
            Ok(())
        }
        Command::StabilitySweep {
            case,
            rho,
            eta,
            beta_min,
            beta_max,
            beta_step,
        } => {
            if !(beta_step > 0.0 && beta_max >= beta_min && beta_min >= 0.0) {
                return Err(Error::Config(
                    "need 0 <= beta_min <= beta_max and beta_step > 0".into(),
                ));
            }
            let case = Case::from(case);
            let betas = harness::linear_grid(beta_min, beta_max, beta_step);
            let rows = stability_sweep(case, rho, eta, &betas)?;
            let table = harness::sweep_table(case, rho, eta, &rows);
            let file = ctx.out_root(None).join(format!("{}.csv", table.name));
            table.write_csv(&file)?;
            let exchanges: Vec<_> = stability_exchanges(&rows)
                .iter()
                .map(|x| serde_json::json!({ "from": x.from.as_str(), "to": x.to.as_str(), "beta": x.beta }))
                .collect();
            emit(serde_json::json!({ "csv": file, "exchanges": exchanges }));
            Ok(())
        }
        Command::AnnealSweep { spec, linear } => {
            let sc = if linear {
                Scenario::SuppLinear
            } else {
                Scenario::Fig3
            };
            run_scenario(load_spec(sc, &spec, &[], &ctx)?, &ctx)
        }
        Command::VerifyRate { spec } => {
            run_scenario(load_spec(Scenario::RateCheck, &spec, &[], &ctx)?, &ctx)
        }
        Command::Reproduce { figure, spec } => {
            let sc = match figure {
                Figure::Fig1 => Scenario::Fig1,
                Figure::Fig2 => Scenario::Fig2,
                Figure::Fig3 => Scenario::Fig3,
                Figure::SuppLinear => Scenario::SuppLinear,
            };
            run_scenario(load_spec(sc, &spec, &[], &ctx)?, &ctx)
        }
    }
}

fn error_kind(e: &Error) -> (&'static str, u8) {
    match e {
        Error::AtPoint { source, .. } => error_kind(source),
        Error::Io { .. } => ("io", 1),
        e if e.is_config() => ("config", 2),
        _ => ("numerical", 3),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!(
                "{}",
                serde_json::json!({ "error": "config", "message": e.to_string() })
            );
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            eprintln!(
                "{}",
                serde_json::json!({ "error": kind, "message": e.to_string() })
            );
            ExitCode::from(code)
        }
    }
}
