//! Experiment configuration: presets, TOML files and `key=value` overrides.
//!
//! Precedence, lowest first: scenario preset, config file, overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macroscopic::{MacroState, OdeParams};
use crate::schedule::BetaSchedule;
use crate::sgd::{Hyperparams, InitSpec};
use crate::stability::Case;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// ODE and SGD ensembles over a β grid.
    Fig1,
    /// Steady-state ε_g from the closed forms and from long integration.
    Fig2,
    /// Convergence time of tanh annealing against γ.
    Fig3,
    /// Linear annealing next to tanh annealing.
    SuppLinear,
    /// SGD-to-ODE deviation against N.
    RateCheck,
    /// ODE and optional SGD runs with a user schedule.
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Fig1,
        Scenario::Fig2,
        Scenario::Fig3,
        Scenario::SuppLinear,
        Scenario::RateCheck,
        Scenario::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Fig1 => "fig1",
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::SuppLinear => "supp_linear",
            Scenario::RateCheck => "rate_check",
            Scenario::Custom => "custom",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == norm)
            .ok_or_else(|| Error::Parse(format!("unknown scenario '{s}'")))
    }
}

/// Everything needed to reproduce one scenario.
///
/// Learning rates are in units where one unit of rescaled time is `N`
/// SGD steps. `include_tau_squared = false` drops the O(τ²) noise terms,
/// giving the small-step dynamics whose fixed points are the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub cases: Vec<Case>,
    pub rho: f64,
    pub eta: f64,
    pub lambda: f64,
    pub tau_w: f64,
    pub tau_v: f64,
    pub tau_d: f64,
    pub include_tau_squared: bool,
    /// RK4 step; omitted means `0.01 / τ_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Horizon of SGD runs and of ODE runs that are compared with them.
    /// For fig2 it caps the steady-state integration.
    pub t_end: f64,
    /// Longer horizon for the fig1 and custom ODE curves, on the same
    /// recording interval as the SGD runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode_t_end: Option<f64>,
    /// Recording intervals over `t_end`. For SGD runs `t_end · N` must be
    /// a multiple of it.
    pub records: usize,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Ceiling for linear annealing.
    pub beta_cap: f64,
    /// System sizes for rate_check.
    pub ns: Vec<usize>,
    /// System size for fig1 and custom SGD runs.
    pub n: usize,
    pub seeds: Vec<u64>,
    /// Convergence band above the steady-state ε_g.
    pub delta: f64,
    /// `‖F‖_∞` below which a fig2 integration counts as converged.
    pub steady_tol: f64,
    pub out_dir: PathBuf,
    pub init: InitSpec,
    /// Replaces the constant-β grid in the custom scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<BetaSchedule>,
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// `lo, lo + step, ...` up to `hi` inclusive, rounded to 12 decimals so
/// grid values print cleanly.
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((lo + step * k as f64) * 1e12).round() / 1e12)
        .collect()
}

impl ExperimentSpec {
    /// Defaults for a scenario.
    ///
    /// | scenario | case | τ | τ² terms | horizon | notes |
    /// |---|---|---|---|---|---|
    /// | fig1 | both | 0.01 | yes | SGD 2000, ODE 40000 | N = 500, seeds 1..=5 |
    /// | fig2 | both | 1 | no | up to 40000 | dt = 0.1, β = 0.1, 0.25, ..., 3.1 |
    /// | fig3 | matched | 1 | no | 1000 | 31 γ from 0.01 to 10, init scale 0.5, overlap 0.01 |
    /// | supp_linear | matched | 1 | no | 1000 | as fig3 |
    /// | rate_check | matched | 0.2 | yes | 50 | N ∈ {250, 500, 1000, 2000}, init scale 0.3, overlap 0.5 |
    /// | custom | matched | 0.01 | yes | 100 | ODE only unless seeds are given |
    pub fn preset(scenario: Scenario) -> Self {
        let base = ExperimentSpec {
            scenario,
            cases: vec![Case::Matched, Case::Mismatched],
            rho: 1.0,
            eta: 1.0,
            lambda: 0.0,
            tau_w: 0.01,
            tau_v: 0.01,
            tau_d: 0.01,
            include_tau_squared: true,
            dt: None,
            t_end: 2000.0,
            ode_t_end: None,
            records: 200,
            betas: vec![0.2, 0.5, 1.0, 1.5, 2.0, 2.5],
            gammas: log_grid(0.01, 10.0, 31),
            beta_cap: 1.0,
            ns: vec![250, 500, 1000, 2000],
            n: 500,
            seeds: (1..=5).collect(),
            delta: 1e-3,
            steady_tol: 1e-12,
            out_dir: PathBuf::from("out"),
            init: InitSpec::default(),
            schedule: None,
        };
        let unit_tau = |s: ExperimentSpec| ExperimentSpec {
            tau_w: 1.0,
            tau_v: 1.0,
            tau_d: 1.0,
            include_tau_squared: false,
            ..s
        };
        match scenario {
            Scenario::Fig1 => ExperimentSpec {
                ode_t_end: Some(40000.0),
                ..base
            },
            Scenario::Fig2 => unit_tau(ExperimentSpec {
                dt: Some(0.1),
                t_end: 40000.0,
                records: 1,
                betas: linear_grid(0.1, 3.1, 0.15),
                seeds: vec![],
                ..base
            }),
            Scenario::Fig3 | Scenario::SuppLinear => unit_tau(ExperimentSpec {
                cases: vec![Case::Matched],
                t_end: 1000.0,
                records: 10000,
                betas: vec![1.0],
                seeds: vec![],
                init: InitSpec::new(0.5, 0.01),
                ..base
            }),
            Scenario::RateCheck => ExperimentSpec {
                cases: vec![Case::Matched],
                tau_w: 0.2,
                tau_v: 0.2,
                tau_d: 0.2,
                t_end: 50.0,
                records: 250,
                betas: vec![1.0],
                init: InitSpec::new(0.3, 0.5),
                ..base
            },
            Scenario::Custom => ExperimentSpec {
                cases: vec![Case::Matched],
                t_end: 100.0,
                records: 100,
                betas: vec![1.0],
                seeds: vec![],
                ..base
            },
        }
    }

    /// Parses a config file body. The `scenario` key selects the preset
    /// that supplies every key the file leaves out.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let scenario = match table.get("scenario") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("scenario must be a string".into())),
            None => return Err(Error::Config("config is missing the scenario key".into())),
        };
        let mut merged = Self::preset(scenario).to_table()?;
        merge(&mut merged, table);
        Self::from_table(merged)
    }

    /// As [`from_toml_str`](Self::from_toml_str) for a caller that already
    /// knows the scenario: a missing `scenario` key defaults to it and a
    /// different one is an error.
    pub fn from_toml_str_for(text: &str, scenario: Scenario) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        match table.get("scenario") {
            None => {
                table.insert("scenario".into(), toml::Value::String(scenario.to_string()));
            }
            Some(toml::Value::String(s)) if s.parse::<Scenario>()? == scenario => {}
            Some(other) => {
                return Err(Error::Config(format!(
                    "config is for scenario {other}, expected {scenario}"
                )));
            }
        }
        let text = toml::to_string(&table).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Parse(e.to_string()))
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let spec: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Applies `key=value`, where `key` may be dotted (`init.scale=0.3`) and
    /// `value` is a TOML value. Bare words are taken as strings and a scalar
    /// given for a list key becomes a one-element list.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let mut value = parse_value(raw);
        let mut table = self.to_table()?;
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts
            .pop()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::Config("empty key".into()))?;
        let mut cur = &mut table;
        for p in parts {
            cur = match cur
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
            {
                toml::Value::Table(t) => t,
                _ => return Err(Error::Config(format!("'{p}' in '{key}' is not a table"))),
            };
        }
        if matches!(cur.get(last), Some(toml::Value::Array(_))) && !value.is_array() {
            value = toml::Value::Array(vec![value]);
        }
        cur.insert(last.to_string(), value);
        *self = Self::from_table(table).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("override '{key}': {m}")),
            other => other,
        })?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("rho", self.rho),
            ("eta", self.eta),
            ("tau_w", self.tau_w),
            ("tau_v", self.tau_v),
            ("tau_d", self.tau_d),
            ("t_end", self.t_end),
            ("delta", self.delta),
            ("steady_tol", self.steady_tol),
            ("beta_cap", self.beta_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if let Some(t) = self.ode_t_end {
            if !(t >= self.t_end) {
                return bad(format!(
                    "ode_t_end = {t} is shorter than t_end = {}",
                    self.t_end
                ));
            }
        }
        if self.records == 0 {
            return bad("records must be at least 1".into());
        }
        if self.cases.is_empty() {
            return bad("cases must not be empty".into());
        }
        self.init.validate()?;
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        let needs_betas = !matches!(self.scenario, Scenario::Fig3 | Scenario::SuppLinear)
            && !(self.scenario == Scenario::Custom && self.schedule.is_some());
        if needs_betas && self.betas.is_empty() {
            return bad("betas must not be empty".into());
        }
        if self.betas.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return bad("betas must be finite and nonnegative".into());
        }
        match self.scenario {
            Scenario::Fig3 | Scenario::SuppLinear => {
                if self.gammas.is_empty()
                    || self.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite()))
                {
                    return bad("gammas must be a nonempty list of positive values".into());
                }
            }
            Scenario::Fig1 => {
                if self.seeds.is_empty() {
                    return bad("fig1 needs at least one seed".into());
                }
            }
            Scenario::RateCheck => {
                if self.ns.len() < 2 || self.ns.contains(&0) {
                    return bad("rate_check needs at least two positive system sizes".into());
                }
                if self.seeds.len() < 2 {
                    return bad("rate_check needs at least two seeds".into());
                }
            }
            _ => {}
        }
        if self.scenario == Scenario::Fig2 && self.betas.contains(&0.0) {
            return bad(
                "fig2 needs beta > 0: at beta = 0 the posterior variance reaches zero".into(),
            );
        }
        Ok(())
    }

    pub fn hyperparams(&self, beta: f64) -> Hyperparams {
        Hyperparams {
            beta,
            lambda: self.lambda,
            tau_w: self.tau_w,
            tau_v: self.tau_v,
            tau_d: self.tau_d,
        }
    }

    pub fn ode_params(&self) -> OdeParams {
        let mut p = OdeParams::new(self.rho, self.eta, &self.hyperparams(1.0));
        p.include_tau_squared = self.include_tau_squared;
        p
    }

    /// The `N → ∞` initial order parameters for a case.
    pub fn initial_state(&self, case: Case) -> MacroState {
        MacroState::from_init(case.layout(), &self.init)
    }

    /// The schedules swept by fig1 and custom: the user schedule if set,
    /// otherwise one constant schedule per β.
    pub fn schedules(&self) -> Vec<BetaSchedule> {
        match (self.scenario, self.schedule) {
            (Scenario::Custom, Some(s)) => vec![s],
            _ => self
                .betas
                .iter()
                .map(|&b| BetaSchedule::constant(b))
                .collect(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            // init merges key by key; a schedule is replaced as a whole
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "schedule" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
