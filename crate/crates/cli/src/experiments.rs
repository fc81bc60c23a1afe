//! One config struct per subcommand. Each is both a clap argument group and
//! the JSON schema accepted by `run`.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use robust_cp::changeplane::{
    fit_plane, fit_sparse_plane, parse_search, plane_rates, plane_rows_csv, Design, PenaltyConfig,
    PlaneExperiment, PlaneFit,
};
use robust_cp::criterion::curvature_margin;
use robust_cp::limitlaw::{
    cpp_samples, loglog_slope, quantile_table, table_intensity, tail_profile, upper_decade_grid, CppConfig,
    StepLaw,
};
use robust_cp::parallel::{rate_summary, D0Policy, ParallelConfig};
use robust_cp::stump::{fit_known_levels_with, fit_stump_with, ArgminConvention, FitOptions, StumpModel};
use robust_cp::table::format_sig;
use robust_cp::{CovariateLaw, CriterionSpec, ErrorLaw, SeedStream};

use crate::dataset;

/// Monte Carlo draws for the limit-law commands.
pub const DESK_REPS: usize = 100_000;
/// Draws under `--paper-budget`.
pub const PAPER_REPS: usize = 1_000_000;
pub const PARALLEL_REPS: usize = 50;
pub const PLANE_REPS: usize = 20;

const DIGITS: usize = 8;

pub struct Report {
    pub csv: String,
    pub summary: Vec<String>,
}

pub trait Experiment {
    fn command(&self) -> &'static str;
    fn seed(&self) -> u64;
    fn output(&self) -> Option<&Path>;
    fn set_output(&mut self, path: PathBuf);
    /// Fills in the replication count left open on the command line.
    fn resolve(&mut self, paper_budget: bool);
    /// Errors are prefixed with the offending field.
    fn validate(&self) -> Result<(), String>;
    fn run(&self) -> Result<Report, String>;
    fn params(&self) -> Value;
}

macro_rules! plumbing {
    ($name:literal) => {
        fn command(&self) -> &'static str {
            $name
        }
        fn seed(&self) -> u64 {
            self.seed
        }
        fn output(&self) -> Option<&Path> {
            self.output.as_deref()
        }
        fn set_output(&mut self, path: PathBuf) {
            self.output = Some(path);
        }
        fn params(&self) -> Value {
            serde_json::to_value(self).expect("config serializes to JSON")
        }
    };
}

/// The config as a single JSON line, with its command.
pub fn echo(exp: &dyn Experiment) -> String {
    let mut value = exp.params();
    if let Value::Object(map) = &mut value {
        map.insert("command".to_string(), Value::String(exp.command().to_string()));
    }
    value.to_string()
}

type Parser = fn(Value) -> Result<Box<dyn Experiment>, String>;

fn parser<T: Experiment + DeserializeOwned + 'static>(value: Value) -> Result<Box<dyn Experiment>, String> {
    serde_path_to_error::deserialize::<_, T>(value)
        .map(|c| Box::new(c) as Box<dyn Experiment>)
        .map_err(|e| format!("{}: {}", e.path(), e.inner()))
}

pub const COMMANDS: &[(&str, Parser)] = &[
    ("quantiles", parser::<Quantiles>),
    ("stump-fit", parser::<StumpFitCmd>),
    ("cpp-tails", parser::<CppTails>),
    ("parallel-rates", parser::<ParallelRates>),
    ("plane-fit", parser::<PlaneFitCmd>),
    ("sparse-plane", parser::<SparsePlane>),
    ("curvature-check", parser::<CurvatureCheck>),
];

pub fn parse_config(text: &str) -> Result<Box<dyn Experiment>, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let map = value.as_object_mut().ok_or("config must be a JSON object")?;
    let command = match map.remove("command") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("command: expected a string".to_string()),
        None => return Err("command: missing field".to_string()),
    };
    let (_, parse) = COMMANDS
        .iter()
        .find(|(name, _)| *name == command)
        .ok_or_else(|| {
            let names: Vec<&str> = COMMANDS.iter().map(|(n, _)| *n).collect();
            format!(
                "command: unknown command '{command}', expected one of {}",
                names.join(", ")
            )
        })?;
    parse(value)
}

fn check(ok: bool, field: &str, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(format!("{field}: {}", msg()))
    }
}

fn check_reps(reps: Option<usize>) -> Result<(), String> {
    check(reps.is_none_or(|r| r >= 1), "replications", || {
        "must be at least 1".to_string()
    })
}

fn check_nonempty<T>(v: &[T], field: &str) -> Result<(), String> {
    check(!v.is_empty(), field, || "must not be empty".to_string())
}

fn lib<T>(r: robust_cp::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn reps(r: Option<usize>) -> usize {
    r.expect("replications resolved before run")
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Quantiles {
    /// Jump size |beta0 - alpha0|
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value = "l1")]
    pub criterion: CriterionSpec,
    /// Error laws, comma separated (t<nu>, pt<gamma>, normal)
    #[arg(long, value_delimiter = ',', default_value = "t3,normal")]
    pub laws: Vec<ErrorLaw>,
    /// Limit-process draws per law [default: 100000]
    #[arg(long = "reps", visible_alias = "replications")]
    pub replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for Quantiles {
    fn default() -> Self {
        Quantiles {
            mu: 1.0,
            criterion: CriterionSpec::AbsoluteDeviation,
            laws: vec![ErrorLaw::StandardizedT { nu: 3.0 }, ErrorLaw::StandardNormal],
            replications: None,
            seed: 0,
            output: None,
        }
    }
}

impl Experiment for Quantiles {
    plumbing!("quantiles");

    fn resolve(&mut self, paper_budget: bool) {
        self.replications
            .get_or_insert(if paper_budget { PAPER_REPS } else { DESK_REPS });
    }

    fn validate(&self) -> Result<(), String> {
        check(self.mu != 0.0 && self.mu.is_finite(), "mu", || {
            format!("must be finite and nonzero, got {}", self.mu)
        })?;
        check_nonempty(&self.laws, "laws")?;
        check(
            self.replications.is_none_or(|r| r >= 10_000),
            "replications",
            || "quantile tables need at least 10000".to_string(),
        )?;
        for (i, law) in self.laws.iter().enumerate() {
            StepLaw::new(self.criterion, self.mu, *law).map_err(|e| format!("laws[{i}]: {e}"))?;
        }
        Ok(())
    }

    fn run(&self) -> Result<Report, String> {
        let table = lib(quantile_table(
            self.mu,
            self.criterion,
            &self.laws,
            reps(self.replications),
            self.seed,
        ))?;
        let cells: Vec<String> = table
            .rows
            .iter()
            .map(|(law, q)| format!("{law} q90={} q995={}", format_sig(q[0], 4), format_sig(q[4], 4)))
            .collect();
        Ok(Report {
            csv: table.csv_body(),
            summary: vec![format!(
                "quantiles: {} mu={} reps={}: {}",
                self.criterion,
                format_sig(self.mu, 6),
                table.replications,
                cells.join(", ")
            )],
        })
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StumpFitCmd {
    /// CSV with columns x,y; simulates from the model flags when absent
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "l1,huber:1,l2")]
    pub criteria: Vec<CriterionSpec>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub beta0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub d0: f64,
    #[arg(long, default_value = "t3")]
    pub law: ErrorLaw,
    #[arg(long, default_value = "uniform:-1,1")]
    pub covariate: CovariateLaw,
    /// Fix the levels at (0, 1) and fit only d
    #[arg(long)]
    pub known_levels: bool,
    #[arg(long, default_value = "mid")]
    pub convention: ArgminConvention,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for StumpFitCmd {
    fn default() -> Self {
        StumpFitCmd {
            input: None,
            criteria: vec![
                CriterionSpec::AbsoluteDeviation,
                CriterionSpec::Huber(1.0),
                CriterionSpec::SquaredError,
            ],
            n: 200,
            alpha0: 0.0,
            beta0: 1.0,
            d0: 0.0,
            law: ErrorLaw::StandardizedT { nu: 3.0 },
            covariate: CovariateLaw::Uniform { a: -1.0, b: 1.0 },
            known_levels: false,
            convention: ArgminConvention::Mid,
            seed: 0,
            output: None,
        }
    }
}

impl Experiment for StumpFitCmd {
    plumbing!("stump-fit");

    fn resolve(&mut self, _: bool) {}

    fn validate(&self) -> Result<(), String> {
        check_nonempty(&self.criteria, "criteria")?;
        if self.input.is_none() {
            check(self.n >= 2, "n", || format!("must be at least 2, got {}", self.n))?;
            StumpModel::new(self.alpha0, self.beta0, self.d0).map_err(|e| format!("beta0: {e}"))?;
            self.law.validate().map_err(|e| format!("law: {e}"))?;
        }
        Ok(())
    }

    fn run(&self) -> Result<Report, String> {
        let data = match &self.input {
            Some(path) => dataset::read_stump(path)?,
            None => {
                let model = lib(StumpModel::new(self.alpha0, self.beta0, self.d0))?;
                let mut rng = SeedStream::new(self.seed).substream("data").rng();
                model.sample(self.n, &self.covariate, &self.law, &mut rng)
            }
        };
        let options = FitOptions {
            window: None,
            convention: self.convention,
        };
        let mut csv =
            String::from("criterion,n,alpha_hat,beta_hat,d_lo,d_hi,d_hat,criterion_value,boundary_hit\n");
        let mut cells = Vec::new();
        for &spec in &self.criteria {
            let fit = lib(if self.known_levels {
                fit_known_levels_with(&data, spec, options)
            } else {
                fit_stump_with(&data, spec, options)
            })?;
            csv.push_str(&format!(
                "{spec},{},{},{},{},{},{},{},{}\n",
                data.len(),
                format_sig(fit.alpha_hat, DIGITS),
                format_sig(fit.beta_hat, DIGITS),
                format_sig(fit.d_interval.0, DIGITS),
                format_sig(fit.d_interval.1, DIGITS),
                format_sig(fit.d_hat, DIGITS),
                format_sig(fit.criterion_value, DIGITS),
                fit.boundary_hit
            ));
            cells.push(format!("{spec} d_hat={}", format_sig(fit.d_hat, 4)));
        }
        Ok(Report {
            csv,
            summary: vec![format!("stump-fit: n={}: {}", data.len(), cells.join(", "))],
        })
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CppTails {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, value_delimiter = ',', default_value = "l1,l2")]
    pub criteria: Vec<CriterionSpec>,
    #[arg(long, default_value = "pt2")]
    pub law: ErrorLaw,
    /// Limit-process draws per criterion [default: 100000]
    #[arg(long = "reps", visible_alias = "replications")]
    pub replications: Option<usize>,
    /// The grid tops out at the |draw| exceeded by this many draws
    #[arg(long, default_value_t = 10)]
    pub top_exceedances: usize,
    /// Log-spaced grid points over the upper decade
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for CppTails {
    fn default() -> Self {
        CppTails {
            mu: 1.0,
            criteria: vec![CriterionSpec::AbsoluteDeviation, CriterionSpec::SquaredError],
            law: ErrorLaw::PowerTail { gamma: 2.0 },
            replications: None,
            top_exceedances: 10,
            points: 10,
            seed: 0,
            output: None,
        }
    }
}

impl Experiment for CppTails {
    plumbing!("cpp-tails");

    fn resolve(&mut self, paper_budget: bool) {
        self.replications
            .get_or_insert(if paper_budget { PAPER_REPS } else { DESK_REPS });
    }

    fn validate(&self) -> Result<(), String> {
        check_nonempty(&self.criteria, "criteria")?;
        check_reps(self.replications)?;
        check(self.points >= 2, "points", || "must be at least 2".to_string())?;
        check(
            self.replications.is_none_or(|r| r > self.top_exceedances),
            "top_exceedances",
            || "must be below the replication count".to_string(),
        )?;
        for (i, &c) in self.criteria.iter().enumerate() {
            StepLaw::new(c, self.mu, self.law).map_err(|e| format!("criteria[{i}]: {e}"))?;
        }
        Ok(())
    }

    fn run(&self) -> Result<Report, String> {
        let root = SeedStream::new(self.seed);
        let mut csv = String::from("criterion,x,survival,half_width,exceedances,slope\n");
        let mut cells = Vec::new();
        for &spec in &self.criteria {
            let config = lib(CppConfig::new(
                lib(StepLaw::new(spec, self.mu, self.law))?,
                table_intensity(),
            ))?;
            let samples = lib(cpp_samples(
                &config,
                reps(self.replications),
                root.substream(&spec.name()),
            ))?;
            let grid = lib(upper_decade_grid(&samples, self.top_exceedances, self.points))?;
            let profile = lib(tail_profile(&samples, &grid))?;
            let slope = lib(loglog_slope(&profile))?;
            for p in &profile {
                csv.push_str(&format!(
                    "{spec},{},{},{},{},{}\n",
                    format_sig(p.x, DIGITS),
                    format_sig(p.survival, DIGITS),
                    format_sig(p.half_width, DIGITS),
                    p.exceedances,
                    format_sig(slope, DIGITS)
                ));
            }
            cells.push(format!("{spec} slope={}", format_sig(slope, 4)));
        }
        Ok(Report {
            csv,
            summary: vec![format!(
                "cpp-tails: {} mu={} reps={}: {}",
                self.law,
                format_sig(self.mu, 6),
                reps(self.replications),
                cells.join(", ")
            )],
        })
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParallelRates {
    /// Numbers of parallel problems
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub grid_m: Vec<usize>,
    /// Sample size per problem
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Tail index of the power-tail errors
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, value_delimiter = ',', default_value = "l1,l2")]
    pub criteria: Vec<CriterionSpec>,
    #[arg(long, default_value = "uniform:-1,1")]
    pub covariate: CovariateLaw,
    #[arg(long, default_value = "mid")]
    pub convention: ArgminConvention,
    /// Draw each d0 uniformly over the central half of the covariate range
    #[arg(long)]
    pub scatter_d0: bool,
    /// Replicates per m [default: 50]
    #[arg(long = "reps", visible_alias = "replications")]
    pub replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for ParallelRates {
    fn default() -> Self {
        ParallelRates {
            grid_m: vec![10, 100, 1000],
            n: 10_000,
            gamma: 2.0,
            criteria: vec![CriterionSpec::AbsoluteDeviation, CriterionSpec::SquaredError],
            covariate: CovariateLaw::Uniform { a: -1.0, b: 1.0 },
            convention: ArgminConvention::Mid,
            scatter_d0: false,
            replications: None,
            seed: 0,
            output: None,
        }
    }
}

impl ParallelRates {
    fn configs(&self) -> Result<Vec<ParallelConfig>, String> {
        let law = ErrorLaw::power_tail(self.gamma).map_err(|e| format!("gamma: {e}"))?;
        Ok(self
            .grid_m
            .iter()
            .flat_map(|&m| {
                self.criteria.iter().map(move |&c| ParallelConfig {
                    covariate: self.covariate,
                    argmin_convention: self.convention,
                    replications: reps(self.replications),
                    seed: self.seed,
                    ..ParallelConfig::new(m, self.n, law, c)
                })
            })
            .collect())
    }
}

impl Experiment for ParallelRates {
    plumbing!("parallel-rates");

    fn resolve(&mut self, _: bool) {
        self.replications.get_or_insert(PARALLEL_REPS);
    }

    fn validate(&self) -> Result<(), String> {
        check_nonempty(&self.grid_m, "grid_m")?;
        check_nonempty(&self.criteria, "criteria")?;
        check_reps(self.replications)?;
        check(self.grid_m.iter().all(|&m| m >= 1), "grid_m", || {
            "entries must be at least 1".to_string()
        })?;
        check(self.n >= 1, "n", || "must be at least 1".to_string())?;
        ErrorLaw::power_tail(self.gamma).map_err(|e| format!("gamma: {e}"))?;
        Ok(())
    }

    fn run(&self) -> Result<Report, String> {
        let d0s = if self.scatter_d0 {
            D0Policy::scattered_for(&self.covariate)
        } else {
            D0Policy::Zero
        };
        let table = lib(rate_summary(&self.configs()?, d0s, self.seed))?;
        let cells: Vec<String> = table
            .rows
            .iter()
            .map(|r| format!("{} m={} {}", r.criterion, r.m, format_sig(r.norm_logm_median, 4)))
            .collect();
        Ok(Report {
            csv: table.to_csv(),
            summary: vec![format!(
                "parallel-rates: pt{} n={} reps={}: n*maxdev/log m medians {}",
                format_sig(self.gamma, 6),
                self.n,
                reps(self.replications),
                cells.join(", ")
            )],
        })
    }
}

fn fit_csv(spec: CriterionSpec, design: &Design, fit: &PlaneFit) -> String {
    let mut csv = String::from("criterion,n,p,alpha_hat,beta_hat,criterion_value,selected_m");
    for j in 1..=design.p() {
        csv.push_str(&format!(",d{j}"));
    }
    csv.push_str(&format!(
        "\n{spec},{},{},{},{},{},{}",
        design.n(),
        design.p(),
        format_sig(fit.alpha_hat, DIGITS),
        format_sig(fit.beta_hat, DIGITS),
        format_sig(fit.criterion_value, DIGITS),
        fit.selected_m.unwrap_or(design.p())
    ));
    for v in &fit.d_hat {
        csv.push(',');
        csv.push_str(&format_sig(*v, DIGITS));
    }
    csv.push('\n');
    csv
}

fn plane_summary(command: &str, csv_rows: &[robust_cp::changeplane::PlaneRow]) -> String {
    let cells: Vec<String> = csv_rows
        .iter()
        .map(|r| {
            format!(
                "n={} dist={} m={}",
                r.n,
                format_sig(r.dist, 4),
                format_sig(r.selected_m, 3)
            )
        })
        .collect();
    format!("{command}: {}", cells.join(", "))
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PlaneFitCmd {
    /// CSV with columns x1..xp,y; simulates when absent
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "l1")]
    pub criterion: CriterionSpec,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    /// Sparsity of the true normal; dense when absent
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000")]
    pub ns: Vec<usize>,
    #[arg(long, default_value = "t3")]
    pub law: ErrorLaw,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta0: f64,
    /// Direction search: exact[:cap] or restarts[:count]
    #[arg(long, default_value = "restarts:50")]
    pub search: String,
    /// Replicates per n [default: 20]
    #[arg(long = "reps", visible_alias = "replications")]
    pub replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for PlaneFitCmd {
    fn default() -> Self {
        PlaneFitCmd {
            input: None,
            criterion: CriterionSpec::AbsoluteDeviation,
            p: 3,
            s: None,
            ns: vec![250, 500, 1000],
            law: ErrorLaw::StandardizedT { nu: 3.0 },
            alpha0: 1.0,
            beta0: 0.0,
            search: "restarts:50".to_string(),
            replications: None,
            seed: 0,
            output: None,
        }
    }
}

fn validate_plane(
    p: usize,
    s: Option<usize>,
    ns: &[usize],
    alpha0: f64,
    beta0: f64,
    law: &ErrorLaw,
    search: &str,
) -> Result<(), String> {
    check(p >= 2, "p", || format!("must be at least 2, got {p}"))?;
    check(s.is_none_or(|s| s >= 1 && s <= p), "s", || {
        format!("must lie in 1..={p}")
    })?;
    check_nonempty(ns, "ns")?;
    check(ns.iter().all(|&n| n >= 2), "ns", || {
        "entries must be at least 2".to_string()
    })?;
    check(alpha0 != beta0, "beta0", || "must differ from alpha0".to_string())?;
    law.validate().map_err(|e| format!("law: {e}"))?;
    parse_search(search).map_err(|e| format!("search: {e}"))?;
    Ok(())
}

impl PlaneFitCmd {
    fn experiment(&self) -> PlaneExperiment {
        PlaneExperiment {
            criterion: self.criterion,
            p: self.p,
            s: self.s.unwrap_or(self.p),
            ns: self.ns.clone(),
            error_law: self.law,
            alpha0: self.alpha0,
            beta0: self.beta0,
            replications: reps(self.replications),
            search: self.search.clone(),
            penalty: None,
            seed: self.seed,
        }
    }
}

impl Experiment for PlaneFitCmd {
    plumbing!("plane-fit");

    fn resolve(&mut self, _: bool) {
        self.replications.get_or_insert(PLANE_REPS);
    }

    fn validate(&self) -> Result<(), String> {
        check_reps(self.replications)?;
        if self.input.is_some() {
            return parse_search(&self.search)
                .map(|_| ())
                .map_err(|e| format!("search: {e}"));
        }
        validate_plane(
            self.p,
            self.s,
            &self.ns,
            self.alpha0,
            self.beta0,
            &self.law,
            &self.search,
        )
    }

    fn run(&self) -> Result<Report, String> {
        if let Some(path) = &self.input {
            let design = dataset::read_plane(path)?;
            let search = lib(parse_search(&self.search))?;
            let fit = lib(fit_plane(&design, self.criterion, search.as_ref(), self.seed))?;
            return Ok(Report {
                csv: fit_csv(self.criterion, &design, &fit),
                summary: vec![format!(
                    "plane-fit: n={} p={} alpha_hat={} beta_hat={}",
                    design.n(),
                    design.p(),
                    format_sig(fit.alpha_hat, 4),
                    format_sig(fit.beta_hat, 4)
                )],
            });
        }
        let rows = lib(plane_rates(&self.experiment()))?;
        Ok(Report {
            csv: plane_rows_csv(&rows),
            summary: vec![plane_summary("plane-fit", &rows)],
        })
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SparsePlane {
    /// CSV with columns x1..xp,y; simulates when absent
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "l1")]
    pub criterion: CriterionSpec,
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    /// Sparsity of the true normal
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    #[arg(long, value_delimiter = ',', default_value = "2000")]
    pub ns: Vec<usize>,
    #[arg(long, default_value = "t3")]
    pub law: ErrorLaw,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta0: f64,
    /// Direction search within each support: exact[:cap] or restarts[:count]
    #[arg(long, default_value = "restarts:50")]
    pub search: String,
    /// Huber-family penalty constant
    #[arg(long, default_value_t = PenaltyConfig::DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Exponent delta of the squared-error penalty
    #[arg(long, default_value_t = PenaltyConfig::DEFAULT_DELTA)]
    pub delta: f64,
    /// Plug-in error norm for the squared-error penalty; estimated when absent
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_norm: Option<f64>,
    /// Replicates per n [default: 20]
    #[arg(long = "reps", visible_alias = "replications")]
    pub replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for SparsePlane {
    fn default() -> Self {
        SparsePlane {
            input: None,
            criterion: CriterionSpec::AbsoluteDeviation,
            p: 50,
            s: 2,
            ns: vec![2000],
            law: ErrorLaw::StandardizedT { nu: 3.0 },
            alpha0: 1.0,
            beta0: 0.0,
            search: "restarts:50".to_string(),
            kappa: PenaltyConfig::DEFAULT_KAPPA,
            delta: PenaltyConfig::DEFAULT_DELTA,
            xi_norm: None,
            replications: None,
            seed: 0,
            output: None,
        }
    }
}

impl SparsePlane {
    fn penalty(&self) -> PenaltyConfig {
        match self.criterion {
            CriterionSpec::SquaredError => PenaltyConfig::squared_error(self.delta, self.xi_norm),
            _ => PenaltyConfig::huber(self.kappa),
        }
    }
}

impl Experiment for SparsePlane {
    plumbing!("sparse-plane");

    fn resolve(&mut self, _: bool) {
        self.replications.get_or_insert(PLANE_REPS);
    }

    fn validate(&self) -> Result<(), String> {
        check_reps(self.replications)?;
        check(self.kappa > 0.0 && self.kappa.is_finite(), "kappa", || {
            "must be positive".to_string()
        })?;
        check(self.delta > 0.0 && self.delta.is_finite(), "delta", || {
            "must be positive".to_string()
        })?;
        check(
            self.xi_norm.is_none_or(|x| x >= 0.0 && x.is_finite()),
            "xi_norm",
            || "must be nonnegative".to_string(),
        )?;
        if self.input.is_some() {
            return parse_search(&self.search)
                .map(|_| ())
                .map_err(|e| format!("search: {e}"));
        }
        validate_plane(
            self.p,
            Some(self.s),
            &self.ns,
            self.alpha0,
            self.beta0,
            &self.law,
            &self.search,
        )
    }

    fn run(&self) -> Result<Report, String> {
        let penalty = self.penalty();
        if let Some(path) = &self.input {
            let design = dataset::read_plane(path)?;
            let search = lib(parse_search(&self.search))?;
            let fit = lib(fit_sparse_plane(
                &design,
                self.criterion,
                &penalty,
                search.as_ref(),
                self.seed,
            ))?;
            return Ok(Report {
                csv: fit_csv(self.criterion, &design, &fit),
                summary: vec![format!(
                    "sparse-plane: n={} p={} selected m={} support {:?}",
                    design.n(),
                    design.p(),
                    fit.selected_m.unwrap_or(design.p()),
                    fit.support
                )],
            });
        }
        let exp = PlaneExperiment {
            criterion: self.criterion,
            p: self.p,
            s: self.s,
            ns: self.ns.clone(),
            error_law: self.law,
            alpha0: self.alpha0,
            beta0: self.beta0,
            replications: reps(self.replications),
            search: self.search.clone(),
            penalty: Some(penalty),
            seed: self.seed,
        };
        let rows = lib(plane_rates(&exp))?;
        Ok(Report {
            csv: plane_rows_csv(&rows),
            summary: vec![plane_summary("sparse-plane", &rows)],
        })
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureCheck {
    #[arg(long, value_delimiter = ',', default_value = "huber:0.5,huber:1,huber:2")]
    pub criteria: Vec<CriterionSpec>,
    /// Jump sizes to probe
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.5,0.9",
        allow_negative_numbers = true
    )]
    pub mus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "t3,normal")]
    pub laws: Vec<ErrorLaw>,
    /// Monte Carlo draws per probe [default: 100000]
    #[arg(long = "reps", visible_alias = "replications")]
    pub replications: Option<usize>,
    /// Standard errors of slack allowed before a probe counts as violated
    #[arg(long, default_value_t = 3.0)]
    pub z: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for CurvatureCheck {
    fn default() -> Self {
        CurvatureCheck {
            criteria: vec![
                CriterionSpec::Huber(0.5),
                CriterionSpec::Huber(1.0),
                CriterionSpec::Huber(2.0),
            ],
            mus: vec![0.1, 0.5, 0.9],
            laws: vec![ErrorLaw::StandardizedT { nu: 3.0 }, ErrorLaw::StandardNormal],
            replications: None,
            z: 3.0,
            seed: 0,
            output: None,
        }
    }
}

impl Experiment for CurvatureCheck {
    plumbing!("curvature-check");

    fn resolve(&mut self, paper_budget: bool) {
        self.replications
            .get_or_insert(if paper_budget { PAPER_REPS } else { DESK_REPS });
    }

    fn validate(&self) -> Result<(), String> {
        check_nonempty(&self.criteria, "criteria")?;
        check_nonempty(&self.mus, "mus")?;
        check_nonempty(&self.laws, "laws")?;
        check(self.replications.is_none_or(|r| r >= 2), "replications", || {
            "must be at least 2".to_string()
        })?;
        check(self.z >= 0.0 && self.z.is_finite(), "z", || {
            "must be nonnegative".to_string()
        })?;
        for (i, law) in self.laws.iter().enumerate() {
            law.validate().map_err(|e| format!("laws[{i}]: {e}"))?;
        }
        Ok(())
    }

    fn run(&self) -> Result<Report, String> {
        let mut csv = String::from("criterion,law,mu,lhs,rhs,se,holds\n");
        let (mut held, mut total) = (0, 0);
        for &spec in &self.criteria {
            for law in &self.laws {
                for &mu in &self.mus {
                    let probe = lib(curvature_margin(
                        spec,
                        mu,
                        law,
                        reps(self.replications),
                        self.seed,
                    ))?;
                    let holds = probe.holds(self.z);
                    held += usize::from(holds);
                    total += 1;
                    csv.push_str(&format!(
                        "{spec},{law},{},{},{},{},{holds}\n",
                        format_sig(mu, DIGITS),
                        format_sig(probe.lhs, DIGITS),
                        format_sig(probe.rhs, DIGITS),
                        format_sig(probe.se, DIGITS)
                    ));
                }
            }
        }
        Ok(Report {
            csv,
            summary: vec![format!(
                "curvature-check: {held}/{total} probes within {} se, reps={}",
                format_sig(self.z, 3),
                reps(self.replications)
            )],
        })
    }
}
