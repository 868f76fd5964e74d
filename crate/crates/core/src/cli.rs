//! Config-driven experiment runner behind the `remest` binary.
//!
//! Configs are flat TOML. Only the model inputs `lambda`, `k`, `P_T` and
//! `c` are accepted; `theta`, `alpha`, `gamma` and `m` are always derived.
//! An optional `[derived]` table (as written by `--emit-config`) is checked
//! against the recomputed values and otherwise ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analytics::{self, SweepGrid, SweepRow, SWEEP_CSV_HEADER};
use crate::distributions::{Family, Gamma, Laplace};
use crate::error::{Error, Result};
use crate::matching::{self, CfResidualReport, LogBranch, MatchSpec, RESIDUAL_CSV_HEADER};
use crate::params::{DerivedQuantities, SystemParams};
use crate::rng::RngHandle;
use crate::simulator::{self, ConditionalStats, Execution, MonteCarloEstimate};
use crate::strategies::{DecoderRule, ThresholdStrategy};

pub const SCHEMA_VERSION: u32 = 1;

/// Pass threshold for every Monte Carlo comparison, in standard errors.
pub const SIGMAS: f64 = 4.0;

/// Allowed gap between the golden-section argmin and `√(c + m)`.
pub const ARGMIN_TOLERANCE: f64 = 1e-6;

/// Allowed analytic matching residual.
pub const ANALYTIC_MATCH_TOLERANCE: f64 = 1e-12;

/// Empirical matching residual tolerance is `EMPIRICAL_MATCH_SCALE / √N` (0.02 at N = 10⁶).
pub const EMPIRICAL_MATCH_SCALE: f64 = 20.0;

/// Smallest residual that counts as a detected mismatch (analytic, empirical).
pub const MISMATCH_FLOOR: (f64, f64) = (0.1, 0.05);

const DERIVED_KEYS: [&str; 4] = ["theta", "alpha", "gamma", "m"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    Optimal,
    Threshold,
    Always,
    Never,
    NoiseBlind,
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StrategyChoice::Optimal => "optimal",
            StrategyChoice::Threshold => "threshold",
            StrategyChoice::Always => "always",
            StrategyChoice::Never => "never",
            StrategyChoice::NoiseBlind => "noise_blind",
        };
        f.write_str(s)
    }
}

/// On-disk config. Every field except the model inputs has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub lambda: f64,
    pub k: f64,
    #[serde(rename = "P_T")]
    pub power: f64,
    pub c: f64,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    #[serde(default = "default_true")]
    pub parallel: bool,
    /// Golden-section bracket width.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Draws per distribution for the empirical matching check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Also run the deliberately unmatched Laplace/gamma pair.
    #[serde(default)]
    pub unmatched: bool,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_omega_points")]
    pub omega_points: usize,
    #[serde(default = "default_sweep_lambda")]
    pub sweep_lambda: Vec<f64>,
    #[serde(default = "default_sweep_k")]
    pub sweep_k: Vec<f64>,
    #[serde(default = "default_sweep_power", rename = "sweep_P_T")]
    pub sweep_power: Vec<f64>,
    #[serde(default = "default_sweep_c")]
    pub sweep_c: Vec<f64>,
    /// Stages per episode for sweep Monte Carlo spot checks; 0 disables them.
    #[serde(default)]
    pub spot_check_horizon: usize,
    #[serde(default = "default_spot_episodes")]
    pub spot_check_episodes: usize,
    /// Audit copy of the derived quantities. Never used as input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<BTreeMap<String, f64>>,
}

fn default_strategy() -> StrategyChoice {
    StrategyChoice::Optimal
}
fn default_horizon() -> usize {
    10_000
}
fn default_episodes() -> usize {
    100
}
fn default_format() -> OutputFormat {
    OutputFormat::Json
}
fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-9
}
fn default_samples() -> usize {
    1_000_000
}
fn default_omega_max() -> f64 {
    5.0
}
fn default_omega_points() -> usize {
    101
}
fn default_sweep_lambda() -> Vec<f64> {
    SweepGrid::<f64>::default().lambdas
}
fn default_sweep_k() -> Vec<f64> {
    SweepGrid::<f64>::default().ks
}
fn default_sweep_power() -> Vec<f64> {
    SweepGrid::<f64>::default().powers
}
fn default_sweep_c() -> Vec<f64> {
    SweepGrid::<f64>::default().comm_costs
}
fn default_spot_episodes() -> usize {
    20
}

/// Validated config.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub params: SystemParams<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for key in DERIVED_KEYS {
            if table.contains_key(key) {
                return Err(Error::Config(format!(
                    "`{key}` is derived from lambda, k and P_T (theta = sqrt(P_T)) and cannot be set"
                )));
            }
        }
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_file(file: ConfigFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let params = SystemParams::new(file.lambda, file.k, file.power, file.c)?;
        if file.strategy == StrategyChoice::Threshold && file.beta.is_none() {
            return Err(Error::Config("strategy `threshold` needs `beta`".into()));
        }
        if let Some(beta) = file.beta {
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::invalid("beta", format!("must be finite and >= 0, got {beta}")));
            }
        }
        if file.horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        if file.episodes < 2 {
            return Err(Error::invalid("episodes", "must be >= 2"));
        }
        if !(file.tol.is_finite() && file.tol > 0.0) {
            return Err(Error::invalid("tol", "must be finite and > 0"));
        }
        if !(file.omega_max.is_finite() && file.omega_max > 0.0) || file.omega_points < 2 {
            return Err(Error::invalid("omega_max", "need omega_max > 0 and omega_points >= 2"));
        }
        if let Some(derived) = &file.derived {
            check_derived(&params, derived)?;
        }
        Ok(Self { file, params })
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.file.seed = seed;
        }
        if let Some(out) = &o.out {
            self.file.out = Some(out.clone());
        }
        if let Some(format) = o.format {
            self.file.format = format;
        }
        self
    }

    pub fn derived(&self) -> DerivedQuantities<f64> {
        self.params.derived()
    }

    /// Config as TOML with the derived quantities attached for auditing.
    pub fn effective_toml(&self) -> Result<String> {
        let mut file = self.file.clone();
        file.derived = Some(derived_map(&self.params));
        toml::to_string(&file).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn execution(&self) -> Execution {
        if self.file.parallel {
            Execution::Parallel
        } else {
            Execution::Serial
        }
    }

    /// The threshold the chosen strategy uses; `None` for never-transmit.
    pub fn beta(&self) -> Option<f64> {
        match self.file.strategy {
            StrategyChoice::Optimal => Some(analytics::optimal_threshold(&self.params)),
            StrategyChoice::Threshold => self.file.beta,
            StrategyChoice::Always => Some(0.0),
            StrategyChoice::Never => None,
            StrategyChoice::NoiseBlind => Some(self.file.beta.unwrap_or_else(|| analytics::optimal_threshold(&self.params))),
        }
    }

    pub fn strategy(&self) -> Result<ThresholdStrategy<f64>> {
        let p = self.params;
        Ok(match self.file.strategy {
            StrategyChoice::Optimal => ThresholdStrategy::optimal(p),
            StrategyChoice::Threshold => ThresholdStrategy::with_threshold(p, self.beta().expect("validated"))?,
            StrategyChoice::Always => ThresholdStrategy::always_transmit(p),
            StrategyChoice::Never => ThresholdStrategy::never_transmit(p),
            StrategyChoice::NoiseBlind => ThresholdStrategy::noise_blind(p, self.beta().expect("has beta"))?,
        })
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        let (w, n) = (self.file.omega_max, self.file.omega_points);
        (0..n).map(|i| -w + 2.0 * w * i as f64 / (n - 1) as f64).collect()
    }

    pub fn sweep_grid(&self) -> SweepGrid<f64> {
        SweepGrid {
            lambdas: self.file.sweep_lambda.clone(),
            ks: self.file.sweep_k.clone(),
            powers: self.file.sweep_power.clone(),
            comm_costs: self.file.sweep_c.clone(),
        }
    }
}

fn derived_map(p: &SystemParams<f64>) -> BTreeMap<String, f64> {
    let d = p.derived();
    BTreeMap::from([
        ("theta".to_string(), d.theta),
        ("alpha".to_string(), d.alpha),
        ("gamma".to_string(), d.gamma),
        ("m".to_string(), d.m),
        ("beta_star".to_string(), d.beta_star),
    ])
}

fn check_derived(p: &SystemParams<f64>, given: &BTreeMap<String, f64>) -> Result<()> {
    let expected = derived_map(p);
    for (key, value) in given {
        let Some(want) = expected.get(key) else {
            return Err(Error::Config(format!("unknown derived quantity `{key}`")));
        };
        if (value - want).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(Error::Config(format!(
                "derived `{key}` = {value} disagrees with the value {want} implied by the inputs"
            )));
        }
    }
    Ok(())
}

/// One pass/fail comparison in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Standard error of `value`, for Monte Carlo checks.
    pub std_error: Option<f64>,
    pub expected: f64,
    /// `|value − expected| / std_error` for Monte Carlo checks.
    pub z: Option<f64>,
    /// Pass rule, e.g. `z <= 4` or `|value - expected| < 1e-6`.
    pub rule: String,
    pub pass: bool,
}

impl Check {
    fn statistical(name: &str, est: &MonteCarloEstimate<f64>, expected: f64) -> Self {
        let z = est.z_score(expected);
        Self {
            name: name.into(),
            value: est.mean,
            std_error: Some(est.std_error),
            expected,
            z: Some(z),
            rule: format!("z <= {SIGMAS}"),
            pass: z <= SIGMAS,
        }
    }

    /// Passes when `value` exceeds `expected` by more than 4 standard errors.
    fn exceeds(name: &str, est: &MonteCarloEstimate<f64>, expected: f64) -> Self {
        let z = (est.mean - expected) / est.std_error;
        Self {
            name: name.into(),
            value: est.mean,
            std_error: Some(est.std_error),
            expected,
            z: Some(z),
            rule: format!("(value - expected) / std_error > {SIGMAS}"),
            pass: z > SIGMAS,
        }
    }

    fn below(name: &str, value: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            std_error: None,
            expected,
            z: None,
            rule: format!("|value - expected| < {tolerance:e}"),
            pass: (value - expected).abs() < tolerance,
        }
    }

    fn above(name: &str, value: f64, floor: f64) -> Self {
        Self {
            name: name.into(),
            value,
            std_error: None,
            expected: floor,
            z: None,
            rule: format!("value > {floor}"),
            pass: value > floor,
        }
    }
}

const CHECK_CSV_HEADER: [&str; 7] = ["name", "value", "std_error", "expected", "z", "rule", "pass"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_checks<W: std::io::Write>(w: &mut csv::Writer<W>, checks: &[Check]) -> Result<()> {
    w.write_record(CHECK_CSV_HEADER)?;
    for c in checks {
        w.write_record([
            c.name.clone(),
            c.value.to_string(),
            opt(c.std_error),
            c.expected.to_string(),
            opt(c.z),
            c.rule.clone(),
            c.pass.to_string(),
        ])?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub strategy: String,
    pub beta: Option<f64>,
    pub derived: DerivedQuantities<f64>,
    pub horizon: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Per-stage average cost across episodes.
    pub cost: MonteCarloEstimate<f64>,
    pub cost_closed_form: f64,
    pub conditional: Option<ConditionalStats<f64>>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub derived: DerivedQuantities<f64>,
    pub beta_star_formula: f64,
    pub beta_star_numeric: f64,
    #[serde(rename = "J_closed_form_at_formula")]
    pub cost_at_formula: f64,
    #[serde(rename = "J_closed_form_at_numeric")]
    pub cost_at_numeric: f64,
    #[serde(rename = "J_monte_carlo_at_beta_star")]
    pub cost_monte_carlo: MonteCarloEstimate<f64>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchingReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub derived: DerivedQuantities<f64>,
    pub samples: usize,
    pub analytic: CfResidualReport<f64>,
    pub empirical: CfResidualReport<f64>,
    pub unmatched_analytic: Option<CfResidualReport<f64>>,
    pub unmatched_empirical: Option<CfResidualReport<f64>>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpotCheck {
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub mc_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub rows: Vec<SweepRow<f64>>,
    pub spot_checks: Option<Vec<SpotCheck>>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Report {
    Simulate(SimulateReport),
    Optimize(OptimizeReport),
    Matching(MatchingReport),
    Sweep(SweepReport),
}

impl Report {
    pub fn all_pass(&self) -> bool {
        match self {
            Report::Simulate(r) => r.all_pass,
            Report::Optimize(r) => r.all_pass,
            Report::Matching(r) => r.all_pass,
            Report::Sweep(r) => r.all_pass,
        }
    }

    pub fn checks(&self) -> &[Check] {
        match self {
            Report::Simulate(r) => &r.checks,
            Report::Optimize(r) => &r.checks,
            Report::Matching(r) => &r.checks,
            Report::Sweep(r) => &r.checks,
        }
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Json => {
                let mut out = serde_json::to_vec_pretty(self)?;
                out.push(b'\n');
                Ok(out)
            }
            OutputFormat::Csv => self.render_csv(),
        }
    }

    fn render_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        match self {
            Report::Simulate(r) => write_checks(&mut w, &r.checks)?,
            Report::Optimize(r) => {
                w.write_record([
                    "beta_star_formula",
                    "beta_star_numeric",
                    "J_closed_form_at_formula",
                    "J_closed_form_at_numeric",
                    "J_monte_carlo_mean",
                    "J_monte_carlo_std_error",
                    "J_monte_carlo_n",
                    "all_pass",
                ])?;
                w.write_record([
                    r.beta_star_formula.to_string(),
                    r.beta_star_numeric.to_string(),
                    r.cost_at_formula.to_string(),
                    r.cost_at_numeric.to_string(),
                    r.cost_monte_carlo.mean.to_string(),
                    r.cost_monte_carlo.std_error.to_string(),
                    r.cost_monte_carlo.n.to_string(),
                    r.all_pass.to_string(),
                ])?;
            }
            Report::Matching(r) => {
                let mut header = vec!["table"];
                header.extend(RESIDUAL_CSV_HEADER);
                w.write_record(header)?;
                let tables = [
                    ("analytic", Some(&r.analytic)),
                    ("empirical", Some(&r.empirical)),
                    ("unmatched_analytic", r.unmatched_analytic.as_ref()),
                    ("unmatched_empirical", r.unmatched_empirical.as_ref()),
                ];
                for (name, table) in tables {
                    for rec in table.iter().flat_map(|t| &t.records) {
                        let mut row = vec![name.to_string()];
                        row.extend(CfResidualReport::csv_row(rec));
                        w.write_record(row)?;
                    }
                }
            }
            Report::Sweep(r) => {
                let mut header: Vec<&str> = SWEEP_CSV_HEADER.to_vec();
                if r.spot_checks.is_some() {
                    header.extend(["mc_mean", "mc_std_error", "mc_pass"]);
                }
                w.write_record(&header)?;
                for (i, row) in r.rows.iter().enumerate() {
                    let mut rec = vec![
                        row.lambda.to_string(),
                        row.k.to_string(),
                        row.power.to_string(),
                        row.c.to_string(),
                        row.beta_star_formula.to_string(),
                        row.beta_star_numeric.to_string(),
                        row.cost_at_beta_star.to_string(),
                    ];
                    if let Some(spots) = &r.spot_checks {
                        let s = &spots[i];
                        rec.extend([s.mc_mean.to_string(), s.mc_std_error.to_string(), s.mc_pass.to_string()]);
                    }
                    w.write_record(rec)?;
                }
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateReport> {
    let p = cfg.params;
    let f = &cfg.file;
    let strategy = cfg.strategy()?;
    let beta = cfg.beta();
    let exec = cfg.execution();

    let cost = simulator::estimate_cost(&p, &strategy, f.horizon, f.episodes, &RngHandle::new(f.seed, 0), exec)?;
    let cond_mse = match strategy.decoder() {
        DecoderRule::Shrinkage => p.m(),
        DecoderRule::NoiseBlind => analytics::noise_blind_conditional_mse(&p),
    };
    let cost_closed_form = match beta {
        Some(b) => analytics::cost_with_conditional_mse(&p, b, cond_mse)?.total,
        None => analytics::never_transmit_cost(&p),
    };
    let mut checks = vec![Check::statistical("per_stage_cost", &cost, cost_closed_form)];

    let conditional = match beta {
        Some(b) => {
            let mut rng = RngHandle::new(f.seed, 1);
            let stats = simulator::estimate_conditional_stats(&p, &strategy, f.horizon * f.episodes, &mut rng)?;
            let sign_bias = match strategy.decoder() {
                DecoderRule::Shrinkage => 0.0,
                DecoderRule::NoiseBlind => p.k() / p.lambda(),
            };
            checks.extend([
                Check::statistical("conditional_mse", &stats.mse, cond_mse),
                Check::statistical("conditional_mse_plus", &stats.mse_plus, cond_mse),
                Check::statistical("conditional_mse_minus", &stats.mse_minus, cond_mse),
                Check::statistical("power", &stats.power, p.power()),
                Check::statistical("tx_frequency", &stats.tx_frequency, (-p.lambda() * b).exp()),
                Check::statistical("conditional_bias", &stats.bias, 0.0),
                Check::statistical("conditional_bias_plus", &stats.bias_plus, sign_bias),
                Check::statistical("conditional_bias_minus", &stats.bias_minus, 0.0 - sign_bias),
            ]);
            if strategy.decoder() == DecoderRule::NoiseBlind {
                checks.push(Check::exceeds("noise_blind_mse_exceeds_m", &stats.mse, p.m()));
            }
            Some(stats)
        }
        None => None,
    };

    Ok(SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        strategy: f.strategy.to_string(),
        beta,
        derived: cfg.derived(),
        horizon: f.horizon,
        episodes: f.episodes,
        seed: f.seed,
        cost,
        cost_closed_form,
        conditional,
        all_pass: all_pass(&checks),
        checks,
    })
}

pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<OptimizeReport> {
    let p = cfg.params;
    let f = &cfg.file;
    let formula = analytics::optimal_threshold(&p);
    let numeric = analytics::numeric_argmin(&p, 0.0, analytics::search_upper_bound(&p), f.tol)?;
    let cost_at_formula = analytics::cost_closed_form(&p, formula)?.total;
    let cost_at_numeric = analytics::cost_closed_form(&p, numeric)?.total;
    let mc = simulator::estimate_cost(
        &p,
        &ThresholdStrategy::optimal(p),
        f.horizon,
        f.episodes,
        &RngHandle::new(f.seed, 0),
        cfg.execution(),
    )?;
    let checks = vec![
        Check::below("argmin_agreement", numeric, formula, ARGMIN_TOLERANCE),
        Check::statistical("monte_carlo_cost_at_beta_star", &mc, cost_at_formula),
    ];
    Ok(OptimizeReport {
        schema_version: SCHEMA_VERSION,
        command: "optimize",
        derived: cfg.derived(),
        beta_star_formula: formula,
        beta_star_numeric: numeric,
        cost_at_formula,
        cost_at_numeric,
        cost_monte_carlo: mc,
        all_pass: all_pass(&checks),
        checks,
    })
}

fn draw<D: Family<f64> + Sync>(d: &D, shift: f64, n: usize, rng: &RngHandle) -> Vec<f64> {
    let mut rng = rng.clone();
    (0..n).map(|_| d.sample(&mut rng) - shift).collect()
}

pub fn cmd_verify_matching(cfg: &ExperimentConfig) -> Result<MatchingReport> {
    let p = cfg.params;
    let f = &cfg.file;
    let grid = cfg.omega_grid();
    let analytic = matching::check_matching(&MatchSpec::exponential_gamma_pair(&p, grid.clone())?);

    let base = RngHandle::new(f.seed, 2);
    let source = draw(&p.source_tail(), p.lambda().recip(), f.samples, &base.fork(0));
    let noise_dist = p.noise();
    let noise = draw(&noise_dist, noise_dist.mean(), f.samples, &base.fork(1));
    let branch = LogBranch::Continuous {
        max_step: grid_step(&grid).min(0.1),
    };
    let empirical = matching::check_matching_empirical(&source, &noise, p.alpha(), p.gamma(), &grid, branch)?;

    let empirical_tol = EMPIRICAL_MATCH_SCALE / (f.samples as f64).sqrt();
    let mut checks = vec![
        Check::below("analytic_max_residual", analytic.max_residual.unwrap_or(f64::INFINITY), 0.0, ANALYTIC_MATCH_TOLERANCE),
        Check::below("empirical_max_residual", empirical.max_residual.unwrap_or(f64::INFINITY), 0.0, empirical_tol),
    ];

    let (mut unmatched_analytic, mut unmatched_empirical) = (None, None);
    if f.unmatched {
        // Laplace source against raw gamma noise, α = γ = 1
        let laplace = p.source();
        let gamma = Gamma::new(p.k(), p.theta())?;
        let spec = MatchSpec::new(
            Arc::new(move |w| laplace.char_fn(w)),
            Arc::new(move |w| gamma.char_fn(w)),
            1.0,
            1.0,
            grid.clone(),
        )?;
        let ua = matching::check_matching(&spec);
        let ls = draw(&Laplace::new(p.lambda())?, 0.0, f.samples, &base.fork(2));
        let gs = draw(&gamma, 0.0, f.samples, &base.fork(3));
        let ue = matching::check_matching_empirical(&ls, &gs, 1.0, 1.0, &grid, branch)?;
        checks.push(Check::above("unmatched_analytic_max_residual", ua.max_residual.unwrap_or(0.0), MISMATCH_FLOOR.0));
        checks.push(Check::above("unmatched_empirical_max_residual", ue.max_residual.unwrap_or(0.0), MISMATCH_FLOOR.1));
        unmatched_analytic = Some(ua);
        unmatched_empirical = Some(ue);
    }

    Ok(MatchingReport {
        schema_version: SCHEMA_VERSION,
        command: "verify-matching",
        derived: cfg.derived(),
        samples: f.samples,
        analytic,
        empirical,
        unmatched_analytic,
        unmatched_empirical,
        all_pass: all_pass(&checks),
        checks,
    })
}

fn grid_step(grid: &[f64]) -> f64 {
    grid.windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min)
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    use rayon::prelude::*;

    let f = &cfg.file;
    let grid = cfg.sweep_grid();
    let rows = analytics::sweep(&grid, f.tol)?;
    let mut checks: Vec<Check> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Check::below(&format!("argmin_agreement[{i}]"), r.beta_star_numeric, r.beta_star_formula, ARGMIN_TOLERANCE))
        .collect();

    let spot_checks = if f.spot_check_horizon > 0 {
        let points = grid.points()?;
        let base = RngHandle::new(f.seed, 3);
        let estimates = points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                simulator::estimate_cost(
                    p,
                    &ThresholdStrategy::optimal(*p),
                    f.spot_check_horizon,
                    f.spot_check_episodes,
                    &base.fork(i as u64),
                    Execution::Serial,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let spots: Vec<SpotCheck> = estimates
            .iter()
            .zip(&rows)
            .enumerate()
            .map(|(i, (est, row))| {
                let c = Check::statistical(&format!("spot_check[{i}]"), est, row.cost_at_beta_star);
                let spot = SpotCheck {
                    mc_mean: est.mean,
                    mc_std_error: est.std_error,
                    mc_pass: c.pass,
                };
                checks.push(c);
                spot
            })
            .collect();
        Some(spots)
    } else {
        None
    };

    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        command: "sweep",
        rows,
        spot_checks,
        all_pass: all_pass(&checks),
        checks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Optimize,
    VerifyMatching,
    Sweep,
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<Report> {
    Ok(match command {
        Command::Simulate => Report::Simulate(cmd_simulate(cfg)?),
        Command::Optimize => Report::Optimize(cmd_optimize(cfg)?),
        Command::VerifyMatching => Report::Matching(cmd_verify_matching(cfg)?),
        Command::Sweep => Report::Sweep(cmd_sweep(cfg)?),
    })
}
