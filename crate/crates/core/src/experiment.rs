//! Config-driven sweeps over the market, with CSV, summary and gnuplot output.
//!
//! An experiment pairs a *study* (what is measured) with a *sweep variable*
//! (what is varied). The presets fix both; `custom` takes them from
//! the config. Every `(sweep value, seed)` cell samples its own population
//! from the seed, so cells are independent and rows are reproducible.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecosystem::{
    run_scenario, sample_population, PolicyDiagnostics, PopulationSpec, PricingConfig, Scenario,
    ScenarioLedger, StepRule,
};
use crate::error::{Error, Result};
use crate::model::{DataPlan, Supports};
use crate::offline::solve_offline;
use crate::online::{run_greedy_month, run_online_month, StepSchedule};
use crate::pricing::{guarantee_parameters, phi_loss, PolicyParams, DEFAULT_REFINEMENT};

/// Environment variable replacing the configured seeds with a single seed.
pub const SEED_ENV: &str = "EDGEMARKET_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig3a,
    Fig3b,
    Fig3c,
    Fig4,
    Fig5,
    Fig6,
    Custom,
}

impl ExperimentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fig3a => "fig3a",
            Self::Fig3b => "fig3b",
            Self::Fig3c => "fig3c",
            Self::Fig4 => "fig4",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Custom => "custom",
        }
    }

    fn preset(&self) -> Option<(Study, SweepVariable)> {
        match self {
            Self::Fig3a => Some((Study::Mu, SweepVariable::P)),
            Self::Fig3b => Some((Study::Mu, SweepVariable::Q)),
            Self::Fig3c => Some((Study::Mu, SweepVariable::Pi)),
            Self::Fig4 => Some((Study::Esp, SweepVariable::DBar)),
            Self::Fig5 => Some((Study::Esp, SweepVariable::RBar)),
            Self::Fig6 => Some((Study::Ecosystem, SweepVariable::CBar)),
            Self::Custom => None,
        }
    }
}

/// What each cell measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    /// Mean MU payoff under the hindsight optimum, the online strategy and
    /// the greedy baseline at a fixed edge price.
    Mu,
    /// ESP revenue of the pricing policy against the best fixed price.
    Esp,
    /// All parties' outcomes with and without edge service.
    Ecosystem,
}

impl Study {
    pub fn metric_names(&self) -> &'static [&'static str] {
        match self {
            Self::Mu => &["payoff_opt", "payoff_alg1", "payoff_greedy"],
            Self::Esp => &["revenue_opt", "revenue_alg2", "ratio"],
            Self::Ecosystem => &[
                "mu_payoff_none",
                "mu_payoff_edge",
                "cp_revenue_none",
                "cp_revenue_edge",
                "isp_revenue_none",
                "isp_revenue_edge",
                "esp_revenue_edge",
                "welfare_none",
                "welfare_edge",
            ],
        }
    }
}

/// Quantity varied across the sweep; the name is the CSV column header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    /// Fixed edge price.
    #[serde(rename = "p")]
    P,
    /// Monthly data cap.
    #[serde(rename = "Q")]
    Q,
    /// Overage fee.
    #[serde(rename = "pi")]
    Pi,
    /// Maximal data-usage level.
    #[serde(rename = "d_bar")]
    DBar,
    /// Maximal raw-data amount.
    #[serde(rename = "r_bar")]
    RBar,
    /// Maximal computing amount.
    #[serde(rename = "c_bar")]
    CBar,
}

impl SweepVariable {
    pub fn column(&self) -> &'static str {
        match self {
            Self::P => "p",
            Self::Q => "Q",
            Self::Pi => "pi",
            Self::DBar => "d_bar",
            Self::RBar => "r_bar",
            Self::CBar => "c_bar",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

fn default_horizon() -> usize {
    30
}
fn default_d_max() -> f64 {
    0.15
}
fn default_r_max() -> f64 {
    0.1
}
fn default_c_max() -> f64 {
    1.0
}
fn default_utility_exponent() -> f64 {
    0.5
}
fn default_cost_exponent() -> f64 {
    1.0
}
fn default_cap() -> f64 {
    1.0
}
fn default_subscription_fee() -> f64 {
    10.0
}
fn default_overage_fee() -> f64 {
    15.0
}
fn default_cp_tau() -> f64 {
    0.5
}
fn default_edge_price() -> f64 {
    0.5
}
fn default_p_min() -> f64 {
    0.01
}
fn default_alpha() -> f64 {
    1.0
}
fn default_refinement() -> usize {
    DEFAULT_REFINEMENT
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// A per-MU data plan replacing the population default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOverride {
    pub user: usize,
    pub cap: f64,
    pub subscription_fee: f64,
    pub overage_fee: f64,
}

/// `[population]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    /// MUs per market; defaults to 1 for the MU study and 500 otherwise.
    #[serde(default)]
    pub n_users: Option<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
    #[serde(default = "default_utility_exponent")]
    pub utility_exponent: f64,
    #[serde(default = "default_cost_exponent")]
    pub cost_exponent: f64,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "default_subscription_fee")]
    pub subscription_fee: f64,
    #[serde(default = "default_overage_fee")]
    pub overage_fee: f64,
    #[serde(default)]
    pub plan_overrides: Vec<PlanOverride>,
    #[serde(default = "default_cp_tau")]
    pub cp_tau: f64,
    #[serde(default)]
    pub step_rule: StepRule,
    /// Fixed edge price used by the MU study.
    #[serde(default = "default_edge_price")]
    pub edge_price: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// `[pricing]` table. `epsilon`, `delta` and `gamma` default to the
/// guarantee parameters of `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSection {
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
}

impl Default for PricingSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl PricingSection {
    fn resolve(&self) -> Result<PricingConfig> {
        let base = guarantee_parameters(self.alpha)?;
        let params = PolicyParams::new(
            self.epsilon.unwrap_or(base.epsilon),
            self.delta.unwrap_or(base.delta),
            self.gamma.unwrap_or(base.gamma),
        )?;
        if !(self.p_min > 0.0 && self.p_min.is_finite()) {
            return Err(Error::Config(format!("p_min = {} must be > 0", self.p_min)));
        }
        Ok(PricingConfig {
            p_min: self.p_min,
            params,
            refinement: self.refinement,
        })
    }
}

/// `[sweep]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Required for `custom`; must match the preset otherwise.
    #[serde(default)]
    pub variable: Option<SweepVariable>,
    pub values: Vec<f64>,
}

/// `[output]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    /// File stem; defaults to the experiment id.
    #[serde(default)]
    pub name: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_output_dir(),
            name: None,
        }
    }
}

/// Parsed experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Required for `custom`; must match the preset otherwise.
    #[serde(default)]
    pub study: Option<Study>,
    pub sweep: SweepConfig,
    /// Explicit seeds; alternatively `seed_count` for `0..seed_count`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub seed_count: Option<u64>,
    #[serde(default)]
    pub population: PopulationConfig,
    #[serde(default)]
    pub pricing: PricingSection,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Validates the config and fixes every default. `seed_override`
    /// replaces the configured seeds (see [`SEED_ENV`]).
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<Experiment> {
        let (study, variable) = match (self.experiment.preset(), self.study, self.sweep.variable) {
            (Some((s, v)), study, var) => {
                if study.is_some_and(|x| x != s) || var.is_some_and(|x| x != v) {
                    return Err(Error::Config(format!(
                        "{} fixes study and sweep variable; remove or correct them",
                        self.experiment.as_str()
                    )));
                }
                (s, v)
            }
            (None, Some(s), Some(v)) => (s, v),
            (None, _, _) => {
                return Err(Error::Config(
                    "custom experiments need `study` and `sweep.variable`".into(),
                ))
            }
        };

        let seeds: Vec<u64> = match seed_override {
            Some(s) => vec![s],
            None => {
                let mut seeds = self.seeds.clone();
                if let Some(n) = self.seed_count {
                    if !seeds.is_empty() {
                        return Err(Error::Config("give either `seeds` or `seed_count`".into()));
                    }
                    seeds = (0..n).collect();
                }
                seeds
            }
        };
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep.values is empty".into()));
        }

        let p = &self.population;
        let n_users = p.n_users.unwrap_or(match study {
            Study::Mu => 1,
            _ => 500,
        });
        let plan = DataPlan::new(p.cap, p.subscription_fee, p.overage_fee)
            .map_err(|e| Error::Config(e.to_string()))?;
        let plan_overrides = p
            .plan_overrides
            .iter()
            .map(|o| {
                DataPlan::new(o.cap, o.subscription_fee, o.overage_fee).map(|plan| (o.user, plan))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(e.to_string()))?;
        let base = PopulationSpec {
            n_users,
            horizon: p.horizon,
            supports: Supports::new(p.d_max, p.r_max, p.c_max)
                .map_err(|e| Error::Config(e.to_string()))?,
            utility_exponent: p.utility_exponent,
            cost_exponent: p.cost_exponent,
            plan,
            plan_overrides,
            cp_tau: p.cp_tau,
            step_rule: p.step_rule,
            seed: 0,
        };
        let pricing = self
            .pricing
            .resolve()
            .map_err(|e| Error::Config(e.to_string()))?;
        let experiment = Experiment {
            id: self.experiment,
            study,
            variable,
            values: self.sweep.values.clone(),
            seeds,
            base,
            edge_price: p.edge_price,
            pricing,
            output_dir: self.output.dir.clone(),
            output_name: self
                .output
                .name
                .clone()
                .unwrap_or_else(|| self.experiment.as_str().to_string()),
        };
        for &v in &experiment.values {
            let (spec, price) = experiment
                .cell_spec(v, 0)
                .map_err(|e| Error::Config(format!("sweep value {v}: {e}")))?;
            spec.validate()
                .map_err(|e| Error::Config(format!("sweep value {v}: {e}")))?;
            if !(price >= 0.0 && price.is_finite()) {
                return Err(Error::Config(format!("edge price {price} must be >= 0")));
            }
            if study != Study::Mu {
                let cap = spec.price_cap()?;
                experiment
                    .pricing
                    .grid(cap)
                    .map_err(|e| Error::Config(format!("sweep value {v}: {e}")))?;
            }
        }
        Ok(experiment)
    }
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub id: ExperimentId,
    pub study: Study,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Population before the sweep variable and seed are applied.
    pub base: PopulationSpec,
    pub edge_price: f64,
    pub pricing: PricingConfig,
    pub output_dir: PathBuf,
    pub output_name: String,
}

/// Outcome of the MU study in one cell (means over the cell's MUs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuCell {
    pub payoff_opt: f64,
    pub payoff_alg1: f64,
    pub payoff_greedy: f64,
}

/// Outcome of the ESP study in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EspCell {
    /// Hindsight-optimal fixed-price revenue `V*`.
    pub revenue_opt: f64,
    pub price_opt: f64,
    pub revenue_alg2: f64,
    /// `revenue_alg2 / V*` (0 when `V* = 0`).
    pub ratio: f64,
    /// `max_k V(k)`.
    pub best_candidate_revenue: f64,
    pub epsilon: f64,
    /// Whether `max_k V(k) >= V* / (1 + ε)`.
    pub rounding_bound_holds: bool,
    /// Loss constant `Φ` of the configured parameters.
    pub phi: f64,
    pub policy: PolicyDiagnostics,
    /// Edge-scenario ledger conservation residual.
    pub conservation_residual: f64,
}

/// Summary of one scenario ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub mu_payoff: f64,
    pub cp_revenue: f64,
    pub isp_revenue: f64,
    pub esp_revenue: f64,
    pub welfare: f64,
    pub conservation_residual: f64,
}

impl From<&ScenarioLedger> for LedgerSummary {
    fn from(l: &ScenarioLedger) -> Self {
        Self {
            mu_payoff: l.total_mu_payoff(),
            cp_revenue: l.cp_revenue,
            isp_revenue: l.isp_revenue,
            esp_revenue: l.esp_revenue,
            welfare: l.social_welfare,
            conservation_residual: l.conservation_residual(),
        }
    }
}

/// Outcome of the ecosystem study in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcosystemCell {
    pub none: LedgerSummary,
    pub edge: LedgerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Mu(MuCell),
    Esp(EspCell),
    Ecosystem(EcosystemCell),
}

impl CellOutcome {
    /// Metric values in the order of [`Study::metric_names`].
    pub fn metrics(&self) -> Vec<f64> {
        match self {
            Self::Mu(c) => vec![c.payoff_opt, c.payoff_alg1, c.payoff_greedy],
            Self::Esp(c) => vec![c.revenue_opt, c.revenue_alg2, c.ratio],
            Self::Ecosystem(c) => vec![
                c.none.mu_payoff,
                c.edge.mu_payoff,
                c.none.cp_revenue,
                c.edge.cp_revenue,
                c.none.isp_revenue,
                c.edge.isp_revenue,
                c.edge.esp_revenue,
                c.none.welfare,
                c.edge.welfare,
            ],
        }
    }
}

/// One `(sweep value, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    pub seed: u64,
    pub outcome: CellOutcome,
}

impl Experiment {
    /// Population spec and edge price of one cell.
    pub fn cell_spec(&self, value: f64, seed: u64) -> Result<(PopulationSpec, f64)> {
        if !value.is_finite() {
            return Err(Error::Config(format!("sweep value {value} is not finite")));
        }
        let mut spec = self.base.clone();
        spec.seed = seed;
        let mut price = self.edge_price;
        match self.variable {
            SweepVariable::P => price = value,
            SweepVariable::Q => {
                spec.plan = DataPlan::new(value, spec.plan.subscription_fee, spec.plan.overage_fee)?
            }
            SweepVariable::Pi => {
                spec.plan = DataPlan::new(spec.plan.cap, spec.plan.subscription_fee, value)?
            }
            SweepVariable::DBar => {
                spec.supports = Supports::new(value, spec.supports.raw, spec.supports.compute)?
            }
            SweepVariable::RBar => {
                spec.supports = Supports::new(spec.supports.data, value, spec.supports.compute)?
            }
            SweepVariable::CBar => {
                spec.supports = Supports::new(spec.supports.data, spec.supports.raw, value)?
            }
        }
        Ok((spec, price))
    }

    /// Runs one cell.
    pub fn run_cell(&self, value: f64, seed: u64) -> Result<Cell> {
        let (spec, price) = self.cell_spec(value, seed)?;
        let outcome = run_study(self.study, &spec, price, &self.pricing)?;
        let cell = Cell {
            value,
            seed,
            outcome,
        };
        if let Some(bad) = cell.outcome.metrics().iter().find(|m| !m.is_finite()) {
            return Err(Error::Numeric {
                seed,
                detail: format!("non-finite metric {bad} at {} = {value}", self.variable),
            });
        }
        Ok(cell)
    }

    /// Runs every cell on `jobs` worker threads (0 = all cores). Cells are
    /// returned in `(sweep value, seed)` order regardless of scheduling.
    pub fn run(&self, jobs: usize) -> Result<Vec<Cell>> {
        let tasks: Vec<(f64, u64)> = self
            .values
            .iter()
            .flat_map(|&v| self.seeds.iter().map(move |&s| (v, s)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            tasks
                .par_iter()
                .map(|&(v, s)| {
                    self.run_cell(v, s).map_err(|e| match e {
                        Error::Numeric { .. } => e,
                        other => Error::Numeric {
                            seed: s,
                            detail: format!("{} = {v}: {other}", self.variable),
                        },
                    })
                })
                .collect()
        })
    }

    pub fn header(&self) -> Vec<&'static str> {
        let mut h = vec![self.variable.column(), "seed"];
        h.extend_from_slice(self.study.metric_names());
        h
    }

    pub fn csv_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.csv", self.output_name))
    }
}

/// Runs `study` on one population.
pub fn run_study(
    study: Study,
    spec: &PopulationSpec,
    edge_price: f64,
    pricing: &PricingConfig,
) -> Result<CellOutcome> {
    let pop = sample_population(spec)?;
    let (u, e) = (pop.utility(), pop.cost());
    match study {
        Study::Mu => {
            let (mut opt, mut alg1, mut greedy) = (0.0, 0.0, 0.0);
            for (n, month) in pop.months.iter().enumerate() {
                let slots: Vec<_> = month.iter().map(|s| s.with_price(edge_price)).collect();
                let plan = &pop.plans()[n];
                let schedule = match spec.step_rule {
                    StepRule::Constant => StepSchedule::tuned(plan, spec.horizon, &spec.supports)?,
                    StepRule::Decaying => {
                        StepSchedule::tuned_decaying(plan, spec.horizon, &spec.supports)?
                    }
                };
                opt += solve_offline(&slots, plan, u, e)?.payoff;
                alg1 += run_online_month(&slots, plan, u, e, schedule)?.payoff;
                greedy += run_greedy_month(&slots, plan, u, e)?.payoff;
            }
            let n = pop.months.len() as f64;
            Ok(CellOutcome::Mu(MuCell {
                payoff_opt: opt / n,
                payoff_alg1: alg1 / n,
                payoff_greedy: greedy / n,
            }))
        }
        Study::Esp => {
            let cap = spec.price_cap()?;
            let grid = pricing.grid(cap)?;
            let edge = run_scenario(&pop, Scenario::Edge, Some(pricing))?;
            let opt = pop.ex_post_optimum(&grid, pricing.refinement)?;
            let phi = phi_loss(
                &pricing.params,
                spec.n_users,
                cap,
                spec.supports.compute,
                pricing.p_min,
            )?;
            let ratio = if opt.revenue > 0.0 {
                edge.esp_revenue / opt.revenue
            } else {
                0.0
            };
            Ok(CellOutcome::Esp(EspCell {
                revenue_opt: opt.revenue,
                price_opt: opt.price,
                revenue_alg2: edge.esp_revenue,
                ratio,
                best_candidate_revenue: opt.best_candidate_revenue,
                epsilon: pricing.params.epsilon,
                rounding_bound_holds: opt.rounding_bound_holds(pricing.params.epsilon),
                phi,
                conservation_residual: edge.conservation_residual(),
                policy: edge
                    .policy
                    .expect("edge scenario records policy diagnostics"),
            }))
        }
        Study::Ecosystem => {
            let none = run_scenario(&pop, Scenario::None, None)?;
            let edge = run_scenario(&pop, Scenario::Edge, Some(pricing))?;
            Ok(CellOutcome::Ecosystem(EcosystemCell {
                none: (&none).into(),
                edge: (&edge).into(),
            }))
        }
    }
}

/// Mean and sample standard deviation of each metric at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: f64,
    pub count: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-sweep-value means and standard deviations, in sweep order.
pub fn summarize(values: &[f64], cells: &[Cell]) -> Vec<SummaryRow> {
    values
        .iter()
        .map(|&v| {
            let rows: Vec<Vec<f64>> = cells
                .iter()
                .filter(|c| c.value == v)
                .map(|c| c.outcome.metrics())
                .collect();
            let width = rows.first().map_or(0, Vec::len);
            let (means, stds) = (0..width)
                .map(|j| mean_std(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
                .unzip();
            SummaryRow {
                value: v,
                count: rows.len(),
                means,
                stds,
            }
        })
        .collect()
}

/// Writes one row per cell to `path`.
pub fn write_csv(path: &Path, header: &[&str], cells: &[Cell]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for c in cells {
        let mut rec = vec![c.value.to_string(), c.seed.to_string()];
        rec.extend(c.outcome.metrics().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the summary as CSV with `<metric>_mean` and `<metric>_std` columns.
pub fn write_summary_csv(
    path: &Path,
    variable: SweepVariable,
    metrics: &[&str],
    summary: &[SummaryRow],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![variable.column().to_string(), "count".to_string()];
    for m in metrics {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for row in summary {
        let mut rec = vec![row.value.to_string(), row.count.to_string()];
        for (m, s) in row.means.iter().zip(&row.stds) {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one whitespace-separated series file per metric:
/// `<stem>_<metric>.dat` with columns `value mean std`.
pub fn write_gnuplot(
    dir: &Path,
    stem: &str,
    variable: SweepVariable,
    metrics: &[&str],
    summary: &[SummaryRow],
) -> Result<Vec<PathBuf>> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (j, m) in metrics.iter().enumerate() {
        let path = dir.join(format!("{stem}_{m}.dat"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(f, "# {variable} {m}_mean {m}_std")?;
        for row in summary {
            writeln!(f, "{} {} {}", row.value, row.means[j], row.stds[j])?;
        }
        f.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Human-readable summary table.
pub fn format_summary(variable: SweepVariable, metrics: &[&str], summary: &[SummaryRow]) -> String {
    let mut out = format!("{:>10} {:>6}", variable.column(), "n");
    for m in metrics {
        out.push_str(&format!(" {:>26}", format!("{m} (mean ± std)")));
    }
    out.push('\n');
    for row in summary {
        out.push_str(&format!("{:>10} {:>6}", row.value, row.count));
        for (m, s) in row.means.iter().zip(&row.stds) {
            out.push_str(&format!(" {:>26}", format!("{m:.4} ± {s:.4}")));
        }
        out.push('\n');
    }
    out
}

/// Reads `EDGEMARKET_SEED`, if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub csv: PathBuf,
    pub summary_csv: PathBuf,
    pub gnuplot: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
    pub cells: Vec<Cell>,
}

/// Runs an experiment and writes its outputs under `out_dir` (or the
/// configured directory).
pub fn run_experiment(
    experiment: &Experiment,
    out_dir: Option<&Path>,
    jobs: usize,
    gnuplot: bool,
) -> Result<RunArtifacts> {
    let mut exp = experiment.clone();
    if let Some(dir) = out_dir {
        exp.output_dir = dir.to_path_buf();
    }
    let cells = exp.run(jobs)?;
    let metrics = exp.study.metric_names();
    let summary = summarize(&exp.values, &cells);
    let csv = exp.csv_path();
    write_csv(&csv, &exp.header(), &cells)?;
    let summary_csv = exp
        .output_dir
        .join(format!("{}_summary.csv", exp.output_name));
    write_summary_csv(&summary_csv, exp.variable, metrics, &summary)?;
    let gnuplot = if gnuplot {
        write_gnuplot(
            &exp.output_dir,
            &exp.output_name,
            exp.variable,
            metrics,
            &summary,
        )?
    } else {
        Vec::new()
    };
    Ok(RunArtifacts {
        csv,
        summary_csv,
        gnuplot,
        summary,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<Experiment> {
        ExperimentConfig::from_toml(text)?.resolve(None)
    }

    #[test]
    fn preset_fixes_study_and_variable() {
        let e =
            cfg("experiment = \"fig3b\"\nseeds = [1, 2]\n[sweep]\nvalues = [0.4, 2.5]\n").unwrap();
        assert_eq!(e.study, Study::Mu);
        assert_eq!(e.variable, SweepVariable::Q);
        assert_eq!(e.base.n_users, 1);
        assert_eq!(
            e.header(),
            vec!["Q", "seed", "payoff_opt", "payoff_alg1", "payoff_greedy"]
        );
        let e = cfg("experiment = \"fig4\"\nseed_count = 3\n[sweep]\nvalues = [0.1]\n").unwrap();
        assert_eq!(e.seeds, vec![0, 1, 2]);
        assert_eq!(e.base.n_users, 500);
        assert_eq!(
            e.header(),
            vec!["d_bar", "seed", "revenue_opt", "revenue_alg2", "ratio"]
        );
        assert_eq!(e.pricing.params, guarantee_parameters(1.0).unwrap());
    }

    #[test]
    fn config_errors() {
        let empty = cfg("experiment = \"fig3b\"\nseeds = []\n[sweep]\nvalues = [1.0]\n");
        assert!(matches!(empty, Err(Error::Config(_))));
        let no_values = cfg("experiment = \"fig3b\"\nseeds = [1]\n[sweep]\nvalues = []\n");
        assert!(matches!(no_values, Err(Error::Config(_))));
        let custom = cfg("experiment = \"custom\"\nseeds = [1]\n[sweep]\nvalues = [1.0]\n");
        assert!(matches!(custom, Err(Error::Config(_))));
        let clash =
            cfg("experiment = \"fig3b\"\nstudy = \"esp\"\nseeds = [1]\n[sweep]\nvalues = [1.0]\n");
        assert!(matches!(clash, Err(Error::Config(_))));
        let unknown =
            cfg("experiment = \"fig3b\"\nseeds = [1]\nbogus = 1\n[sweep]\nvalues = [1.0]\n");
        assert!(matches!(unknown, Err(Error::Config(_))));
        let negative = cfg("experiment = \"fig3b\"\nseeds = [1]\n[sweep]\nvalues = [-1.0]\n");
        assert!(matches!(negative, Err(Error::Config(_))));
        let both =
            cfg("experiment = \"fig3b\"\nseeds = [1]\nseed_count = 2\n[sweep]\nvalues = [1.0]\n");
        assert!(matches!(both, Err(Error::Config(_))));
        let bad_id = cfg("experiment = \"fig9\"\nseeds = [1]\n[sweep]\nvalues = [1.0]\n");
        assert!(matches!(bad_id, Err(Error::Config(_))));
        let bad_alpha = cfg(
            "experiment = \"fig4\"\nseeds = [1]\n[sweep]\nvalues = [0.1]\n[pricing]\nalpha = 2.0\n",
        );
        assert!(matches!(bad_alpha, Err(Error::Config(_))));
    }

    #[test]
    fn seed_override_replaces_seeds() {
        let c = ExperimentConfig::from_toml(
            "experiment = \"fig3a\"\nseed_count = 10\n[sweep]\nvalues = [0.5]\n",
        )
        .unwrap();
        assert_eq!(c.resolve(Some(42)).unwrap().seeds, vec![42]);
    }

    #[test]
    fn custom_experiment_runs() {
        let e = cfg(
            "experiment = \"custom\"\nstudy = \"ecosystem\"\nseeds = [3]\n\
                     [sweep]\nvariable = \"Q\"\nvalues = [1.0, 2.0]\n\
                     [population]\nn_users = 5\n",
        )
        .unwrap();
        let cells = e.run(1).unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].outcome.metrics().len(), 9);
        assert_eq!(e.header()[0], "Q");
    }

    #[test]
    fn cells_are_ordered_and_deterministic() {
        let e =
            cfg("experiment = \"fig3c\"\nseeds = [5, 1]\n[sweep]\nvalues = [20.0, 5.0]\n").unwrap();
        let a = e.run(2).unwrap();
        let b = e.run(1).unwrap();
        assert_eq!(a, b);
        let order: Vec<(f64, u64)> = a.iter().map(|c| (c.value, c.seed)).collect();
        assert_eq!(order, vec![(20.0, 5), (20.0, 1), (5.0, 5), (5.0, 1)]);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
        let cells: Vec<Cell> = [(1.0, 2.0), (1.0, 4.0), (2.0, 10.0)]
            .iter()
            .enumerate()
            .map(|(i, &(v, m))| Cell {
                value: v,
                seed: i as u64,
                outcome: CellOutcome::Mu(MuCell {
                    payoff_opt: m,
                    payoff_alg1: m,
                    payoff_greedy: m,
                }),
            })
            .collect();
        let s = summarize(&[1.0, 2.0], &cells);
        assert_eq!(s[0].count, 2);
        assert_eq!(s[0].means, vec![3.0; 3]);
        assert_eq!(s[1].means, vec![10.0; 3]);
        assert_eq!(s[1].stds, vec![0.0; 3]);
    }

    #[test]
    fn outputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e =
            cfg("experiment = \"fig3b\"\nseeds = [1, 2]\n[sweep]\nvalues = [0.4, 2.5]\n").unwrap();
        let a = run_experiment(&e, Some(dir.path()), 1, true).unwrap();
        let first = std::fs::read(&a.csv).unwrap();
        let b = run_experiment(&e, Some(dir.path()), 1, true).unwrap();
        assert_eq!(first, std::fs::read(&b.csv).unwrap());
        assert_eq!(a.gnuplot.len(), 3);

        // Summary means equal a recomputation from the CSV.
        let mut r = csv::Reader::from_path(&a.csv).unwrap();
        let rows: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
            .collect();
        for s in &a.summary {
            let col: Vec<f64> = rows
                .iter()
                .filter(|r| r[0] == s.value)
                .map(|r| r[3])
                .collect();
            assert_eq!(mean_std(&col).0, s.means[1]);
        }
    }
}
