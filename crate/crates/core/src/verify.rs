//! Acceptance checks with their reference setups.
//!
//! Each `criterion_*` function runs one check at full scale and returns a
//! [`CriterionReport`]: pass/fail plus the measured quantities. The
//! reference setups are exposed as [`Experiment`] builders so the CLI
//! configs and the checks share one definition.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::ecosystem::{
    run_scenario, sample_population, PopulationSpec, PricingConfig, Scenario, StepRule,
};
use crate::error::{Error, Result};
use crate::experiment::{
    mean_std, CellOutcome, EspCell, Experiment, ExperimentId, Study, SweepVariable,
};
use crate::model::{CostFamily, DataPlan, Supports, UtilityFamily};
use crate::offline::{
    brute_force_month_oracle, matching_regions, potential_usage, solve_offline, SHADOW_PRICE_WIDTH,
    SLACKNESS_TOLERANCE,
};
use crate::online::{regret_report, run_online_month, StepSchedule};
use crate::pricing::{guarantee_parameters, DEFAULT_REFINEMENT};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    /// Measured quantities, one per line.
    pub details: Vec<String>,
    pub elapsed: Duration,
}

impl CriterionReport {
    /// `PASS criterion N: title` or `FAIL ...`.
    pub fn status_line(&self) -> String {
        format!(
            "{} criterion {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Scale knobs of the checks. [`VerifyOptions::default`] is the full suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Seeds per Monte-Carlo check.
    pub seeds: u64,
    /// Worker threads (0 = all cores).
    pub jobs: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 100,
            jobs: 0,
        }
    }
}

/// Mean with a two-sided 95% Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        let n = xs.len() as f64;
        let half = if xs.len() > 1 {
            let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
            t.inverse_cdf(0.975) * std / n.sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            lo: mean - half,
            hi: mean + half,
            n: xs.len(),
        }
    }
}

impl std::fmt::Display for MeanCi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.4} [95% CI {:.4}, {:.4}; n={}]",
            self.mean, self.lo, self.hi, self.n
        )
    }
}

/// Monthly-cap values of the Q sweep (GB).
pub const CAP_SWEEP: [f64; 8] = [0.4, 0.9, 1.4, 1.9, 2.5, 2.9, 3.4, 3.9];
/// Cap at which demand and cap are comparable.
pub const MEDIUM_CAP: f64 = 2.5;
/// Overage-fee values of the π sweep ($/GB).
pub const OVERAGE_SWEEP: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
/// Maximal data-usage values of the d̄ sweep (GB).
pub const DATA_SWEEP: [f64; 5] = [0.05, 0.1, 0.15, 0.2, 0.25];
/// Maximal raw-data values of the r̄ sweep (GB).
pub const RAW_SWEEP: [f64; 5] = [0.0, 0.05, 0.1, 0.15, 0.2];
/// Maximal computing values of the c̄ sweep.
pub const COMPUTE_SWEEP: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];
/// Supports `(d̄, r̄)` of the ecosystem sweep.
pub const ECOSYSTEM_SUPPORTS: (f64, f64) = (0.1, 0.05);
/// Empirical revenue-ratio floors.
pub const RATIO_FLOOR: f64 = 0.60;
pub const GUARANTEED_RATIO_FLOOR: f64 = 0.50;
/// Alg1-to-optimum payoff floor.
pub const PAYOFF_RATIO_FLOOR: f64 = 0.85;

/// Baseline population: one month of 30 slots, `d̄ = 0.15`, `r̄ = 0.1`,
/// `c̄ = 1`, the `{1 GB, $10, $15/GB}` plan and the `(a, b) = (0.5, 1)` family.
pub fn baseline_spec(n_users: usize) -> PopulationSpec {
    PopulationSpec {
        n_users,
        horizon: 30,
        supports: Supports::new(0.15, 0.1, 1.0).expect("valid supports"),
        utility_exponent: 0.5,
        cost_exponent: 1.0,
        plan: DataPlan::new(1.0, 10.0, 15.0).expect("valid plan"),
        plan_overrides: Vec::new(),
        cp_tau: 0.5,
        step_rule: StepRule::Constant,
        seed: 0,
    }
}

/// Pricing policy with the guarantee parameters of `α = 1`.
pub fn baseline_pricing() -> PricingConfig {
    PricingConfig {
        p_min: 0.01,
        params: guarantee_parameters(1.0).expect("α = 1 is valid"),
        refinement: DEFAULT_REFINEMENT,
    }
}

/// Reference setup of each preset with `seeds` seeds.
pub fn reference_experiment(id: ExperimentId, seeds: u64) -> Result<Experiment> {
    let (study, variable, values, base): (_, _, Vec<f64>, _) = match id {
        ExperimentId::Fig3a => (
            Study::Mu,
            SweepVariable::P,
            vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5],
            baseline_spec(1),
        ),
        ExperimentId::Fig3b => (
            Study::Mu,
            SweepVariable::Q,
            CAP_SWEEP.to_vec(),
            baseline_spec(1),
        ),
        ExperimentId::Fig3c => (
            Study::Mu,
            SweepVariable::Pi,
            OVERAGE_SWEEP.to_vec(),
            baseline_spec(1),
        ),
        ExperimentId::Fig4 => (
            Study::Esp,
            SweepVariable::DBar,
            DATA_SWEEP.to_vec(),
            baseline_spec(500),
        ),
        ExperimentId::Fig5 => (
            Study::Esp,
            SweepVariable::RBar,
            RAW_SWEEP.to_vec(),
            baseline_spec(500),
        ),
        ExperimentId::Fig6 => {
            let mut base = baseline_spec(500);
            base.supports = Supports::new(ECOSYSTEM_SUPPORTS.0, ECOSYSTEM_SUPPORTS.1, 1.0)?;
            (
                Study::Ecosystem,
                SweepVariable::CBar,
                COMPUTE_SWEEP.to_vec(),
                base,
            )
        }
        ExperimentId::Custom => {
            return Err(Error::Config(
                "custom experiments have no reference setup".into(),
            ))
        }
    };
    Ok(Experiment {
        id,
        study,
        variable,
        values,
        seeds: (0..seeds).collect(),
        base,
        edge_price: 0.5,
        pricing: baseline_pricing(),
        output_dir: PathBuf::from("results"),
        output_name: id.as_str().to_string(),
    })
}

fn midpoint(values: &[f64]) -> f64 {
    values[values.len() / 2]
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_cells(exp: &Experiment, values: &[f64], jobs: usize) -> Result<Vec<Vec<CellOutcome>>> {
    values
        .iter()
        .map(|&v| {
            in_pool(jobs, || {
                exp.seeds
                    .par_iter()
                    .map(|&s| exp.run_cell(v, s).map(|c| c.outcome))
                    .collect::<Result<Vec<_>>>()
            })?
        })
        .collect()
}

fn timed(
    id: u8,
    title: &str,
    f: impl FnOnce() -> Result<(bool, Vec<String>)>,
) -> Result<CriterionReport> {
    let start = Instant::now();
    let (passed, details) = f()?;
    Ok(CriterionReport {
        id,
        title: title.to_string(),
        passed,
        details,
        elapsed: start.elapsed(),
    })
}

/// Random T = 4 month at the baseline parameterization with a random cap in
/// `[0, 1]` GB and a random edge price below the price cap.
fn random_short_month(seed: u64) -> Result<(Vec<crate::model::SlotRealization>, DataPlan)> {
    let mut spec = baseline_spec(1);
    spec.horizon = 4;
    spec.seed = seed;
    let pop = sample_population(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let price = rng.random_range(0.0..pop.price_cap()?);
    let plan = DataPlan::new(rng.random_range(0.0..1.0), 10.0, 15.0)?;
    let slots = pop.months[0].iter().map(|s| s.with_price(price)).collect();
    Ok((slots, plan))
}

/// Points per axis of the month oracle's grid.
pub const ORACLE_GRID: usize = 10;
/// Relative agreement required between the closed form and the oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-3;

/// Closed-form offline solution against the brute-force month oracle on 50
/// random four-slot months, with its KKT residuals.
pub fn criterion_1(opts: &VerifyOptions) -> Result<CriterionReport> {
    timed(
        1,
        "offline solver matches brute-force oracle with KKT residuals",
        || {
            let u = UtilityFamily::new(0.5)?;
            let e = CostFamily::quadratic();
            let rows = in_pool(opts.jobs, || {
                (0..50u64)
                    .into_par_iter()
                    .map(|seed| -> Result<(f64, f64, f64, bool)> {
                        let (slots, plan) = random_short_month(seed)?;
                        let sol = solve_offline(&slots, &plan, &u, &e)?;
                        let oracle = brute_force_month_oracle(&slots, &plan, &u, &e, ORACLE_GRID)?;
                        let scale = oracle.payoff.abs().max(1.0);
                        let shortfall = (oracle.payoff - sol.payoff) / scale;
                        let slack = sol.slackness_residual(&plan).abs();
                        // Interior shadow price: the cap binds up to the
                        // bisection width times the local slope of A(λ).
                        let lam = sol.shadow_price;
                        let mut kkt = (0.0..=plan.overage_fee).contains(&lam);
                        let stationarity = if lam > 0.0 && lam < plan.overage_fee {
                            let h = 1e-6;
                            let slope = (potential_usage(&slots, (lam - h).max(0.0), &u, &e)
                                - potential_usage(&slots, lam + h, &u, &e))
                                / (2.0 * h);
                            let gap = (potential_usage(&slots, lam, &u, &e) - plan.cap).abs();
                            kkt &= gap <= SHADOW_PRICE_WIDTH * slope.abs() + SLACKNESS_TOLERANCE;
                            gap
                        } else {
                            0.0
                        };
                        kkt &= slack <= SLACKNESS_TOLERANCE;
                        if lam < plan.overage_fee {
                            kkt &= sol.usage <= plan.cap + SLACKNESS_TOLERANCE;
                        }
                        Ok((shortfall, slack, stationarity, kkt))
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let worst = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
            let max_slack = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            let max_gap = rows.iter().map(|r| r.2).fold(0.0, f64::max);
            let kkt_fail = rows.iter().filter(|r| !r.3).count();
            let payoff_fail = rows.iter().filter(|r| r.0 > ORACLE_TOLERANCE).count();
            Ok((
            payoff_fail == 0 && kkt_fail == 0,
            vec![
                format!("instances: {}", rows.len()),
                format!("max relative oracle excess over closed form: {worst:.3e} (limit {ORACLE_TOLERANCE:e})"),
                format!("max complementary-slackness residual: {max_slack:.3e} (limit {SLACKNESS_TOLERANCE:e})"),
                format!("max |A(λ*) - Q| at interior λ*: {max_gap:.3e}"),
                format!("payoff violations: {payoff_fail}, KKT violations: {kkt_fail}"),
            ],
        ))
        },
    )
}

/// Online strategy's per-slot gap against its worst-case bound on seeded
/// 30-slot months.
pub fn criterion_2(opts: &VerifyOptions) -> Result<CriterionReport> {
    timed(2, "online regret within its bound on every month", || {
        let spec0 = baseline_spec(1);
        let reports = in_pool(opts.jobs, || {
            (0..opts.seeds)
                .into_par_iter()
                .map(|seed| {
                    let mut spec = spec0.clone();
                    spec.seed = seed;
                    let pop = sample_population(&spec)?;
                    let slots: Vec<_> = pop.months[0].iter().map(|s| s.with_price(0.5)).collect();
                    let plan = &pop.plans()[0];
                    let schedule = StepSchedule::tuned(plan, spec.horizon, &spec.supports)?;
                    regret_report(
                        &slots,
                        plan,
                        pop.utility(),
                        pop.cost(),
                        schedule,
                        &spec.supports,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let violations = reports.iter().filter(|r| !r.within_bound()).count();
        let max_ratio = reports
            .iter()
            .map(|r| r.measured_gap / r.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let gaps: Vec<f64> = reports.iter().map(|r| r.measured_gap).collect();
        let closed_form: Vec<f64> = reports
            .iter()
            .map(|r| {
                spec0.plan.overage_fee * (r.demand_divergence + r.consumption_fluctuation)
                    / (spec0.horizon as f64).sqrt()
            })
            .collect();
        let identity = reports
            .iter()
            .zip(&closed_form)
            .all(|(r, c)| (r.bound - c).abs() <= 1e-9 * c.max(1.0));
        Ok((
            violations == 0 && identity,
            vec![
                format!("months: {}", reports.len()),
                format!("per-slot gap: {}", MeanCi::of(&gaps)),
                format!("max gap / bound: {max_ratio:.4}"),
                format!("bound equals π(Ξ+Ψ)/√T on every month: {identity}"),
                format!("violations: {violations}"),
            ],
        ))
    })
}

fn mu_cells(outcomes: &[CellOutcome]) -> Vec<(f64, f64, f64)> {
    outcomes
        .iter()
        .map(|o| match o {
            CellOutcome::Mu(c) => (c.payoff_opt, c.payoff_alg1, c.payoff_greedy),
            _ => unreachable!("MU study"),
        })
        .collect()
}

/// Online-to-optimal payoff ratio over the cap and overage-fee sweeps, and
/// greedy against online at the medium cap.
pub fn criterion_3(opts: &VerifyOptions) -> Result<CriterionReport> {
    timed(
        3,
        "online strategy near hindsight optimum; greedy below it at medium cap",
        || {
            let mut details = Vec::new();
            let mut passed = true;
            for id in [ExperimentId::Fig3b, ExperimentId::Fig3c] {
                let exp = reference_experiment(id, opts.seeds)?;
                let cells = run_cells(&exp, &exp.values, opts.jobs)?;
                let mut ratios = Vec::new();
                for (v, col) in exp.values.iter().zip(&cells) {
                    let rows = mu_cells(col);
                    let r: Vec<f64> = rows.iter().map(|(o, a, _)| a / o).collect();
                    details.push(format!(
                        "{} = {v}: alg1/opt {}",
                        exp.variable,
                        MeanCi::of(&r)
                    ));
                    ratios.extend(r);
                    if id == ExperimentId::Fig3b && *v == MEDIUM_CAP {
                        let diff: Vec<f64> = rows.iter().map(|(_, a, g)| a - g).collect();
                        let ci = MeanCi::of(&diff);
                        let strict = ci.lo > 0.0;
                        passed &= strict;
                        details.push(format!(
                            "Q = {v}: alg1 - greedy {ci} -> greedy strictly below: {strict}"
                        ));
                    }
                }
                let ci = MeanCi::of(&ratios);
                let ok = ci.mean >= PAYOFF_RATIO_FLOOR;
                passed &= ok;
                details.push(format!(
                    "{} sweep mean alg1/opt {ci} (floor {PAYOFF_RATIO_FLOOR}): {}",
                    exp.variable,
                    if ok { "ok" } else { "below floor" }
                ));
            }
            Ok((passed, details))
        },
    )
}

/// Pricing-policy outcomes at the midpoint market of the d̄ and r̄ sweeps.
///
/// Both sweeps hold the other support at the baseline, so their midpoints are
/// the same market; it is simulated once.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointMarkets {
    /// Wall time of the simulation, charged to the first check using it.
    pub elapsed: Duration,
    pub d_bar: f64,
    pub r_bar: f64,
    pub cells: Vec<EspCell>,
}

pub fn midpoint_markets(opts: &VerifyOptions) -> Result<MidpointMarkets> {
    let start = Instant::now();
    let fig4 = reference_experiment(ExperimentId::Fig4, opts.seeds)?;
    let fig5 = reference_experiment(ExperimentId::Fig5, opts.seeds)?;
    let (d_bar, r_bar) = (midpoint(&fig4.values), midpoint(&fig5.values));
    let spec4 = fig4.cell_spec(d_bar, 0)?.0;
    let spec5 = fig5.cell_spec(r_bar, 0)?.0;
    if spec4 != spec5 {
        return Err(Error::Config(
            "d̄ and r̄ sweep midpoints describe different markets".into(),
        ));
    }
    let cells = run_cells(&fig4, &[d_bar], opts.jobs)?
        .remove(0)
        .into_iter()
        .map(|o| match o {
            CellOutcome::Esp(c) => c,
            _ => unreachable!("ESP study"),
        })
        .collect();
    Ok(MidpointMarkets {
        elapsed: start.elapsed(),
        d_bar,
        r_bar,
        cells,
    })
}

/// Virtual revenues bounded by 1 and selection probabilities above their
/// geometric floor in every slot of every Edge run.
pub fn criterion_4(markets: &MidpointMarkets) -> Result<CriterionReport> {
    timed(
        4,
        "virtual revenues <= 1 and exploration floor held",
        || {
            let v: usize = markets
                .cells
                .iter()
                .map(|c| c.policy.virtual_revenue_violations)
                .sum();
            let vc: usize = markets
                .cells
                .iter()
                .map(|c| c.policy.virtual_revenue_checks)
                .sum();
            let f: usize = markets
                .cells
                .iter()
                .map(|c| c.policy.floor_violations)
                .sum();
            let fc: usize = markets.cells.iter().map(|c| c.policy.floor_checks).sum();
            let max_v = markets
                .cells
                .iter()
                .map(|c| c.policy.max_virtual_revenue)
                .fold(0.0, f64::max);
            Ok((
                v == 0 && f == 0 && vc > 0 && fc > 0,
                vec![
                    format!("Edge runs (N = 500, T = 30): {}", markets.cells.len()),
                    format!(
                        "virtual-revenue checks: {vc}, violations: {v}, max value: {max_v:.4e}"
                    ),
                    format!("floor checks: {fc}, violations: {f}"),
                ],
            ))
        },
    )
}

/// Best grid candidate within a factor `1 + ε` of the best fixed price.
pub fn criterion_5(markets: &MidpointMarkets) -> Result<CriterionReport> {
    timed(
        5,
        "best candidate revenue >= V*/(1+ε) on every market",
        || {
            let violations = markets
                .cells
                .iter()
                .filter(|c| !c.rounding_bound_holds)
                .count();
            let worst = markets
                .cells
                .iter()
                .map(|c| c.best_candidate_revenue * (1.0 + c.epsilon) / c.revenue_opt)
                .fold(f64::INFINITY, f64::min);
            Ok((
                violations == 0,
                vec![
                    format!("markets: {}", markets.cells.len()),
                    format!("min (1+ε)·max_k V(k) / V*: {worst:.4}"),
                    format!("violations: {violations}"),
                ],
            ))
        },
    )
}

/// Pricing-policy revenue as a fraction of the best fixed price.
pub fn criterion_6(markets: &MidpointMarkets) -> Result<CriterionReport> {
    timed(
        6,
        "policy revenue fraction of hindsight-optimal fixed price",
        || {
            let ratios: Vec<f64> = markets.cells.iter().map(|c| c.ratio).collect();
            let ci = MeanCi::of(&ratios);
            let mean_ok = ci.mean >= RATIO_FLOOR;
            let qualifying: Vec<&EspCell> = markets
                .cells
                .iter()
                .filter(|c| c.revenue_opt >= 8.0 * c.phi)
                .collect();
            let guaranteed_fail = qualifying
                .iter()
                .filter(|c| c.ratio < GUARANTEED_RATIO_FLOOR)
                .count();
            let phi = markets.cells.first().map_or(f64::NAN, |c| c.phi);
            let (v_mean, _) = mean_std(
                &markets
                    .cells
                    .iter()
                    .map(|c| c.revenue_opt)
                    .collect::<Vec<_>>(),
            );
            let (p_mean, _) = mean_std(
                &markets
                    .cells
                    .iter()
                    .map(|c| c.price_opt)
                    .collect::<Vec<_>>(),
            );
            Ok((
            mean_ok && guaranteed_fail == 0,
            vec![
                format!(
                    "market at d̄ = {} / r̄ = {} (shared midpoint), {} seeds",
                    markets.d_bar, markets.r_bar, markets.cells.len()
                ),
                format!(
                    "revenue_alg2 / V*: {ci} (floor {RATIO_FLOOR}): {}",
                    if mean_ok { "ok" } else { "below floor" }
                ),
                format!("mean V* = {v_mean:.2} at mean price {p_mean:.4}; Φ = {phi:.2}"),
                format!(
                    "runs with V* >= 8Φ: {} (ratio < {GUARANTEED_RATIO_FLOOR} in {guaranteed_fail})",
                    qualifying.len()
                ),
            ],
        ))
        },
    )
}

/// Edge-vs-None improvements of every party over the c̄ sweep.
pub fn criterion_7(opts: &VerifyOptions) -> Result<CriterionReport> {
    timed(
        7,
        "edge service improves MU, CP, ISP and welfare over the c̄ sweep",
        || {
            let exp = reference_experiment(ExperimentId::Fig6, opts.seeds)?;
            let cells = run_cells(&exp, &exp.values, opts.jobs)?;
            let mut details = Vec::new();
            let names = ["MU payoff", "CP revenue", "ISP revenue", "welfare"];
            let mut all = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
            let mut passed = true;
            for (v, col) in exp.values.iter().zip(&cells) {
                let mut diffs = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
                let mut base = [0.0; 4];
                for o in col {
                    let CellOutcome::Ecosystem(c) = o else {
                        unreachable!("ecosystem study")
                    };
                    let pairs = [
                        (c.none.mu_payoff, c.edge.mu_payoff),
                        (c.none.cp_revenue, c.edge.cp_revenue),
                        (c.none.isp_revenue, c.edge.isp_revenue),
                        (c.none.welfare, c.edge.welfare),
                    ];
                    for (j, (n, e)) in pairs.into_iter().enumerate() {
                        diffs[j].push(e - n);
                        base[j] += n / col.len() as f64;
                    }
                }
                let mut line = format!("c̄ = {v}:");
                for j in 0..4 {
                    let ci = MeanCi::of(&diffs[j]);
                    passed &= ci.mean > 0.0;
                    line.push_str(&format!(
                        " {} {:+.2}%",
                        names[j],
                        100.0 * ci.mean / base[j].abs()
                    ));
                    all[j].extend_from_slice(&diffs[j]);
                }
                details.push(line);
            }
            for j in 0..4 {
                details.push(format!(
                    "{} edge - none over the sweep: {}",
                    names[j],
                    MeanCi::of(&all[j])
                ));
            }
            details.push(format!(
                "supports d̄ = {}, r̄ = {}; positive mean at every sweep value required",
                ECOSYSTEM_SUPPORTS.0, ECOSYSTEM_SUPPORTS.1
            ));
            Ok((passed, details))
        },
    )
}

/// Property suites: potential-usage monotonicity, region coverage, zero
/// offloading at the price cap, ledger conservation and inverse marginals.
pub fn criterion_8(opts: &VerifyOptions) -> Result<CriterionReport> {
    timed(8, "property suites hold with zero violations", || {
        let mut details = Vec::new();
        let mut passed = true;
        let u = UtilityFamily::new(0.5)?;
        let e = CostFamily::quadratic();
        let mut rng = ChaCha8Rng::seed_from_u64(8);

        // Potential usage is non-increasing in λ.
        let mut mono = 0;
        for i in 0..1000u64 {
            let mut spec = baseline_spec(1);
            spec.seed = 10_000 + i;
            let pop = sample_population(&spec)?;
            let price = rng.random_range(0.0..pop.price_cap()?);
            let slots: Vec<_> = pop.months[0].iter().map(|s| s.with_price(price)).collect();
            let mut prev = f64::INFINITY;
            for k in 0..=40 {
                let a = potential_usage(&slots, 15.0 * k as f64 / 40.0, &u, &e);
                if a > prev + 1e-12 {
                    mono += 1;
                    break;
                }
                prev = a;
            }
        }
        passed &= mono == 0;
        details.push(format!("A(λ) monotonicity: 1000 months, violations {mono}"));

        // Region coverage.
        let (mut gaps, mut unique) = (0usize, 0usize);
        let n_draws = 100_000;
        for _ in 0..n_draws {
            let s = crate::model::SlotRealization::new(
                rng.random_range(0.0..0.5),
                rng.random_range(0.0..0.5),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..2.0),
                rng.random_range(0.0..2.0),
                rng.random_range(0.0..2.0),
            )?;
            let m = matching_regions(&s, rng.random_range(0.0..30.0), &u, &e);
            gaps += usize::from(m.is_empty());
            unique += usize::from(m.len() == 1);
        }
        let unique_ok = unique as f64 >= 0.999 * n_draws as f64;
        passed &= gaps == 0 && unique_ok;
        details.push(format!(
            "region coverage: {n_draws} draws, gaps {gaps}, exactly one region in {:.3}%",
            100.0 * unique as f64 / n_draws as f64
        ));

        // No offloading at the price cap, offline or online.
        let mut offload = 0;
        for i in 0..100u64 {
            let mut spec = baseline_spec(1);
            spec.seed = 20_000 + i;
            let pop = sample_population(&spec)?;
            let cap = pop.price_cap()?;
            let slots: Vec<_> = pop.months[0].iter().map(|s| s.with_price(cap)).collect();
            let plan = &pop.plans()[0];
            let off = solve_offline(&slots, plan, &u, &e)?;
            let schedule = StepSchedule::tuned(plan, spec.horizon, &spec.supports)?;
            let on = run_online_month(&slots, plan, &u, &e, schedule)?;
            let on_offloaded: f64 = slots
                .iter()
                .zip(&on.decisions)
                .map(|(s, d)| s.compute * d.executing())
                .sum();
            if off.total_offloaded(&slots) != 0.0 || on_offloaded != 0.0 {
                offload += 1;
            }
        }
        passed &= offload == 0;
        details.push(format!(
            "price cap: 100 months at p = Ē, months with offloading {offload}"
        ));

        // Ledger conservation in every scenario.
        let pricing = baseline_pricing();
        let ledgers = in_pool(opts.jobs, || {
            (0..20u64)
                .into_par_iter()
                .map(|seed| -> Result<Vec<f64>> {
                    let mut spec = baseline_spec(200);
                    spec.seed = 30_000 + seed;
                    let pop = sample_population(&spec)?;
                    [
                        Scenario::None,
                        Scenario::Edge,
                        Scenario::EdgeOpt,
                        Scenario::Offline { price: 0.5 },
                    ]
                    .into_iter()
                    .map(|sc| {
                        let l = run_scenario(&pop, sc, Some(&pricing))?;
                        Ok(if l.conserves() {
                            l.conservation_residual()
                        } else {
                            f64::INFINITY
                        })
                    })
                    .collect()
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let residuals: Vec<f64> = ledgers.into_iter().flatten().collect();
        let broken = residuals.iter().filter(|r| !r.is_finite()).count();
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        passed &= broken == 0;
        details.push(format!(
            "ledger conservation: {} runs, violations {broken}, max residual {worst:.3e}",
            residuals.len()
        ));

        // Inverse marginals.
        let mut round = 0;
        let mut checks = 0;
        for &a in &[0.2, 0.5, 0.8] {
            let uf = UtilityFamily::new(a)?;
            for &b in &[1.0, 1.5, 2.0, 3.0] {
                let cf = CostFamily::new(b)?;
                for k in 1..=200 {
                    let v = k as f64 / 100.0;
                    checks += 2;
                    let x = uf.inverse_marginal(uf.marginal(v));
                    if (x - v).abs() > 1e-9 * v.max(1.0) {
                        round += 1;
                    }
                    let s = cf.inverse_marginal(cf.marginal(v));
                    if (s - v).abs() > 1e-9 * v.max(1.0) {
                        round += 1;
                    }
                }
            }
        }
        passed &= round == 0;
        details.push(format!(
            "inverse marginals: {checks} round trips, violations {round}"
        ));
        Ok((passed, details))
    })
}

/// Runs every criterion, printing each status line and its details through
/// `sink` as soon as it is known.
pub fn run_all(
    opts: &VerifyOptions,
    mut sink: impl FnMut(&CriterionReport),
) -> Result<Vec<CriterionReport>> {
    let mut reports = Vec::new();
    let mut push = |r: CriterionReport, reports: &mut Vec<CriterionReport>| {
        sink(&r);
        reports.push(r);
    };
    push(criterion_1(opts)?, &mut reports);
    push(criterion_2(opts)?, &mut reports);
    push(criterion_3(opts)?, &mut reports);
    let markets = midpoint_markets(opts)?;
    let mut c4 = criterion_4(&markets)?;
    c4.elapsed += markets.elapsed;
    push(c4, &mut reports);
    push(criterion_5(&markets)?, &mut reports);
    push(criterion_6(&markets)?, &mut reports);
    push(criterion_7(opts)?, &mut reports);
    push(criterion_8(opts)?, &mut reports);
    Ok(reports)
}
