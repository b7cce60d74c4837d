//! Population sampling, full-month market scenarios and the revenue ledger of
//! the four parties: MUs, the ISP (data plans), CPs (advertising) and the ESP
//! (edge computing).

use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    edge_payment, monthly_payoff, slot_data_usage, CostFamily, DataPlan, Decision, SlotRealization,
    Supports, UtilityFamily, PREFERENCE_MAX,
};
use crate::offline::solve_offline;
use crate::online::{run_online_month, OnlineState, StepSchedule};
use crate::pricing::{
    ex_post_optimal_revenue, ExPostOptimum, Payment, PolicyParams, PolicyState, PriceGrid,
};

/// Normal distribution restricted to `[lo, hi]`, sampled by rejection.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal {
    lo: f64,
    hi: f64,
    normal: Option<Normal<f64>>,
}

impl TruncatedNormal {
    /// Mean at the midpoint of `[lo, hi]` and standard deviation of a quarter
    /// of the width; a degenerate interval always yields `lo`.
    pub fn centered(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(
                "support",
                format!("[{lo}, {hi}] is not an interval"),
            ));
        }
        let normal = if hi > lo {
            Some(Normal::new(0.5 * (lo + hi), 0.25 * (hi - lo)).expect("positive spread"))
        } else {
            None
        };
        Ok(Self { lo, hi, normal })
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.normal {
            None => self.lo,
            Some(n) => loop {
                let v = n.sample(rng);
                if (self.lo..=self.hi).contains(&v) {
                    return v;
                }
            },
        }
    }
}

/// How each MU tunes the online strategy's step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant `π / (Ξ √T)`.
    #[default]
    Constant,
    /// Decaying `π / (Ξ √t)`.
    Decaying,
}

/// Everything needed to draw a population of MU-months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_users: usize,
    /// Slots per month.
    pub horizon: usize,
    pub supports: Supports,
    /// Utility exponent `a`.
    pub utility_exponent: f64,
    /// Cost exponent `b`.
    pub cost_exponent: f64,
    /// Data plan of every MU without an override.
    pub plan: DataPlan,
    /// Per-MU data plans `(user index, plan)`.
    pub plan_overrides: Vec<(usize, DataPlan)>,
    /// Advertising-revenue exponent `τ`.
    pub cp_tau: f64,
    pub step_rule: StepRule,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(invalid("n_users", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be >= 1"));
        }
        let s = self.supports;
        for (name, v) in [("d_max", s.data), ("r_max", s.raw), ("c_max", s.compute)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        UtilityFamily::new(self.utility_exponent)?;
        CostFamily::new(self.cost_exponent)?;
        if !(self.cp_tau > 0.0 && self.cp_tau < 1.0) {
            return Err(invalid("cp_tau", format!("{} not in (0, 1)", self.cp_tau)));
        }
        for &(user, _) in &self.plan_overrides {
            if user >= self.n_users {
                return Err(invalid(
                    "plan override",
                    format!("user {user} >= n_users {}", self.n_users),
                ));
            }
        }
        Ok(())
    }

    pub fn utility(&self) -> Result<UtilityFamily> {
        UtilityFamily::new(self.utility_exponent)
    }

    pub fn cost(&self) -> Result<CostFamily> {
        CostFamily::new(self.cost_exponent)
    }

    /// Data plan of MU `user`.
    pub fn plan_for(&self, user: usize) -> DataPlan {
        self.plan_overrides
            .iter()
            .rev()
            .find(|(u, _)| *u == user)
            .map_or(self.plan, |(_, p)| *p)
    }

    /// Price at or above which no MU with preferences in range offloads:
    /// `β_max · e'(c_max)`.
    pub fn price_cap(&self) -> Result<f64> {
        Ok(PREFERENCE_MAX * self.cost()?.marginal(self.supports.compute))
    }

    fn schedule(&self, plan: &DataPlan) -> Result<StepSchedule> {
        match self.step_rule {
            StepRule::Constant => StepSchedule::tuned(plan, self.horizon, &self.supports),
            StepRule::Decaying => StepSchedule::tuned_decaying(plan, self.horizon, &self.supports),
        }
    }
}

/// A sampled population: one month of slots per MU (prices unset).
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub spec: PopulationSpec,
    pub months: Vec<Vec<SlotRealization>>,
    plans: Vec<DataPlan>,
    schedules: Vec<StepSchedule>,
    utility: UtilityFamily,
    cost: CostFamily,
}

/// Draws `(d, r, c, θ, β)` for every MU and slot from truncated normals;
/// identical specs give identical populations.
pub fn sample_population(spec: &PopulationSpec) -> Result<Population> {
    spec.validate()?;
    let s = spec.supports;
    let d = TruncatedNormal::centered(0.0, s.data)?;
    let r = TruncatedNormal::centered(0.0, s.raw)?;
    let c = TruncatedNormal::centered(0.0, s.compute)?;
    let pref = TruncatedNormal::centered(0.0, PREFERENCE_MAX)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let months = (0..spec.n_users)
        .map(|_| {
            (0..spec.horizon)
                .map(|_| {
                    let (dv, rv, cv) = (d.sample(&mut rng), r.sample(&mut rng), c.sample(&mut rng));
                    let (theta, beta) = (pref.sample(&mut rng), pref.sample(&mut rng));
                    SlotRealization::new(dv, rv, cv, theta, beta, 0.0)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let plans: Vec<DataPlan> = (0..spec.n_users).map(|n| spec.plan_for(n)).collect();
    let schedules = plans
        .iter()
        .map(|p| spec.schedule(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Population {
        spec: spec.clone(),
        months,
        plans,
        schedules,
        utility: spec.utility()?,
        cost: spec.cost()?,
    })
}

impl Population {
    pub fn utility(&self) -> &UtilityFamily {
        &self.utility
    }

    pub fn cost(&self) -> &CostFamily {
        &self.cost
    }

    pub fn plans(&self) -> &[DataPlan] {
        &self.plans
    }

    pub fn price_cap(&self) -> Result<f64> {
        self.spec.price_cap()
    }

    fn priced(&self, user: usize, price: f64) -> Vec<SlotRealization> {
        self.months[user]
            .iter()
            .map(|s| s.with_price(price))
            .collect()
    }

    /// Edge revenue when every MU is shown `price` in every slot and plays
    /// the online strategy.
    pub fn fixed_price_revenue(&self, price: f64) -> Result<f64> {
        if price >= self.price_cap()? {
            return Ok(0.0);
        }
        let mut revenue = 0.0;
        for (n, schedule) in self.schedules.iter().enumerate() {
            let plan = &self.plans[n];
            let mut state = OnlineState::new(self.spec.horizon, *schedule)?;
            for slot in &self.months[n] {
                let slot = slot.with_price(price);
                let dec = state.step(&slot, plan, &self.utility, &self.cost)?;
                revenue += edge_payment(&slot, &dec);
            }
        }
        Ok(revenue)
    }

    /// Best fixed price in hindsight under the online-strategy response.
    pub fn ex_post_optimum(&self, grid: &PriceGrid, refinement: usize) -> Result<ExPostOptimum> {
        ex_post_optimal_revenue(grid, refinement, |p| self.fixed_price_revenue(p))
    }
}

/// ISP revenue `Σ_n (Π_n + π_n [usage_n - Q_n]^+)`.
pub fn isp_revenue(usages: &[f64], plans: &[DataPlan]) -> Result<f64> {
    if usages.len() != plans.len() {
        return Err(Error::LengthMismatch {
            slots: plans.len(),
            decisions: usages.len(),
        });
    }
    let mut total = 0.0;
    for (&usage, plan) in usages.iter().zip(plans) {
        if !(usage >= 0.0 && usage.is_finite()) {
            return Err(invalid("usage", format!("{usage} must be finite and >= 0")));
        }
        total += plan.subscription_fee + plan.overage_fee * (usage - plan.cap).max(0.0);
    }
    Ok(total)
}

/// Advertising revenue `v(X) = X^(1-τ) / (1-τ)` of total acquisition `X`.
pub fn cp_revenue(total_acquisition: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("cp_tau", format!("{tau} not in (0, 1)")));
    }
    if !(total_acquisition >= 0.0 && total_acquisition.is_finite()) {
        return Err(invalid(
            "total acquisition",
            format!("{total_acquisition} must be finite and >= 0"),
        ));
    }
    Ok(total_acquisition.powf(1.0 - tau) / (1.0 - tau))
}

/// One offloading record: price, computing amount and the `(x, y)` decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub price: f64,
    pub compute: f64,
    pub acquisition: f64,
    pub offload_fraction: f64,
}

/// ESP revenue `Σ p c x y`.
pub fn esp_revenue(entries: &[EdgeEntry]) -> f64 {
    entries
        .iter()
        .map(|e| e.price * e.compute * e.acquisition * e.offload_fraction)
        .sum()
}

/// Market scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    /// No edge service: the cap price is posted, so nobody offloads.
    None,
    /// The ESP runs the dynamic pricing policy.
    Edge,
    /// The ESP posts the best fixed price in hindsight.
    EdgeOpt,
    /// Every MU knows its month in advance and plays the hindsight optimum at
    /// the given fixed price.
    Offline { price: f64 },
}

/// Pricing-policy settings for the edge scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub p_min: f64,
    pub params: PolicyParams,
    /// Sub-points per grid interval in the hindsight price sweep.
    pub refinement: usize,
}

impl PricingConfig {
    pub fn grid(&self, price_cap: f64) -> Result<PriceGrid> {
        PriceGrid::new(self.p_min, self.params.epsilon, price_cap)
    }
}

/// Diagnostics of the pricing policy over one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDiagnostics {
    pub cumulative_revenue: f64,
    pub max_virtual_revenue: f64,
    pub virtual_revenue_violations: usize,
    pub virtual_revenue_checks: usize,
    pub floor_violations: usize,
    pub floor_checks: usize,
    /// Selection distribution after the last update.
    pub final_selection: Vec<f64>,
}

/// Absolute-plus-relative tolerance of the ledger identities.
pub const LEDGER_TOLERANCE: f64 = 1e-9;

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLedger {
    pub scenario: Scenario,
    pub mu_payoffs: Vec<f64>,
    pub isp_revenue: f64,
    pub cp_revenue: f64,
    pub esp_revenue: f64,
    pub social_welfare: f64,
    /// `Σ_n Σ_t x` (slot fractions).
    pub total_acquisition: f64,
    /// Total data usage (GB).
    pub total_usage: f64,
    /// Total computing executed at the edge.
    pub total_offloaded: f64,
    /// Edge payments as seen by MUs.
    pub mu_edge_payments: f64,
    /// Data-plan bills as seen by MUs.
    pub mu_data_bills: f64,
    /// Fixed price posted, if any.
    pub posted_price: Option<f64>,
    pub policy: Option<PolicyDiagnostics>,
    /// Hindsight optimum computed for the `EdgeOpt` scenario.
    pub ex_post: Option<ExPostOptimum>,
}

impl ScenarioLedger {
    pub fn total_mu_payoff(&self) -> f64 {
        self.mu_payoffs.iter().sum()
    }

    /// Largest violation of: MU edge payments = ESP revenue, MU bills = ISP
    /// revenue, welfare = sum of parties, and (Edge only) ESP revenue =
    /// policy revenue; each measured relative to `max(1, |magnitude|)`.
    pub fn conservation_residual(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let mut worst = rel(self.mu_edge_payments, self.esp_revenue)
            .max(rel(self.mu_data_bills, self.isp_revenue))
            .max(rel(
                self.social_welfare,
                self.total_mu_payoff() + self.isp_revenue + self.cp_revenue + self.esp_revenue,
            ));
        if let Some(p) = &self.policy {
            worst = worst.max(rel(p.cumulative_revenue, self.esp_revenue));
        }
        if matches!(self.scenario, Scenario::None) {
            worst = worst.max(self.esp_revenue.abs());
        }
        worst
    }

    pub fn conserves(&self) -> bool {
        self.conservation_residual() <= LEDGER_TOLERANCE
    }
}

/// Runs one month of the market.
pub fn run_scenario(
    population: &Population,
    scenario: Scenario,
    pricing: Option<&PricingConfig>,
) -> Result<ScenarioLedger> {
    let cap = population.price_cap()?;
    let n = population.spec.n_users;
    let (u, e) = (population.utility(), population.cost());
    let mut decisions: Vec<Vec<Decision>> = Vec::with_capacity(n);
    let mut priced: Vec<Vec<SlotRealization>> = Vec::with_capacity(n);
    let mut policy_diag = None;
    let mut ex_post = None;
    let mut posted_price = None;

    let require_pricing =
        || pricing.ok_or_else(|| invalid("pricing", "edge scenarios need pricing parameters"));
    match scenario {
        Scenario::None | Scenario::EdgeOpt => {
            let price = if let Scenario::EdgeOpt = scenario {
                let cfg = require_pricing()?;
                let opt = population.ex_post_optimum(&cfg.grid(cap)?, cfg.refinement)?;
                let p = opt.price;
                ex_post = Some(opt);
                p
            } else {
                cap
            };
            posted_price = Some(price);
            for user in 0..n {
                let slots = population.priced(user, price);
                let out = run_online_month(
                    &slots,
                    &population.plans[user],
                    u,
                    e,
                    population.schedules[user],
                )?;
                decisions.push(out.decisions);
                priced.push(slots);
            }
        }
        Scenario::Offline { price } => {
            if !(price >= 0.0 && price.is_finite()) {
                return Err(invalid("price", format!("{price} must be finite and >= 0")));
            }
            posted_price = Some(price);
            for user in 0..n {
                let slots = population.priced(user, price);
                let sol = solve_offline(&slots, &population.plans[user], u, e)?;
                decisions.push(sol.decisions);
                priced.push(slots);
            }
        }
        Scenario::Edge => {
            let cfg = require_pricing()?;
            let mut policy = PolicyState::new(cfg.grid(cap)?, cfg.params)?;
            let mut states = population
                .schedules
                .iter()
                .map(|s| OnlineState::new(population.spec.horizon, *s))
                .collect::<Result<Vec<_>>>()?;
            decisions = vec![Vec::with_capacity(population.spec.horizon); n];
            priced = vec![Vec::with_capacity(population.spec.horizon); n];
            let mut rng = ChaCha8Rng::seed_from_u64(population.spec.seed);
            rng.set_stream(1);
            let c_max = population.spec.supports.compute;
            for t in 0..population.spec.horizon {
                let draws = policy.draw_prices(n, &mut rng);
                let mut payments = Vec::with_capacity(n);
                for (user, &k) in draws.iter().enumerate() {
                    let slot = population.months[user][t].with_price(policy.grid.candidates()[k]);
                    let dec = states[user].step(&slot, &population.plans[user], u, e)?;
                    payments.push(Payment {
                        candidate: k,
                        revenue: edge_payment(&slot, &dec),
                    });
                    decisions[user].push(dec);
                    priced[user].push(slot);
                }
                if c_max > 0.0 {
                    policy.settle_slot(&payments, n, c_max)?;
                } else {
                    // Nothing can be offloaded; every payment is zero.
                    policy.slots_settled += 1;
                }
            }
            policy_diag = Some(PolicyDiagnostics {
                cumulative_revenue: policy.cumulative_revenue,
                max_virtual_revenue: policy.max_virtual_revenue,
                virtual_revenue_violations: policy.virtual_revenue_violations,
                virtual_revenue_checks: policy.virtual_revenue_checks,
                floor_violations: policy.floor_violations,
                floor_checks: policy.floor_checks,
                final_selection: policy.selection_distribution(),
            });
        }
    }

    let mut mu_payoffs = Vec::with_capacity(n);
    let mut usages = Vec::with_capacity(n);
    let mut entries = Vec::new();
    let (mut total_acquisition, mut total_offloaded) = (0.0, 0.0);
    let (mut mu_edge_payments, mut mu_data_bills) = (0.0, 0.0);
    for user in 0..n {
        let (slots, decs) = (&priced[user], &decisions[user]);
        let plan = &population.plans[user];
        let payoff = monthly_payoff(slots, decs, plan, u, e)?;
        let usage: f64 = slots
            .iter()
            .zip(decs)
            .map(|(s, d)| slot_data_usage(s, d))
            .sum();
        let edge: f64 = slots
            .iter()
            .zip(decs)
            .map(|(s, d)| edge_payment(s, d))
            .sum();
        for (s, d) in slots.iter().zip(decs) {
            total_acquisition += d.acquisition();
            total_offloaded += s.compute * d.executing();
            entries.push(EdgeEntry {
                price: s.price,
                compute: s.compute,
                acquisition: d.acquisition(),
                offload_fraction: d.offload_fraction(),
            });
        }
        mu_payoffs.push(payoff);
        usages.push(usage);
        mu_edge_payments += edge;
        mu_data_bills += plan.bill(usage);
    }
    let isp = isp_revenue(&usages, &population.plans)?;
    let cp = cp_revenue(total_acquisition, population.spec.cp_tau)?;
    let esp = esp_revenue(&entries);
    let welfare = mu_payoffs.iter().sum::<f64>() + isp + cp + esp;
    Ok(ScenarioLedger {
        scenario,
        mu_payoffs,
        isp_revenue: isp,
        cp_revenue: cp,
        esp_revenue: esp,
        social_welfare: welfare,
        total_acquisition,
        total_usage: usages.iter().sum(),
        total_offloaded,
        mu_edge_payments,
        mu_data_bills,
        posted_price,
        policy: policy_diag,
        ex_post,
    })
}
