//! The MU's causal shadow-price strategy, the myopic greedy baseline and the
//! regret diagnostics that bound the strategy's gap to the hindsight optimum.
//!
//! The online strategy prices data internally at `λ̂_t`, best-responds to it
//! slot by slot, then moves `λ̂` by a projected subgradient step on the usage
//! surplus `h_t - Q/T`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{
    monthly_payoff, slot_data_usage, CostFamily, DataPlan, Decision, SlotRealization, Supports,
    UtilityFamily,
};
use crate::offline::{slot_best_response, solve_offline, OfflineSolution};

/// Step sizes `η_t` of the shadow-price update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// `η_t = η` for every slot.
    Constant(f64),
    /// `η_t = base / √t`.
    Decaying(f64),
}

impl StepSchedule {
    /// Constant step `π / (Ξ √T)`, which turns the general regret bound into
    /// `π (Ξ + Ψ) / √T`.
    pub fn tuned(plan: &DataPlan, horizon: usize, supports: &Supports) -> Result<Self> {
        let xi = tuned_divergence(plan, horizon, supports)?;
        Ok(Self::Constant(
            plan.overage_fee / (xi * (horizon as f64).sqrt()),
        ))
    }

    /// Decaying step `π / (Ξ √t)`.
    pub fn tuned_decaying(plan: &DataPlan, horizon: usize, supports: &Supports) -> Result<Self> {
        let xi = tuned_divergence(plan, horizon, supports)?;
        Ok(Self::Decaying(plan.overage_fee / xi))
    }

    /// Step size used after observing slot `t` (1-based).
    pub fn step(&self, t: usize) -> f64 {
        match *self {
            Self::Constant(eta) => eta,
            Self::Decaying(base) => base / (t.max(1) as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Self::Constant(v) | Self::Decaying(v) => v,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid("step size", format!("{v} must be finite and > 0")));
        }
        Ok(())
    }
}

fn tuned_divergence(plan: &DataPlan, horizon: usize, supports: &Supports) -> Result<f64> {
    let xi = demand_divergence(plan, horizon, supports)?;
    if xi <= 0.0 {
        return Err(invalid(
            "demand divergence",
            "is zero (empty supports and zero cap); no step size can be tuned",
        ));
    }
    Ok(xi)
}

/// Running state of one MU through one month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineState {
    /// Shadow price used for the next slot, always in `[0, π]`.
    pub lambda_hat: f64,
    /// Slots already played.
    pub t: usize,
    /// Slots in the month.
    pub horizon: usize,
    /// Data used so far this month (GB).
    pub cumulative_usage: f64,
    pub schedule: StepSchedule,
}

impl OnlineState {
    /// Fresh month with `λ̂_1 = 0`.
    pub fn new(horizon: usize, schedule: StepSchedule) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon", "must be >= 1"));
        }
        schedule.validate()?;
        Ok(Self {
            lambda_hat: 0.0,
            t: 0,
            horizon,
            cumulative_usage: 0.0,
            schedule,
        })
    }

    fn check_open(&self) -> Result<()> {
        if self.t >= self.horizon {
            return Err(invalid(
                "slot index",
                format!("month of {} slots is already complete", self.horizon),
            ));
        }
        Ok(())
    }

    /// Plays one slot of the online strategy: best-respond to `λ̂_t`, then
    /// update `λ̂_{t+1} = clamp(λ̂_t + η_t (h_t - Q/T), 0, π)`.
    pub fn step(
        &mut self,
        slot: &SlotRealization,
        plan: &DataPlan,
        u: &UtilityFamily,
        e: &CostFamily,
    ) -> Result<Decision> {
        self.check_open()?;
        let dec = slot_best_response(slot, self.lambda_hat, u, e);
        let usage = slot_data_usage(slot, &dec);
        self.t += 1;
        let quota = plan.cap / self.horizon as f64;
        let eta = self.schedule.step(self.t);
        self.lambda_hat = (self.lambda_hat + eta * (usage - quota)).clamp(0.0, plan.overage_fee);
        self.cumulative_usage += usage;
        Ok(dec)
    }

    /// Plays one slot of the greedy baseline: data is free while the month's
    /// usage so far is below the cap and costs the overage fee afterwards.
    /// A slot that straddles the cap is decided as under-cap; the bill still
    /// charges its actual overage.
    pub fn greedy_step(
        &mut self,
        slot: &SlotRealization,
        plan: &DataPlan,
        u: &UtilityFamily,
        e: &CostFamily,
    ) -> Result<Decision> {
        self.check_open()?;
        self.lambda_hat = greedy_shadow_price(self.cumulative_usage, plan);
        let dec = slot_best_response(slot, self.lambda_hat, u, e);
        self.t += 1;
        self.cumulative_usage += slot_data_usage(slot, &dec);
        Ok(dec)
    }
}

/// Shadow price the greedy baseline uses given the usage so far.
pub fn greedy_shadow_price(cumulative_usage: f64, plan: &DataPlan) -> f64 {
    if cumulative_usage < plan.cap {
        0.0
    } else {
        plan.overage_fee
    }
}

/// Functional form of [`OnlineState::step`].
pub fn online_step(
    state: &OnlineState,
    slot: &SlotRealization,
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<(Decision, OnlineState)> {
    let mut next = state.clone();
    let dec = next.step(slot, plan, u, e)?;
    Ok((dec, next))
}

/// Functional form of [`OnlineState::greedy_step`].
pub fn greedy_step(
    state: &OnlineState,
    slot: &SlotRealization,
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<(Decision, OnlineState)> {
    let mut next = state.clone();
    let dec = next.greedy_step(slot, plan, u, e)?;
    Ok((dec, next))
}

/// One month played slot by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthOutcome {
    pub decisions: Vec<Decision>,
    /// Shadow price each slot's decision was made at.
    pub shadow_prices: Vec<f64>,
    /// Shadow price after the last update.
    pub final_shadow_price: f64,
    pub usage: f64,
    pub payoff: f64,
}

fn run_month(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
    schedule: StepSchedule,
    greedy: bool,
) -> Result<MonthOutcome> {
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    let mut state = OnlineState::new(slots.len(), schedule)?;
    let mut decisions = Vec::with_capacity(slots.len());
    let mut shadow_prices = Vec::with_capacity(slots.len());
    for slot in slots {
        if greedy {
            let dec = state.greedy_step(slot, plan, u, e)?;
            shadow_prices.push(state.lambda_hat);
            decisions.push(dec);
        } else {
            shadow_prices.push(state.lambda_hat);
            decisions.push(state.step(slot, plan, u, e)?);
        }
    }
    let payoff = monthly_payoff(slots, &decisions, plan, u, e)?;
    Ok(MonthOutcome {
        decisions,
        shadow_prices,
        final_shadow_price: state.lambda_hat,
        usage: state.cumulative_usage,
        payoff,
    })
}

/// Runs the online strategy through a month.
pub fn run_online_month(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
    schedule: StepSchedule,
) -> Result<MonthOutcome> {
    run_month(slots, plan, u, e, schedule, false)
}

/// Runs the greedy baseline through a month.
pub fn run_greedy_month(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<MonthOutcome> {
    // The greedy rule ignores the step schedule.
    run_month(slots, plan, u, e, StepSchedule::Constant(1.0), true)
}

/// Maximal demand divergence `Ξ = max(|q - d_max - r_max|, q)` with
/// `q = Q / T`, computed from the support maxima.
pub fn demand_divergence(plan: &DataPlan, horizon: usize, supports: &Supports) -> Result<f64> {
    if horizon == 0 {
        return Err(invalid("horizon", "must be >= 1"));
    }
    let q = plan.cap / horizon as f64;
    Ok((q - supports.data - supports.raw).abs().max(q))
}

/// Per-slot demand divergences `ξ_t = |q - d_t - r_t|` of a realized month.
pub fn slot_divergences(slots: &[SlotRealization], plan: &DataPlan) -> Vec<f64> {
    let q = plan.cap / slots.len().max(1) as f64;
    slots.iter().map(|s| (q - s.data - s.raw).abs()).collect()
}

/// Maximal consumption fluctuation `Ψ = max_t |t l̄ - Σ_{i≤t} l_i|` with
/// `l_t = q - h_t` evaluated at the hindsight-optimal decisions.
pub fn consumption_fluctuation(
    offline: &OfflineSolution,
    slots: &[SlotRealization],
    plan: &DataPlan,
) -> Result<f64> {
    if slots.len() != offline.decisions.len() {
        return Err(Error::LengthMismatch {
            slots: slots.len(),
            decisions: offline.decisions.len(),
        });
    }
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    let q = plan.cap / slots.len() as f64;
    let slack: Vec<f64> = slots
        .iter()
        .zip(&offline.decisions)
        .map(|(s, d)| q - slot_data_usage(s, d))
        .collect();
    let mean = slack.iter().sum::<f64>() / slack.len() as f64;
    let mut prefix = 0.0;
    let mut psi: f64 = 0.0;
    for (t, l) in slack.iter().enumerate() {
        prefix += l;
        psi = psi.max(((t + 1) as f64 * mean - prefix).abs());
    }
    Ok(psi)
}

/// Measured per-slot gap of the online strategy against the hindsight optimum
/// and the corresponding worst-case bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// `Ξ` from the support maxima.
    pub demand_divergence: f64,
    /// `Ψ` of the hindsight-optimal month.
    pub consumption_fluctuation: f64,
    /// `(offline payoff - online payoff) / T`.
    pub measured_gap: f64,
    /// `(π² / (2 η_T) + (Ξ²/2 + Ξ Ψ) Σ η_t) / T`.
    pub bound: f64,
    pub offline_payoff: f64,
    pub online_payoff: f64,
}

/// Absolute slack allowed when comparing the measured gap to the bound.
pub const REGRET_TOLERANCE: f64 = 1e-9;

impl RegretReport {
    pub fn within_bound(&self) -> bool {
        self.measured_gap <= self.bound + REGRET_TOLERANCE
    }
}

/// Regret bound for an arbitrary step schedule.
pub fn regret_bound(
    fee: f64,
    horizon: usize,
    schedule: &StepSchedule,
    divergence: f64,
    fluctuation: f64,
) -> f64 {
    let eta_sum: f64 = (1..=horizon).map(|t| schedule.step(t)).sum();
    let eta_last = schedule.step(horizon);
    (fee * fee / (2.0 * eta_last)
        + (0.5 * divergence * divergence + divergence * fluctuation) * eta_sum)
        / horizon as f64
}

/// Plays the month online and offline and reports the gap and its bound.
pub fn regret_report(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
    schedule: StepSchedule,
    supports: &Supports,
) -> Result<RegretReport> {
    let horizon = slots.len();
    let online = run_online_month(slots, plan, u, e, schedule)?;
    let offline = solve_offline(slots, plan, u, e)?;
    let xi = demand_divergence(plan, horizon, supports)?;
    let psi = consumption_fluctuation(&offline, slots, plan)?;
    Ok(RegretReport {
        demand_divergence: xi,
        consumption_fluctuation: psi,
        measured_gap: (offline.payoff - online.payoff) / horizon as f64,
        bound: regret_bound(plan.overage_fee, horizon, &schedule, xi, psi),
        offline_payoff: offline.payoff,
        online_payoff: online.payoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fam() -> (UtilityFamily, CostFamily) {
        (UtilityFamily::new(0.5).unwrap(), CostFamily::quadratic())
    }

    fn supports() -> Supports {
        Supports::new(0.15, 0.1, 1.0).unwrap()
    }

    fn month(rng: &mut ChaCha8Rng, t: usize) -> Vec<SlotRealization> {
        let s = supports();
        (0..t)
            .map(|_| {
                SlotRealization::new(
                    rng.random_range(0.0..=s.data),
                    rng.random_range(0.0..=s.raw),
                    rng.random_range(0.0..=s.compute),
                    rng.random_range(0.0..=2.0),
                    rng.random_range(0.0..=2.0),
                    rng.random_range(0.0..=1.0),
                )
                .unwrap()
            })
            .collect()
    }

    fn plan(cap: f64) -> DataPlan {
        DataPlan::new(cap, 10.0, 15.0).unwrap()
    }

    #[test]
    fn fresh_state_starts_at_zero_price() {
        let s = OnlineState::new(30, StepSchedule::Constant(1.0)).unwrap();
        assert_eq!(s.lambda_hat, 0.0);
        assert!(OnlineState::new(0, StepSchedule::Constant(1.0)).is_err());
        assert!(OnlineState::new(3, StepSchedule::Constant(0.0)).is_err());
        assert!(OnlineState::new(3, StepSchedule::Decaying(f64::NAN)).is_err());
    }

    #[test]
    fn usage_at_quota_leaves_price_unchanged() {
        let (u, e) = fam();
        // Region I at any price below 0.5: (1, 0), usage = d = 0.1.
        let slot = SlotRealization::new(0.1, 0.0, 1.0, 2.0, 0.0, 0.0).unwrap();
        let p = plan(0.3);
        let mut state = OnlineState::new(3, StepSchedule::Constant(2.0)).unwrap();
        state.lambda_hat = 0.4;
        let dec = state.step(&slot, &p, &u, &e).unwrap();
        assert_eq!((dec.acquisition(), dec.executing()), (1.0, 0.0));
        assert!((state.lambda_hat - 0.4).abs() < 1e-15);
    }

    #[test]
    fn projection_binds_at_fee() {
        let (u, e) = fam();
        let slot = SlotRealization::new(0.5, 0.5, 1.0, 2.0, 2.0, 0.0).unwrap();
        let p = plan(0.0);
        let mut state = OnlineState::new(3, StepSchedule::Constant(100.0)).unwrap();
        state.lambda_hat = 14.9;
        state.step(&slot, &p, &u, &e).unwrap();
        assert_eq!(state.lambda_hat, 15.0);
    }

    #[test]
    fn projection_binds_at_zero() {
        let (u, e) = fam();
        let slot = SlotRealization::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let mut state = OnlineState::new(3, StepSchedule::Constant(100.0)).unwrap();
        state.step(&slot, &plan(30.0), &u, &e).unwrap();
        assert_eq!(state.lambda_hat, 0.0);
    }

    #[test]
    fn month_overrun_is_rejected() {
        let (u, e) = fam();
        let slot = SlotRealization::new(0.1, 0.1, 0.1, 1.0, 1.0, 0.1).unwrap();
        let mut state = OnlineState::new(1, StepSchedule::Constant(1.0)).unwrap();
        state.step(&slot, &plan(1.0), &u, &e).unwrap();
        assert!(state.step(&slot, &plan(1.0), &u, &e).is_err());
        assert!(state.greedy_step(&slot, &plan(1.0), &u, &e).is_err());
    }

    #[test]
    fn functional_step_matches_method() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let slots = month(&mut rng, 5);
        let p = plan(0.5);
        let mut a = OnlineState::new(5, StepSchedule::Constant(3.0)).unwrap();
        let mut b = a.clone();
        for s in &slots {
            let da = a.step(s, &p, &u, &e).unwrap();
            let (db, nb) = online_step(&b, s, &p, &u, &e).unwrap();
            b = nb;
            assert_eq!(da, db);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn online_prefix_ignores_future_slots() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = plan(1.0);
        let schedule = StepSchedule::tuned(&p, 30, &supports()).unwrap();
        for _ in 0..20 {
            let mut slots = month(&mut rng, 30);
            let k = rng.random_range(1..30);
            let base = run_online_month(&slots, &p, &u, &e, schedule).unwrap();
            let greedy = run_greedy_month(&slots, &p, &u, &e).unwrap();
            // Replace the future with a fresh draw.
            let tail = month(&mut rng, 30 - k);
            slots.splice(k.., tail);
            let other = run_online_month(&slots, &p, &u, &e, schedule).unwrap();
            let other_greedy = run_greedy_month(&slots, &p, &u, &e).unwrap();
            assert_eq!(base.decisions[..k], other.decisions[..k]);
            assert_eq!(base.shadow_prices[..k], other.shadow_prices[..k]);
            assert_eq!(greedy.decisions[..k], other_greedy.decisions[..k]);
        }
    }

    #[test]
    fn shadow_prices_stay_projected() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = plan(rng.random_range(0.0..5.0));
            let slots = month(&mut rng, 30);
            let schedule = StepSchedule::Constant(rng.random_range(0.1..200.0));
            let out = run_online_month(&slots, &p, &u, &e, schedule).unwrap();
            assert!(out
                .shadow_prices
                .iter()
                .chain([&out.final_shadow_price])
                .all(|l| (0.0..=15.0).contains(l)));
        }
    }

    #[test]
    fn greedy_fresh_month_is_zero_price_response() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let slots = month(&mut rng, 1);
        let out = run_greedy_month(&slots, &plan(1.0), &u, &e).unwrap();
        assert_eq!(out.decisions[0], slot_best_response(&slots[0], 0.0, &u, &e));
    }

    #[test]
    fn greedy_over_cap_prices_at_fee() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let slots = month(&mut rng, 2);
        let p = plan(0.0);
        let mut state = OnlineState::new(2, StepSchedule::Constant(1.0)).unwrap();
        let d = state.greedy_step(&slots[0], &p, &u, &e).unwrap();
        assert_eq!(d, slot_best_response(&slots[0], 15.0, &u, &e));
        assert_eq!(state.lambda_hat, 15.0);
    }

    #[test]
    fn greedy_straddle_decides_under_cap() {
        let (u, e) = fam();
        let slot = SlotRealization::new(0.5, 0.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        let p = plan(0.7);
        let out = run_greedy_month(&[slot, slot], &p, &u, &e).unwrap();
        // Both slots start below the cap (0 and 0.5 GB), so both are free.
        assert_eq!(out.shadow_prices, vec![0.0, 0.0]);
        assert_eq!(out.usage, 1.0);
        let bill = p.bill(1.0);
        assert!((bill - (10.0 + 15.0 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn hindsight_dominates_both_strategies() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let p = plan(rng.random_range(0.2..4.0));
            let slots = month(&mut rng, 30);
            let off = solve_offline(&slots, &p, &u, &e).unwrap();
            let greedy = run_greedy_month(&slots, &p, &u, &e).unwrap();
            let schedule = StepSchedule::tuned(&p, 30, &supports()).unwrap();
            let online = run_online_month(&slots, &p, &u, &e, schedule).unwrap();
            let tol = 1e-6 * off.payoff.abs().max(1.0);
            assert!(greedy.payoff <= off.payoff + tol);
            assert!(online.payoff <= off.payoff + tol);
        }
    }

    #[test]
    fn divergence_examples() {
        let s = |d, r| Supports::new(d, r, 1.0).unwrap();
        assert_eq!(demand_divergence(&plan(1.0), 1, &s(0.5, 0.5)).unwrap(), 1.0);
        assert_eq!(demand_divergence(&plan(0.5), 1, &s(1.0, 0.5)).unwrap(), 1.0);
        assert_eq!(demand_divergence(&plan(2.0), 1, &s(0.5, 0.5)).unwrap(), 2.0);
        assert!(demand_divergence(&plan(2.0), 0, &s(0.5, 0.5)).is_err());
        assert!(StepSchedule::tuned(&plan(0.0), 10, &s(0.0, 0.0)).is_err());
    }

    #[test]
    fn slot_divergences_never_exceed_support_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = plan(1.0);
        let slots = month(&mut rng, 30);
        let xi = demand_divergence(&p, 30, &supports()).unwrap();
        assert!(slot_divergences(&slots, &p)
            .iter()
            .all(|&x| x <= xi + 1e-12));
    }

    fn offline_with_usage(usages: &[f64]) -> (OfflineSolution, Vec<SlotRealization>) {
        // d = usage, x = 1, z = 0 gives exactly the requested usages.
        let slots: Vec<_> = usages
            .iter()
            .map(|&h| SlotRealization::new(h, 0.0, 0.0, 1.0, 1.0, 0.0).unwrap())
            .collect();
        let decisions = vec![Decision::new(1.0, 0.0).unwrap(); usages.len()];
        let usage = usages.iter().sum();
        (
            OfflineSolution {
                decisions,
                shadow_price: 0.0,
                overage: 0.0,
                usage,
                payoff: 0.0,
            },
            slots,
        )
    }

    #[test]
    fn fluctuation_examples() {
        let (off, slots) = offline_with_usage(&[0.3, 0.3, 0.3]);
        assert!(consumption_fluctuation(&off, &slots, &plan(1.0)).unwrap() < 1e-15);
        // q = 0.5, usages (-0.5, 1.5) are impossible; use l = (1, -1) via q = 1.
        let (off, slots) = offline_with_usage(&[0.0, 2.0]);
        let psi = consumption_fluctuation(&off, &slots, &plan(2.0)).unwrap();
        assert!((psi - 1.0).abs() < 1e-15);
        let (off, slots) = offline_with_usage(&[0.0, 2.0]);
        assert!(consumption_fluctuation(&off, &slots[..1], &plan(2.0)).is_err());
    }

    /// Independent recomputation: `ψ_t` as the deviation of the running slack
    /// from a straight line between the month's endpoints.
    fn fluctuation_reference(usages: &[f64], cap: f64) -> f64 {
        let t_len = usages.len() as f64;
        let total_slack: f64 = cap - usages.iter().sum::<f64>();
        (1..=usages.len())
            .map(|t| {
                let used: f64 = usages[..t].iter().sum();
                let slack_so_far = t as f64 * cap / t_len - used;
                (slack_so_far - total_slack * t as f64 / t_len).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn fluctuation_matches_reference() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let p = plan(rng.random_range(0.0..4.0));
            let slots = month(&mut rng, 30);
            let off = solve_offline(&slots, &p, &u, &e).unwrap();
            let usages: Vec<f64> = slots
                .iter()
                .zip(&off.decisions)
                .map(|(s, d)| slot_data_usage(s, d))
                .collect();
            let psi = consumption_fluctuation(&off, &slots, &p).unwrap();
            assert!((psi - fluctuation_reference(&usages, p.cap)).abs() < 1e-12);
        }
    }

    #[test]
    fn tuned_bound_has_closed_form() {
        let p = plan(1.0);
        let sched = StepSchedule::tuned(&p, 30, &supports()).unwrap();
        let xi = demand_divergence(&p, 30, &supports()).unwrap();
        let psi = 0.37;
        let general = regret_bound(15.0, 30, &sched, xi, psi);
        let closed = 15.0 * (xi + psi) / 30f64.sqrt();
        assert!((general - closed).abs() < 1e-12 * closed);
    }

    #[test]
    fn unlimited_cap_has_no_gap() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let slots = month(&mut rng, 30);
        let p = plan(1e3);
        let sched = StepSchedule::tuned(&p, 30, &supports()).unwrap();
        let r = regret_report(&slots, &p, &u, &e, sched, &supports()).unwrap();
        assert!(r.measured_gap.abs() < 1e-12);
        assert!(r.within_bound());
    }

    #[test]
    fn gap_within_bound_for_both_schedules() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let p = plan(rng.random_range(0.0..4.0));
            let slots = month(&mut rng, 30);
            for sched in [
                StepSchedule::tuned(&p, 30, &supports()).unwrap(),
                StepSchedule::tuned_decaying(&p, 30, &supports()).unwrap(),
            ] {
                let r = regret_report(&slots, &p, &u, &e, sched, &supports()).unwrap();
                assert!(r.demand_divergence >= 0.0 && r.consumption_fluctuation >= 0.0);
                assert!(r.within_bound(), "{r:?}");
            }
        }
    }

    #[test]
    fn shadow_price_converges_in_extreme_regimes() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut tight, mut loose) = (0, 0);
        for _ in 0..100 {
            let slots = month(&mut rng, 30);
            let small = plan(0.01);
            let sched = StepSchedule::tuned(&small, 30, &supports()).unwrap();
            let out = run_online_month(&slots, &small, &u, &e, sched).unwrap();
            tight += usize::from(out.final_shadow_price >= 0.9 * 15.0);
            let large = plan(100.0);
            let sched = StepSchedule::tuned(&large, 30, &supports()).unwrap();
            let out = run_online_month(&slots, &large, &u, &e, sched).unwrap();
            loose += usize::from(out.final_shadow_price <= 0.1 * 15.0);
        }
        assert!(tight >= 90, "{tight}");
        assert!(loose >= 90, "{loose}");
    }
}
