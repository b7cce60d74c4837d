//! Off-line (hindsight) joint content-acquisition and offloading solver.
//!
//! Substituting `z = x * y` makes the monthly problem convex. For a fixed
//! shadow price `λ` on data usage the month decouples into per-slot problems
//! whose maximizer falls in one of four closed-form regions:
//!
//! | region | state                               | decision           |
//! |--------|-------------------------------------|--------------------|
//! | I      | weak sensitivity, high valuation    | `(1, 0)`           |
//! | II     | strong sensitivity, high valuation  | `(1, z_II)`        |
//! | III    | strong sensitivity, low valuation   | `(x_III, z_III)`   |
//! | IV     | weak sensitivity, low valuation     | `(x_IV, 0)`        |
//!
//! The optimal shadow price is `min(π, λ†)` where `λ†` is the smallest price
//! whose induced usage fits under the cap; it is found by bisection on the
//! weakly decreasing potential usage `A(λ)`.

mod oracle;

pub use oracle::{
    brute_force_month_oracle, brute_force_slot_oracle, refined_slot_oracle, OracleSolution,
    DUAL_SLOT_GRID, MONTH_ORACLE_MAX_GRID, MONTH_ORACLE_MAX_SLOTS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    monthly_payoff, slot_data_usage, virtual_payoff, CostFamily, DataPlan, Decision,
    SlotRealization, UtilityFamily,
};

/// Closed-form solution regime of the per-slot problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    I,
    II,
    III,
    IV,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::I, Region::II, Region::III, Region::IV];

    fn index(self) -> usize {
        match self {
            Region::I => 0,
            Region::II => 1,
            Region::III => 2,
            Region::IV => 3,
        }
    }
}

/// Smallest acquisition fraction returned by the region-IV root search.
pub const X_MIN: f64 = 1e-12;
/// Absolute tolerance in `x` of the region-IV root search.
pub const ROOT_TOLERANCE: f64 = 1e-10;
/// Bracket width at which the shadow-price bisection stops.
pub const SHADOW_PRICE_WIDTH: f64 = 1e-9;
/// Iteration budget of the shadow-price bisection.
pub const SHADOW_PRICE_ITERATIONS: usize = 60;

/// Per-slot Lagrangian `f(x, z) - λ (h(x, z) - quota)`.
pub fn slot_lagrangian(
    slot: &SlotRealization,
    dec: &Decision,
    lambda: f64,
    quota: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> f64 {
    virtual_payoff(slot, dec, u, e) - lambda * (slot_data_usage(slot, dec) - quota)
}

/// Quantities shared by the region tests and closed forms of one slot at one λ.
#[derive(Debug, Clone, Copy)]
struct SlotTerms {
    /// `p c + (d + r) λ`: marginal cost of acquisition when the margin is offloaded.
    acquisition_cost: f64,
    /// `β c e'(c) + d λ`: marginal cost of acquisition executed fully locally at `x = 1`.
    local_cost_at_full: f64,
    /// `(p c + r λ) / (c e'(c))`: sensitivity at which offloading starts at `x = 1`.
    sensitivity_threshold: f64,
    /// `e'^{-1}((p c + r λ) / (β c)) / c`: locally executed share once offloading is active.
    local_share: f64,
    /// `u'(1)`.
    marginal_at_one: f64,
}

impl SlotTerms {
    fn new(slot: &SlotRealization, lambda: f64, e: &CostFamily) -> Self {
        let c = slot.compute;
        let offload_cost = slot.price * c + slot.raw * lambda;
        let acquisition_cost = offload_cost + slot.data * lambda;
        let local_marginal_full = c * e.marginal(c);
        let local_cost_at_full = slot.sensitivity * local_marginal_full + slot.data * lambda;
        let sensitivity_threshold = if local_marginal_full > 0.0 {
            offload_cost / local_marginal_full
        } else {
            f64::INFINITY
        };
        let scale = slot.sensitivity * c;
        let local_share = if scale > 0.0 {
            e.inverse_marginal(offload_cost / scale) / c
        } else {
            f64::INFINITY
        };
        Self {
            acquisition_cost,
            local_cost_at_full,
            sensitivity_threshold,
            local_share,
            // u'(1) = 1 for every exponent.
            marginal_at_one: 1.0,
        }
    }

    /// Valuation boundary between regions III and IV.
    fn partial_threshold(&self, u: &UtilityFamily) -> f64 {
        let m = u.marginal(self.local_share);
        if m == 0.0 {
            f64::INFINITY
        } else {
            self.acquisition_cost / m
        }
    }

    fn membership(&self, slot: &SlotRealization, u: &UtilityFamily) -> [bool; 4] {
        let theta = slot.valuation;
        let beta = slot.sensitivity;
        let high_local = self.local_cost_at_full / self.marginal_at_one;
        let high_offload = self.acquisition_cost / self.marginal_at_one;
        let low = self.partial_threshold(u);
        [
            theta > high_local && beta < self.sensitivity_threshold,
            theta > high_offload && beta >= self.sensitivity_threshold,
            low <= theta && theta <= high_offload,
            theta < low && theta <= high_local,
        ]
    }
}

/// Region membership of a slot at shadow price `lambda`, tested in the
/// order I, II, III, IV; the first matching set is returned.
pub fn classify_region(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<Region> {
    let terms = SlotTerms::new(slot, lambda, e);
    let m = terms.membership(slot, u);
    Region::ALL
        .into_iter()
        .find(|r| m[r.index()])
        .ok_or(Error::RegionGap { lambda })
}

/// All regions whose defining inequalities hold.
pub fn matching_regions(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Vec<Region> {
    let terms = SlotTerms::new(slot, lambda, e);
    let m = terms.membership(slot, u);
    Region::ALL.into_iter().filter(|r| m[r.index()]).collect()
}

/// Closed-form decision of `region`, clamped into the feasible triangle.
pub fn region_decision(
    region: Region,
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Decision {
    let terms = SlotTerms::new(slot, lambda, e);
    closed_form(region, &terms, slot, lambda, u, e)
}

fn closed_form(
    region: Region,
    terms: &SlotTerms,
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Decision {
    match region {
        Region::I => Decision::clamped(1.0, 0.0),
        Region::II => Decision::clamped(1.0, snap(1.0 - terms.local_share)),
        Region::III => {
            let x = if slot.valuation > 0.0 {
                u.inverse_marginal(terms.acquisition_cost / slot.valuation)
            } else {
                0.0
            };
            let x = x.min(1.0);
            Decision::clamped(x, snap(x - terms.local_share))
        }
        Region::IV => Decision::clamped(local_acquisition(slot, lambda, u, e), 0.0),
    }
}

/// Offloaded shares below this are round-off from a boundary price.
const OFFLOAD_FLOOR: f64 = 1e-12;

fn snap(z: f64) -> f64 {
    if z < OFFLOAD_FLOOR {
        0.0
    } else {
        z
    }
}

/// Root of `θ u'(x) - β c e'(x c) - d λ` on `(0, 1]`: the acquisition level
/// when everything is executed locally. Returns 1 when the residual is still
/// non-negative at `x = 1` and 0 when the valuation is zero.
pub fn local_acquisition(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> f64 {
    let theta = slot.valuation;
    if theta <= 0.0 {
        return 0.0;
    }
    let c = slot.compute;
    let bc = slot.sensitivity * c;
    let dl = slot.data * lambda;
    let a = u.exponent();
    let b = e.exponent();
    let residual = |x: f64| theta * u.marginal(x) - bc * e.marginal(x * c) - dl;
    // Derivative of the residual; finite on (0, 1].
    let slope = |x: f64| {
        let local = if c > 0.0 {
            bc * c * b * e.marginal(x * c) / (x * c).max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        -a * theta * u.marginal(x) / x - local
    };

    if residual(1.0) >= 0.0 {
        return 1.0;
    }
    let mut lo = X_MIN;
    let mut hi = 1.0;
    if residual(lo) <= 0.0 {
        return X_MIN;
    }
    // Newton steps safeguarded by the bracket: a step that would leave
    // [lo, hi] or shrink too slowly is replaced by bisection.
    let mut x = 0.5 * (lo + hi);
    let mut dx = hi - lo;
    let mut dx_old = dx;
    let mut g = residual(x);
    let mut dg = slope(x);
    for _ in 0..200 {
        let leaves = ((x - hi) * dg - g) * ((x - lo) * dg - g) > 0.0;
        if leaves || (2.0 * g).abs() > (dx_old * dg).abs() {
            dx_old = dx;
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        } else {
            dx_old = dx;
            dx = g / dg;
            x -= dx;
        }
        if dx.abs() < 0.5 * ROOT_TOLERANCE || hi - lo <= ROOT_TOLERANCE {
            return x;
        }
        g = residual(x);
        dg = slope(x);
        if g > 0.0 {
            lo = x;
        } else if g < 0.0 {
            hi = x;
        } else {
            return x;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of the per-slot Lagrangian at shadow price `lambda`.
///
/// Uses the region whose inequalities hold. At region boundaries (several or
/// no sets matching because of round-off) the candidate closed forms are
/// compared by Lagrangian value and the best is kept, earlier regions winning
/// ties.
pub fn slot_best_response(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Decision {
    let terms = SlotTerms::new(slot, lambda, e);
    let m = terms.membership(slot, u);
    let matched = m.iter().filter(|&&b| b).count();
    if matched == 1 {
        let region = Region::ALL[m.iter().position(|&b| b).unwrap()];
        return closed_form(region, &terms, slot, lambda, u, e);
    }
    let mut best: Option<(f64, Decision)> = None;
    for region in Region::ALL {
        if matched > 0 && !m[region.index()] {
            continue;
        }
        let dec = closed_form(region, &terms, slot, lambda, u, e);
        let value = slot_lagrangian(slot, &dec, lambda, 0.0, u, e);
        if best.is_none_or(|(v, _)| value > v) {
            best = Some((value, dec));
        }
    }
    best.map(|(_, d)| d).unwrap_or(Decision::IDLE)
}

/// Potential usage `A(λ)`: month usage when every slot best-responds to `λ`.
pub fn potential_usage(
    slots: &[SlotRealization],
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
) -> f64 {
    slots
        .iter()
        .map(|s| slot_data_usage(s, &slot_best_response(s, lambda, u, e)))
        .sum()
}

/// Optimal shadow price `min(π, λ†)`.
pub fn optimal_shadow_price(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<f64> {
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    let cap = plan.cap;
    let fee = plan.overage_fee;
    if potential_usage(slots, fee, u, e) > cap {
        return Ok(fee);
    }
    if potential_usage(slots, 0.0, u, e) <= cap {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, fee);
    for _ in 0..SHADOW_PRICE_ITERATIONS {
        if hi - lo <= SHADOW_PRICE_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if potential_usage(slots, mid, u, e) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(
        (potential_usage(slots, (hi - 1e-7).max(0.0), u, e) - potential_usage(slots, hi, u, e))
            .abs()
            < 1e-3,
        "potential usage jumps at the shadow price"
    );
    Ok(hi)
}

/// Hindsight-optimal month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSolution {
    pub decisions: Vec<Decision>,
    /// Optimal shadow price `λ*` in `[0, π]`.
    pub shadow_price: f64,
    /// Usage above the cap (GB).
    pub overage: f64,
    pub usage: f64,
    pub payoff: f64,
}

impl OfflineSolution {
    /// Complementary slackness residual `λ* (s* + Q - Σ h)`.
    pub fn slackness_residual(&self, plan: &DataPlan) -> f64 {
        self.shadow_price * (self.overage + plan.cap - self.usage)
    }

    pub fn total_offloaded(&self, slots: &[SlotRealization]) -> f64 {
        slots
            .iter()
            .zip(&self.decisions)
            .map(|(s, d)| s.compute * d.executing())
            .sum()
    }
}

/// Tolerance on the complementary-slackness residual.
pub const SLACKNESS_TOLERANCE: f64 = 1e-6;

pub fn solve_offline(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<OfflineSolution> {
    let shadow_price = optimal_shadow_price(slots, plan, u, e)?;
    let decisions: Vec<Decision> = slots
        .iter()
        .map(|s| slot_best_response(s, shadow_price, u, e))
        .collect();
    let usage: f64 = slots
        .iter()
        .zip(&decisions)
        .map(|(s, d)| slot_data_usage(s, d))
        .sum();
    let payoff = monthly_payoff(slots, &decisions, plan, u, e)?;
    Ok(OfflineSolution {
        decisions,
        shadow_price,
        overage: (usage - plan.cap).max(0.0),
        usage,
        payoff,
    })
}
