//! Brute-force verification oracles for the per-slot and monthly problems.
//!
//! These never use the closed-form regions: slot maxima come from exhaustive
//! search over a grid of the feasible triangle `0 <= z <= x <= 1`, and the
//! month is handled either by a joint grid (tiny instances) or by minimizing
//! the grid dual `D(λ) = Σ_t max L_t(x, z, λ) + λ Q` over a λ grid.

use serde::{Deserialize, Serialize};

use super::slot_lagrangian;
use crate::error::{invalid, Error, Result};
use crate::model::{
    monthly_payoff, slot_data_usage, virtual_payoff, CostFamily, DataPlan, Decision,
    SlotRealization, UtilityFamily,
};

/// Largest month the oracle accepts.
pub const MONTH_ORACLE_MAX_SLOTS: usize = 5;
/// Largest per-axis resolution of the joint month grid.
pub const MONTH_ORACLE_MAX_GRID: usize = 40;
/// Per-axis resolution of the slot searches used by the dual route.
pub const DUAL_SLOT_GRID: usize = 100;
/// λ spacing of the dual scan.
const DUAL_LAMBDA_STEP: f64 = 1e-3;
/// Joint grids with more points than this are skipped.
const JOINT_GRID_BUDGET: usize = 2_000_000;
/// Relative slack defining the near-minimal part of the coarse dual.
const WINDOW_SLACK: f64 = 1e-4;
/// Extra λ grid points rescanned on each side of the near-minimal part.
const WINDOW_MARGIN: usize = 10;
const REFINE_ROUNDS: usize = 5;
const REFINE_POINTS: usize = 11;

fn triangle(n: usize) -> impl Iterator<Item = (f64, f64)> {
    let step = 1.0 / n as f64;
    (0..=n).flat_map(move |i| (0..=i).map(move |j| (i as f64 * step, j as f64 * step)))
}

fn decision(x: f64, z: f64) -> Decision {
    // Grid points lie in the triangle by construction.
    Decision::new(x.clamp(0.0, 1.0), z.clamp(0.0, x.clamp(0.0, 1.0))).expect("grid point")
}

/// Exhaustive argmax of the slot Lagrangian over an `(n + 1)`-point-per-axis
/// grid of the feasible triangle.
pub fn brute_force_slot_oracle(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
    grid_n: usize,
) -> Result<Decision> {
    if grid_n < 100 {
        return Err(invalid("grid_n", format!("{grid_n} < 100")));
    }
    Ok(grid_argmax(slot, lambda, u, e, grid_n).1)
}

fn grid_argmax(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
    grid_n: usize,
) -> (f64, Decision) {
    let mut best = (f64::NEG_INFINITY, Decision::IDLE);
    for (x, z) in triangle(grid_n) {
        let d = decision(x, z);
        let v = slot_lagrangian(slot, &d, lambda, 0.0, u, e);
        if v > best.0 {
            best = (v, d);
        }
    }
    best
}

/// Grid argmax followed by successive zoomed grids around the incumbent.
/// The slot Lagrangian is concave, so zooming keeps the global maximizer.
pub fn refined_slot_oracle(
    slot: &SlotRealization,
    lambda: f64,
    u: &UtilityFamily,
    e: &CostFamily,
    grid_n: usize,
) -> Result<Decision> {
    let mut best = grid_argmax(slot, lambda, u, e, brute_grid(grid_n)?);
    let mut half_width = 1.0 / grid_n as f64;
    for _ in 0..REFINE_ROUNDS {
        let (cx, cz) = (best.1.acquisition(), best.1.executing());
        let step = 2.0 * half_width / (REFINE_POINTS - 1) as f64;
        for i in 0..REFINE_POINTS {
            let x = cx - half_width + i as f64 * step;
            if !(0.0..=1.0).contains(&x) {
                continue;
            }
            for j in 0..REFINE_POINTS {
                let z = cz - half_width + j as f64 * step;
                if z < 0.0 || z > x {
                    continue;
                }
                let d = decision(x, z);
                let v = slot_lagrangian(slot, &d, lambda, 0.0, u, e);
                if v > best.0 {
                    best = (v, d);
                }
            }
        }
        half_width = step;
    }
    Ok(best.1)
}

fn brute_grid(grid_n: usize) -> Result<usize> {
    if grid_n < 100 {
        return Err(invalid("grid_n", format!("{grid_n} < 100")));
    }
    Ok(grid_n)
}

/// Best month found by the brute-force oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub decisions: Vec<Decision>,
    /// Monthly payoff of `decisions`.
    pub payoff: f64,
    /// Minimizer of the refined grid dual.
    pub shadow_price: f64,
    /// Refined grid dual value at `shadow_price`, net of the subscription fee.
    pub dual_value: f64,
}

/// Slot values sampled on the coarse grid, reduced to the upper hull in
/// `(usage, value)` space: only hull points can maximize `value - λ usage`.
struct SlotHull {
    usage: Vec<f64>,
    value: Vec<f64>,
}

impl SlotHull {
    fn new(slot: &SlotRealization, u: &UtilityFamily, e: &CostFamily, grid_n: usize) -> Self {
        let mut pts: Vec<(f64, f64)> = triangle(grid_n)
            .map(|(x, z)| {
                let d = decision(x, z);
                (slot_data_usage(slot, &d), virtual_payoff(slot, &d, u, e))
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        // Upper concave envelope, restricted to the part reachable for λ >= 0
        // (non-decreasing value as usage grows).
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in pts {
            if let Some(last) = hull.last() {
                if p.0 == last.0 {
                    continue;
                }
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        Self {
            usage: hull.iter().map(|p| p.0).collect(),
            value: hull.iter().map(|p| p.1).collect(),
        }
    }

    fn max_lagrangian(&self, lambda: f64) -> f64 {
        self.usage
            .iter()
            .zip(&self.value)
            .map(|(h, f)| f - lambda * h)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Brute-force hindsight optimum for months of at most
/// [`MONTH_ORACLE_MAX_SLOTS`] slots.
///
/// The dual route scans λ over `[0, π]` at spacing `1e-3` using grid slot
/// maxima, rescans the near-minimal window with refined slot maxima, and
/// keeps the best primal month among the window's maxima and their mixtures. When the
/// joint grid at `grid_n` points per axis is small enough it is searched as
/// well, and the better month is returned.
pub fn brute_force_month_oracle(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
    grid_n: usize,
) -> Result<OracleSolution> {
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    if slots.len() > MONTH_ORACLE_MAX_SLOTS {
        return Err(Error::InstanceTooLarge(format!(
            "{} slots > {MONTH_ORACLE_MAX_SLOTS}",
            slots.len()
        )));
    }
    if grid_n == 0 || grid_n > MONTH_ORACLE_MAX_GRID {
        return Err(Error::InstanceTooLarge(format!(
            "grid_n {grid_n} not in 1..={MONTH_ORACLE_MAX_GRID}"
        )));
    }
    let fee = plan.overage_fee;
    let cap = plan.cap;

    let hulls: Vec<SlotHull> = slots
        .iter()
        .map(|s| SlotHull::new(s, u, e, DUAL_SLOT_GRID))
        .collect();
    let coarse_dual = |lambda: f64| -> f64 {
        hulls.iter().map(|h| h.max_lagrangian(lambda)).sum::<f64>() + lambda * cap
    };
    let steps = (fee / DUAL_LAMBDA_STEP).ceil() as usize;
    let grid_lambda = |i: usize| (i as f64 * DUAL_LAMBDA_STEP).min(fee);
    let coarse: Vec<f64> = (0..=steps).map(|i| coarse_dual(grid_lambda(i))).collect();
    let coarse_min = coarse.iter().copied().fold(f64::INFINITY, f64::min);
    // The coarse dual can be nearly flat around its minimizer; rescan every
    // near-minimal λ plus a margin on both sides.
    let near = |v: f64| v <= coarse_min + WINDOW_SLACK * coarse_min.abs().max(1.0);
    let first = coarse.iter().position(|&v| near(v)).expect("finite dual");
    let last = coarse.iter().rposition(|&v| near(v)).expect("finite dual");
    let lo = first.saturating_sub(WINDOW_MARGIN);
    let hi = (last + WINDOW_MARGIN).min(steps);

    let mut dual = (f64::INFINITY, grid_lambda(first));
    let mut window: Vec<Vec<Decision>> = Vec::new();
    for i in lo..=hi {
        let lambda = grid_lambda(i);
        let decs: Vec<Decision> = slots
            .iter()
            .map(|s| refined_slot_oracle(s, lambda, u, e, DUAL_SLOT_GRID))
            .collect::<Result<_>>()?;
        let value: f64 = slots
            .iter()
            .zip(&decs)
            .map(|(s, d)| slot_lagrangian(s, d, lambda, 0.0, u, e))
            .sum::<f64>()
            + lambda * cap;
        if value < dual.0 {
            dual = (value, lambda);
        }
        window.push(decs);
    }
    let primal = best_window_mixture(slots, plan, u, e, &window)?;
    let (mut payoff, mut decisions) = primal;

    if let Some((joint_payoff, joint_decs)) = joint_grid_search(slots, plan, u, e, grid_n)? {
        if joint_payoff > payoff {
            payoff = joint_payoff;
            decisions = joint_decs;
        }
    }

    Ok(OracleSolution {
        decisions,
        payoff,
        shadow_price: dual.1,
        dual_value: dual.0 - plan.subscription_fee,
    })
}

/// Best month among the window's slot maxima and convex mixtures of
/// neighbouring ones. The feasible triangle is convex, so mixtures remain
/// feasible; mixing recovers months whose usage sits exactly at the cap,
/// which a single grid λ generally cannot produce.
fn best_window_mixture(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
    window: &[Vec<Decision>],
) -> Result<(f64, Vec<Decision>)> {
    const MIX_STEPS: usize = 100;
    let usage = |decs: &[Decision]| -> f64 {
        slots
            .iter()
            .zip(decs)
            .map(|(s, d)| slot_data_usage(s, d))
            .sum()
    };
    let mix = |a: &[Decision], b: &[Decision], w: f64| -> Vec<Decision> {
        a.iter()
            .zip(b)
            .map(|(p, q)| {
                let x = w * p.acquisition() + (1.0 - w) * q.acquisition();
                let z = w * p.executing() + (1.0 - w) * q.executing();
                decision(x, z.min(x))
            })
            .collect()
    };
    let mut best: Option<(f64, Vec<Decision>)> = None;
    let mut consider = |decs: Vec<Decision>| -> Result<()> {
        let payoff = monthly_payoff(slots, &decs, plan, u, e)?;
        if best.as_ref().is_none_or(|(p, _)| payoff > *p) {
            best = Some((payoff, decs));
        }
        Ok(())
    };
    for decs in window {
        consider(decs.clone())?;
    }
    for pair in window.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ha, hb) = (usage(a), usage(b));
        for i in 1..MIX_STEPS {
            consider(mix(a, b, i as f64 / MIX_STEPS as f64))?;
        }
        // Usage is linear in the mixing weight: hit the cap exactly if possible.
        if (ha - plan.cap) * (hb - plan.cap) < 0.0 {
            consider(mix(a, b, (plan.cap - hb) / (ha - hb)))?;
        }
    }
    Ok(best.expect("window is non-empty"))
}

fn joint_grid_search(
    slots: &[SlotRealization],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
    grid_n: usize,
) -> Result<Option<(f64, Vec<Decision>)>> {
    let points: Vec<(f64, f64)> = triangle(grid_n).collect();
    let total = points
        .len()
        .checked_pow(slots.len() as u32)
        .filter(|&n| n <= JOINT_GRID_BUDGET);
    if total.is_none() {
        return Ok(None);
    }
    // Per-slot (value, usage) tables; the month objective only needs sums.
    let tables: Vec<Vec<(f64, f64)>> = slots
        .iter()
        .map(|s| {
            points
                .iter()
                .map(|&(x, z)| {
                    let d = decision(x, z);
                    (virtual_payoff(s, &d, u, e), slot_data_usage(s, &d))
                })
                .collect()
        })
        .collect();
    let mut index = vec![0usize; slots.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let (mut value, mut usage) = (0.0, 0.0);
        for (t, &i) in index.iter().enumerate() {
            value += tables[t][i].0;
            usage += tables[t][i].1;
        }
        let payoff = value - plan.bill(usage);
        if best.as_ref().is_none_or(|(p, _)| payoff > *p) {
            best = Some((payoff, index.clone()));
        }
        let mut t = 0;
        loop {
            if t == index.len() {
                let (_, idx) = best.expect("at least one point");
                let decs: Vec<Decision> = idx
                    .iter()
                    .map(|&i| decision(points[i].0, points[i].1))
                    .collect();
                let payoff = monthly_payoff(slots, &decs, plan, u, e)?;
                return Ok(Some((payoff, decs)));
            }
            index[t] += 1;
            if index[t] < points.len() {
                break;
            }
            index[t] = 0;
            t += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offline::{slot_best_response, solve_offline};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fam() -> (UtilityFamily, CostFamily) {
        (UtilityFamily::new(0.5).unwrap(), CostFamily::quadratic())
    }

    fn random_slot(rng: &mut ChaCha8Rng) -> SlotRealization {
        SlotRealization::new(
            rng.random_range(0.0..0.5),
            rng.random_range(0.0..0.5),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..1.0),
        )
        .unwrap()
    }

    #[test]
    fn slot_oracle_rejects_coarse_grids() {
        let (u, e) = fam();
        let s = SlotRealization::new(0.1, 0.1, 0.5, 1.0, 1.0, 0.1).unwrap();
        assert!(brute_force_slot_oracle(&s, 0.0, &u, &e, 50).is_err());
    }

    #[test]
    fn region_one_slot_lands_on_full_local() {
        let (u, e) = fam();
        let s = SlotRealization::new(1.0, 0.5, 1.0, 1.5, 0.1, 0.2).unwrap();
        let d = brute_force_slot_oracle(&s, 0.0, &u, &e, 100).unwrap();
        assert!((d.acquisition() - 1.0).abs() <= 0.01 && d.executing() <= 0.01);
    }

    #[test]
    fn huge_shadow_price_idles() {
        let (u, e) = fam();
        let s = SlotRealization::new(0.5, 0.5, 1.0, 1.5, 0.1, 0.2).unwrap();
        let d = brute_force_slot_oracle(&s, 1e6, &u, &e, 100).unwrap();
        assert!(d.acquisition() <= 0.01);
    }

    #[test]
    fn grid_value_never_exceeds_closed_form_by_more_than_lipschitz_slack() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let s = random_slot(&mut rng);
            let lambda = rng.random_range(0.0..15.0);
            let grid = brute_force_slot_oracle(&s, lambda, &u, &e, 100).unwrap();
            let closed = slot_best_response(&s, lambda, &u, &e);
            let lg = slot_lagrangian(&s, &grid, lambda, 0.0, &u, &e);
            let lc = slot_lagrangian(&s, &closed, lambda, 0.0, &u, &e);
            assert!(lg <= lc + 1e-9);
        }
    }

    #[test]
    fn month_oracle_limits() {
        let (u, e) = fam();
        let plan = DataPlan::new(1.0, 10.0, 15.0).unwrap();
        let s = SlotRealization::new(0.1, 0.1, 0.5, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(
            brute_force_month_oracle(&[s; 6], &plan, &u, &e, 20),
            Err(Error::InstanceTooLarge(_))
        ));
        assert!(matches!(
            brute_force_month_oracle(&[s; 2], &plan, &u, &e, 41),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn single_slot_month_matches_slot_oracle_at_dual_price() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let s = random_slot(&mut rng);
            let plan = DataPlan::new(rng.random_range(0.0..0.5), 10.0, 15.0).unwrap();
            let month = brute_force_month_oracle(&[s], &plan, &u, &e, 40).unwrap();
            let single =
                refined_slot_oracle(&s, month.shadow_price, &u, &e, DUAL_SLOT_GRID).unwrap();
            let single_payoff = monthly_payoff(&[s], &[single], &plan, &u, &e).unwrap();
            assert!(month.payoff >= single_payoff - 1e-9);
        }
    }

    #[test]
    fn huge_cap_gives_zero_dual_price() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let slots: Vec<_> = (0..3).map(|_| random_slot(&mut rng)).collect();
        let plan = DataPlan::new(100.0, 10.0, 15.0).unwrap();
        let sol = brute_force_month_oracle(&slots, &plan, &u, &e, 10).unwrap();
        assert_eq!(sol.shadow_price, 0.0);
    }

    #[test]
    fn dual_price_matches_closed_form_shadow_price() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut interior = 0;
        while interior < 5 {
            let slots: Vec<_> = (0..3).map(|_| random_slot(&mut rng)).collect();
            let plan = DataPlan::new(rng.random_range(0.0..1.5), 10.0, 15.0).unwrap();
            let sol = solve_offline(&slots, &plan, &u, &e).unwrap();
            let oracle = brute_force_month_oracle(&slots, &plan, &u, &e, 10).unwrap();
            // The dual can be nearly flat near its minimizer, so compare
            // objective values and allow a loose band on the price itself.
            assert!(
                (sol.shadow_price - oracle.shadow_price).abs() <= 0.1,
                "closed {} oracle {}",
                sol.shadow_price,
                oracle.shadow_price
            );
            let scale = oracle.dual_value.abs().max(1.0);
            assert!((sol.payoff - oracle.dual_value).abs() <= 1e-4 * scale);
            if sol.shadow_price > 0.0 && sol.shadow_price < plan.overage_fee {
                interior += 1;
            }
        }
    }

    #[test]
    fn offline_matches_month_oracle() {
        let (u, e) = fam();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..10 {
            let slots: Vec<_> = (0..4).map(|_| random_slot(&mut rng)).collect();
            let plan = DataPlan::new(rng.random_range(0.0..1.5), 10.0, 15.0).unwrap();
            let sol = solve_offline(&slots, &plan, &u, &e).unwrap();
            let oracle = brute_force_month_oracle(&slots, &plan, &u, &e, 10).unwrap();
            let scale = oracle.payoff.abs().max(1.0);
            // The grid primal is a lower bound; the λ-grid dual is tight to O(1e-4).
            assert!(sol.payoff >= oracle.payoff - 1e-9 * scale);
            assert!((sol.payoff - oracle.payoff).abs() <= 1e-3 * scale);
            assert!((sol.payoff - oracle.dual_value).abs() <= 1e-4 * scale);
        }
    }
}
