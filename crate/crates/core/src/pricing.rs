//! The edge provider's dynamic pricing policy: exponential weights over a
//! geometric grid of candidate prices with geometric exploration, plus its
//! theoretical constants and the fixed-price hindsight benchmark.
//!
//! Every slot each MU is shown a price drawn independently from the selection
//! distribution `h_t`; after all MUs respond, each candidate's revenue is
//! importance-weighted into a virtual revenue `V̂ <= 1` and its weight grows
//! by `(1 + δ)^V̂`. Weights are kept in log space.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Candidate prices `p(k) = p_min (1 + ε)^k` for `k = 1..=K`, where
/// `K = ⌊log_{1+ε}(Ē / p_min)⌋`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceGrid {
    p_min: f64,
    epsilon: f64,
    price_cap: f64,
    candidates: Vec<f64>,
}

/// Relative slack absorbing round-off when `Ē / p_min` is an exact power.
const GRID_ROUNDING: f64 = 1e-12;

impl PriceGrid {
    pub fn new(p_min: f64, epsilon: f64, price_cap: f64) -> Result<Self> {
        if !(p_min > 0.0 && p_min.is_finite()) {
            return Err(invalid("p_min", format!("{p_min} must be finite and > 0")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(
                "epsilon",
                format!("{epsilon} must be finite and > 0"),
            ));
        }
        if !(price_cap > p_min && price_cap.is_finite()) {
            return Err(invalid(
                "price cap",
                format!("{price_cap} must be finite and > p_min = {p_min}"),
            ));
        }
        let ratio = 1.0 + epsilon;
        let k = ((price_cap / p_min).ln() / ratio.ln() + GRID_ROUNDING).floor() as usize;
        let candidates: Vec<f64> = (1..=k)
            .map(|i| p_min * ratio.powi(i as i32))
            .filter(|&p| p <= price_cap * (1.0 + GRID_ROUNDING))
            .collect();
        if candidates.is_empty() {
            return Err(Error::EmptyGrid {
                price_cap,
                first: p_min * ratio,
            });
        }
        Ok(Self {
            p_min,
            epsilon,
            price_cap,
            candidates,
        })
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn price_cap(&self) -> f64 {
        self.price_cap
    }

    /// Number of candidates `K`.
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Candidate prices in increasing order; index `i` holds `p(i + 1)`.
    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn price(&self, index: usize) -> Result<f64> {
        self.candidates
            .get(index)
            .copied()
            .ok_or(Error::CandidateOutOfRange {
                index,
                len: self.len(),
            })
    }

    /// Normalized geometric exploration profile `(1+ε)^k / Σ_i (1+ε)^i`.
    pub fn geometric_profile(&self) -> Vec<f64> {
        let ratio = 1.0 + self.epsilon;
        let k_max = self.len() as i32;
        // Scale by (1+ε)^-K so large grids do not overflow.
        let raw: Vec<f64> = (1..=k_max).map(|k| ratio.powi(k - k_max)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Grid ratio `ε`, learning rate `δ` and exploration mix `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl PolicyParams {
    pub fn new(epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(
                "epsilon",
                format!("{epsilon} must be finite and > 0"),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("{delta} not in (0, 1)")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid("gamma", format!("{gamma} not in (0, 1]")));
        }
        Ok(Self {
            epsilon,
            delta,
            gamma,
        })
    }
}

/// Parameters `(ε, δ, γ) = (α/3, α/6, α/12)`. Under the condition
/// `V* >= (8/α) Φ(α/3, α/6, α/12)` the policy's expected revenue is at least
/// `V* / (1 + α)`; see [`guarantee_fraction`].
pub fn guarantee_parameters(alpha: f64) -> Result<PolicyParams> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("{alpha} not in (0, 1]")));
    }
    PolicyParams::new(alpha / 3.0, alpha / 6.0, alpha / 12.0)
}

/// Guaranteed fraction `1 / (1 + α)` of the hindsight revenue.
pub fn guarantee_fraction(alpha: f64) -> f64 {
    1.0 / (1.0 + alpha)
}

/// Loss constant
/// `Φ = (1-γ)/γ · (1+ε)/ε · N Ē c_max / δ · ln(ln(Ē/p_min) / ln(1+ε))`.
pub fn phi_loss(
    params: &PolicyParams,
    n_users: usize,
    price_cap: f64,
    c_max: f64,
    p_min: f64,
) -> Result<f64> {
    let PolicyParams {
        epsilon,
        delta,
        gamma,
    } = *params;
    if !(p_min > 0.0 && price_cap > p_min) {
        return Err(invalid(
            "price cap",
            format!("{price_cap} must exceed p_min = {p_min}"),
        ));
    }
    let spread = (price_cap / p_min).ln();
    let step = (1.0 + epsilon).ln();
    if spread <= step {
        return Err(invalid(
            "epsilon",
            format!("ln(Ē/p_min) = {spread} must exceed ln(1+ε) = {step}"),
        ));
    }
    Ok(
        (1.0 - gamma) / gamma * (1.0 + epsilon) / epsilon * n_users as f64 * price_cap * c_max
            / delta
            * (spread / step).ln(),
    )
}

/// Expected-revenue lower bound
/// `(1-γ)(1-δ/2)/(1+ε) · max_k V(k) - Φ`.
pub fn revenue_lower_bound(params: &PolicyParams, best_candidate_revenue: f64, phi: f64) -> f64 {
    (1.0 - params.gamma) * (1.0 - params.delta / 2.0) / (1.0 + params.epsilon)
        * best_candidate_revenue
        - phi
}

/// One MU's edge payment in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payment {
    /// Index of the candidate price the MU was shown.
    pub candidate: usize,
    /// `p · c · z` ($).
    pub revenue: f64,
}

/// What one settlement computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSettlement {
    /// Selection distribution the slot's prices were drawn from.
    pub selection: Vec<f64>,
    /// Revenue collected per candidate.
    pub candidate_revenue: Vec<f64>,
    /// Importance-weighted, normalized revenue per candidate.
    pub virtual_revenue: Vec<f64>,
}

/// Tolerance on the `V̂ <= 1` and exploration-floor checks.
pub const POLICY_CHECK_TOLERANCE: f64 = 1e-12;

/// Weights and running diagnostics of the pricing policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub grid: PriceGrid,
    pub params: PolicyParams,
    /// `ln ω_t(k)`.
    pub log_weights: Vec<f64>,
    /// Revenue collected over all settled slots ($).
    pub cumulative_revenue: f64,
    pub slots_settled: usize,
    /// Largest virtual revenue seen.
    pub max_virtual_revenue: f64,
    /// Virtual revenues above `1 + tolerance`.
    pub virtual_revenue_violations: usize,
    /// Selection probabilities below their exploration floor.
    pub floor_violations: usize,
    /// Number of selection probabilities checked against the floor.
    pub floor_checks: usize,
    /// Number of virtual revenues checked against 1.
    pub virtual_revenue_checks: usize,
}

impl PolicyState {
    /// Uniform initial weights.
    pub fn new(grid: PriceGrid, params: PolicyParams) -> Result<Self> {
        if (grid.epsilon() - params.epsilon).abs() > 1e-15 * params.epsilon {
            return Err(invalid(
                "epsilon",
                format!(
                    "grid ratio {} differs from policy ratio {}",
                    grid.epsilon(),
                    params.epsilon
                ),
            ));
        }
        let k = grid.len();
        Ok(Self {
            grid,
            params,
            log_weights: vec![0.0; k],
            cumulative_revenue: 0.0,
            slots_settled: 0,
            max_virtual_revenue: 0.0,
            virtual_revenue_violations: 0,
            floor_violations: 0,
            floor_checks: 0,
            virtual_revenue_checks: 0,
        })
    }

    /// Normalized weights `ω_t(k) / Σ ω_t`.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let top = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `h_t(k) = (1-γ) ω_t(k)/Σω + γ (1+ε)^k / Σ_i (1+ε)^i`.
    pub fn selection_distribution(&self) -> Vec<f64> {
        let gamma = self.params.gamma;
        self.normalized_weights()
            .into_iter()
            .zip(self.grid.geometric_profile())
            .map(|(w, g)| (1.0 - gamma) * w + gamma * g)
            .collect()
    }

    /// Exploration floor `γ (1+ε)^k / Σ_i (1+ε)^i` of every candidate.
    pub fn exploration_floor(&self) -> Vec<f64> {
        let gamma = self.params.gamma;
        self.grid
            .geometric_profile()
            .into_iter()
            .map(|g| gamma * g)
            .collect()
    }

    /// Independent candidate draws for `n_users` MUs.
    pub fn draw_prices<R: Rng + ?Sized>(&self, n_users: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(self.selection_distribution())
            .expect("selection distribution is positive and finite");
        (0..n_users).map(|_| dist.sample(rng)).collect()
    }

    /// [`Self::draw_prices`] with a dedicated generator seeded by `seed`.
    pub fn draw_prices_seeded(&self, n_users: usize, seed: u64) -> Vec<usize> {
        self.draw_prices(n_users, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Collects a slot's payments and updates every candidate's weight.
    ///
    /// `n_users` and `c_max` normalize revenues so that each virtual revenue
    /// is at most 1 whenever every payment is at most `p(k) · c_max`.
    pub fn settle_slot(
        &mut self,
        payments: &[Payment],
        n_users: usize,
        c_max: f64,
    ) -> Result<SlotSettlement> {
        if n_users == 0 {
            return Err(invalid("n_users", "must be >= 1"));
        }
        if !(c_max > 0.0 && c_max.is_finite()) {
            return Err(invalid("c_max", format!("{c_max} must be finite and > 0")));
        }
        let k_len = self.grid.len();
        let mut candidate_revenue = vec![0.0; k_len];
        for p in payments {
            if p.candidate >= k_len {
                return Err(Error::CandidateOutOfRange {
                    index: p.candidate,
                    len: k_len,
                });
            }
            if !(p.revenue >= 0.0 && p.revenue.is_finite()) {
                return Err(Error::NegativeRevenue {
                    candidate: p.candidate,
                    revenue: p.revenue,
                });
            }
            candidate_revenue[p.candidate] += p.revenue;
        }

        let selection = self.selection_distribution();
        let floor = self.exploration_floor();
        for (h, f) in selection.iter().zip(&floor) {
            self.floor_checks += 1;
            if *h < f * (1.0 - POLICY_CHECK_TOLERANCE) {
                self.floor_violations += 1;
            }
        }

        let step = (1.0 + self.params.delta).ln();
        let norm = n_users as f64 * c_max;
        let mut virtual_revenue = Vec::with_capacity(k_len);
        for k in 0..k_len {
            // V / (N c p_min) · γ / (h Σ(1+ε)^i), rewritten with the
            // normalized floor to avoid large powers.
            let v_hat =
                candidate_revenue[k] / (norm * self.grid.candidates[k]) * floor[k] / selection[k];
            self.virtual_revenue_checks += 1;
            if v_hat > 1.0 + POLICY_CHECK_TOLERANCE {
                self.virtual_revenue_violations += 1;
            }
            self.max_virtual_revenue = self.max_virtual_revenue.max(v_hat);
            self.log_weights[k] += v_hat * step;
            virtual_revenue.push(v_hat);
        }
        self.cumulative_revenue += candidate_revenue.iter().sum::<f64>();
        self.slots_settled += 1;
        Ok(SlotSettlement {
            selection,
            candidate_revenue,
            virtual_revenue,
        })
    }
}

/// Fixed-price hindsight benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExPostOptimum {
    /// `V*`: best revenue over all swept prices.
    pub revenue: f64,
    /// Price attaining `V*`.
    pub price: f64,
    /// Revenue of each grid candidate.
    pub candidate_revenues: Vec<f64>,
    /// `max_k V(k)`.
    pub best_candidate_revenue: f64,
    /// Index of the best candidate.
    pub best_candidate: usize,
    /// Number of prices evaluated.
    pub prices_evaluated: usize,
}

impl ExPostOptimum {
    /// Whether the best candidate earns at least `V* / (1 + ε)`.
    pub fn rounding_bound_holds(&self, epsilon: f64) -> bool {
        self.best_candidate_revenue * (1.0 + epsilon) >= self.revenue * (1.0 - 1e-12)
    }
}

/// Default sub-points per grid interval in the benchmark sweep.
pub const DEFAULT_REFINEMENT: usize = 20;

/// Sweeps fixed prices and returns the best revenue.
///
/// Evaluates `revenue_at(p)` at `p_min`, at every candidate, and at
/// `refinement` evenly spaced interior points of every interval between
/// consecutive prices in `p_min, p(1), ..., p(K), Ē`. Prices at or above the
/// cap are skipped: no MU offloads there, so they earn nothing.
pub fn ex_post_optimal_revenue<F>(
    grid: &PriceGrid,
    refinement: usize,
    mut revenue_at: F,
) -> Result<ExPostOptimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut knots = Vec::with_capacity(grid.len() + 2);
    knots.push(grid.p_min());
    knots.extend_from_slice(grid.candidates());
    if grid.price_cap() > *knots.last().expect("non-empty") {
        knots.push(grid.price_cap());
    }

    let mut best = (f64::NEG_INFINITY, grid.p_min());
    let mut evaluated = 0;
    let mut eval = |p: f64, best: &mut (f64, f64)| -> Result<f64> {
        let v = revenue_at(p)?;
        evaluated += 1;
        if v > best.0 {
            *best = (v, p);
        }
        Ok(v)
    };

    eval(grid.p_min(), &mut best)?;
    let mut candidate_revenues = Vec::with_capacity(grid.len());
    for (i, w) in knots.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        for j in 1..=refinement {
            eval(
                lo + (hi - lo) * j as f64 / (refinement + 1) as f64,
                &mut best,
            )?;
        }
        // Knot i + 1 is a candidate unless it is the appended cap.
        if i < grid.len() {
            candidate_revenues.push(eval(hi, &mut best)?);
        }
    }
    let (best_candidate, best_candidate_revenue) =
        candidate_revenues.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, v)| {
                if v > acc.1 {
                    (k, v)
                } else {
                    acc
                }
            },
        );
    Ok(ExPostOptimum {
        revenue: best.0,
        price: best.1,
        candidate_revenues,
        best_candidate_revenue,
        best_candidate,
        prices_evaluated: evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PriceGrid {
        PriceGrid::new(0.01, 1.0 / 3.0, 2.0).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = grid();
        assert_eq!(g.len(), 18);
        assert!((g.candidates()[0] - 0.01 * 4.0 / 3.0).abs() < 1e-15);
        let mut p = 0.01;
        for _ in 0..18 {
            p *= 4.0 / 3.0;
        }
        assert!((g.candidates()[17] - p).abs() < 1e-12);
        assert!((g.candidates()[17] - 1.77377).abs() < 1e-5);
        assert!(g.candidates().windows(2).all(|w| w[0] < w[1]));
        assert!(*g.candidates().last().unwrap() <= 2.0);

        let exact = PriceGrid::new(0.01, 0.5, 0.015).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!(PriceGrid::new(0.01, 10.0, 2.0).unwrap().len(), 2);
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(matches!(
            PriceGrid::new(0.01, 1.0, 0.015),
            Err(Error::EmptyGrid { .. })
        ));
        assert!(PriceGrid::new(0.0, 1.0, 2.0).is_err());
        assert!(PriceGrid::new(0.01, 0.0, 2.0).is_err());
        assert!(PriceGrid::new(0.01, 1.0, 0.005).is_err());
        assert!(matches!(
            grid().price(18),
            Err(Error::CandidateOutOfRange { .. })
        ));
    }

    #[test]
    fn selection_example() {
        let g = PriceGrid::new(1.0, 1.0, 4.0).unwrap();
        assert_eq!(g.len(), 2);
        let s = PolicyState::new(g, PolicyParams::new(1.0, 0.5, 0.5).unwrap()).unwrap();
        let h = s.selection_distribution();
        assert!((h[0] - (0.25 + 0.5 / 3.0)).abs() < 1e-12);
        assert!((h[1] - (0.25 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((h[0] - 0.4167).abs() < 1e-4 && (h[1] - 0.5833).abs() < 1e-4);
    }

    #[test]
    fn pure_exploration_ignores_weights() {
        let mut s =
            PolicyState::new(grid(), PolicyParams::new(1.0 / 3.0, 0.5, 1.0).unwrap()).unwrap();
        s.log_weights[3] = 50.0;
        let h = s.selection_distribution();
        let g = s.grid.geometric_profile();
        assert!(h.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn dominant_weight_takes_over() {
        let mut s =
            PolicyState::new(grid(), PolicyParams::new(1.0 / 3.0, 0.5, 1e-9).unwrap()).unwrap();
        s.log_weights[5] = 800.0;
        let h = s.selection_distribution();
        assert!(h[5] > 1.0 - 1e-8);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(PolicyParams::new(0.0, 0.1, 0.1).is_err());
        assert!(PolicyParams::new(0.1, 1.0, 0.1).is_err());
        assert!(PolicyParams::new(0.1, 0.1, 0.0).is_err());
        let p = guarantee_parameters(1.0).unwrap();
        assert!((p.epsilon - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.delta - 1.0 / 6.0).abs() < 1e-15);
        assert!((p.gamma - 1.0 / 12.0).abs() < 1e-15);
        let p = guarantee_parameters(0.5).unwrap();
        assert!((p.epsilon - 1.0 / 6.0).abs() < 1e-15);
        assert!((p.delta - 1.0 / 12.0).abs() < 1e-15);
        assert!((p.gamma - 1.0 / 24.0).abs() < 1e-15);
        assert!(guarantee_parameters(2.0).is_err());
        assert!(guarantee_parameters(0.0).is_err());
        assert_eq!(guarantee_fraction(1.0), 0.5);
        let g = PriceGrid::new(0.01, 0.5, 2.0).unwrap();
        assert!(PolicyState::new(g, guarantee_parameters(1.0).unwrap()).is_err());
    }

    #[test]
    fn draws_are_reproducible_and_match_distribution() {
        let mut s = PolicyState::new(grid(), guarantee_parameters(1.0).unwrap()).unwrap();
        s.log_weights[10] = 2.0;
        assert_eq!(s.draw_prices_seeded(100, 9), s.draw_prices_seeded(100, 9));
        let n = 1_000_000;
        let draws = s.draw_prices_seeded(n, 10);
        let mut counts = vec![0usize; s.grid.len()];
        for d in draws {
            counts[d] += 1;
        }
        for (c, h) in counts.iter().zip(s.selection_distribution()) {
            let sd = (n as f64 * h * (1.0 - h)).sqrt();
            assert!((*c as f64 - n as f64 * h).abs() <= 3.0 * sd + 1.0);
        }
    }

    #[test]
    fn settle_rejects_bad_payments() {
        let mut s = PolicyState::new(grid(), guarantee_parameters(1.0).unwrap()).unwrap();
        let bad = [Payment {
            candidate: 0,
            revenue: -1.0,
        }];
        assert!(matches!(
            s.settle_slot(&bad, 1, 1.0),
            Err(Error::NegativeRevenue { .. })
        ));
        let bad = [Payment {
            candidate: 99,
            revenue: 1.0,
        }];
        assert!(s.settle_slot(&bad, 1, 1.0).is_err());
        assert!(s.settle_slot(&[], 0, 1.0).is_err());
        assert_eq!(s.slots_settled, 0);
    }

    #[test]
    fn zero_revenue_leaves_weights() {
        let mut s = PolicyState::new(grid(), guarantee_parameters(1.0).unwrap()).unwrap();
        let before = s.log_weights.clone();
        s.settle_slot(
            &[Payment {
                candidate: 3,
                revenue: 0.0,
            }],
            1,
            1.0,
        )
        .unwrap();
        assert_eq!(s.log_weights, before);
        assert_eq!(s.cumulative_revenue, 0.0);
    }

    #[test]
    fn full_payment_at_floor_reaches_one() {
        let g = grid();
        let params = PolicyParams::new(1.0 / 3.0, 1.0 / 6.0, 1.0).unwrap();
        let mut s = PolicyState::new(g.clone(), params).unwrap();
        // With γ = 1 every candidate sits exactly at its floor.
        let n = 7;
        let k = 4;
        let pay: Vec<Payment> = (0..n)
            .map(|_| Payment {
                candidate: k,
                revenue: g.candidates()[k] * 1.0,
            })
            .collect();
        let out = s.settle_slot(&pay, n, 1.0).unwrap();
        assert!((out.virtual_revenue[k] - 1.0).abs() < 1e-12);
        assert_eq!(s.virtual_revenue_violations, 0);
        assert!((s.log_weights[k] - (7.0f64 / 6.0).ln()).abs() < 1e-12);
        assert!((s.cumulative_revenue - 7.0 * g.candidates()[k]).abs() < 1e-12);
    }

    #[test]
    fn virtual_revenue_bounded_under_random_play() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = PolicyState::new(grid(), guarantee_parameters(1.0).unwrap()).unwrap();
        let n = 50;
        for t in 0..200 {
            let draws = s.draw_prices_seeded(n, t);
            let pay: Vec<Payment> = draws
                .into_iter()
                .map(|k| Payment {
                    candidate: k,
                    revenue: s.grid.candidates()[k] * rng.random_range(0.0..=1.0),
                })
                .collect();
            let out = s.settle_slot(&pay, n, 1.0).unwrap();
            assert!((out.selection.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.virtual_revenue_violations, 0);
        assert_eq!(s.floor_violations, 0);
        assert!(s.max_virtual_revenue <= 1.0 + 1e-12);
        let cap = 200.0 * (1.0f64 + 1.0 / 6.0).ln();
        assert!(s
            .log_weights
            .iter()
            .all(|&l| (0.0..=cap + 1e-9).contains(&l)));
    }

    #[test]
    fn phi_examples() {
        let p = guarantee_parameters(1.0).unwrap();
        let phi = phi_loss(&p, 500, 2.0, 1.0, 0.01).unwrap();
        let expected = 11.0 * 4.0 * 500.0 * 2.0 * 6.0 * (200f64.ln() / (4.0f64 / 3.0).ln()).ln();
        assert!((phi - expected).abs() < 1e-9 * expected);
        let doubled = phi_loss(&p, 1000, 2.0, 1.0, 0.01).unwrap();
        assert!((doubled - 2.0 * phi).abs() < 1e-9 * phi);
        let full = PolicyParams::new(1.0 / 3.0, 1.0 / 6.0, 1.0).unwrap();
        assert_eq!(phi_loss(&full, 500, 2.0, 1.0, 0.01).unwrap(), 0.0);
        let wide = PolicyParams::new(1000.0, 0.1, 0.1).unwrap();
        assert!(phi_loss(&wide, 500, 2.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn phi_decreases_in_each_parameter() {
        let base = PolicyParams::new(0.3, 0.2, 0.1).unwrap();
        let phi = |p: PolicyParams| phi_loss(&p, 500, 2.0, 1.0, 0.01).unwrap();
        let b = phi(base);
        assert!(phi(PolicyParams { gamma: 0.2, ..base }) < b);
        assert!(phi(PolicyParams { delta: 0.4, ..base }) < b);
        assert!(
            phi(PolicyParams {
                epsilon: 0.6,
                ..base
            }) < b
        );
    }

    #[test]
    fn linear_demand_monopoly_price() {
        let cap = 2.0;
        let g = PriceGrid::new(0.01, 1.0 / 3.0, cap).unwrap();
        let opt =
            ex_post_optimal_revenue(&g, DEFAULT_REFINEMENT, |p| Ok(p * (1.0 - p / cap).max(0.0)))
                .unwrap();
        // The interval around Ē/2 has width p(k+1) - p(k); one refinement step
        // is that width over 21.
        let k = g.candidates().iter().rposition(|&p| p <= 1.0).unwrap();
        let step = (g.candidates()[k + 1] - g.candidates()[k]) / 21.0;
        assert!((opt.price - 1.0).abs() <= step);
        assert!(opt.rounding_bound_holds(g.epsilon()));
        assert_eq!(opt.candidate_revenues.len(), g.len());
        assert_eq!(opt.prices_evaluated, 1 + 18 + 19 * 20);
    }

    #[test]
    fn flat_zero_revenue_is_fine() {
        let opt = ex_post_optimal_revenue(&grid(), 3, |_| Ok(0.0)).unwrap();
        assert_eq!(opt.revenue, 0.0);
        assert!(opt.rounding_bound_holds(1.0 / 3.0));
    }

    #[test]
    fn lower_bound_formula() {
        let p = guarantee_parameters(1.0).unwrap();
        let v = revenue_lower_bound(&p, 100.0, 5.0);
        let expected = (11.0 / 12.0) * (11.0 / 12.0) / (4.0 / 3.0) * 100.0 - 5.0;
        assert!((v - expected).abs() < 1e-12);
    }
}
