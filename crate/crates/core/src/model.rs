//! Domain types and the per-slot payoff and usage primitives.
//!
//! A mobile user (MU) spends a fraction `x` of each slot on a content service.
//! The slot's computation `x * c` is split between local execution, which
//! costs `beta * e((x - z) * c)`, and edge execution of the fraction `z`, which
//! costs `price * z * c` and migrates `r * z` of raw data over the data plan.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Alpha-fair normalized utility `u(x) = x^(1-a) / (1-a)` with `a` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityFamily {
    exponent: f64,
}

impl UtilityFamily {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(invalid(
                "utility exponent",
                format!("{exponent} not in (0, 1)"),
            ));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `u(0) = 0` by continuity.
    pub fn eval(&self, x: f64) -> f64 {
        if self.exponent == 0.5 {
            return 2.0 * x.sqrt();
        }
        let k = 1.0 - self.exponent;
        x.powf(k) / k
    }

    /// `u'(x) = x^(-a)`; `+inf` at zero.
    pub fn marginal(&self, x: f64) -> f64 {
        if self.exponent == 0.5 {
            return 1.0 / x.sqrt();
        }
        x.powf(-self.exponent)
    }

    /// `u'^(-1)(y) = y^(-1/a)`; `+inf` at zero and `0` at `+inf`.
    pub fn inverse_marginal(&self, y: f64) -> f64 {
        if self.exponent == 0.5 {
            return 1.0 / (y * y);
        }
        y.powf(-1.0 / self.exponent)
    }
}

/// Power cost `e(s) = s^(1+b) / (1+b)` with `b >= 1`; `b = 1` is the quadratic case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFamily {
    exponent: f64,
}

impl CostFamily {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(invalid("cost exponent", format!("{exponent} must be >= 1")));
        }
        Ok(Self { exponent })
    }

    pub fn quadratic() -> Self {
        Self { exponent: 1.0 }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = 1.0 + self.exponent;
        s.powf(k) / k
    }

    pub fn marginal(&self, s: f64) -> f64 {
        if self.exponent == 1.0 {
            s
        } else {
            s.powf(self.exponent)
        }
    }

    pub fn inverse_marginal(&self, y: f64) -> f64 {
        if self.exponent == 1.0 {
            y
        } else {
            y.powf(1.0 / self.exponent)
        }
    }
}

/// One slot of content-service demand, the MU's preference scalars and the
/// edge price posted to this MU for the slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRealization {
    /// Content-delivery data volume for a full slot (GB).
    pub data: f64,
    /// Raw input data that must be migrated to offload the full slot (GB).
    pub raw: f64,
    /// Computing amount for a full slot (normalized cycle units).
    pub compute: f64,
    /// Valuation scalar θ.
    pub valuation: f64,
    /// Local-execution sensitivity scalar β.
    pub sensitivity: f64,
    /// Edge unit price ($ per cycle unit).
    pub price: f64,
}

/// Upper bound on the valuation and sensitivity scalars.
pub const PREFERENCE_MAX: f64 = 2.0;

impl SlotRealization {
    pub fn new(
        data: f64,
        raw: f64,
        compute: f64,
        valuation: f64,
        sensitivity: f64,
        price: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("data", data),
            ("raw", raw),
            ("compute", compute),
            ("price", price),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        for (name, v) in [("valuation", valuation), ("sensitivity", sensitivity)] {
            if !(0.0..=PREFERENCE_MAX).contains(&v) {
                return Err(invalid(name, format!("{v} not in [0, {PREFERENCE_MAX}]")));
            }
        }
        Ok(Self {
            data,
            raw,
            compute,
            valuation,
            sensitivity,
            price,
        })
    }

    pub fn with_price(self, price: f64) -> Self {
        Self { price, ..self }
    }
}

/// Support maxima of the per-slot demand draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supports {
    /// Maximal content-delivery volume `d_max` (GB).
    pub data: f64,
    /// Maximal raw-data volume `r_max` (GB).
    pub raw: f64,
    /// Maximal computing amount `c_max`.
    pub compute: f64,
}

impl Supports {
    pub fn new(data: f64, raw: f64, compute: f64) -> Result<Self> {
        for (name, v) in [
            ("data support", data),
            ("raw support", raw),
            ("compute support", compute),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(Self { data, raw, compute })
    }
}

/// Three-part tariff: monthly cap, subscription fee and per-GB overage fee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPlan {
    /// Monthly data cap (GB).
    pub cap: f64,
    /// Monthly subscription fee ($).
    pub subscription_fee: f64,
    /// Fee per GB above the cap ($/GB).
    pub overage_fee: f64,
}

impl DataPlan {
    pub fn new(cap: f64, subscription_fee: f64, overage_fee: f64) -> Result<Self> {
        if !(cap >= 0.0 && cap.is_finite()) {
            return Err(invalid("cap", format!("{cap} must be >= 0")));
        }
        if !(subscription_fee >= 0.0 && subscription_fee.is_finite()) {
            return Err(invalid(
                "subscription_fee",
                format!("{subscription_fee} must be >= 0"),
            ));
        }
        if !(overage_fee > 0.0 && overage_fee.is_finite()) {
            return Err(invalid("overage_fee", format!("{overage_fee} must be > 0")));
        }
        Ok(Self {
            cap,
            subscription_fee,
            overage_fee,
        })
    }

    /// Overage charge for a month's total usage.
    pub fn overage_charge(&self, usage: f64) -> f64 {
        self.overage_fee * (usage - self.cap).max(0.0)
    }

    /// Total amount billed by the ISP for a month's usage.
    pub fn bill(&self, usage: f64) -> f64 {
        self.subscription_fee + self.overage_charge(usage)
    }
}

/// Per-slot acquisition fraction `x` and executing decision `z`, with
/// `0 <= z <= x <= 1`. The offloading fraction is `y = z / x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    x: f64,
    z: f64,
}

impl Decision {
    pub const IDLE: Decision = Decision { x: 0.0, z: 0.0 };

    pub fn new(x: f64, z: f64) -> Result<Self> {
        if !(0.0 <= z && z <= x && x <= 1.0) {
            return Err(Error::InvalidDecision { x, z });
        }
        Ok(Self { x, z })
    }

    /// Builds a decision from values the caller has already placed in the
    /// feasible triangle up to round-off; clamps the residual noise.
    pub(crate) fn clamped(x: f64, z: f64) -> Self {
        let x = x.clamp(0.0, 1.0);
        let z = z.clamp(0.0, x);
        Self { x, z }
    }

    pub fn acquisition(&self) -> f64 {
        self.x
    }

    pub fn executing(&self) -> f64 {
        self.z
    }

    pub fn offload_fraction(&self) -> f64 {
        if self.x > 0.0 {
            self.z / self.x
        } else {
            0.0
        }
    }
}

/// `f(x, z) = θ u(x) - β e((x - z) c) - p z c`.
pub fn virtual_payoff(
    slot: &SlotRealization,
    dec: &Decision,
    u: &UtilityFamily,
    e: &CostFamily,
) -> f64 {
    let local = (dec.x - dec.z) * slot.compute;
    slot.valuation * u.eval(dec.x)
        - slot.sensitivity * e.eval(local)
        - slot.price * dec.z * slot.compute
}

/// `h(x, z) = d x + r z`.
pub fn slot_data_usage(slot: &SlotRealization, dec: &Decision) -> f64 {
    slot.data * dec.x + slot.raw * dec.z
}

/// Edge payment `p c z` for one slot.
pub fn edge_payment(slot: &SlotRealization, dec: &Decision) -> f64 {
    slot.price * slot.compute * dec.z
}

/// Monthly payoff: total virtual payoff minus overage charge and subscription.
pub fn monthly_payoff(
    slots: &[SlotRealization],
    decs: &[Decision],
    plan: &DataPlan,
    u: &UtilityFamily,
    e: &CostFamily,
) -> Result<f64> {
    if slots.len() != decs.len() {
        return Err(Error::LengthMismatch {
            slots: slots.len(),
            decisions: decs.len(),
        });
    }
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    let mut value = 0.0;
    let mut usage = 0.0;
    for (slot, dec) in slots.iter().zip(decs) {
        value += virtual_payoff(slot, dec, u, e);
        usage += slot_data_usage(slot, dec);
    }
    Ok(value - plan.bill(usage))
}

/// Price cap `max_t β_t e'(c_max)`: a price at or above it never attracts
/// any offloading.
pub fn price_cap(slots: &[SlotRealization], compute_max: f64, e: &CostFamily) -> Result<f64> {
    if slots.is_empty() {
        return Err(Error::EmptySlots);
    }
    let marginal = e.marginal(compute_max);
    Ok(slots
        .iter()
        .map(|s| s.sensitivity * marginal)
        .fold(0.0, f64::max))
}
