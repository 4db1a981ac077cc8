//! Closed-form speedup model for draft-then-verify decoding.
//!
//! One round drafts `gamma` tokens sequentially, then runs a single target
//! pass over them. With per-token acceptance probability `alpha` and a
//! drafter/target latency ratio `c`, the speedup per generated token over
//! plain target decoding is
//!
//! ```text
//! S(alpha, gamma, c) = (1 - alpha^(gamma+1)) / ((1 - alpha) * (gamma*c + 1))
//! ```
//!
//! The numerator over `1 - alpha` is the expected number of tokens emitted per
//! round; the denominator is the round cost in target-pass units. Any speedup
//! above 1 requires `c < alpha`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound for the draft-length scan.
pub const DEFAULT_GAMMA_MAX: DraftLength = DraftLength(16);

/// Probability that a drafted token is accepted by the target.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AcceptanceRate(f64);

impl AcceptanceRate {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::OutOfDomain {
                what: "acceptance rate",
                value,
                range: "[0, 1]",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for AcceptanceRate {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<AcceptanceRate> for f64 {
    fn from(a: AcceptanceRate) -> f64 {
        a.0
    }
}

impl fmt::Display for AcceptanceRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Latency of one drafter forward pass divided by one target forward pass.
///
/// Values above 1 are representable; they describe a drafter slower than its
/// target.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CostCoefficient(f64);

impl CostCoefficient {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::OutOfDomain {
                what: "cost coefficient",
                value,
                range: "(0, inf)",
            })
        }
    }

    /// `c = t_draft / t_target`.
    pub fn from_latencies(t_draft_ms: f64, t_target_ms: f64) -> Result<Self> {
        if t_target_ms.is_nan() || t_target_ms <= 0.0 {
            return Err(Error::OutOfDomain {
                what: "target latency",
                value: t_target_ms,
                range: "(0, inf)",
            });
        }
        Self::new(t_draft_ms / t_target_ms)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CostCoefficient {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CostCoefficient> for f64 {
    fn from(c: CostCoefficient) -> f64 {
        c.0
    }
}

impl fmt::Display for CostCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Tokens drafted per speculation round. Zero disables speculation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DraftLength(pub u32);

impl DraftLength {
    pub const DISABLED: DraftLength = DraftLength(0);

    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for DraftLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Ratio of non-speculative to speculative time per generated token.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Speedup(f64);

impl Speedup {
    pub const NEUTRAL: Speedup = Speedup(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::OutOfDomain {
                what: "speedup",
                value,
                range: "(0, inf)",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Speedup {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Speedup> for f64 {
    fn from(s: Speedup) -> f64 {
        s.0
    }
}

impl fmt::Display for Speedup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Expected tokens emitted per draft-verify round: `sum_{k=0..=gamma} alpha^k`.
///
/// Evaluated as `expm1((gamma+1) ln alpha) / (alpha - 1)`, which keeps full
/// relative precision as alpha approaches 1.
pub fn expected_tokens_per_round(alpha: AcceptanceRate, gamma: DraftLength) -> f64 {
    let a = alpha.value();
    let n = f64::from(gamma.value()) + 1.0;
    if gamma.value() == 0 || a == 0.0 {
        return 1.0;
    }
    if a == 1.0 {
        return n;
    }
    (n * a.ln()).exp_m1() / (a - 1.0)
}

pub fn speedup(alpha: AcceptanceRate, gamma: DraftLength, c: CostCoefficient) -> Speedup {
    if gamma.value() == 0 {
        return Speedup::NEUTRAL;
    }
    let round_cost = f64::from(gamma.value()) * c.value() + 1.0;
    Speedup(expected_tokens_per_round(alpha, gamma) / round_cost)
}

/// Speculation can only pay off when the drafter is cheaper than the
/// acceptance rate: `c < alpha`.
pub fn is_feasible(alpha: AcceptanceRate, c: CostCoefficient) -> bool {
    c.value() < alpha.value()
}

/// Best draft length in `[0, gamma_max]` and its speedup.
///
/// Ties go to the smaller draft length. Infeasible inputs return `(0, 1)`.
pub fn optimal_gamma(
    alpha: AcceptanceRate,
    c: CostCoefficient,
    gamma_max: DraftLength,
) -> (DraftLength, Speedup) {
    if !is_feasible(alpha, c) {
        return (DraftLength::DISABLED, Speedup::NEUTRAL);
    }
    (1..=gamma_max.value())
        .map(DraftLength)
        .fold((DraftLength::DISABLED, Speedup::NEUTRAL), |best, g| {
            let s = speedup(alpha, g, c);
            if s.value() > best.1.value() {
                (g, s)
            } else {
                best
            }
        })
}

/// Inverts the speedup model for `c`: the cost coefficient at which
/// `speedup(alpha, gamma, c) == target`.
///
/// Returns `None` for `gamma == 0` (speedup does not depend on `c`) or when the
/// solution is not a positive coefficient.
pub fn solve_cost_coefficient(
    alpha: AcceptanceRate,
    gamma: DraftLength,
    target: Speedup,
) -> Option<CostCoefficient> {
    if gamma.value() == 0 {
        return None;
    }
    let tokens = expected_tokens_per_round(alpha, gamma);
    let c = (tokens / target.value() - 1.0) / f64::from(gamma.value());
    CostCoefficient::new(c).ok()
}
