//! Monte Carlo wall-clock simulation of the draft-verify loop.
//!
//! Each round costs `gamma * t_draft + t_target` plus serving overheads and
//! emits `accepted + 1` tokens. The baseline emits one token per target pass.
//! With zero overheads and a constant acceptance probability the measured
//! speedup converges to the closed-form model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acceptance::{sample_alpha, AcceptanceTrace};
use crate::cost_model::{self, AcceptanceRate, CostCoefficient, DraftLength, Speedup};
use crate::error::{Error, Result};
use crate::toy_models::{AcceptanceRule, MarkovModel, SpeculativeLoop};

/// How drafter invocations are counted for the per-call overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallGranularity {
    /// One call per drafted token plus one target call: `gamma + 1` per round.
    #[default]
    PerToken,
    /// One drafter call looping internally plus one target call.
    PerRound,
}

/// Serving-layer costs in milliseconds. All zero is an ideal monolithic
/// pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServingOverheads {
    pub per_module_call: f64,
    pub per_round_fixed: f64,
    #[serde(default)]
    pub granularity: CallGranularity,
}

impl ServingOverheads {
    pub const NONE: ServingOverheads = ServingOverheads {
        per_module_call: 0.0,
        per_round_fixed: 0.0,
        granularity: CallGranularity::PerToken,
    };

    pub fn new(per_module_call: f64, per_round_fixed: f64) -> Result<Self> {
        for (what, v) in [("per_module_call", per_module_call), ("per_round_fixed", per_round_fixed)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::OutOfDomain {
                    what: if what == "per_module_call" {
                        "per-module-call overhead"
                    } else {
                        "per-round overhead"
                    },
                    value: v,
                    range: "[0, inf)",
                });
            }
        }
        Ok(Self {
            per_module_call,
            per_round_fixed,
            granularity: CallGranularity::PerToken,
        })
    }

    pub fn with_granularity(mut self, granularity: CallGranularity) -> Self {
        self.granularity = granularity;
        self
    }

    fn calls_per_round(&self, gamma: u32) -> f64 {
        match (self.granularity, gamma) {
            (_, 0) => 1.0,
            (CallGranularity::PerToken, g) => f64::from(g) + 1.0,
            (CallGranularity::PerRound, _) => 2.0,
        }
    }
}

/// Where per-round acceptance comes from.
#[derive(Debug, Clone)]
pub enum AlphaSource {
    /// Independent per-token coin flips with a fixed probability.
    Constant(AcceptanceRate),
    /// Round `r` uses the per-sample alpha of `traces[r % len]`.
    Replay(Vec<AcceptanceTrace>),
    /// Token-level loop over a Markov drafter/target pair, starting at token 0.
    ToyModels {
        draft: MarkovModel,
        target: MarkovModel,
        rule: AcceptanceRule,
    },
}

/// When a simulation stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Stop once at least this many tokens were generated.
    Tokens(u64),
    /// Run exactly this many rounds.
    Rounds(u64),
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub alpha_source: AlphaSource,
    pub gamma: DraftLength,
    pub t_draft: f64,
    pub t_target: f64,
    pub overheads: ServingOverheads,
    pub budget: Budget,
    pub seed: u64,
}

impl SimScenario {
    pub fn constant(alpha: AcceptanceRate, gamma: DraftLength, c: CostCoefficient, rounds: u64, seed: u64) -> Self {
        Self {
            alpha_source: AlphaSource::Constant(alpha),
            gamma,
            t_draft: c.value(),
            t_target: 1.0,
            overheads: ServingOverheads::NONE,
            budget: Budget::Rounds(rounds),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for (what, v) in [("draft latency", self.t_draft), ("target latency", self.t_target)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::OutOfDomain {
                    what,
                    value: v,
                    range: "(0, inf)",
                });
            }
        }
        ServingOverheads::new(self.overheads.per_module_call, self.overheads.per_round_fixed)?;
        if let AlphaSource::Replay(traces) = &self.alpha_source {
            if traces.is_empty() {
                return Err(Error::Input("replay source has no traces".into()));
            }
        }
        match self.budget {
            Budget::Tokens(0) | Budget::Rounds(0) => Err(Error::Input("simulation budget must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Wall-clock cost of one round.
    pub fn round_time(&self) -> f64 {
        let g = self.gamma.value();
        f64::from(g) * self.t_draft
            + self.t_target
            + self.overheads.calls_per_round(g) * self.overheads.per_module_call
            + self.overheads.per_round_fixed
    }

    /// Non-speculative cost of one token.
    pub fn baseline_token_time(&self) -> f64 {
        self.t_target + self.overheads.per_module_call
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub total_time: f64,
    pub tokens: u64,
    pub rounds: u64,
    pub measured_speedup: f64,
    /// Accepted over verified drafts; `None` with `gamma == 0`.
    pub empirical_alpha: Option<f64>,
    pub mean_tokens_per_round: f64,
    /// Standard error of `mean_tokens_per_round`; `None` below two rounds.
    pub tokens_per_round_stderr: Option<f64>,
    /// Standard error of `measured_speedup`; `None` below two rounds.
    pub speedup_stderr: Option<f64>,
}

/// Simulates one scenario. Deterministic in `scenario.seed`.
pub fn simulate(scenario: &SimScenario) -> Result<SimResult> {
    scenario.validate()?;
    let gamma = scenario.gamma.value();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut toy = match &scenario.alpha_source {
        AlphaSource::ToyModels { draft, target, rule } => {
            Some(SpeculativeLoop::new(draft, target, *rule, scenario.gamma, 0)?)
        }
        _ => None,
    };
    let replay: Vec<f64> = match &scenario.alpha_source {
        AlphaSource::Replay(traces) => traces.iter().map(|t| sample_alpha(t).value()).collect(),
        _ => Vec::new(),
    };

    let mut rounds = 0u64;
    let mut tokens = 0u64;
    let mut accepted_total = 0u64;
    let mut verified_total = 0u64;
    let mut sum_sq = 0.0f64;
    loop {
        let done = match scenario.budget {
            Budget::Tokens(n) => tokens >= n,
            Budget::Rounds(n) => rounds >= n,
        };
        if done {
            break;
        }
        let (accepted, verified) = match &scenario.alpha_source {
            AlphaSource::Constant(alpha) => coin_flip_round(alpha.value(), gamma, &mut rng),
            AlphaSource::Replay(_) => {
                let alpha = replay[(rounds % replay.len() as u64) as usize];
                coin_flip_round(alpha, gamma, &mut rng)
            }
            AlphaSource::ToyModels { .. } => {
                let out = toy.as_mut().expect("toy loop").round(&mut rng, |_| {});
                (out.accepted, out.verified)
            }
        };
        let emitted = u64::from(accepted) + 1;
        rounds += 1;
        tokens += emitted;
        accepted_total += u64::from(accepted);
        verified_total += u64::from(verified);
        sum_sq += (emitted * emitted) as f64;
    }

    let round_time = scenario.round_time();
    let total_time = rounds as f64 * round_time;
    let scale = scenario.baseline_token_time() / round_time;
    let n = rounds as f64;
    let mean_tokens = tokens as f64 / n;
    let tokens_stderr = (rounds >= 2).then(|| {
        let var = ((sum_sq - n * mean_tokens * mean_tokens) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    });
    Ok(SimResult {
        total_time,
        tokens,
        rounds,
        measured_speedup: tokens as f64 * scenario.baseline_token_time() / total_time,
        empirical_alpha: (verified_total > 0).then(|| accepted_total as f64 / verified_total as f64),
        mean_tokens_per_round: mean_tokens,
        tokens_per_round_stderr: tokens_stderr,
        speedup_stderr: tokens_stderr.map(|se| se * scale),
    })
}

/// Accepted-prefix length: flips until the first failure or `gamma`
/// successes. Returns `(accepted, verified)`.
fn coin_flip_round(alpha: f64, gamma: u32, rng: &mut impl Rng) -> (u32, u32) {
    let mut accepted = 0;
    while accepted < gamma {
        if rng.gen::<f64>() < alpha {
            accepted += 1;
        } else {
            return (accepted, accepted + 1);
        }
    }
    (accepted, accepted)
}

/// Closed-form speedup including serving overheads, for a constant alpha.
pub fn predicted_speedup_with_overheads(
    alpha: AcceptanceRate,
    gamma: DraftLength,
    t_draft: f64,
    t_target: f64,
    overheads: &ServingOverheads,
) -> f64 {
    let scenario = SimScenario {
        alpha_source: AlphaSource::Constant(alpha),
        gamma,
        t_draft,
        t_target,
        overheads: *overheads,
        budget: Budget::Rounds(1),
        seed: 0,
    };
    cost_model::expected_tokens_per_round(alpha, gamma) * scenario.baseline_token_time() / scenario.round_time()
}

/// Per-module-call overhead at which a loop running at `measured_alpha`
/// delivers exactly the closed-form speedup predicted at `predicted_alpha`
/// (with no overhead). `None` when no non-negative overhead does that.
pub fn overhead_for_alpha_shift(
    predicted_alpha: AcceptanceRate,
    measured_alpha: AcceptanceRate,
    gamma: DraftLength,
    t_draft: f64,
    t_target: f64,
    overheads: &ServingOverheads,
) -> Option<f64> {
    let g = gamma.value();
    if g == 0 {
        return None;
    }
    let c = CostCoefficient::from_latencies(t_draft, t_target).ok()?;
    let goal = cost_model::speedup(predicted_alpha, gamma, c).value();
    let tokens = cost_model::expected_tokens_per_round(measured_alpha, gamma);
    let calls = overheads.calls_per_round(g);
    // tokens * (t_target + o) = goal * (g t_draft + t_target + calls o + fixed)
    let numerator = tokens * t_target - goal * (f64::from(g) * t_draft + t_target + overheads.per_round_fixed);
    let denominator = goal * calls - tokens;
    let o = numerator / denominator;
    (o.is_finite() && o >= 0.0).then_some(o)
}

/// One (alpha, gamma) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub gamma: u32,
    pub c: f64,
    pub predicted: f64,
    pub measured: f64,
    pub stderr: Option<f64>,
    pub seed: u64,
}

/// Predicted versus simulated speedup over an alpha x gamma grid.
///
/// Cell `i` (alpha-major order) is simulated with seed `seed + i`, so the
/// grid is independent of evaluation order.
pub fn sweep(
    alphas: &[AcceptanceRate],
    gammas: &[DraftLength],
    c: CostCoefficient,
    overheads: &ServingOverheads,
    rounds: u64,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    if alphas.is_empty() || gammas.is_empty() {
        return Err(Error::Input("sweep needs at least one alpha and one gamma".into()));
    }
    let cells: Vec<(usize, AcceptanceRate, DraftLength)> = alphas
        .iter()
        .flat_map(|&a| gammas.iter().map(move |&g| (a, g)))
        .enumerate()
        .map(|(i, (a, g))| (i, a, g))
        .collect();
    cells
        .par_iter()
        .map(|&(i, alpha, gamma)| {
            let cell_seed = seed.wrapping_add(i as u64);
            let scenario = SimScenario {
                alpha_source: AlphaSource::Constant(alpha),
                gamma,
                t_draft: c.value(),
                t_target: 1.0,
                overheads: *overheads,
                budget: Budget::Rounds(rounds),
                seed: cell_seed,
            };
            let result = simulate(&scenario)?;
            Ok(SweepRecord {
                alpha: alpha.value(),
                gamma: gamma.value(),
                c: c.value(),
                predicted: cost_model::speedup(alpha, gamma, c).value(),
                measured: result.measured_speedup,
                stderr: result.speedup_stderr,
                seed: cell_seed,
            })
        })
        .collect()
}

impl SweepRecord {
    pub fn predicted_speedup(&self) -> Speedup {
        Speedup::new(self.predicted).expect("positive by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(v: f64) -> AcceptanceRate {
        AcceptanceRate::new(v).unwrap()
    }
    fn c(v: f64) -> CostCoefficient {
        CostCoefficient::new(v).unwrap()
    }

    #[test]
    fn zero_gamma_is_exactly_baseline() {
        let r = simulate(&SimScenario::constant(a(0.7), DraftLength(0), c(0.3), 1000, 1)).unwrap();
        assert_eq!(r.measured_speedup, 1.0);
        assert_eq!(r.tokens, 1000);
        assert_eq!(r.empirical_alpha, None);
    }

    #[test]
    fn full_acceptance_is_deterministic() {
        let r = simulate(&SimScenario::constant(a(1.0), DraftLength(5), c(0.2), 500, 1)).unwrap();
        assert_eq!(r.measured_speedup, 3.0);
        assert_eq!(r.tokens, 3000);
        assert_eq!(r.tokens_per_round_stderr, Some(0.0));
    }

    #[test]
    fn zero_acceptance_matches_closed_form() {
        let r = simulate(&SimScenario::constant(a(0.0), DraftLength(1), c(0.41), 100, 1)).unwrap();
        assert!((r.measured_speedup - 1.0 / 1.41).abs() < 1e-12);
        assert_eq!(r.empirical_alpha, Some(0.0));
    }

    #[test]
    fn back_solved_table_row_converges() {
        let r = simulate(&SimScenario::constant(a(0.9), DraftLength(5), c(0.3578), 100_000, 42)).unwrap();
        assert!((r.measured_speedup - 1.68).abs() / 1.68 < 0.02, "{}", r.measured_speedup);
    }

    #[test]
    fn token_budget_stops_at_or_past_target() {
        let mut s = SimScenario::constant(a(0.8), DraftLength(4), c(0.2), 1, 3);
        s.budget = Budget::Tokens(1001);
        let r = simulate(&s).unwrap();
        assert!(r.tokens >= 1001 && r.tokens < 1001 + 5);
    }

    #[test]
    fn single_round_has_no_stderr() {
        let r = simulate(&SimScenario::constant(a(0.5), DraftLength(3), c(0.2), 1, 3)).unwrap();
        assert_eq!(r.speedup_stderr, None);
    }

    #[test]
    fn overhead_lowers_speedup() {
        let base = SimScenario::constant(a(0.8), DraftLength(3), c(0.3), 20_000, 9);
        let free = simulate(&base).unwrap();
        let mut costly = base.clone();
        costly.overheads = ServingOverheads::new(0.05, 0.0).unwrap();
        let slow = simulate(&costly).unwrap();
        // Same seed, same acceptance stream; only the clock differs.
        assert_eq!(free.tokens, slow.tokens);
        assert!(slow.measured_speedup < free.measured_speedup);
    }

    #[test]
    fn per_round_granularity_charges_two_calls() {
        let o = ServingOverheads::new(1.0, 0.0).unwrap().with_granularity(CallGranularity::PerRound);
        assert_eq!(o.calls_per_round(5), 2.0);
        assert_eq!(o.calls_per_round(0), 1.0);
        assert_eq!(ServingOverheads::new(1.0, 0.0).unwrap().calls_per_round(5), 6.0);
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let mut s = SimScenario::constant(a(0.8), DraftLength(3), c(0.3), 10, 1);
        s.t_target = 0.0;
        assert!(simulate(&s).is_err());
        let mut s = SimScenario::constant(a(0.8), DraftLength(3), c(0.3), 10, 1);
        s.overheads.per_module_call = -1.0;
        assert!(simulate(&s).is_err());
        let s = SimScenario::constant(a(0.8), DraftLength(3), c(0.3), 0, 1);
        assert!(simulate(&s).is_err());
        assert!(ServingOverheads::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn replay_uses_trace_alphas() {
        use crate::acceptance::QuantPair;
        let pair: QuantPair = "fp16/fp16".parse().unwrap();
        let traces = vec![
            AcceptanceTrace::new("t", "a", pair.clone(), 10, 10).unwrap(),
            AcceptanceTrace::new("t", "b", pair, 10, 0).unwrap(),
        ];
        let mut s = SimScenario::constant(a(0.5), DraftLength(2), c(0.5), 100, 1);
        s.alpha_source = AlphaSource::Replay(traces);
        let r = simulate(&s).unwrap();
        // Alternating rounds of 3 and 1 tokens.
        assert_eq!(r.tokens, 50 * 3 + 50);
        assert_eq!(r.empirical_alpha, Some(100.0 / 150.0));
    }

    #[test]
    fn toy_source_runs_the_token_loop() {
        let m = MarkovModel::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let mut s = SimScenario::constant(a(0.5), DraftLength(3), c(0.25), 1000, 1);
        s.alpha_source = AlphaSource::ToyModels {
            draft: m.clone(),
            target: m,
            rule: AcceptanceRule::StochasticRejection,
        };
        let r = simulate(&s).unwrap();
        assert_eq!(r.empirical_alpha, Some(1.0));
        assert!((r.measured_speedup - 4.0 / 1.75).abs() < 1e-12);
    }

    #[test]
    fn overhead_fit_reproduces_prediction() {
        let (p, m, g) = (a(0.90), a(0.94), DraftLength(5));
        let o = overhead_for_alpha_shift(p, m, g, 0.3578, 1.0, &ServingOverheads::NONE).unwrap();
        assert!(o > 0.0);
        let with = ServingOverheads::new(o, 0.0).unwrap();
        let shifted = predicted_speedup_with_overheads(m, g, 0.3578, 1.0, &with);
        let goal = cost_model::speedup(p, g, c(0.3578)).value();
        assert!((shifted - goal).abs() < 1e-12);
        assert!(overhead_for_alpha_shift(m, p, g, 0.3578, 1.0, &ServingOverheads::NONE).is_none());
    }

    #[test]
    fn sweep_is_order_independent_and_sized() {
        let alphas: Vec<_> = [0.2, 0.6].iter().map(|&x| a(x)).collect();
        let gammas = [DraftLength(1), DraftLength(3)];
        let s1 = sweep(&alphas, &gammas, c(0.1), &ServingOverheads::NONE, 500, 5).unwrap();
        let s2 = sweep(&alphas, &gammas, c(0.1), &ServingOverheads::NONE, 500, 5).unwrap();
        assert_eq!(s1.len(), 4);
        assert_eq!(s1, s2);
        assert_eq!(s1[1].alpha, 0.2);
        assert_eq!(s1[1].gamma, 3);
        assert!(sweep(&[], &gammas, c(0.1), &ServingOverheads::NONE, 10, 5).is_err());
    }
}
