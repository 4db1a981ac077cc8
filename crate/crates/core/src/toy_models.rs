//! First-order Markov "language models" over a tiny vocabulary.
//!
//! A drafter/target pair of these is small enough that acceptance rates can be
//! computed exactly, while still running the full token-level draft, verify,
//! reject/resample and bonus-token loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost_model::{AcceptanceRate, DraftLength};
use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-9;
const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITERATIONS: usize = 1_000_000;

pub type Token = u32;

/// Row-stochastic next-token matrix: `rows[prev][next]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    rows: Vec<Vec<f64>>,
}

impl MarkovModel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let v = rows.len();
        if v == 0 {
            return Err(Error::InvalidModel("empty vocabulary".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != v {
                return Err(Error::InvalidModel(format!(
                    "row {i} has {} entries, expected {v}",
                    row.len()
                )));
            }
            if let Some(&x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::InvalidModel(format!("row {i} has invalid entry {x}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { rows })
    }

    /// Every row equal to `dist` (a context-free model).
    pub fn stationary(dist: Vec<f64>) -> Result<Self> {
        Self::new(vec![dist.clone(); dist.len()])
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, state: Token) -> &[f64] {
        &self.rows[state as usize]
    }

    /// Most likely next token; ties go to the lowest index.
    pub fn argmax(&self, state: Token) -> Token {
        argmax(self.row(state))
    }

    /// Deterministic chain that always moves to the argmax token.
    pub fn greedy_chain(&self) -> MarkovModel {
        let v = self.vocab_size();
        let rows = (0..v as Token)
            .map(|s| {
                let mut row = vec![0.0; v];
                row[self.argmax(s) as usize] = 1.0;
                row
            })
            .collect();
        MarkovModel { rows }
    }

    pub fn sample_next(&self, state: Token, rng: &mut impl Rng) -> Token {
        sample(self.row(state), rng)
    }
}

fn argmax(row: &[f64]) -> Token {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best as Token
}

/// Inverse-CDF draw from a (possibly unnormalized) non-negative weight vector.
fn sample(weights: &[f64], rng: &mut impl Rng) -> Token {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i as Token;
            }
        }
    }
    last_positive as Token
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    /// Drafter and target both decode greedily; a draft survives iff it equals
    /// the target's argmax.
    GreedyMatch,
    /// Accept `x` with probability `min(1, target(x) / draft(x))`, resample
    /// from `norm(max(0, target - draft))` on rejection.
    StochasticRejection,
}

fn check_pair(draft: &MarkovModel, target: &MarkovModel) -> Result<()> {
    if draft.vocab_size() != target.vocab_size() {
        return Err(Error::VocabMismatch {
            draft: draft.vocab_size(),
            target: target.vocab_size(),
        });
    }
    Ok(())
}

fn check_state(model: &MarkovModel, state: Token) -> Result<()> {
    if state as usize >= model.vocab_size() {
        return Err(Error::InvalidModel(format!(
            "state {state} outside vocabulary of {}",
            model.vocab_size()
        )));
    }
    Ok(())
}

fn state_alpha(draft: &MarkovModel, target: &MarkovModel, state: Token, rule: AcceptanceRule) -> f64 {
    match rule {
        AcceptanceRule::StochasticRejection => draft
            .row(state)
            .iter()
            .zip(target.row(state))
            .map(|(q, p)| q.min(*p))
            .sum::<f64>()
            .min(1.0),
        AcceptanceRule::GreedyMatch => {
            if draft.argmax(state) == target.argmax(state) {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Probability that a draft proposed from `state` is accepted.
pub fn exact_state_alpha(
    draft: &MarkovModel,
    target: &MarkovModel,
    state: Token,
    rule: AcceptanceRule,
) -> Result<AcceptanceRate> {
    check_pair(draft, target)?;
    check_state(target, state)?;
    AcceptanceRate::new(state_alpha(draft, target, state, rule))
}

/// Long-run state distribution of `chain` started at `initial_state`.
///
/// Power iteration on the lazy chain `(I + P) / 2`, which has the same
/// invariant distributions as `P` but is aperiodic, so periodic chains
/// converge to their time-averaged occupancy.
pub fn long_run_distribution(chain: &MarkovModel, initial_state: Token) -> Result<Vec<f64>> {
    check_state(chain, initial_state)?;
    let v = chain.vocab_size();
    let mut pi = vec![0.0; v];
    pi[initial_state as usize] = 1.0;
    let mut next = vec![0.0; v];
    for _ in 0..POWER_MAX_ITERATIONS {
        next.iter_mut().zip(&pi).for_each(|(n, p)| *n = 0.5 * p);
        for (s, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (n, &p) in next.iter_mut().zip(&chain.rows[s]) {
                *n += 0.5 * mass * p;
            }
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if delta < POWER_TOLERANCE {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERATIONS,
    })
}

/// Per-state acceptance weighted by the target's long-run state distribution
/// (the greedy argmax chain under [`AcceptanceRule::GreedyMatch`]).
pub fn exact_mean_alpha(
    draft: &MarkovModel,
    target: &MarkovModel,
    rule: AcceptanceRule,
    initial_state: Token,
) -> Result<AcceptanceRate> {
    check_pair(draft, target)?;
    let weights = match rule {
        AcceptanceRule::StochasticRejection => long_run_distribution(target, initial_state)?,
        AcceptanceRule::GreedyMatch => long_run_distribution(&target.greedy_chain(), initial_state)?,
    };
    let mean = weights
        .iter()
        .enumerate()
        .map(|(s, w)| w * state_alpha(draft, target, s as Token, rule))
        .sum::<f64>();
    AcceptanceRate::new(mean.clamp(0.0, 1.0))
}

/// Exact long-run statistics of the draft-verify loop itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopStatistics {
    /// accepted drafts / verified drafts.
    pub alpha: f64,
    pub tokens_per_round: f64,
}

/// Long-run acceptance of the actual loop, accounting for which states the
/// loop verifies drafts from.
///
/// Inside a round, the sub-stochastic kernel `M(s, x)` (draft `x` proposed
/// from `s` and accepted) walks over accepted drafts. Rounds form a Markov
/// chain over their starting token; the renewal-reward ratio of expected
/// accepted to expected verified drafts under its long-run distribution is
/// the limit of the empirical alpha.
pub fn exact_loop_statistics(
    draft: &MarkovModel,
    target: &MarkovModel,
    rule: AcceptanceRule,
    gamma: DraftLength,
    initial_state: Token,
) -> Result<LoopStatistics> {
    check_pair(draft, target)?;
    check_state(target, initial_state)?;
    if gamma.value() == 0 {
        return Err(Error::InvalidModel("loop alpha needs gamma >= 1".into()));
    }
    let v = target.vocab_size();
    let tokens: Vec<Token> = (0..v as Token).collect();

    // Accept kernel, rejection mass and the token emitted on rejection.
    let kernel: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&s| match rule {
            AcceptanceRule::StochasticRejection => draft
                .row(s)
                .iter()
                .zip(target.row(s))
                .map(|(q, p)| q.min(*p))
                .collect(),
            AcceptanceRule::GreedyMatch => {
                let mut row = vec![0.0; v];
                if draft.argmax(s) == target.argmax(s) {
                    row[target.argmax(s) as usize] = 1.0;
                }
                row
            }
        })
        .collect();
    let correction: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&s| match rule {
            AcceptanceRule::StochasticRejection => residual(draft.row(s), target.row(s)),
            AcceptanceRule::GreedyMatch => {
                let mut row = vec![0.0; v];
                row[target.argmax(s) as usize] = 1.0;
                row
            }
        })
        .collect();
    let bonus: Vec<Vec<f64>> = match rule {
        AcceptanceRule::StochasticRejection => target.rows.clone(),
        AcceptanceRule::GreedyMatch => target.greedy_chain().rows,
    };

    let mut round_chain = vec![vec![0.0; v]; v];
    let mut accepted = vec![0.0; v];
    let mut verified = vec![0.0; v];
    for s in 0..v {
        let mut reach = vec![0.0; v];
        reach[s] = 1.0;
        for _ in 0..gamma.value() {
            let mut next = vec![0.0; v];
            for u in 0..v {
                if reach[u] == 0.0 {
                    continue;
                }
                verified[s] += reach[u];
                let keep: f64 = kernel[u].iter().sum();
                let reject = (reach[u] * (1.0 - keep)).max(0.0);
                for x in 0..v {
                    next[x] += reach[u] * kernel[u][x];
                    round_chain[s][x] += reject * correction[u][x];
                }
            }
            accepted[s] += next.iter().sum::<f64>();
            reach = next;
        }
        for w in 0..v {
            for x in 0..v {
                round_chain[s][x] += reach[w] * bonus[w][x];
            }
        }
        // Renormalize against rounding.
        let total: f64 = round_chain[s].iter().sum();
        round_chain[s].iter_mut().for_each(|x| *x /= total);
    }
    let rho = long_run_distribution(&MarkovModel { rows: round_chain }, initial_state)?;
    let acc: f64 = rho.iter().zip(&accepted).map(|(r, a)| r * a).sum();
    let ver: f64 = rho.iter().zip(&verified).map(|(r, e)| r * e).sum();
    Ok(LoopStatistics {
        alpha: acc / ver,
        tokens_per_round: acc + 1.0,
    })
}

/// `norm(max(0, target - draft))`, falling back to the target row when the
/// positive part vanishes.
fn residual(draft: &[f64], target: &[f64]) -> Vec<f64> {
    let pos: Vec<f64> = target.iter().zip(draft).map(|(p, q)| (p - q).max(0.0)).collect();
    let total: f64 = pos.iter().sum();
    if total > 0.0 {
        pos.into_iter().map(|x| x / total).collect()
    } else {
        target.to_vec()
    }
}

/// Outcome of one draft-verify round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundOutcome {
    pub accepted: u32,
    /// Drafts checked by the target: accepted ones plus the first rejection.
    pub verified: u32,
    /// Tokens appended to the output (`accepted + 1`).
    pub emitted: u32,
}

/// Token-level speculative decoding over a Markov drafter/target pair.
#[derive(Debug, Clone)]
pub struct SpeculativeLoop<'a> {
    draft: &'a MarkovModel,
    target: &'a MarkovModel,
    rule: AcceptanceRule,
    gamma: u32,
    context: Token,
    drafts: Vec<Token>,
}

impl<'a> SpeculativeLoop<'a> {
    pub fn new(
        draft: &'a MarkovModel,
        target: &'a MarkovModel,
        rule: AcceptanceRule,
        gamma: DraftLength,
        initial_token: Token,
    ) -> Result<Self> {
        check_pair(draft, target)?;
        check_state(target, initial_token)?;
        Ok(Self {
            draft,
            target,
            rule,
            gamma: gamma.value(),
            context: initial_token,
            drafts: Vec::with_capacity(gamma.value() as usize),
        })
    }

    /// Last emitted token.
    pub fn context(&self) -> Token {
        self.context
    }

    /// Runs one round, passing every emitted token to `emit`.
    pub fn round(&mut self, rng: &mut impl Rng, mut emit: impl FnMut(Token)) -> RoundOutcome {
        let greedy = self.rule == AcceptanceRule::GreedyMatch;
        self.drafts.clear();
        let mut ctx = self.context;
        for _ in 0..self.gamma {
            let x = if greedy {
                self.draft.argmax(ctx)
            } else {
                self.draft.sample_next(ctx, rng)
            };
            self.drafts.push(x);
            ctx = x;
        }

        let mut out = RoundOutcome::default();
        let mut state = self.context;
        for i in 0..self.drafts.len() {
            let x = self.drafts[i];
            out.verified += 1;
            let accept = if greedy {
                x == self.target.argmax(state)
            } else {
                let q = self.draft.row(state)[x as usize];
                let p = self.target.row(state)[x as usize];
                rng.gen::<f64>() < (p / q).min(1.0)
            };
            if !accept {
                let y = if greedy {
                    self.target.argmax(state)
                } else {
                    sample(&residual(self.draft.row(state), self.target.row(state)), rng)
                };
                emit(y);
                out.emitted += 1;
                self.context = y;
                return out;
            }
            emit(x);
            out.accepted += 1;
            out.emitted += 1;
            state = x;
        }
        let bonus = if greedy {
            self.target.argmax(state)
        } else {
            self.target.sample_next(state, rng)
        };
        emit(bonus);
        out.emitted += 1;
        self.context = bonus;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub tokens_generated: u64,
    pub rounds: u64,
    pub accepted_drafts: u64,
    pub verified_drafts: u64,
    /// `accepted_drafts / verified_drafts`; `None` when nothing was drafted.
    pub empirical_alpha: Option<f64>,
    /// Emitted tokens, excluding the initial token.
    pub tokens: Vec<Token>,
}

/// Runs `steps` rounds of speculative decoding from token 0.
pub fn generate_and_verify(
    draft: &MarkovModel,
    target: &MarkovModel,
    rule: AcceptanceRule,
    gamma: DraftLength,
    steps: u64,
    seed: u64,
) -> Result<GenerationStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = SpeculativeLoop::new(draft, target, rule, gamma, 0)?;
    let mut stats = GenerationStats {
        tokens_generated: 0,
        rounds: 0,
        accepted_drafts: 0,
        verified_drafts: 0,
        empirical_alpha: None,
        tokens: Vec::new(),
    };
    for _ in 0..steps {
        let out = lp.round(&mut rng, |t| stats.tokens.push(t));
        stats.rounds += 1;
        stats.tokens_generated += u64::from(out.emitted);
        stats.accepted_drafts += u64::from(out.accepted);
        stats.verified_drafts += u64::from(out.verified);
    }
    if stats.verified_drafts > 0 {
        stats.empirical_alpha = Some(stats.accepted_drafts as f64 / stats.verified_drafts as f64);
    }
    Ok(stats)
}

/// Plain autoregressive sampling of `len` tokens after `initial_token`.
pub fn sample_chain(model: &MarkovModel, initial_token: Token, len: usize, seed: u64) -> Result<Vec<Token>> {
    check_state(model, initial_token)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial_token;
    Ok((0..len)
        .map(|_| {
            state = model.sample_next(state, &mut rng);
            state
        })
        .collect())
}
