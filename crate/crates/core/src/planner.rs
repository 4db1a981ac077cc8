//! Per-variant deployment decisions from cost curves and an acceptance rate.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cost_model::{self, AcceptanceRate, CostCoefficient, DraftLength, Speedup, DEFAULT_GAMMA_MAX};
use crate::design_space::{enumerate_mappings, DesignVariant, Mapping, Platform};
use crate::error::{Error, Result};
use crate::profiles::{CostCurve, DEFAULT_SEQ_LEN};

pub const DEFAULT_MIN_SPEEDUP: f64 = 1.05;
pub const DEFAULT_HETEROGENEITY_MARGIN: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub platform: Platform,
    pub seq_len: u32,
    pub alpha: AcceptanceRate,
    pub gamma_max: DraftLength,
    /// Smallest predicted speedup worth deploying; at least 1.
    pub min_speedup: f64,
    /// Absolute speedup a heterogeneous mapping must add over the best
    /// homogeneous one.
    pub heterogeneity_margin: f64,
}

impl PlanRequest {
    pub fn new(platform: Platform, alpha: AcceptanceRate) -> Self {
        Self {
            platform,
            seq_len: DEFAULT_SEQ_LEN,
            alpha,
            gamma_max: DEFAULT_GAMMA_MAX,
            min_speedup: DEFAULT_MIN_SPEEDUP,
            heterogeneity_margin: DEFAULT_HETEROGENEITY_MARGIN,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.min_speedup.is_finite() || self.min_speedup < 1.0 {
            return Err(Error::OutOfDomain {
                what: "min_speedup",
                value: self.min_speedup,
                range: "[1, inf)",
            });
        }
        if !self.heterogeneity_margin.is_finite() || self.heterogeneity_margin < 0.0 {
            return Err(Error::OutOfDomain {
                what: "heterogeneity_margin",
                value: self.heterogeneity_margin,
                range: "[0, inf)",
            });
        }
        if self.seq_len == 0 {
            return Err(Error::Input("seq_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDecision {
    /// 1-based position in the platform's variant order.
    pub variant_index: usize,
    pub allocation: DesignVariant,
    pub use_speculation: bool,
    pub gamma: DraftLength,
    pub mapping: Option<Mapping>,
    /// `None` when not applicable (no speculation, or a single-unit platform).
    pub heterogeneous: Option<bool>,
    /// Cost coefficient of the chosen mapping at the evaluation length.
    pub cost_coefficient: Option<CostCoefficient>,
    pub predicted_speedup: Speedup,
    pub notes: Vec<String>,
}

impl PlanDecision {
    fn no_speculation(variant_index: usize, allocation: DesignVariant, notes: Vec<String>) -> Self {
        Self {
            variant_index,
            allocation,
            use_speculation: false,
            gamma: DraftLength::DISABLED,
            mapping: None,
            heterogeneous: None,
            cost_coefficient: None,
            predicted_speedup: Speedup::NEUTRAL,
            notes,
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    mapping: Mapping,
    c: CostCoefficient,
    gamma: DraftLength,
    speedup: Speedup,
}

/// Best candidate by speedup; ties prefer homogeneous, then mapping order.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    a.speedup
        .value()
        .total_cmp(&b.speedup.value())
        .then_with(|| b.mapping.is_heterogeneous().cmp(&a.mapping.is_heterogeneous()))
        .then_with(|| b.mapping.cmp(&a.mapping))
}

/// One decision per variant, in the platform's variant order.
pub fn plan(request: &PlanRequest, curves: &[CostCurve]) -> Result<Vec<PlanDecision>> {
    request.validate()?;
    let platform = &request.platform;
    let multi_unit = platform.unit_count() > 1;
    let index: HashMap<(&DesignVariant, &Mapping), &CostCurve> =
        curves.iter().map(|c| ((&c.variant, &c.mapping), c)).collect();
    let mappings = enumerate_mappings(platform);

    let mut decisions = Vec::new();
    for (i, variant) in platform.variants().into_iter().enumerate() {
        let mut notes = Vec::new();
        if platform.partition_count() > 2 {
            notes.push(format!(
                "partition_count {} > 2: only the drafter and target partitions are costed",
                platform.partition_count()
            ));
        }
        let mut survivors = Vec::new();
        let mut below_threshold: Option<Speedup> = None;
        for mapping in &mappings {
            let c = index
                .get(&(&variant, mapping))
                .and_then(|curve| curve.at(request.seq_len))
                .ok_or_else(|| Error::Coverage {
                    variant: variant.allocation.clone(),
                    mapping: mapping.assignment.clone(),
                    seq_len: request.seq_len,
                })?;
            if !cost_model::is_feasible(request.alpha, c) {
                continue;
            }
            let (gamma, speedup) = cost_model::optimal_gamma(request.alpha, c, request.gamma_max);
            if gamma.value() == 0 {
                continue;
            }
            if speedup.value() < request.min_speedup {
                if below_threshold.is_none_or(|s| speedup.value() > s.value()) {
                    below_threshold = Some(speedup);
                }
                continue;
            }
            survivors.push(Candidate {
                mapping: mapping.clone(),
                c,
                gamma,
                speedup,
            });
        }

        let Some(mut winner) = survivors.iter().max_by(|a, b| better(a, b)).cloned() else {
            if let Some(s) = below_threshold {
                notes.push(format!(
                    "best predicted speedup {:.3} is below min_speedup {:.3}",
                    s.value(),
                    request.min_speedup
                ));
            }
            decisions.push(PlanDecision::no_speculation(i + 1, variant, notes));
            continue;
        };

        if winner.mapping.is_heterogeneous() {
            let best_homogeneous = survivors
                .iter()
                .filter(|c| !c.mapping.is_heterogeneous())
                .max_by(|a, b| better(a, b));
            if let Some(h) = best_homogeneous {
                let gain = winner.speedup.value() - h.speedup.value();
                if gain < request.heterogeneity_margin {
                    notes.push(format!(
                        "marginal gain {gain:.3} over homogeneous mapping; heterogeneous mapping discouraged"
                    ));
                    winner = h.clone();
                }
            }
        }

        decisions.push(PlanDecision {
            variant_index: i + 1,
            allocation: variant,
            use_speculation: true,
            gamma: winner.gamma,
            heterogeneous: multi_unit.then(|| winner.mapping.is_heterogeneous()),
            mapping: Some(winner.mapping),
            cost_coefficient: Some(winner.c),
            predicted_speedup: winner.speedup,
            notes,
        });
    }
    Ok(decisions)
}

/// The decision with the highest predicted speedup. Ties prefer the smaller
/// allocation vector, then a homogeneous mapping.
pub fn best_global(decisions: &[PlanDecision]) -> Option<&PlanDecision> {
    decisions.iter().reduce(|best, d| {
        let ord = d
            .predicted_speedup
            .value()
            .total_cmp(&best.predicted_speedup.value())
            .then_with(|| best.allocation.cmp(&d.allocation))
            .then_with(|| {
                let het = |x: &PlanDecision| x.heterogeneous == Some(true);
                het(best).cmp(&het(d))
            });
        if ord == Ordering::Greater {
            d
        } else {
            best
        }
    })
}

/// Human-readable decision table.
pub fn render_table(decisions: &[PlanDecision], platform: &Platform) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<12} {:<20} {:<14} {:<10} {:>8}",
        "variant", "allocation", "speculative", "heterogeneous", "mapping", "speedup"
    );
    for d in decisions {
        let speculative = if d.use_speculation {
            format!("Yes (gamma = {})", d.gamma)
        } else {
            "No".to_string()
        };
        let het = match d.heterogeneous {
            Some(true) => "Yes",
            Some(false) => "No",
            None => "NA",
        };
        let mapping = d
            .mapping
            .as_ref()
            .map(|m| {
                let drafter = &platform.units()[m.drafter_unit()].id;
                let target = &platform.units()[m.target_unit()].id;
                format!("{drafter}->{target}")
            })
            .unwrap_or_else(|| "-".into());
        let speedup = if d.use_speculation {
            format!("{:.2}", d.predicted_speedup.value())
        } else {
            "1".to_string()
        };
        let _ = writeln!(
            out,
            "{:<8} {:<12} {:<20} {:<14} {:<10} {:>8}",
            d.variant_index,
            d.allocation.to_string(),
            speculative,
            het,
            mapping,
            speedup
        );
        for note in &d.notes {
            let _ = writeln!(out, "         note: {note}");
        }
    }
    out
}
