//! Acceptance-rate statistics over per-sample traces.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost_model::AcceptanceRate;
use crate::error::{Error, Result};
use crate::profiles::Quantization;

/// Drafter/target quantization pair, written `drafter/target`
/// (e.g. `fp16/w8a8`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QuantPair {
    pub drafter: Quantization,
    pub target: Quantization,
}

impl QuantPair {
    pub fn new(drafter: Quantization, target: Quantization) -> Self {
        Self { drafter, target }
    }
}

impl fmt::Display for QuantPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.drafter, self.target)
    }
}

impl FromStr for QuantPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((d, t)) if !d.is_empty() && !t.is_empty() && !t.contains('/') => Ok(Self {
                drafter: Quantization::from(d.to_string()),
                target: Quantization::from(t.to_string()),
            }),
            _ => Err(Error::InvalidTrace(format!(
                "config tag {s:?} is not of the form drafter/target"
            ))),
        }
    }
}

impl TryFrom<String> for QuantPair {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<QuantPair> for String {
    fn from(p: QuantPair) -> String {
        p.to_string()
    }
}

/// Draft/accept counts for one evaluated sample. `drafted` counts only
/// drafter-proposed tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TraceFields")]
pub struct AcceptanceTrace {
    pub task: String,
    pub sample_id: String,
    pub config: QuantPair,
    drafted: u32,
    accepted: u32,
}

#[derive(Deserialize)]
struct TraceFields {
    task: String,
    sample_id: String,
    config: QuantPair,
    drafted: u32,
    accepted: u32,
}

impl TryFrom<TraceFields> for AcceptanceTrace {
    type Error = Error;
    fn try_from(f: TraceFields) -> Result<Self> {
        AcceptanceTrace::new(f.task, f.sample_id, f.config, f.drafted, f.accepted)
    }
}

impl AcceptanceTrace {
    pub fn new(
        task: impl Into<String>,
        sample_id: impl Into<String>,
        config: QuantPair,
        drafted: u32,
        accepted: u32,
    ) -> Result<Self> {
        if drafted == 0 {
            return Err(Error::InvalidTrace("drafted must be at least 1".into()));
        }
        if accepted > drafted {
            return Err(Error::InvalidTrace(format!(
                "accepted ({accepted}) exceeds drafted ({drafted})"
            )));
        }
        Ok(Self {
            task: task.into(),
            sample_id: sample_id.into(),
            config,
            drafted,
            accepted,
        })
    }

    pub fn drafted(&self) -> u32 {
        self.drafted
    }

    pub fn accepted(&self) -> u32 {
        self.accepted
    }
}

pub fn sample_alpha(trace: &AcceptanceTrace) -> AcceptanceRate {
    AcceptanceRate::new(f64::from(trace.accepted) / f64::from(trace.drafted))
        .expect("accepted <= drafted holds by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub median: f64,
    pub mean: f64,
    pub p10: f64,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaDistribution {
    pub config: QuantPair,
    pub task_filter: Option<String>,
    /// Per-sample alphas, ascending.
    pub per_sample_alphas: Vec<f64>,
    pub summary: AlphaSummary,
}

impl AlphaDistribution {
    /// Builds a distribution from raw per-sample values.
    pub fn from_alphas(
        config: QuantPair,
        task_filter: Option<String>,
        mut alphas: Vec<f64>,
    ) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptySelection {
                config: config.to_string(),
                task: task_filter,
            });
        }
        if let Some(&bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::OutOfDomain {
                what: "per-sample alpha",
                value: bad,
                range: "[0, 1]",
            });
        }
        alphas.sort_by(f64::total_cmp);
        let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
        let summary = AlphaSummary {
            median: percentile_sorted(&alphas, 50.0),
            mean,
            p10: percentile_sorted(&alphas, 10.0),
            p25: percentile_sorted(&alphas, 25.0),
            p75: percentile_sorted(&alphas, 75.0),
            p90: percentile_sorted(&alphas, 90.0),
        };
        Ok(Self {
            config,
            task_filter,
            per_sample_alphas: alphas,
            summary,
        })
    }

    /// Percentile in `[0, 100]` of the per-sample values.
    pub fn percentile(&self, p: f64) -> f64 {
        percentile_sorted(&self.per_sample_alphas, p)
    }
}

/// Linear interpolation between closest ranks: rank `h = (n-1) p / 100`.
///
/// `sorted` must be ascending and non-empty.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let p = p.clamp(0.0, 100.0);
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Config tags present in a trace set, sorted.
pub fn known_configs(traces: &[AcceptanceTrace]) -> Vec<QuantPair> {
    traces
        .iter()
        .map(|t| t.config.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Per-sample alpha distribution for one config, optionally one task.
pub fn distribution(
    traces: &[AcceptanceTrace],
    config: &QuantPair,
    task_filter: Option<&str>,
) -> Result<AlphaDistribution> {
    let known = known_configs(traces);
    if !traces.is_empty() && !known.contains(config) {
        return Err(Error::UnknownConfig {
            tag: config.to_string(),
            known: known.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
        });
    }
    let alphas = traces
        .iter()
        .filter(|t| &t.config == config)
        .filter(|t| task_filter.is_none_or(|task| t.task == task))
        .map(|t| sample_alpha(t).value())
        .collect();
    AlphaDistribution::from_alphas(config.clone(), task_filter.map(str::to_string), alphas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(s: &str) -> QuantPair {
        s.parse().unwrap()
    }

    fn trace(task: &str, config: &str, drafted: u32, accepted: u32) -> AcceptanceTrace {
        AcceptanceTrace::new(task, format!("{task}-{accepted}"), pair(config), drafted, accepted).unwrap()
    }

    #[test]
    fn sample_alpha_values() {
        assert_eq!(sample_alpha(&trace("t", "fp16/fp16", 10, 9)).value(), 0.9);
        assert_eq!(sample_alpha(&trace("t", "fp16/fp16", 5, 0)).value(), 0.0);
        assert_eq!(sample_alpha(&trace("t", "fp16/fp16", 8, 8)).value(), 1.0);
    }

    #[test]
    fn rejects_bad_traces() {
        assert!(AcceptanceTrace::new("t", "s", pair("fp16/fp16"), 0, 0).is_err());
        assert!(AcceptanceTrace::new("t", "s", pair("fp16/fp16"), 3, 4).is_err());
        assert!("fp16".parse::<QuantPair>().is_err());
        assert!("a/b/c".parse::<QuantPair>().is_err());
        let json = r#"{"task":"t","sample_id":"s","config":"fp16/w8a8","drafted":2,"accepted":3}"#;
        assert!(serde_json::from_str::<AcceptanceTrace>(json).is_err());
    }

    #[test]
    fn median_is_middle_order_statistic() {
        let d = AlphaDistribution::from_alphas(pair("fp16/w8a8"), None, vec![0.9, 0.0, 0.5, 0.17, 0.1]).unwrap();
        assert_eq!(d.summary.median, 0.17);
        assert_eq!(d.per_sample_alphas, vec![0.0, 0.1, 0.17, 0.5, 0.9]);
    }

    #[test]
    fn percentiles_interpolate() {
        let sorted = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(percentile_sorted(&sorted, 0.0), 0.0);
        assert_eq!(percentile_sorted(&sorted, 100.0), 3.0);
        assert!((percentile_sorted(&sorted, 50.0) - 1.5).abs() < 1e-15);
        assert!((percentile_sorted(&sorted, 90.0) - 2.7).abs() < 1e-12);
    }

    #[test]
    fn single_sample_collapses_all_statistics() {
        let d = AlphaDistribution::from_alphas(pair("fp16/fp16"), None, vec![0.42]).unwrap();
        let s = d.summary;
        for v in [s.median, s.mean, s.p10, s.p25, s.p75, s.p90] {
            assert_eq!(v, 0.42);
        }
    }

    #[test]
    fn selection_errors() {
        let traces = vec![trace("translation", "fp16/w8a8", 10, 2)];
        assert!(matches!(
            distribution(&traces, &pair("fp16/fp16"), None),
            Err(Error::UnknownConfig { .. })
        ));
        assert!(matches!(
            distribution(&traces, &pair("fp16/w8a8"), Some("qa")),
            Err(Error::EmptySelection { .. })
        ));
        assert!(matches!(
            distribution(&[], &pair("fp16/w8a8"), None),
            Err(Error::EmptySelection { .. })
        ));
    }

    #[test]
    fn task_filter_selects() {
        let traces = vec![
            trace("translation", "fp16/w8a8", 10, 2),
            trace("summarization", "fp16/w8a8", 10, 8),
            trace("translation", "fp16/fp16", 10, 6),
        ];
        let d = distribution(&traces, &pair("fp16/w8a8"), Some("translation")).unwrap();
        assert_eq!(d.per_sample_alphas, vec![0.2]);
        let d = distribution(&traces, &pair("fp16/w8a8"), None).unwrap();
        assert_eq!(d.per_sample_alphas.len(), 2);
    }
}
