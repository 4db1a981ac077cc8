//! Latency profiles and the cost coefficients derived from them.
//!
//! Profiles are measured forward-pass latencies as a function of input
//! sequence length, keyed by `(role, unit, allocation, quantization)`. Values
//! between measured lengths are linearly interpolated; lengths outside the
//! measured range are refused.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost_model::CostCoefficient;
use crate::design_space::{enumerate_mappings, DesignVariant, Mapping, Platform};
use crate::error::{Error, Result};

/// Evaluation point used when none is given: mean input length of the
/// translation workload the bundled data describes.
pub const DEFAULT_SEQ_LEN: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Drafter,
    Target,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Drafter => "drafter",
            ModelRole::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Quantization {
    Fp16,
    Fp32,
    W8a8,
    Other(String),
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantization::Fp16 => f.write_str("fp16"),
            Quantization::Fp32 => f.write_str("fp32"),
            Quantization::W8a8 => f.write_str("w8a8"),
            Quantization::Other(s) => f.write_str(s),
        }
    }
}

impl From<String> for Quantization {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "fp16" => Quantization::Fp16,
            "fp32" => Quantization::Fp32,
            "w8a8" => Quantization::W8a8,
            _ => Quantization::Other(s),
        }
    }
}

impl From<Quantization> for String {
    fn from(q: Quantization) -> String {
        q.to_string()
    }
}

impl FromStr for Quantization {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Quantization::from(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfileKey {
    pub role: ModelRole,
    pub unit_id: String,
    pub allocation: u32,
    pub quantization: Quantization,
}

impl fmt::Display for ProfileKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}x{}/{}",
            self.role, self.unit_id, self.allocation, self.quantization
        )
    }
}

/// Forward-pass latency measurements for one model on one device
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyProfile {
    key: ProfileKey,
    /// `(seq_len, latency_ms)`, seq_len strictly increasing.
    samples: Vec<(u32, f64)>,
}

impl LatencyProfile {
    pub fn new(key: ProfileKey, samples: Vec<(u32, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidProfile(format!("{key}: no samples")));
        }
        if key.allocation == 0 {
            return Err(Error::InvalidProfile(format!("{key}: allocation must be positive")));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidProfile(format!(
                    "{key}: seq_len values must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(s, l)) = samples.iter().find(|(s, l)| *s == 0 || !l.is_finite() || *l <= 0.0) {
            return Err(Error::InvalidProfile(format!(
                "{key}: invalid sample seq_len={s} latency_ms={l}"
            )));
        }
        Ok(Self { key, samples })
    }

    pub fn key(&self) -> &ProfileKey {
        &self.key
    }

    pub fn samples(&self) -> &[(u32, f64)] {
        &self.samples
    }

    pub fn seq_len_range(&self) -> (u32, u32) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Latency at `seq_len`, linear between the bracketing samples.
    pub fn latency_at(&self, seq_len: u32) -> Result<f64> {
        let (min, max) = self.seq_len_range();
        if seq_len < min || seq_len > max {
            return Err(Error::Extrapolation { seq_len, min, max });
        }
        let idx = self.samples.partition_point(|&(s, _)| s < seq_len);
        let (s1, l1) = self.samples[idx];
        if s1 == seq_len {
            return Ok(l1);
        }
        let (s0, l0) = self.samples[idx - 1];
        let t = f64::from(seq_len - s0) / f64::from(s1 - s0);
        Ok(l0 + t * (l1 - l0))
    }

    /// True when latency ever decreases with growing seq_len.
    pub fn is_monotone(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    /// Copy with every latency multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.key.clone(),
            self.samples.iter().map(|&(s, l)| (s, l * factor)).collect(),
        )
    }
}

/// Describes a model; `hidden_dim` only classifies workloads by sequence
/// length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub hidden_dim: u32,
    pub quantization: Quantization,
}

impl ModelSpec {
    /// Short-sequence regime: the sequence is at least an order of magnitude
    /// below the hidden dimension.
    pub fn is_short_sequence(&self, seq_len: u32) -> bool {
        u64::from(seq_len) * 10 <= u64::from(self.hidden_dim)
    }
}

/// `c = t_draft / t_target` at one sequence length.
pub fn cost_coefficient(
    drafter: &LatencyProfile,
    target: &LatencyProfile,
    seq_len: u32,
) -> Result<CostCoefficient> {
    CostCoefficient::from_latencies(drafter.latency_at(seq_len)?, target.latency_at(seq_len)?)
}

/// Immutable set of latency profiles.
#[derive(Debug, Clone, Default)]
pub struct ProfileStore {
    profiles: BTreeMap<ProfileKey, LatencyProfile>,
}

/// One measurement, as read from a profiles file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub model_role: ModelRole,
    pub unit_id: String,
    pub allocation: u32,
    pub quantization: Quantization,
    pub seq_len: u32,
    pub latency_ms: f64,
}

impl ProfileRecord {
    pub fn key(&self) -> ProfileKey {
        ProfileKey {
            role: self.model_role,
            unit_id: self.unit_id.clone(),
            allocation: self.allocation,
            quantization: self.quantization.clone(),
        }
    }
}

impl ProfileStore {
    pub fn new(profiles: impl IntoIterator<Item = LatencyProfile>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in profiles {
            let key = p.key.clone();
            if map.insert(key.clone(), p).is_some() {
                return Err(Error::InvalidProfile(format!("duplicate profile {key}")));
            }
        }
        Ok(Self { profiles: map })
    }

    /// Groups records by key, sorting samples by seq_len. A repeated
    /// `(key, seq_len)` pair is an error.
    pub fn from_records(records: impl IntoIterator<Item = ProfileRecord>) -> Result<Self> {
        let mut grouped: BTreeMap<ProfileKey, BTreeMap<u32, f64>> = BTreeMap::new();
        for r in records {
            let key = r.key();
            let samples = grouped.entry(key.clone()).or_default();
            if samples.insert(r.seq_len, r.latency_ms).is_some() {
                return Err(Error::InvalidProfile(format!(
                    "duplicate measurement for {key} at seq_len {}",
                    r.seq_len
                )));
            }
        }
        Self::new(
            grouped
                .into_iter()
                .map(|(k, s)| LatencyProfile::new(k, s.into_iter().collect()))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatencyProfile> {
        self.profiles.values()
    }

    pub fn get(&self, key: &ProfileKey) -> Option<&LatencyProfile> {
        self.profiles.get(key)
    }

    /// Looks up a profile. With `quantization == None` the quantization is
    /// inferred when exactly one candidate exists.
    pub fn resolve(
        &self,
        role: ModelRole,
        unit_id: &str,
        allocation: u32,
        quantization: Option<&Quantization>,
    ) -> Result<&LatencyProfile> {
        if let Some(q) = quantization {
            let key = ProfileKey {
                role,
                unit_id: unit_id.to_string(),
                allocation,
                quantization: q.clone(),
            };
            return self.profiles.get(&key).ok_or_else(|| Error::MissingProfile {
                role: role.to_string(),
                unit: unit_id.to_string(),
                allocation,
                quantization: q.to_string(),
            });
        }
        let candidates: Vec<&LatencyProfile> = self
            .profiles
            .values()
            .filter(|p| p.key.role == role && p.key.unit_id == unit_id && p.key.allocation == allocation)
            .collect();
        match candidates.as_slice() {
            [only] => Ok(only),
            [] => Err(Error::MissingProfile {
                role: role.to_string(),
                unit: unit_id.to_string(),
                allocation,
                quantization: "any".into(),
            }),
            many => Err(Error::AmbiguousQuantization {
                role: role.to_string(),
                unit: unit_id.to_string(),
                options: many
                    .iter()
                    .map(|p| p.key.quantization.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
            }),
        }
    }
}

/// Which quantization to use for each role; `None` infers it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuantSelection {
    pub drafter: Option<Quantization>,
    pub target: Option<Quantization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub seq_len: u32,
    pub c: CostCoefficient,
    /// Drafter slower than target at this length (`c > 1`).
    pub infeasible: bool,
}

/// Cost coefficient versus sequence length for one (variant, mapping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub variant: DesignVariant,
    pub mapping: Mapping,
    pub points: Vec<CostPoint>,
}

impl CostCurve {
    pub fn new(variant: DesignVariant, mapping: Mapping, points: Vec<(u32, f64)>) -> Result<Self> {
        let mut out = Vec::with_capacity(points.len());
        for (seq_len, c) in points {
            let c = CostCoefficient::new(c)?;
            out.push(CostPoint {
                seq_len,
                c,
                infeasible: c.value() > 1.0,
            });
        }
        if out.windows(2).any(|w| w[1].seq_len <= w[0].seq_len) {
            return Err(Error::InvalidProfile(
                "cost curve points must be sorted by seq_len".into(),
            ));
        }
        Ok(Self {
            variant,
            mapping,
            points: out,
        })
    }

    /// `c` at `seq_len`, linear between points; `None` outside the curve.
    pub fn at(&self, seq_len: u32) -> Option<CostCoefficient> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if seq_len < first.seq_len || seq_len > last.seq_len {
            return None;
        }
        let idx = self.points.partition_point(|p| p.seq_len < seq_len);
        let hi = self.points[idx];
        if hi.seq_len == seq_len {
            return Some(hi.c);
        }
        let lo = self.points[idx - 1];
        let t = f64::from(seq_len - lo.seq_len) / f64::from(hi.seq_len - lo.seq_len);
        CostCoefficient::new(lo.c.value() + t * (hi.c.value() - lo.c.value())).ok()
    }

    pub fn has_infeasible_points(&self) -> bool {
        self.points.iter().any(|p| p.infeasible)
    }
}

/// One curve per (variant, mapping) of the platform, variants in planning
/// order and mappings lexicographic.
///
/// Points sit at every measured seq_len of either profile inside the range
/// both profiles cover.
pub fn build_cost_curves(
    store: &ProfileStore,
    platform: &Platform,
    quant: &QuantSelection,
) -> Result<Vec<CostCurve>> {
    let mappings = enumerate_mappings(platform);
    let mut curves = Vec::new();
    for variant in platform.variants() {
        for mapping in &mappings {
            curves.push(build_curve(store, platform, quant, &variant, mapping)?);
        }
    }
    Ok(curves)
}

fn build_curve(
    store: &ProfileStore,
    platform: &Platform,
    quant: &QuantSelection,
    variant: &DesignVariant,
    mapping: &Mapping,
) -> Result<CostCurve> {
    let units = platform.units();
    let d_idx = mapping.drafter_unit();
    let t_idx = mapping.target_unit();
    let drafter = store.resolve(
        ModelRole::Drafter,
        &units[d_idx].id,
        variant.allocation[d_idx],
        quant.drafter.as_ref(),
    )?;
    let target = store.resolve(
        ModelRole::Target,
        &units[t_idx].id,
        variant.allocation[t_idx],
        quant.target.as_ref(),
    )?;
    let (d_min, d_max) = drafter.seq_len_range();
    let (t_min, t_max) = target.seq_len_range();
    let (lo, hi) = (d_min.max(t_min), d_max.min(t_max));
    if lo > hi {
        return Err(Error::InvalidProfile(format!(
            "{} and {} share no seq_len range",
            drafter.key(),
            target.key()
        )));
    }
    let mut lens: Vec<u32> = drafter
        .samples()
        .iter()
        .chain(target.samples())
        .map(|&(s, _)| s)
        .filter(|s| (lo..=hi).contains(s))
        .collect();
    lens.sort_unstable();
    lens.dedup();
    let points = lens
        .into_iter()
        .map(|s| Ok((s, cost_coefficient(drafter, target, s)?.value())))
        .collect::<Result<Vec<_>>>()?;
    CostCurve::new(variant.clone(), mapping.clone(), points)
}
