//! Design-space encoding: resource variants times static partition mappings.
//!
//! A platform with units of `n_i` resources each has `v = prod(n_i)` design
//! variants. Each variant admits `N^m` mappings of `m` graph partitions onto
//! the `N` units, for a total search space of `v * N^m`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition index of the drafter model in a [`Mapping`].
pub const DRAFTER_PARTITION: usize = 0;
/// Partition index of the target model in a [`Mapping`].
pub const TARGET_PARTITION: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Cpu,
    Gpu,
    Npu,
    Other,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Cpu => "cpu",
            UnitKind::Gpu => "gpu",
            UnitKind::Npu => "npu",
            UnitKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessingUnit {
    pub id: String,
    pub kind: UnitKind,
    /// Cores, shaders or PEs.
    pub resource_count: u32,
}

impl ProcessingUnit {
    pub fn new(id: impl Into<String>, kind: UnitKind, resource_count: u32) -> Self {
        Self {
            id: id.into(),
            kind,
            resource_count,
        }
    }
}

/// Resources made available on each unit for one run; `allocation[i]` is in
/// `1..=units[i].resource_count`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignVariant {
    pub allocation: Vec<u32>,
}

impl DesignVariant {
    pub fn new(allocation: Vec<u32>) -> Self {
        Self { allocation }
    }

    pub fn total_resources(&self) -> u64 {
        self.allocation.iter().map(|&k| u64::from(k)).sum()
    }
}

impl fmt::Display for DesignVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.allocation)
    }
}

/// Static assignment of partitions to units. Entry `j` is the unit index that
/// runs partition `j`; partition 0 is the drafter, partition 1 the target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mapping {
    pub assignment: Vec<usize>,
}

impl Mapping {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self { assignment }
    }

    pub fn drafter_unit(&self) -> usize {
        self.assignment[DRAFTER_PARTITION]
    }

    /// With a single partition, drafter and target share it.
    pub fn target_unit(&self) -> usize {
        self.assignment
            .get(TARGET_PARTITION)
            .copied()
            .unwrap_or(self.assignment[DRAFTER_PARTITION])
    }

    /// True when partitions run on more than one unit.
    pub fn is_heterogeneous(&self) -> bool {
        self.assignment.windows(2).any(|w| w[0] != w[1])
    }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.assignment)
    }
}

fn write_tuple<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    f.write_str("(")?;
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{item}")?;
    }
    f.write_str(")")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Platform {
    units: Vec<ProcessingUnit>,
    partition_count: u32,
    /// Explicit variant numbering; `None` means lexicographic order.
    variant_order: Option<Vec<DesignVariant>>,
}

impl Platform {
    pub fn new(units: Vec<ProcessingUnit>, partition_count: u32) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidPlatform("no processing units".into()));
        }
        if partition_count == 0 {
            return Err(Error::InvalidPlatform("partition_count must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for u in &units {
            if u.resource_count == 0 {
                return Err(Error::InvalidPlatform(format!(
                    "unit {} has resource_count 0",
                    u.id
                )));
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::InvalidPlatform(format!("duplicate unit id {}", u.id)));
            }
        }
        Ok(Self {
            units,
            partition_count,
            variant_order: None,
        })
    }

    /// Fixes the variant numbering. The order must list every variant once.
    pub fn with_variant_order(mut self, order: Vec<DesignVariant>) -> Result<Self> {
        let mut canonical = enumerate_variants(&self);
        let mut given = order.clone();
        canonical.sort();
        given.sort();
        if canonical != given {
            return Err(Error::InvalidPlatform(format!(
                "variant order must list each of the {} variants exactly once",
                canonical.len()
            )));
        }
        self.variant_order = Some(order);
        Ok(self)
    }

    pub fn units(&self) -> &[ProcessingUnit] {
        &self.units
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn partition_count(&self) -> u32 {
        self.partition_count
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.units.iter().position(|u| u.id == id)
    }

    /// Variants in planning order (explicit order if declared).
    pub fn variants(&self) -> Vec<DesignVariant> {
        match &self.variant_order {
            Some(order) => order.clone(),
            None => enumerate_variants(self),
        }
    }

    pub fn has_explicit_variant_order(&self) -> bool {
        self.variant_order.is_some()
    }

    pub fn validate_variant(&self, variant: &DesignVariant) -> bool {
        variant.allocation.len() == self.units.len()
            && variant
                .allocation
                .iter()
                .zip(&self.units)
                .all(|(&k, u)| (1..=u.resource_count).contains(&k))
    }

    pub fn validate_mapping(&self, mapping: &Mapping) -> bool {
        mapping.assignment.len() == self.partition_count as usize
            && mapping.assignment.iter().all(|&i| i < self.units.len())
    }
}

/// `v = prod(n_i)`.
pub fn variant_count(platform: &Platform) -> Result<u64> {
    platform.units.iter().try_fold(1u64, |acc, u| {
        acc.checked_mul(u64::from(u.resource_count))
            .ok_or(Error::Overflow("variant count"))
    })
}

/// `N^m`.
pub fn mapping_count(platform: &Platform) -> Result<u64> {
    (platform.units.len() as u64)
        .checked_pow(platform.partition_count)
        .ok_or(Error::Overflow("mapping count"))
}

/// `v * N^m`.
pub fn search_space_size(platform: &Platform) -> Result<u64> {
    variant_count(platform)?
        .checked_mul(mapping_count(platform)?)
        .ok_or(Error::Overflow("search space size"))
}

/// All allocation vectors in lexicographic order.
pub fn enumerate_variants(platform: &Platform) -> Vec<DesignVariant> {
    let bounds: Vec<usize> = platform.units.iter().map(|u| u.resource_count as usize).collect();
    odometer(&bounds)
        .map(|digits| DesignVariant::new(digits.into_iter().map(|d| d as u32 + 1).collect()))
        .collect()
}

/// All `N^m` partition assignments in lexicographic order.
pub fn enumerate_mappings(platform: &Platform) -> Vec<Mapping> {
    let bounds = vec![platform.units.len(); platform.partition_count as usize];
    odometer(&bounds).map(Mapping::new).collect()
}

/// Mixed-radix counter over `[0, bounds[0]) x [0, bounds[1]) x ...`, last
/// digit fastest.
fn odometer(bounds: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let mut next = if bounds.iter().all(|&b| b > 0) {
        Some(vec![0; bounds.len()])
    } else {
        None
    };
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        for pos in (0..bounds.len()).rev() {
            succ[pos] += 1;
            if succ[pos] < bounds[pos] {
                next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(current)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn platform(counts: &[u32], m: u32) -> Platform {
        let units = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| ProcessingUnit::new(format!("pu{i}"), UnitKind::Other, n))
            .collect();
        Platform::new(units, m).unwrap()
    }

    #[test]
    fn counts_for_reference_platforms() {
        assert_eq!(variant_count(&platform(&[6, 1], 2)).unwrap(), 6);
        assert_eq!(search_space_size(&platform(&[6, 1], 2)).unwrap(), 24);
        assert_eq!(variant_count(&platform(&[1], 1)).unwrap(), 1);
        assert_eq!(search_space_size(&platform(&[1], 1)).unwrap(), 1);
        assert_eq!(variant_count(&platform(&[4, 2, 2], 3)).unwrap(), 16);
        assert_eq!(search_space_size(&platform(&[4, 2, 2], 3)).unwrap(), 432);
    }

    #[test]
    fn overflow_is_reported() {
        let p = platform(&[u32::MAX, u32::MAX, u32::MAX], 2);
        assert!(matches!(variant_count(&p), Err(Error::Overflow(_))));
        let p = platform(&[2, 2], 64);
        assert!(matches!(mapping_count(&p), Err(Error::Overflow(_))));
    }

    #[test]
    fn variants_are_lexicographic() {
        let v = enumerate_variants(&platform(&[2, 1], 2));
        assert_eq!(v, vec![DesignVariant::new(vec![1, 1]), DesignVariant::new(vec![2, 1])]);
        let v = enumerate_variants(&platform(&[6, 1], 2));
        assert_eq!(v.len(), 6);
        assert_eq!(v[5].allocation, vec![6, 1]);
        assert_eq!(enumerate_variants(&platform(&[1], 1)), vec![DesignVariant::new(vec![1])]);
    }

    #[test]
    fn mappings_are_lexicographic() {
        let m: Vec<Vec<usize>> = enumerate_mappings(&platform(&[6, 1], 2))
            .into_iter()
            .map(|m| m.assignment)
            .collect();
        assert_eq!(m, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(enumerate_mappings(&platform(&[3], 2)).len(), 1);
        assert_eq!(enumerate_mappings(&platform(&[1, 1, 1], 1)).len(), 3);
    }

    #[test]
    fn rejects_bad_platforms() {
        assert!(Platform::new(vec![], 2).is_err());
        assert!(Platform::new(vec![ProcessingUnit::new("a", UnitKind::Cpu, 1)], 0).is_err());
        assert!(Platform::new(vec![ProcessingUnit::new("a", UnitKind::Cpu, 0)], 1).is_err());
        assert!(Platform::new(
            vec![
                ProcessingUnit::new("a", UnitKind::Cpu, 1),
                ProcessingUnit::new("a", UnitKind::Gpu, 1)
            ],
            1
        )
        .is_err());
    }

    #[test]
    fn explicit_variant_order() {
        let p = platform(&[2, 1], 2);
        let order = vec![DesignVariant::new(vec![2, 1]), DesignVariant::new(vec![1, 1])];
        let p2 = p.clone().with_variant_order(order.clone()).unwrap();
        assert_eq!(p2.variants(), order);
        assert!(p
            .with_variant_order(vec![DesignVariant::new(vec![2, 1])])
            .is_err());
    }

    #[test]
    fn heterogeneity() {
        assert!(!Mapping::new(vec![0, 0]).is_heterogeneous());
        assert!(Mapping::new(vec![1, 0]).is_heterogeneous());
    }
}
