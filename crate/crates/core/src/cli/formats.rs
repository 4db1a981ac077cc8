//! Line-oriented file formats.
//!
//! Every structured file is JSON Lines: the first line is a header object
//! `{"format": "<name>", "version": 1}`, followed by one record object per
//! line. Blank lines are ignored. Toy-model matrices use a plain numeric grid
//! instead (one whitespace-separated row per line, `#` comments).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acceptance::AcceptanceTrace;
use crate::design_space::{DesignVariant, Platform, ProcessingUnit, UnitKind};
use crate::error::{Error, Result};
use crate::planner::PlanDecision;
use crate::profiles::{ModelRole, ProfileRecord, Quantization};
use crate::simulator::SweepRecord;
use crate::toy_models::MarkovModel;

pub const FORMAT_VERSION: u32 = 1;

pub const PLATFORM_FORMAT: &str = "sdplan-platform";
pub const PROFILES_FORMAT: &str = "sdplan-profiles";
pub const TRACES_FORMAT: &str = "sdplan-traces";
pub const PLAN_FORMAT: &str = "sdplan-plan";
pub const SWEEP_FORMAT: &str = "sdplan-sweep";
pub const ALPHA_SAMPLES_FORMAT: &str = "sdplan-alpha-samples";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub version: u32,
}

impl Header {
    pub fn new(format: &str) -> Self {
        Self {
            format: format.to_string(),
            version: FORMAT_VERSION,
        }
    }
}

/// A record and the 1-based line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Located<T> {
    pub line: usize,
    pub record: T,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses a JSON Lines document with the given header format.
pub fn parse_records<T: DeserializeOwned>(path: &Path, text: &str, format: &str) -> Result<Vec<Located<T>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((hline, htext)) = lines.next() else {
        return Err(parse_error(path, 0, "no records"));
    };
    let header: Header = serde_json::from_str(htext)
        .map_err(|e| parse_error(path, hline, format!("expected header line for {format}: {e}")))?;
    if header.format != format {
        return Err(parse_error(
            path,
            hline,
            format!("expected format {format:?}, found {:?}", header.format),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(parse_error(
            path,
            hline,
            format!("unsupported {format} version {}", header.version),
        ));
    }
    let records = lines
        .map(|(line, l)| {
            serde_json::from_str(l)
                .map(|record| Located { line, record })
                .map_err(|e| parse_error(path, line, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(parse_error(path, hline, "no records"));
    }
    Ok(records)
}

/// Serializes a header plus records, one per line.
pub fn render_records<T: Serialize>(format: &str, records: &[T]) -> String {
    let mut out = serde_json::to_string(&Header::new(format)).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

// Platform

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PlatformRecord {
    Unit {
        unit_id: String,
        kind: UnitKind,
        resource_count: u32,
    },
    Partitions {
        partition_count: u32,
    },
    /// Optional explicit variant numbering, listed in order.
    Variant {
        variant: Vec<u32>,
    },
}

pub fn parse_platform(path: &Path, text: &str) -> Result<Platform> {
    let records: Vec<Located<PlatformRecord>> = parse_records(path, text, PLATFORM_FORMAT)?;
    let mut units = Vec::new();
    let mut partition_count = None;
    let mut order = Vec::new();
    for Located { line, record } in records {
        match record {
            PlatformRecord::Unit {
                unit_id,
                kind,
                resource_count,
            } => units.push(ProcessingUnit::new(unit_id, kind, resource_count)),
            PlatformRecord::Partitions { partition_count: m } => {
                if partition_count.replace(m).is_some() {
                    return Err(parse_error(path, line, "partition_count declared twice"));
                }
            }
            PlatformRecord::Variant { variant } => order.push(DesignVariant::new(variant)),
        }
    }
    let partition_count =
        partition_count.ok_or_else(|| parse_error(path, 0, "missing partition_count record"))?;
    let platform = Platform::new(units, partition_count)?;
    if order.is_empty() {
        Ok(platform)
    } else {
        platform.with_variant_order(order)
    }
}

pub fn render_platform(platform: &Platform) -> String {
    let mut records: Vec<PlatformRecord> = platform
        .units()
        .iter()
        .map(|u| PlatformRecord::Unit {
            unit_id: u.id.clone(),
            kind: u.kind,
            resource_count: u.resource_count,
        })
        .collect();
    records.push(PlatformRecord::Partitions {
        partition_count: platform.partition_count(),
    });
    if platform.has_explicit_variant_order() {
        records.extend(platform.variants().into_iter().map(|v| PlatformRecord::Variant {
            variant: v.allocation,
        }));
    }
    render_records(PLATFORM_FORMAT, &records)
}

pub fn load_platform(path: &Path) -> Result<Platform> {
    parse_platform(path, &read_text(path)?)
}

// Profiles

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileLine {
    model_role: ModelRole,
    unit_id: String,
    allocation: u32,
    quantization: Quantization,
    seq_len: u32,
    latency_ms: f64,
}

pub fn parse_profiles(path: &Path, text: &str) -> Result<Vec<Located<ProfileRecord>>> {
    let lines: Vec<Located<ProfileLine>> = parse_records(path, text, PROFILES_FORMAT)?;
    let mut seen = std::collections::HashMap::new();
    lines
        .into_iter()
        .map(|Located { line, record: r }| {
            if !r.latency_ms.is_finite() || r.latency_ms <= 0.0 {
                return Err(parse_error(path, line, format!("latency_ms must be positive, got {}", r.latency_ms)));
            }
            if r.seq_len == 0 {
                return Err(parse_error(path, line, "seq_len must be positive"));
            }
            if r.allocation == 0 {
                return Err(parse_error(path, line, "allocation must be positive"));
            }
            let record = ProfileRecord {
                model_role: r.model_role,
                unit_id: r.unit_id,
                allocation: r.allocation,
                quantization: r.quantization,
                seq_len: r.seq_len,
                latency_ms: r.latency_ms,
            };
            if let Some(first) = seen.insert((record.key(), record.seq_len), line) {
                return Err(parse_error(
                    path,
                    line,
                    format!(
                        "duplicate measurement for {} at seq_len {} (first on line {first})",
                        record.key(),
                        record.seq_len
                    ),
                ));
            }
            Ok(Located { line, record })
        })
        .collect()
}

pub fn load_profiles(path: &Path) -> Result<Vec<Located<ProfileRecord>>> {
    parse_profiles(path, &read_text(path)?)
}

// Traces

pub fn parse_traces(path: &Path, text: &str) -> Result<Vec<AcceptanceTrace>> {
    Ok(parse_records::<AcceptanceTrace>(path, text, TRACES_FORMAT)?
        .into_iter()
        .map(|l| l.record)
        .collect())
}

pub fn load_traces(path: &Path) -> Result<Vec<AcceptanceTrace>> {
    parse_traces(path, &read_text(path)?)
}

// Plan output

pub fn render_plan(decisions: &[PlanDecision]) -> String {
    render_records(PLAN_FORMAT, decisions)
}

pub fn parse_plan(path: &Path, text: &str) -> Result<Vec<PlanDecision>> {
    Ok(parse_records(path, text, PLAN_FORMAT)?
        .into_iter()
        .map(|l| l.record)
        .collect())
}

// Sweep output

pub fn render_sweep(records: &[SweepRecord]) -> String {
    render_records(SWEEP_FORMAT, records)
}

pub fn parse_sweep(path: &Path, text: &str) -> Result<Vec<SweepRecord>> {
    Ok(parse_records(path, text, SWEEP_FORMAT)?
        .into_iter()
        .map(|l| l.record)
        .collect())
}

// Alpha samples

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSampleRecord {
    pub task: String,
    pub sample_id: String,
    pub config: String,
    pub alpha: f64,
}

// Markov grids

pub fn parse_grid(path: &Path, text: &str) -> Result<MarkovModel> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| parse_error(path, i + 1, format!("bad number {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 0, "no records"));
    }
    MarkovModel::new(rows).map_err(|e| parse_error(path, 0, e.to_string()))
}

pub fn load_grid(path: &Path) -> Result<MarkovModel> {
    parse_grid(path, &read_text(path)?)
}

/// Errors unless `path` exists.
pub fn require_exists(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::Input(format!("{}: no such file", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.jsonl")
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_profiles(p(), "").unwrap_err();
        assert!(err.to_string().contains("no records"));
        let header = r#"{"format":"sdplan-profiles","version":1}"#;
        let err = parse_profiles(p(), header).unwrap_err();
        assert!(err.to_string().contains("no records"));
    }

    #[test]
    fn non_positive_latency_is_line_numbered() {
        let text = concat!(
            "{\"format\":\"sdplan-profiles\",\"version\":1}\n",
            "{\"model_role\":\"target\",\"unit_id\":\"cpu\",\"allocation\":1,\"quantization\":\"w8a8\",\"seq_len\":16,\"latency_ms\":10.0}\n",
            "\n",
            "{\"model_role\":\"target\",\"unit_id\":\"cpu\",\"allocation\":1,\"quantization\":\"w8a8\",\"seq_len\":32,\"latency_ms\":0.0}\n",
        );
        match parse_profiles(p(), text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("latency_ms"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_measurement_is_rejected() {
        let rec = "{\"model_role\":\"drafter\",\"unit_id\":\"gpu\",\"allocation\":1,\"quantization\":\"fp16\",\"seq_len\":16,\"latency_ms\":10.0}\n";
        let text = format!("{{\"format\":\"sdplan-profiles\",\"version\":1}}\n{rec}{rec}");
        match parse_profiles(p(), &text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("first on line 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "{\"format\":\"sdplan-traces\",\"version\":1}\n{}\n";
        assert!(parse_profiles(p(), text).is_err());
        let text = "{\"format\":\"sdplan-profiles\",\"version\":9}\n{}\n";
        assert!(parse_profiles(p(), text).unwrap_err().to_string().contains("version"));
        let text = "{\"model_role\":\"target\"}\n";
        assert!(parse_profiles(p(), text).unwrap_err().to_string().contains("header"));
    }

    #[test]
    fn platform_round_trips() {
        let text = concat!(
            "{\"format\":\"sdplan-platform\",\"version\":1}\n",
            "{\"unit_id\":\"a55\",\"kind\":\"cpu\",\"resource_count\":6}\n",
            "{\"unit_id\":\"mali\",\"kind\":\"gpu\",\"resource_count\":1}\n",
            "{\"partition_count\":2}\n",
        );
        let platform = parse_platform(p(), text).unwrap();
        assert_eq!(platform.unit_count(), 2);
        assert_eq!(render_platform(&platform), text);
    }

    #[test]
    fn platform_requires_partition_count() {
        let text = "{\"format\":\"sdplan-platform\",\"version\":1}\n{\"unit_id\":\"a\",\"kind\":\"cpu\",\"resource_count\":1}\n";
        assert!(parse_platform(p(), text).unwrap_err().to_string().contains("partition_count"));
    }

    #[test]
    fn grid_parses_with_comments() {
        let m = parse_grid(p(), "# toy\n0.5 0.5\n\n0.25 0.75 # row 1\n").unwrap();
        assert_eq!(m.vocab_size(), 2);
        assert!(parse_grid(p(), "0.5 x\n").is_err());
        assert!(parse_grid(p(), "0.5 0.6\n0.5 0.5\n").is_err());
    }
}
