//! Configuration sweeps: one application trace simulated under several
//! platform configurations, compared against a baseline.
//!
//! A sweep file is a JSON document:
//!
//! ```text
//! {
//!   "workload": {"name": "matmul", "nb": 4, "bs": 64},   // or "trace": "app.jsonl"
//!   "base_config": "base.json",                           // or "base": {...}
//!   "baseline": "1acc-128+smp",                           // optional, default: slowest
//!   "matching": "exact",                                  // optional
//!   "out_dir": "out",                                     // optional
//!   "entries": [
//!     {"name": "2acc-64", "overrides": {"accelerators": [{"kernel": "mxmBlock", "count": 2}]}},
//!     {"name": "1acc-128", "workload": {"name": "matmul", "nb": 2, "bs": 128}, "overrides": {...}}
//!   ]
//! }
//! ```
//!
//! Overrides replace top-level keys of the base config document. Relative
//! paths are resolved against the file that mentions them.

use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::chrome_trace::chrome_trace_json;
use crate::depgraph::{build_graph, Matching};
use crate::engine::{simulate, SimResult};
use crate::expansion::augment;
use crate::metrics::{apply_baseline, slowest, sort_fastest_first, summarize, summary_csv, Failure, Summary};
use crate::platform::PlatformConfig;
use crate::trace::{load_trace, TaskTrace};
use crate::workloads::WorkloadSpec;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("sweep file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sweep file: {0}")]
    Invalid(String),
}

/// Where an application trace comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Generated(WorkloadSpec),
}

impl TraceSource {
    pub fn load(&self) -> Result<TaskTrace, String> {
        match self {
            TraceSource::File(p) => load_trace(p).map_err(|e| format!("{}: {e}", p.display())),
            TraceSource::Generated(spec) => Ok(spec.generate()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub name: String,
    /// Top-level config keys replacing those of the base document.
    pub overrides: Map<String, Value>,
    pub trace: Option<TraceSource>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub trace: Option<TraceSource>,
    /// Base config document; any `profiles_path` in it is already absolute
    /// or relative to the working directory.
    pub base: Map<String, Value>,
    pub baseline: Option<String>,
    pub matching: Matching,
    pub out_dir: Option<PathBuf>,
    pub entries: Vec<SweepEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    #[serde(default)]
    trace: Option<PathBuf>,
    #[serde(default)]
    workload: Option<WorkloadSpec>,
    #[serde(default)]
    base_config: Option<PathBuf>,
    #[serde(default)]
    base: Option<Map<String, Value>>,
    #[serde(default)]
    baseline: Option<String>,
    #[serde(default)]
    matching: Option<String>,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    entries: Vec<EntryDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    name: String,
    #[serde(default)]
    overrides: Map<String, Value>,
    #[serde(default)]
    trace: Option<PathBuf>,
    #[serde(default)]
    workload: Option<WorkloadSpec>,
}

fn anchor(dir: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        dir.join(p)
    } else {
        p
    }
}

fn anchor_profiles_path(doc: &mut Map<String, Value>, dir: &Path) {
    if let Some(Value::String(p)) = doc.get("profiles_path") {
        let resolved = anchor(dir, PathBuf::from(p));
        doc.insert("profiles_path".into(), Value::String(resolved.to_string_lossy().into_owned()));
    }
}

fn trace_source(
    trace: Option<PathBuf>,
    workload: Option<WorkloadSpec>,
    dir: &Path,
    what: &str,
) -> Result<Option<TraceSource>, SweepError> {
    match (trace, workload) {
        (Some(_), Some(_)) => Err(SweepError::Invalid(format!("{what}: give either `trace` or `workload`, not both"))),
        (Some(p), None) => Ok(Some(TraceSource::File(anchor(dir, p)))),
        (None, Some(w)) => Ok(Some(TraceSource::Generated(w))),
        (None, None) => Ok(None),
    }
}

impl SweepSpec {
    /// Parses a sweep document; relative paths resolve against `dir`.
    pub fn from_json(text: &str, dir: &Path) -> Result<Self, SweepError> {
        let doc: SweepDoc = serde_json::from_str(text)?;
        let base = match (doc.base_config, doc.base) {
            (Some(_), Some(_)) => {
                return Err(SweepError::Invalid("give either `base_config` or `base`, not both".into()));
            }
            (Some(path), None) => {
                let path = anchor(dir, path);
                let text =
                    std::fs::read_to_string(&path).map_err(|source| SweepError::Io { path: path.clone(), source })?;
                let mut map: Map<String, Value> = serde_json::from_str(&text)?;
                anchor_profiles_path(&mut map, path.parent().unwrap_or(Path::new(".")));
                map
            }
            (None, Some(mut map)) => {
                anchor_profiles_path(&mut map, dir);
                map
            }
            (None, None) => Map::new(),
        };

        let matching = match doc.matching.as_deref() {
            None => Matching::default(),
            Some(m) => Matching::parse(m).ok_or_else(|| SweepError::Invalid(format!("unknown matching \"{m}\"")))?,
        };
        let entries = doc
            .entries
            .into_iter()
            .map(|e| {
                let mut overrides = e.overrides;
                anchor_profiles_path(&mut overrides, dir);
                let what = format!("entry \"{}\"", e.name);
                Ok(SweepEntry { trace: trace_source(e.trace, e.workload, dir, &what)?, name: e.name, overrides })
            })
            .collect::<Result<Vec<_>, SweepError>>()?;

        let spec = SweepSpec {
            trace: trace_source(doc.trace, doc.workload, dir, "sweep")?,
            base,
            baseline: doc.baseline,
            matching,
            out_dir: doc.out_dir.map(|p| anchor(dir, p)),
            entries,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SweepError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SweepError::Io { path: path.into(), source })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.entries.is_empty() {
            return Err(SweepError::Invalid("no entries".into()));
        }
        let mut names = BTreeSet::new();
        for e in &self.entries {
            if !names.insert(e.name.as_str()) {
                return Err(SweepError::Invalid(format!("duplicate config name \"{}\"", e.name)));
            }
            if e.trace.is_none() && self.trace.is_none() {
                return Err(SweepError::Invalid(format!("entry \"{}\" has no trace or workload", e.name)));
            }
        }
        if let Some(b) = &self.baseline {
            if !names.contains(b.as_str()) {
                return Err(SweepError::Invalid(format!("baseline \"{b}\" is not one of the entries")));
            }
        }
        Ok(())
    }

    pub fn entry_config(&self, entry: &SweepEntry) -> Result<PlatformConfig, String> {
        let mut doc = self.base.clone();
        for (k, v) in &entry.overrides {
            doc.insert(k.clone(), v.clone());
        }
        PlatformConfig::from_value(Value::Object(doc), None).map_err(|e| e.to_string())
    }
}

/// Simulates one entry end to end.
pub fn run_entry(spec: &SweepSpec, entry: &SweepEntry) -> Result<SimResult, String> {
    let source = entry.trace.as_ref().or(spec.trace.as_ref()).expect("validated");
    let trace = source.load()?;
    let config = spec.entry_config(entry)?;
    let graph = build_graph(&trace, spec.matching);
    let sim = augment(&graph, &config).map_err(|e| e.to_string())?;
    simulate(&sim, &config).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Successful runs in entry order.
    pub results: Vec<(String, SimResult)>,
    /// Sorted fastest first.
    pub summaries: Vec<Summary>,
    pub failures: Vec<Failure>,
    pub baseline: Option<String>,
}

impl SweepOutcome {
    pub fn recommended(&self) -> Option<&str> {
        self.summaries.first().map(|s| s.config.as_str())
    }

    pub fn csv(&self) -> String {
        summary_csv(&self.summaries, &self.failures)
    }

    /// Writes `summary.csv` and one `<config>.trace.json` per successful
    /// configuration.
    pub fn write(&self, out_dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("summary.csv"), self.csv())?;
        for (name, result) in &self.results {
            std::fs::write(out_dir.join(format!("{}.trace.json", file_stem(name))), chrome_trace_json(result))?;
        }
        Ok(())
    }
}

/// Config names made safe for use as file names.
pub fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.+".contains(c) { c } else { '_' }).collect()
}

/// Runs every entry (in parallel) and aggregates the results. The outcome
/// does not depend on execution order.
pub fn run_sweep(spec: &SweepSpec, baseline: Option<&str>) -> SweepOutcome {
    let runs: Vec<(String, Result<SimResult, String>)> =
        spec.entries.par_iter().map(|e| (e.name.clone(), run_entry(spec, e))).collect();

    let mut results = Vec::new();
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (name, run) in runs {
        match run.and_then(|r| summarize(&r, &name).map(|s| (r, s)).map_err(|e| e.to_string())) {
            Ok((r, s)) => {
                results.push((name, r));
                summaries.push(s);
            }
            Err(reason) => failures.push(Failure { config: name, reason }),
        }
    }

    let baseline = baseline
        .map(str::to_owned)
        .or_else(|| spec.baseline.clone())
        .or_else(|| slowest(&summaries).map(str::to_owned));
    if let Some(b) = &baseline {
        // A failed baseline leaves speedups empty.
        let _ = apply_baseline(&mut summaries, b);
    }
    sort_fastest_first(&mut summaries);
    SweepOutcome { results, summaries, failures, baseline }
}
