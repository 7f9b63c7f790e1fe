//! Task traces: the sequential stream of task instances emitted by an
//! instrumented serial run, and its JSON Lines on-disk format.
//!
//! A trace file starts with a header object
//!
//! ```text
//! {"format":"hetero-trace","version":1,"cpu_freq_mhz":667.0}
//! ```
//!
//! followed by one object per task, in program order:
//!
//! ```text
//! {"id":0,"kernel":"mxmBlock","created_at_cycles":0,"smp_cycles":1048576,"targets":["smp","fpga"],
//!  "deps":[{"addr":"0x10000","len":16384,"dir":"in"}]}
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_NAME: &str = "hetero-trace";
pub const FORMAT_VERSION: u64 = 1;

/// Access direction of a task dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    In,
    Out,
    InOut,
}

impl Direction {
    pub fn reads(self) -> bool {
        matches!(self, Direction::In | Direction::InOut)
    }

    pub fn writes(self) -> bool {
        matches!(self, Direction::Out | Direction::InOut)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "in" => Some(Direction::In),
            "out" => Some(Direction::Out),
            "inout" => Some(Direction::InOut),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A memory region a task reads and/or writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dependence {
    /// Byte address of the region base.
    pub addr: u64,
    /// Region size in bytes.
    pub len: u64,
    pub dir: Direction,
}

impl Dependence {
    pub fn new(addr: u64, len: u64, dir: Direction) -> Self {
        Self { addr, len, dir }
    }

    /// Exclusive end address, saturating at `u64::MAX`.
    pub fn end(&self) -> u64 {
        self.addr.saturating_add(self.len)
    }

    pub fn overlaps(&self, other: &Dependence) -> bool {
        self.addr < other.end() && other.addr < self.end()
    }
}

/// Kind of device a task may run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Smp,
    Fpga,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Smp => "smp",
            Target::Fpga => "fpga",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smp" => Some(Target::Smp),
            "fpga" => Some(Target::Fpga),
            _ => None,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type TargetSet = BTreeSet<Target>;

/// One task instance of the sequential program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    /// Position in program order.
    pub id: u64,
    pub kernel: String,
    /// Creation timestamp of the serial run. Metadata only; ordering comes
    /// from the list position.
    pub created_at_cycles: u64,
    /// Elapsed CPU cycles of the task body.
    pub smp_cycles: u64,
    pub targets: TargetSet,
    pub deps: Vec<Dependence>,
}

impl TaskRecord {
    pub fn n_inputs(&self) -> usize {
        self.deps.iter().filter(|d| d.dir.reads()).count()
    }

    pub fn n_outputs(&self) -> usize {
        self.deps.iter().filter(|d| d.dir.writes()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskTrace {
    /// Frequency at which `smp_cycles` were measured.
    pub cpu_freq_mhz: f64,
    pub tasks: Vec<TaskRecord>,
}

impl TaskTrace {
    pub fn new(cpu_freq_mhz: f64) -> Self {
        Self { cpu_freq_mhz, tasks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// A violated trace invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    NonPositiveFrequency,
    EmptyTargets,
    ZeroSmpCycles,
    DuplicateId,
    IdGap { position: usize },
    ZeroLengthDependence { index: usize },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::NonPositiveFrequency => f.write_str("cpu_freq_mhz must be positive"),
            Rule::EmptyTargets => f.write_str("empty targets"),
            Rule::ZeroSmpCycles => f.write_str("zero smp_cycles with smp target"),
            Rule::DuplicateId => f.write_str("duplicate id"),
            Rule::IdGap { position } => write!(f, "id gap at position {position}"),
            Rule::ZeroLengthDependence { index } => write!(f, "dependence {index} has len 0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Offending task id, `None` for trace-level rules.
    pub task: Option<u64>,
    /// Position of the offending task in the list.
    pub position: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Some(id) => write!(f, "task {id}: {}", self.rule),
            None => write!(f, "trace: {}", self.rule),
        }
    }
}

/// Checks every trace invariant and returns one diagnostic per violation.
pub fn validate_trace(trace: &TaskTrace) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !(trace.cpu_freq_mhz.is_finite() && trace.cpu_freq_mhz > 0.0) {
        out.push(Diagnostic { task: None, position: None, rule: Rule::NonPositiveFrequency });
    }
    let mut seen = HashSet::new();
    for (pos, task) in trace.tasks.iter().enumerate() {
        let diag = |rule| Diagnostic { task: Some(task.id), position: Some(pos), rule };
        if !seen.insert(task.id) {
            out.push(diag(Rule::DuplicateId));
        } else if task.id != pos as u64 {
            out.push(diag(Rule::IdGap { position: pos }));
        }
        if task.targets.is_empty() {
            out.push(diag(Rule::EmptyTargets));
        }
        if task.targets.contains(&Target::Smp) && task.smp_cycles == 0 {
            out.push(diag(Rule::ZeroSmpCycles));
        }
        for (index, dep) in task.deps.iter().enumerate() {
            if dep.len == 0 {
                out.push(diag(Rule::ZeroLengthDependence { index }));
            }
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: missing or malformed header: {reason}")]
    Header { line: usize, reason: String },
    #[error("unsupported trace version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("line {line}: malformed field `{field}`: {reason}")]
    Malformed { line: usize, field: String, reason: String },
    #[error("line {line}: unknown direction \"{value}\"")]
    UnknownDirection { line: usize, value: String },
    #[error("line {line}: unknown target \"{value}\"")]
    UnknownTarget { line: usize, value: String },
    #[error("line {line}: {diagnostic}")]
    Invalid { line: usize, diagnostic: Diagnostic },
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    version: u64,
    cpu_freq_mhz: f64,
}

#[derive(Serialize, Deserialize)]
struct DepLine {
    addr: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    len: Option<u64>,
    dir: String,
}

#[derive(Serialize, Deserialize)]
struct TaskLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    kernel: String,
    #[serde(default)]
    created_at_cycles: u64,
    #[serde(default)]
    smp_cycles: u64,
    targets: Vec<String>,
    #[serde(default)]
    deps: Vec<DepLine>,
}

fn parse_addr(value: &serde_json::Value) -> Result<u64, String> {
    match value {
        serde_json::Value::String(s) => {
            let hex = s
                .strip_prefix("0x")
                .or_else(|| s.strip_prefix("0X"))
                .ok_or_else(|| format!("expected a 0x-prefixed hex string, got \"{s}\""))?;
            u64::from_str_radix(hex, 16).map_err(|e| format!("\"{s}\": {e}"))
        }
        serde_json::Value::Number(n) => n.as_u64().ok_or_else(|| format!("{n} is not an unsigned 64-bit address")),
        other => Err(format!("expected hex string, got {other}")),
    }
}

fn malformed(line: usize, err: serde_json::Error) -> TraceError {
    // serde_json names the offending key in most messages; keep it verbatim.
    let reason = err.to_string();
    let field = reason.split('`').nth(1).map(str::to_owned).unwrap_or_else(|| "<record>".to_owned());
    TraceError::Malformed { line, field, reason }
}

fn parse_task_line(line_no: usize, position: usize, text: &str) -> Result<TaskRecord, TraceError> {
    let raw: TaskLine = serde_json::from_str(text).map_err(|e| malformed(line_no, e))?;
    let mut targets = TargetSet::new();
    for t in &raw.targets {
        let target = Target::parse(t).ok_or_else(|| TraceError::UnknownTarget { line: line_no, value: t.clone() })?;
        targets.insert(target);
    }
    let mut deps = Vec::with_capacity(raw.deps.len());
    for (i, d) in raw.deps.iter().enumerate() {
        let dir = Direction::parse(&d.dir)
            .ok_or_else(|| TraceError::UnknownDirection { line: line_no, value: d.dir.clone() })?;
        let addr = parse_addr(&d.addr).map_err(|reason| TraceError::Malformed {
            line: line_no,
            field: format!("deps[{i}].addr"),
            reason,
        })?;
        deps.push(Dependence { addr, len: d.len.unwrap_or(1), dir });
    }
    Ok(TaskRecord {
        id: raw.id.unwrap_or(position as u64),
        kernel: raw.kernel,
        created_at_cycles: raw.created_at_cycles,
        smp_cycles: raw.smp_cycles,
        targets,
        deps,
    })
}

/// Parses a trace from any buffered reader.
pub fn read_trace<R: BufRead>(reader: R) -> Result<TaskTrace, TraceError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header = None;
    for (line_no, line) in lines.by_ref() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        header = Some((line_no, line));
        break;
    }
    let Some((header_line, header_text)) = header else {
        return Err(TraceError::Header { line: 1, reason: "empty file".into() });
    };
    let header: HeaderLine = serde_json::from_str(&header_text)
        .map_err(|e| TraceError::Header { line: header_line, reason: e.to_string() })?;
    if header.format != FORMAT_NAME {
        return Err(TraceError::Header {
            line: header_line,
            reason: format!("format is \"{}\", expected \"{FORMAT_NAME}\"", header.format),
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(TraceError::UnsupportedVersion(header.version));
    }

    let mut trace = TaskTrace::new(header.cpu_freq_mhz);
    let mut line_of = Vec::new();
    for (line_no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task = parse_task_line(line_no, trace.tasks.len(), &line)?;
        trace.tasks.push(task);
        line_of.push(line_no);
    }

    if let Some(diagnostic) = validate_trace(&trace).into_iter().next() {
        let line = diagnostic.position.map_or(header_line, |p| line_of[p]);
        return Err(TraceError::Invalid { line, diagnostic });
    }
    Ok(trace)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TaskTrace, TraceError> {
    let file = File::open(path)?;
    read_trace(BufReader::new(file))
}

/// Serializes a trace in the JSON Lines format.
pub fn write_trace_to<W: Write>(trace: &TaskTrace, mut out: W) -> Result<(), TraceError> {
    let header =
        HeaderLine { format: FORMAT_NAME.to_owned(), version: FORMAT_VERSION, cpu_freq_mhz: trace.cpu_freq_mhz };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for task in &trace.tasks {
        let line = TaskLine {
            id: Some(task.id),
            kernel: task.kernel.clone(),
            created_at_cycles: task.created_at_cycles,
            smp_cycles: task.smp_cycles,
            targets: task.targets.iter().map(|t| t.as_str().to_owned()).collect(),
            deps: task
                .deps
                .iter()
                .map(|d| DepLine {
                    addr: serde_json::Value::String(format!("{:#x}", d.addr)),
                    len: Some(d.len),
                    dir: d.dir.as_str().to_owned(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace(trace: &TaskTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let file = File::create(path)?;
    write_trace_to(trace, BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"format":"hetero-trace","version":1,"cpu_freq_mhz":1000.0}"#;

    fn parse(body: &str) -> Result<TaskTrace, TraceError> {
        read_trace(format!("{HEADER}\n{body}").as_bytes())
    }

    fn task(id: u64) -> TaskRecord {
        TaskRecord {
            id,
            kernel: "k".into(),
            created_at_cycles: 0,
            smp_cycles: 100,
            targets: [Target::Smp].into(),
            deps: vec![],
        }
    }

    #[test]
    fn minimal_trace() {
        let t = parse(r#"{"id":0,"kernel":"k","smp_cycles":100,"targets":["smp"],"deps":[]}"#).unwrap();
        assert_eq!(t.tasks, vec![task(0)]);
        assert_eq!(t.cpu_freq_mhz, 1000.0);
    }

    #[test]
    fn unknown_direction_names_the_line() {
        let err = parse(r#"{"kernel":"k","smp_cycles":1,"targets":["smp"],"deps":[{"addr":"0x10","dir":"read"}]}"#)
            .unwrap_err();
        assert!(matches!(err, TraceError::UnknownDirection { line: 2, ref value } if value == "read"));
        assert!(err.to_string().contains("unknown direction"));
    }

    #[test]
    fn ids_renumbered_and_len_defaulted() {
        let t = parse(concat!(
            r#"{"kernel":"a","smp_cycles":1,"targets":["smp"],"deps":[{"addr":"0x100","dir":"out"}]}"#,
            "\n",
            r#"{"kernel":"b","smp_cycles":1,"targets":["fpga"],"deps":[{"addr":"0x100","dir":"inout"}]}"#,
        ))
        .unwrap();
        assert_eq!(t.tasks[1].id, 1);
        assert_eq!(t.tasks[0].deps[0], Dependence::new(0x100, 1, Direction::Out));
        assert_eq!(t.tasks[1].deps[0].dir, Direction::InOut);
    }

    #[test]
    fn load_rejects_invariant_violations() {
        let dup = parse(concat!(
            r#"{"id":0,"kernel":"k","smp_cycles":1,"targets":["smp"]}"#,
            "\n",
            r#"{"id":0,"kernel":"k","smp_cycles":1,"targets":["smp"]}"#,
        ))
        .unwrap_err();
        assert!(matches!(dup, TraceError::Invalid { line: 3, ref diagnostic } if diagnostic.rule == Rule::DuplicateId));

        let empty = parse(r#"{"kernel":"k","smp_cycles":1,"targets":[]}"#).unwrap_err();
        assert!(empty.to_string().contains("empty targets"));

        let zero = parse(r#"{"kernel":"k","smp_cycles":0,"targets":["smp"]}"#).unwrap_err();
        assert!(zero.to_string().contains("zero smp_cycles"));

        // fpga-only tasks may legitimately carry no SMP timing
        parse(r#"{"kernel":"k","smp_cycles":0,"targets":["fpga"]}"#).unwrap();
    }

    #[test]
    fn malformed_line_reports_field() {
        let err = parse(r#"{"kernel":"k","smp_cycles":"lots","targets":["smp"]}"#).unwrap_err();
        match err {
            TraceError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse(r#"{"smp_cycles":1,"targets":["smp"]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { ref field, .. } if field == "kernel"), "{err}");
        let err =
            parse(r#"{"kernel":"k","smp_cycles":1,"targets":["smp"],"deps":[{"addr":"256","dir":"in"}]}"#).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { ref field, .. } if field == "deps[0].addr"));
    }

    #[test]
    fn header_checks() {
        let err = read_trace(r#"{"format":"hetero-trace","version":2,"cpu_freq_mhz":1.0}"#.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::UnsupportedVersion(2)));
        let err = read_trace(r#"{"format":"other","version":1,"cpu_freq_mhz":1.0}"#.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Header { .. }));
        assert!(matches!(read_trace("".as_bytes()), Err(TraceError::Header { .. })));
    }

    #[test]
    fn empty_trace_writes_header_only() {
        let mut buf = Vec::new();
        write_trace_to(&TaskTrace::new(667.0), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(read_trace(buf.as_slice()).unwrap(), TaskTrace::new(667.0));
    }

    #[test]
    fn addresses_stay_exact() {
        let mut t = TaskTrace::new(1000.0);
        let mut rec = task(0);
        rec.deps.push(Dependence::new(u64::MAX - 7, 8, Direction::In));
        t.tasks.push(rec);
        let mut buf = Vec::new();
        write_trace_to(&t, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\"0xfffffffffffffff8\""));
        assert_eq!(read_trace(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn validate_diagnostics() {
        let mut t = TaskTrace::new(1000.0);
        t.tasks.push(task(0));
        assert!(validate_trace(&t).is_empty());

        t.tasks[0].targets.clear();
        let d = validate_trace(&t);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule, Rule::EmptyTargets);
        assert_eq!(d[0].to_string(), "task 0: empty targets");

        let mut t = TaskTrace::new(1000.0);
        t.tasks.push(task(0));
        t.tasks.push(task(2));
        let d = validate_trace(&t);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule.to_string(), "id gap at position 1");
        assert_eq!(d[0].task, Some(2));
    }
}
