//! Command-line front end: `gen`, `graph`, `sim` and `sweep`.
//!
//! Exit codes: 0 success, 2 input error, 3 simulation error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::chrome_trace::export_chrome_trace;
use crate::depgraph::{build_graph, export_dot, Matching};
use crate::engine::simulate;
use crate::expansion::{augment, ExpansionError};
use crate::metrics::{apply_baseline, export_summary_csv, render_text, summarize};
use crate::platform::load_config;
use crate::sweep::{run_sweep, SweepSpec};
use crate::trace::{load_trace, write_trace, Target, TargetSet};
use crate::workloads::{Workload, WorkloadSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hetsim", version, about = "Coarse-grain performance estimator for SMP+FPGA task-parallel programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic benchmark trace (matmul, cholesky)
    Gen(GenArgs),
    /// Build the dependency graph of a trace and dump it as DOT
    Graph(GraphArgs),
    /// Simulate a trace on one platform configuration
    Sim(SimArgs),
    /// Simulate a trace under several configurations and rank them
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    workload: String,
    #[arg(long)]
    nb: u32,
    #[arg(long)]
    bs: u32,
    /// Output trace file
    #[arg(long, alias = "out", default_value = "trace.jsonl")]
    trace: PathBuf,
    #[arg(long)]
    element_size: Option<u32>,
    #[arg(long)]
    cpu_freq_mhz: Option<f64>,
    /// Per-kernel SMP cycles, `kernel=cycles`; repeatable
    #[arg(long = "smp-cycles", value_name = "KERNEL=CYCLES")]
    smp_cycles: Vec<String>,
    /// Per-kernel targets, `kernel=smp,fpga`; repeatable
    #[arg(long = "targets", value_name = "KERNEL=TARGETS")]
    targets: Vec<String>,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "graph.dot")]
    dot: PathBuf,
    #[arg(long, default_value = "exact")]
    matching: String,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Name used in reports; defaults to the config file stem
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "exact")]
    matching: String,
    #[arg(long)]
    chrome_trace: Option<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep description (JSON)
    spec: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    baseline: Option<String>,
    /// Overrides the sweep file's matching mode
    #[arg(long)]
    matching: Option<String>,
}

/// Error carrying its exit code.
struct Failed(i32, String);

fn input<E: std::fmt::Display>(e: E) -> Failed {
    Failed(EXIT_INPUT, e.to_string())
}

fn parse_matching(s: &str) -> Result<Matching, Failed> {
    Matching::parse(s).ok_or_else(|| Failed(EXIT_INPUT, format!("unknown matching mode \"{s}\" (exact|overlap)")))
}

/// Runs the CLI with explicit output streams and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Graph(a) => cmd_graph(a, out),
        Command::Sim(a) => cmd_sim(a, out),
        Command::Sweep(a) => cmd_sweep(a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(Failed(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn split_kv(s: &str) -> Result<(&str, &str), Failed> {
    s.split_once('=').ok_or_else(|| Failed(EXIT_INPUT, format!("expected KEY=VALUE, got \"{s}\"")))
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> Result<i32, Failed> {
    let workload = Workload::parse(&a.workload)
        .ok_or_else(|| Failed(EXIT_INPUT, format!("unknown workload \"{}\" (matmul|cholesky)", a.workload)))?;
    if a.nb == 0 || a.bs == 0 {
        return Err(input("--nb and --bs must be >= 1"));
    }
    let mut spec = WorkloadSpec::new(workload, a.nb, a.bs);
    if let Some(e) = a.element_size {
        if e == 0 {
            return Err(input("--element-size must be >= 1"));
        }
        spec = spec.with_element_size(e);
    }
    if let Some(f) = a.cpu_freq_mhz {
        spec = spec.with_cpu_freq_mhz(f);
    }
    for kv in &a.smp_cycles {
        let (k, v) = split_kv(kv)?;
        let cycles: u64 = v.parse().map_err(|_| input(format!("bad cycle count \"{v}\"")))?;
        if !workload.kernels().contains(&k) || cycles == 0 {
            return Err(input(format!("invalid --smp-cycles entry \"{kv}\"")));
        }
        spec = spec.with_smp_cycles(k, cycles);
    }
    for kv in &a.targets {
        let (k, v) = split_kv(kv)?;
        let targets: Option<TargetSet> = v.split(',').map(Target::parse).collect();
        match targets {
            Some(t) if !t.is_empty() && workload.kernels().contains(&k) => spec = spec.with_targets(k, t),
            _ => return Err(input(format!("invalid --targets entry \"{kv}\""))),
        }
    }
    let trace = spec.generate();
    write_trace(&trace, &a.trace).map_err(input)?;
    let _ = writeln!(out, "tasks={}", trace.len());
    Ok(EXIT_OK)
}

fn cmd_graph(a: GraphArgs, out: &mut dyn Write) -> Result<i32, Failed> {
    let matching = parse_matching(&a.matching)?;
    let trace = load_trace(&a.trace).map_err(input)?;
    let graph = build_graph(&trace, matching);
    export_dot(&graph, &a.dot).map_err(input)?;
    let _ = writeln!(out, "tasks={} edges={}", graph.len(), graph.edges().len());
    Ok(EXIT_OK)
}

fn cmd_sim(a: SimArgs, out: &mut dyn Write) -> Result<i32, Failed> {
    let matching = parse_matching(&a.matching)?;
    let trace = load_trace(&a.trace).map_err(input)?;
    let config = load_config(&a.config).map_err(input)?;
    let name = a.name.unwrap_or_else(|| stem(&a.config));

    let graph = build_graph(&trace, matching);
    if let Some(dot) = &a.dot {
        export_dot(&graph, dot).map_err(input)?;
    }
    let sim = augment(&graph, &config).map_err(|e| match e {
        ExpansionError::Unschedulable { .. } => Failed(EXIT_SIMULATION, e.to_string()),
        other => input(other),
    })?;
    let result = simulate(&sim, &config).map_err(|e| Failed(EXIT_SIMULATION, e.to_string()))?;
    let mut summary = summarize(&result, &name).map_err(|e| Failed(EXIT_SIMULATION, e.to_string()))?;
    apply_baseline(std::slice::from_mut(&mut summary), &name).expect("own baseline");

    if let Some(path) = &a.chrome_trace {
        export_chrome_trace(&result, path).map_err(input)?;
    }
    if let Some(path) = &a.csv {
        export_summary_csv(std::slice::from_ref(&summary), &[], path).map_err(input)?;
    }
    let _ = write!(out, "{}", render_text(&summary));
    Ok(EXIT_OK)
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failed> {
    let mut spec = SweepSpec::load(&a.spec).map_err(input)?;
    if let Some(m) = &a.matching {
        spec.matching = parse_matching(m)?;
    }
    if let Some(b) = &a.baseline {
        if !spec.entries.iter().any(|e| &e.name == b) {
            return Err(input(format!("baseline \"{b}\" is not one of the entries")));
        }
    }
    let out_dir = a.out_dir.or_else(|| spec.out_dir.clone()).unwrap_or_else(|| PathBuf::from("sweep-out"));

    let outcome = run_sweep(&spec, a.baseline.as_deref());
    outcome.write(&out_dir).map_err(input)?;
    for f in &outcome.failures {
        let _ = writeln!(err, "config {} failed: {}", f.config, f.reason);
    }
    for s in &outcome.summaries {
        let _ = writeln!(out, "{} makespan_ns={}", s.config, s.makespan);
    }
    match outcome.recommended() {
        Some(best) => {
            let _ = writeln!(out, "recommended={best}");
            Ok(EXIT_OK)
        }
        None => Err(Failed(EXIT_SIMULATION, "every configuration failed".into())),
    }
}

/// `dir/fast.config.json` -> `fast`.
fn stem(p: &Path) -> String {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match stem.strip_suffix(".config") {
        Some(s) if !s.is_empty() => s.to_owned(),
        _ if stem.is_empty() => "config".into(),
        _ => stem,
    }
}
