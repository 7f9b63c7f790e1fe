#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use hetsim::depgraph::{build_graph, Matching};
use hetsim::engine::{critical_path, simulate, Selector, SimResult};
use hetsim::expansion::{augment, NodeKind, SimGraph};
use hetsim::platform::{load_config, AcceleratorSpec, KernelProfile, PlatformConfig, TimePs};
use hetsim::trace::{load_trace, Dependence, Direction, Target, TargetSet, TaskRecord, TaskTrace};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden() -> (TaskTrace, PlatformConfig) {
    let trace = load_trace(fixture("golden_fpga.trace.jsonl")).unwrap();
    let config = load_config(fixture("golden_fpga.config.json")).unwrap();
    (trace, config)
}

pub fn run(trace: &TaskTrace, config: &PlatformConfig) -> (SimGraph, SimResult) {
    let sim = augment(&build_graph(trace, Matching::ExactBase), config).unwrap();
    let result = simulate(&sim, config).unwrap();
    (sim, result)
}

/// The golden timeline as `(kind, task, device name, start_ns, end_ns)`.
pub const GOLDEN: [(&str, usize, &str, u64, u64); 10] = [
    ("creation", 0, "smp_main", 0, 1),
    ("creation", 1, "smp_main", 1, 2),
    ("submit_in", 0, "submit_unit", 1, 6),
    ("compute", 0, "accel:k#0", 6, 116),
    ("submit_in", 1, "submit_unit", 6, 11),
    ("submit_out", 0, "submit_unit", 116, 121),
    ("compute", 1, "accel:k#0", 116, 226),
    ("output_dma", 0, "output_dma_unit", 121, 141),
    ("submit_out", 1, "submit_unit", 226, 231),
    ("output_dma", 1, "output_dma_unit", 231, 251),
];

/// Compares a timeline against [`GOLDEN`]; returns a description of the
/// first difference.
pub fn golden_mismatch(result: &SimResult) -> Option<String> {
    let mut got: Vec<(String, usize, String, u64, u64)> = result
        .timeline
        .iter()
        .map(|i| {
            (
                i.kind.as_str().to_owned(),
                i.origin.unwrap_or(usize::MAX),
                result.devices[i.device].to_string(),
                i.start.0,
                i.end.0,
            )
        })
        .collect();
    let mut want: Vec<(String, usize, String, u64, u64)> =
        GOLDEN.iter().map(|&(k, t, d, s, e)| (k.to_owned(), t, d.to_owned(), s * 1000, e * 1000)).collect();
    got.sort();
    want.sort();
    if got != want {
        return Some(format!("timeline differs:\n got  {got:?}\n want {want:?}"));
    }
    if result.makespan != TimePs(251_000) {
        return Some(format!("makespan {} ns", result.makespan));
    }
    None
}

pub const KERNELS: [&str; 3] = ["ka", "kb", "kc"];

/// Random trace over a small address pool so that conflicts are frequent.
/// Every task targets SMP when `smp_always` is set.
pub fn random_trace<R: Rng>(rng: &mut R, max_tasks: usize, max_deps: usize, smp_always: bool) -> TaskTrace {
    const POOL: [(u64, u64); 6] = [(0x00, 8), (0x08, 8), (0x04, 8), (0x40, 16), (0x48, 4), (0x80, 32)];
    let n = rng.random_range(0..=max_tasks);
    let mut trace = TaskTrace::new([100.0, 667.0, 1000.0][rng.random_range(0..3)]);
    let mut created = 0;
    for id in 0..n as u64 {
        let nd = rng.random_range(0..=max_deps);
        let deps = (0..nd)
            .map(|_| {
                let &(addr, len) = POOL.choose(rng).unwrap();
                let dir = [Direction::In, Direction::Out, Direction::InOut][rng.random_range(0..3)];
                Dependence::new(addr, len, dir)
            })
            .collect();
        let targets: TargetSet = match (smp_always, rng.random_range(0..3)) {
            (true, 0) | (false, 0) => [Target::Smp].into(),
            (true, _) | (false, 1) => [Target::Smp, Target::Fpga].into(),
            (false, _) => [Target::Fpga].into(),
        };
        let smp_cycles = rng.random_range(1..5_000);
        trace.tasks.push(TaskRecord {
            id,
            kernel: KERNELS.choose(rng).unwrap().to_string(),
            created_at_cycles: created,
            smp_cycles,
            targets,
            deps,
        });
        created += smp_cycles;
    }
    trace
}

/// Random platform on which every task of `trace` is schedulable.
pub fn random_config<R: Rng>(rng: &mut R, trace: &TaskTrace) -> PlatformConfig {
    let mut config = PlatformConfig {
        smp_workers: rng.random_range(1..=4),
        creation_overhead_ns: rng.random_range(0..50),
        submit_cost_ns: rng.random_range(0..20),
        cpu_freq_mhz: if rng.random_bool(0.5) { None } else { Some([200.0, 800.0][rng.random_range(0..2)]) },
        ..PlatformConfig::default()
    };
    for k in KERNELS {
        let fpga_only = trace.tasks.iter().any(|t| t.kernel == k && !t.targets.contains(&Target::Smp));
        let count = if fpga_only { rng.random_range(1..=2) } else { rng.random_range(0..=2) };
        if count > 0 {
            config.accelerators.push(AcceleratorSpec { kernel: k.into(), count });
        }
        config.profiles.insert(
            k.into(),
            KernelProfile {
                kernel: k.into(),
                compute_cycles: rng.random_range(1..3_000),
                in_transfer_cycles: rng.random_range(0..500),
                out_transfer_cycles: rng.random_range(0..500),
                fpga_freq_mhz: [100.0, 150.0, 333.0, 1000.0][rng.random_range(0..4)],
            },
        );
    }
    config
}

/// Checks the scheduling invariants of one simulation; returns violations.
pub fn bound_violations(sim: &SimGraph, result: &SimResult) -> Vec<String> {
    let mut v = Vec::new();
    let n = sim.n_tasks();

    let cp = critical_path(sim, Selector::Min).unwrap();
    if result.makespan < cp {
        v.push(format!("makespan {} < critical path {}", result.makespan, cp));
    }

    let fpga: u64 = result.dispatch.values().map(|c| c.fpga).sum();
    let smp: u64 = result.dispatch.values().map(|c| c.smp).sum();
    if n > 0 && smp == 0 && fpga > 0 {
        let dma: TimePs = result.timeline.iter().filter(|i| i.kind == NodeKind::OutputDma).map(|i| i.duration()).sum();
        if result.makespan < dma {
            v.push(format!("makespan {} < output DMA total {}", result.makespan, dma));
        }
    }
    if (smp + fpga) as usize != n || result.tasks.len() != n {
        v.push(format!("{n} tasks but {smp}+{fpga} dispatches"));
    }

    let total: TimePs = result.timeline.iter().map(|i| i.duration()).sum();
    if result.makespan > total {
        v.push(format!("makespan {} > sum of all intervals {}", result.makespan, total));
    }

    let mut per_device: BTreeMap<usize, Vec<(TimePs, TimePs)>> = BTreeMap::new();
    for i in &result.timeline {
        if i.end < i.start {
            v.push(format!("negative interval {i:?}"));
        }
        if i.end > result.makespan {
            v.push(format!("interval past makespan {i:?}"));
        }
        if i.end > i.start {
            per_device.entry(i.device).or_default().push((i.start, i.end));
        }
    }
    for (d, ivs) in &mut per_device {
        ivs.sort();
        for w in ivs.windows(2) {
            if w[1].0 < w[0].1 {
                v.push(format!("overlap on device {d}: {:?} and {:?}", w[0], w[1]));
            }
        }
    }

    for t in &result.tasks {
        for &p in sim.graph.preds(t.task) {
            let published = result.tasks.iter().find(|o| o.task == p).map(|o| o.published_at);
            match published {
                Some(pub_at) if t.first_start >= pub_at => {}
                _ => v.push(format!("task {} starts at {} before predecessor {p} publishes", t.task, t.first_start)),
            }
        }
    }
    v
}
