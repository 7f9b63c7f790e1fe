//! Two independent FPGA-only tasks sharing one accelerator: the second
//! task's input submit overlaps the first one's computation, and the shared
//! submit and output-DMA units serialize the transfers.
//!
//!     cargo run --example golden_fpga_timeline

use hetsim::depgraph::{build_graph, Matching};
use hetsim::engine::simulate;
use hetsim::expansion::augment;
use hetsim::platform::{AcceleratorSpec, KernelProfile, PlatformConfig};
use hetsim::trace::{Dependence, Direction, Target, TaskRecord, TaskTrace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = |id: u64| TaskRecord {
        id,
        kernel: "k".into(),
        created_at_cycles: id * 1000,
        smp_cycles: 1000,
        targets: [Target::Fpga].into(),
        deps: vec![
            Dependence::new(0x100 * (id + 1), 64, Direction::In),
            Dependence::new(0x1000 * (id + 1), 64, Direction::Out),
        ],
    };
    let trace = TaskTrace { cpu_freq_mhz: 1000.0, tasks: vec![task(0), task(1)] };
    let config = PlatformConfig {
        creation_overhead_ns: 1,
        submit_cost_ns: 5,
        accelerators: vec![AcceleratorSpec { kernel: "k".into(), count: 1 }],
        profiles: [(
            "k".to_owned(),
            KernelProfile {
                kernel: "k".into(),
                compute_cycles: 100,
                in_transfer_cycles: 10,
                out_transfer_cycles: 20,
                fpga_freq_mhz: 1000.0,
            },
        )]
        .into(),
        ..PlatformConfig::default()
    };

    let sim = augment(&build_graph(&trace, Matching::ExactBase), &config)?;
    let result = simulate(&sim, &config)?;
    for i in &result.timeline {
        println!(
            "{:<16} t{} {:<16} [{:>3}, {:>3}) ns",
            i.kind.as_str(),
            i.origin.unwrap_or(0),
            result.devices[i.device].to_string(),
            i.start,
            i.end
        );
    }
    println!("makespan = {} ns", result.makespan);
    Ok(())
}
