//! Simulates the 128x128 matrix multiply with the SMP allowed to steal
//! tasks, and writes a timeline for chrome://tracing or ui.perfetto.dev.
//! The long SMP bars show the load imbalance of a poor placement.
//!
//!     cargo run --example chrome_timeline -- [out.json]

use hetsim::chrome_trace::export_chrome_trace;
use hetsim::depgraph::{build_graph, Matching};
use hetsim::engine::simulate;
use hetsim::expansion::augment;
use hetsim::metrics::{busy_by_kind, render_text, summarize};
use hetsim::platform::{AcceleratorSpec, KernelProfile, PlatformConfig};
use hetsim::workloads::{WorkloadSpec, MXM_BLOCK};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "matmul.trace.json".into());
    let trace = WorkloadSpec::matmul(2, 128).generate();
    let config = PlatformConfig {
        smp_workers: 2,
        accelerators: vec![AcceleratorSpec { kernel: MXM_BLOCK.into(), count: 1 }],
        profiles: [(
            MXM_BLOCK.to_owned(),
            KernelProfile {
                kernel: MXM_BLOCK.into(),
                compute_cycles: 65536,
                in_transfer_cycles: 24576,
                out_transfer_cycles: 8192,
                fpga_freq_mhz: 100.0,
            },
        )]
        .into(),
        ..PlatformConfig::default()
    };
    let sim = augment(&build_graph(&trace, Matching::ExactBase), &config)?;
    let result = simulate(&sim, &config)?;
    export_chrome_trace(&result, &out)?;

    print!("{}", render_text(&summarize(&result, "1acc-128+smp")?));
    for (kind, t) in busy_by_kind(&result) {
        println!("busy {kind}: {t} ns");
    }
    println!("timeline written to {out}");
    Ok(())
}
