//! Generates the two benchmark traces and writes them as JSON lines.
//!
//!     cargo run --example generate_traces -- [out_dir]

use hetsim::trace::write_trace;
use hetsim::workloads::WorkloadSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "traces".into());
    std::fs::create_dir_all(&out)?;
    for (name, spec) in [
        ("matmul_nb4_bs64", WorkloadSpec::matmul(4, 64)),
        ("matmul_nb2_bs128", WorkloadSpec::matmul(2, 128)),
        ("cholesky_nb4_bs64", WorkloadSpec::cholesky(4, 64)),
    ] {
        let trace = spec.generate();
        let path = format!("{out}/{name}.trace.jsonl");
        write_trace(&trace, &path)?;
        let cycles: u64 = trace.tasks.iter().map(|t| t.smp_cycles).sum();
        println!("{path}: {} tasks, {cycles} serial cycles", trace.len());
    }
    Ok(())
}
