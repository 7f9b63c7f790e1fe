//! Which Cholesky kernels deserve an accelerator? Compares one
//! full-resource accelerator per kernel against pairs of smaller ones.
//! `dpotrf` always stays on the SMP.
//!
//!     cargo run --example cholesky_sweep

use std::path::PathBuf;

use hetsim::metrics::format_ratio;
use hetsim::sweep::{run_sweep, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cholesky.sweep.json");
    let spec = SweepSpec::load(&path)?;
    let outcome = run_sweep(&spec, None);
    println!("baseline (slowest): {}", outcome.baseline.as_deref().unwrap_or("-"));
    for s in &outcome.summaries {
        let accel = format_ratio(&s.accel_utilization, 3);
        let speedup = s.speedup.as_ref().map(|r| format_ratio(r, 3)).unwrap_or_default();
        println!("{:<12} speedup {speedup}  accel util {accel}  per kernel:", s.config);
        for (kernel, c) in &s.dispatch {
            println!("    {kernel:<7} smp={:<2} fpga={}", c.smp, c.fpga);
        }
    }
    print!("\n{}", outcome.csv());
    Ok(())
}
