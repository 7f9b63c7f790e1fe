//! Block-size / accelerator-count / eligibility trade-off for the tiled
//! matrix multiply, using the sweep fixture of the test suite.
//!
//!     cargo run --example matmul_codesign -- [sweep.json] [out_dir]

use std::path::PathBuf;

use hetsim::metrics::format_ratio;
use hetsim::sweep::{run_sweep, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let spec_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/matmul.sweep.json"));
    let out = args.next().unwrap_or_else(|| "matmul-sweep".into());

    let spec = SweepSpec::load(&spec_path)?;
    let outcome = run_sweep(&spec, None);
    outcome.write(out.as_ref())?;

    println!("{:<22} {:>14} {:>8} {:>6} {:>6}", "config", "makespan_ns", "speedup", "smp", "fpga");
    for s in &outcome.summaries {
        let speedup = s.speedup.as_ref().map(|r| format_ratio(r, 2)).unwrap_or_default();
        println!(
            "{:<22} {:>14} {:>8} {:>6} {:>6}",
            s.config,
            s.makespan.to_string(),
            speedup,
            s.smp_dispatches(),
            s.fpga_dispatches()
        );
    }
    for f in &outcome.failures {
        println!("{:<22} failed: {}", f.config, f.reason);
    }
    println!("recommended: {}", outcome.recommended().unwrap_or("none"));
    println!("CSV and timelines written to {out}/");
    Ok(())
}
