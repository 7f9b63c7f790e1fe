//! Lower bounds versus simulated makespan as the platform grows: the
//! critical path (best device per task) bounds every schedule.
//!
//!     cargo run --example critical_path_bounds

use hetsim::depgraph::{build_graph, Matching};
use hetsim::engine::{critical_path, simulate, Selector};
use hetsim::expansion::augment;
use hetsim::platform::{AcceleratorSpec, KernelProfile, PlatformConfig, Profiles};
use hetsim::workloads::{WorkloadSpec, DGEMM, DSYRK, DTRSM};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = build_graph(&WorkloadSpec::cholesky(6, 64).generate(), Matching::ExactBase);
    let profile = |kernel: &str, compute| KernelProfile {
        kernel: kernel.into(),
        compute_cycles: compute,
        in_transfer_cycles: 4096,
        out_transfer_cycles: 2048,
        fpga_freq_mhz: 100.0,
    };
    let profiles: Profiles = [profile(DGEMM, 16384), profile(DSYRK, 8192), profile(DTRSM, 12288)]
        .into_iter()
        .map(|p| (p.kernel.clone(), p))
        .collect();

    println!("{:>4} {:>6} {:>14} {:>14} {:>14}", "smp", "accels", "cp(smp) ns", "cp(min) ns", "makespan ns");
    for workers in [1, 2, 4, 8] {
        for accels in [0, 1, 2] {
            let config = PlatformConfig {
                smp_workers: workers,
                accelerators: [DGEMM, DSYRK, DTRSM]
                    .iter()
                    .filter(|_| accels > 0)
                    .map(|k| AcceleratorSpec { kernel: (*k).into(), count: accels })
                    .collect(),
                profiles: if accels > 0 { profiles.clone() } else { Default::default() },
                ..PlatformConfig::default()
            };
            let sim = augment(&graph, &config)?;
            let makespan = simulate(&sim, &config)?.makespan;
            let cp_smp = critical_path(&sim, Selector::SmpOnly)?;
            let cp_min = critical_path(&sim, Selector::Min)?;
            assert!(makespan >= cp_min);
            println!(
                "{workers:>4} {accels:>6} {:>14} {:>14} {:>14}",
                cp_smp.to_string(),
                cp_min.to_string(),
                makespan.to_string()
            );
        }
    }
    Ok(())
}
