//! Longest-path lower bound over an augmented graph.

use std::fmt;

use thiserror::Error;

use crate::expansion::SimGraph;
use crate::platform::TimePs;

/// Which execution variant provides each compute node's duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// Fastest uncontended variant.
    Min,
    SmpOnly,
    FpgaOnly,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Min => "min",
            Selector::SmpOnly => "smp-only",
            Selector::FpgaOnly => "fpga-only",
        })
    }
}

#[derive(Debug, Error)]
pub enum CriticalPathError {
    #[error("task {task} has no {selector} variant")]
    Infeasible { task: usize, selector: Selector },
    #[error("time overflow")]
    TimeOverflow,
}

/// Length of the longest path through the creation chain and the task
/// dependences, with accelerator variants costed from dispatch to
/// publication (submits, occupancy, output DMA).
pub fn critical_path(sim: &SimGraph, selector: Selector) -> Result<TimePs, CriticalPathError> {
    let n = sim.n_tasks();
    let mut published = vec![TimePs::ZERO; n];
    let mut creation_end = TimePs::ZERO;
    let mut longest = TimePs::ZERO;

    for task in 0..n {
        let latency = |accel: bool| {
            sim.variants[task]
                .iter()
                .filter(|v| v.is_accel() == accel)
                .map(|v| v.latency(sim.submit_cost).ok_or(CriticalPathError::TimeOverflow))
                .next()
                .transpose()
        };
        let duration = match selector {
            Selector::SmpOnly => latency(false)?,
            Selector::FpgaOnly => latency(true)?,
            Selector::Min => match (latency(false)?, latency(true)?) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
        }
        .ok_or(CriticalPathError::Infeasible { task, selector })?;

        creation_end = creation_end.checked_add(sim.creation_cost).ok_or(CriticalPathError::TimeOverflow)?;
        let start = sim.publication_preds(task).iter().map(|&p| published[p]).fold(creation_end, TimePs::max);
        published[task] = start.checked_add(duration).ok_or(CriticalPathError::TimeOverflow)?;
        longest = longest.max(published[task]);
    }
    Ok(longest.max(creation_end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::{build_graph, Matching};
    use crate::expansion::augment;
    use crate::platform::PlatformConfig;
    use crate::trace::{Dependence, Direction, Target, TaskRecord, TaskTrace};

    fn sim(durations_us: &[u64], chained: bool) -> SimGraph {
        let tasks = durations_us
            .iter()
            .enumerate()
            .map(|(i, &us)| TaskRecord {
                id: i as u64,
                kernel: "k".into(),
                created_at_cycles: 0,
                smp_cycles: us * 1000,
                targets: [Target::Smp].into(),
                deps: if chained {
                    vec![Dependence::new(0x40, 8, Direction::InOut)]
                } else {
                    vec![Dependence::new(0x40 * (i as u64 + 1), 8, Direction::Out)]
                },
            })
            .collect();
        let trace = TaskTrace { cpu_freq_mhz: 1000.0, tasks };
        let config = PlatformConfig { creation_overhead_ns: 0, ..Default::default() };
        augment(&build_graph(&trace, Matching::ExactBase), &config).unwrap()
    }

    #[test]
    fn chain_sums() {
        assert_eq!(critical_path(&sim(&[1, 2, 3], true), Selector::Min).unwrap(), TimePs(6_000_000));
    }

    #[test]
    fn parallel_takes_max() {
        assert_eq!(critical_path(&sim(&[5, 5], false), Selector::Min).unwrap(), TimePs(5_000_000));
    }

    #[test]
    fn fpga_only_on_smp_task_fails() {
        let err = critical_path(&sim(&[1], false), Selector::FpgaOnly).unwrap_err();
        assert!(matches!(err, CriticalPathError::Infeasible { task: 0, selector: Selector::FpgaOnly }));
        assert_eq!(critical_path(&sim(&[1], false), Selector::SmpOnly).unwrap(), TimePs(1_000_000));
    }
}
