//! Augments a task graph with runtime costs: a serialized creation chain on
//! the main SMP thread, per-device execution variants, and the submit and
//! output-DMA work an accelerator dispatch brings along.
//!
//! Static nodes are laid out as `creation(i) = 2i`, `compute(i) = 2i + 1`.
//! Submit and output-DMA nodes only exist once the engine commits a task to
//! an accelerator; [`dispatch_nodes`] describes what such a dispatch adds.

use std::fmt;

use thiserror::Error;

use crate::depgraph::TaskGraph;
use crate::platform::{effective_targets, Frequency, PlatformConfig, PlatformError, TimePs};
use crate::trace::Target;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Creation,
    Compute,
    SubmitIn,
    SubmitOut,
    OutputDma,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Creation => "creation",
            NodeKind::Compute => "compute",
            NodeKind::SubmitIn => "submit_in",
            NodeKind::SubmitOut => "submit_out",
            NodeKind::OutputDma => "output_dma",
        }
    }

    pub fn is_transfer(self) -> bool {
        matches!(self, NodeKind::SubmitIn | NodeKind::SubmitOut | NodeKind::OutputDma)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which kind of device may execute a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceClass {
    SmpMain,
    SmpAny,
    Accel(String),
    SubmitUnit,
    OutputDmaUnit,
}

/// One way of executing a task body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    /// `SmpAny` or `Accel(kernel)`.
    pub device: DeviceClass,
    /// Device occupancy. For accelerators this folds the input transfer into
    /// the compute time.
    pub body: TimePs,
    /// `in` + `inout` dependences; one submit per input on dispatch.
    pub n_inputs: usize,
    /// `out` + `inout` dependences; one submit per output on dispatch.
    pub n_outputs: usize,
    /// Serialized output transfer, accelerator variants only.
    pub out_dma: TimePs,
}

impl Variant {
    pub fn is_accel(&self) -> bool {
        matches!(self.device, DeviceClass::Accel(_))
    }

    /// Uncontended time from dispatch to publication.
    pub fn latency(&self, submit_cost: TimePs) -> Option<TimePs> {
        if !self.is_accel() {
            return Some(self.body);
        }
        let submits = submit_cost.checked_mul((self.n_inputs + self.n_outputs) as u64)?;
        submits.checked_add(self.body)?.checked_add(self.out_dma)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimNode {
    pub id: NodeId,
    pub origin: Option<usize>,
    pub kind: NodeKind,
    /// `None` for compute nodes, whose device comes from a variant.
    pub class: Option<DeviceClass>,
    /// Fixed duration of non-compute nodes.
    pub duration: TimePs,
    pub preds: Vec<NodeId>,
    pub succs: Vec<NodeId>,
}

/// A node the engine creates when it dispatches a compute node to an
/// accelerator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicNode {
    pub kind: NodeKind,
    pub class: DeviceClass,
    pub duration: TimePs,
}

/// Nodes materialized by an accelerator dispatch, in id order: one
/// `submit_in` per input dependence, one `submit_out` per output
/// dependence, then the output DMA.
pub fn dispatch_nodes(variant: &Variant, submit_cost: TimePs) -> Vec<DynamicNode> {
    debug_assert!(variant.is_accel());
    let submit = |kind| DynamicNode { kind, class: DeviceClass::SubmitUnit, duration: submit_cost };
    let mut out = Vec::with_capacity(variant.n_inputs + variant.n_outputs + 1);
    out.extend((0..variant.n_inputs).map(|_| submit(NodeKind::SubmitIn)));
    out.extend((0..variant.n_outputs).map(|_| submit(NodeKind::SubmitOut)));
    out.push(DynamicNode { kind: NodeKind::OutputDma, class: DeviceClass::OutputDmaUnit, duration: variant.out_dma });
    out
}

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("task {task} (kernel \"{kernel}\") is unschedulable: no eligible device in this configuration")]
    Unschedulable { task: usize, kernel: String },
    #[error("eligibility override for kernel \"{kernel}\" adds target {target} not declared by task {task}")]
    OverrideExtends { task: usize, kernel: String, target: Target },
    #[error("kernel \"{0}\" has accelerators but no timing profile")]
    MissingProfile(String),
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

/// The task graph plus everything the engine needs to schedule it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGraph {
    pub graph: TaskGraph,
    /// Static nodes: creation and compute, interleaved per task.
    pub nodes: Vec<SimNode>,
    /// Execution variants per task, SMP first when present.
    pub variants: Vec<Vec<Variant>>,
    pub creation_cost: TimePs,
    pub submit_cost: TimePs,
}

impl SimGraph {
    pub fn n_tasks(&self) -> usize {
        self.graph.len()
    }

    pub fn creation_node(task: usize) -> NodeId {
        2 * task
    }

    pub fn compute_node(task: usize) -> NodeId {
        2 * task + 1
    }

    pub fn smp_variant(&self, task: usize) -> Option<&Variant> {
        self.variants[task].iter().find(|v| !v.is_accel())
    }

    pub fn accel_variant(&self, task: usize) -> Option<&Variant> {
        self.variants[task].iter().find(|v| v.is_accel())
    }

    /// Tasks whose publication gates `task`'s compute node.
    pub fn publication_preds(&self, task: usize) -> &[usize] {
        self.graph.preds(task)
    }
}

pub fn augment(graph: &TaskGraph, config: &PlatformConfig) -> Result<SimGraph, ExpansionError> {
    let cpu = Frequency::from_mhz(config.cpu_freq_mhz.unwrap_or(graph.cpu_freq_mhz))?;
    let creation_cost = TimePs::from_ns(config.creation_overhead_ns)?;
    let submit_cost = TimePs::from_ns(config.submit_cost_ns)?;

    let n = graph.len();
    let mut nodes = Vec::with_capacity(2 * n);
    let mut variants = Vec::with_capacity(n);

    for (i, task) in graph.tasks.iter().enumerate() {
        let targets = effective_targets(&task.targets, config.eligibility_overrides.get(&task.kernel))
            .map_err(|target| ExpansionError::OverrideExtends { task: i, kernel: task.kernel.clone(), target })?;

        let n_inputs = task.n_inputs();
        let n_outputs = task.n_outputs();
        let mut table = Vec::new();
        if targets.contains(&Target::Smp) {
            table.push(Variant {
                device: DeviceClass::SmpAny,
                body: cpu.cycles_to_ps(task.smp_cycles)?,
                n_inputs,
                n_outputs,
                out_dma: TimePs::ZERO,
            });
        }
        if targets.contains(&Target::Fpga) && config.accelerator_count(&task.kernel) > 0 {
            let profile =
                config.profiles.get(&task.kernel).ok_or_else(|| ExpansionError::MissingProfile(task.kernel.clone()))?;
            let fpga = Frequency::from_mhz(profile.fpga_freq_mhz)?;
            let body_cycles =
                profile.in_transfer_cycles.checked_add(profile.compute_cycles).ok_or(PlatformError::TimeOverflow)?;
            table.push(Variant {
                device: DeviceClass::Accel(task.kernel.clone()),
                body: fpga.cycles_to_ps(body_cycles)?,
                n_inputs,
                n_outputs,
                out_dma: fpga.cycles_to_ps(profile.out_transfer_cycles)?,
            });
        }
        if table.is_empty() {
            return Err(ExpansionError::Unschedulable { task: i, kernel: task.kernel.clone() });
        }
        variants.push(table);

        let creation = SimGraph::creation_node(i);
        let compute = SimGraph::compute_node(i);
        let mut creation_preds = Vec::new();
        if i > 0 {
            creation_preds.push(SimGraph::creation_node(i - 1));
        }
        let mut creation_succs = vec![compute];
        if i + 1 < n {
            creation_succs.push(SimGraph::creation_node(i + 1));
        }
        nodes.push(SimNode {
            id: creation,
            origin: Some(i),
            kind: NodeKind::Creation,
            class: Some(DeviceClass::SmpMain),
            duration: creation_cost,
            preds: creation_preds,
            succs: creation_succs,
        });
        nodes.push(SimNode {
            id: compute,
            origin: Some(i),
            kind: NodeKind::Compute,
            class: None,
            duration: TimePs::ZERO,
            preds: vec![creation],
            succs: Vec::new(),
        });
    }

    Ok(SimGraph { graph: graph.clone(), nodes, variants, creation_cost, submit_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::{build_graph, Matching};
    use crate::platform::{AcceleratorSpec, KernelProfile};
    use crate::trace::{Dependence, Direction, TargetSet, TaskRecord, TaskTrace};

    fn one_task(targets: TargetSet) -> TaskGraph {
        let trace = TaskTrace {
            cpu_freq_mhz: 1000.0,
            tasks: vec![TaskRecord {
                id: 0,
                kernel: "k".into(),
                created_at_cycles: 0,
                smp_cycles: 100,
                targets,
                deps: vec![Dependence::new(0x10, 4, Direction::In), Dependence::new(0x20, 4, Direction::InOut)],
            }],
        };
        build_graph(&trace, Matching::ExactBase)
    }

    fn profile() -> KernelProfile {
        KernelProfile {
            kernel: "k".into(),
            compute_cycles: 100,
            in_transfer_cycles: 10,
            out_transfer_cycles: 20,
            fpga_freq_mhz: 1000.0,
        }
    }

    #[test]
    fn smp_only_task() {
        let sim = augment(&one_task([Target::Smp].into()), &PlatformConfig::default()).unwrap();
        assert_eq!(sim.nodes.len(), 2);
        assert_eq!(sim.nodes[0].kind, NodeKind::Creation);
        assert_eq!(sim.nodes[0].duration, TimePs(1_000_000));
        assert_eq!(sim.nodes[0].succs, vec![1]);
        assert_eq!(sim.nodes[1].preds, vec![0]);
        assert_eq!(sim.variants[0].len(), 1);
        assert_eq!(sim.variants[0][0].body, TimePs(100_000));
    }

    #[test]
    fn fpga_only_without_accelerator_is_unschedulable() {
        let err = augment(&one_task([Target::Fpga].into()), &PlatformConfig::default()).unwrap_err();
        assert!(matches!(err, ExpansionError::Unschedulable { task: 0, ref kernel } if kernel == "k"));
    }

    #[test]
    fn accel_variant_folds_input_transfer() {
        let mut config = PlatformConfig::default();
        config.accelerators.push(AcceleratorSpec { kernel: "k".into(), count: 1 });
        config.profiles.insert("k".into(), profile());
        let sim = augment(&one_task([Target::Smp, Target::Fpga].into()), &config).unwrap();
        let acc = sim.accel_variant(0).unwrap();
        assert_eq!(acc.body, TimePs(110_000));
        assert_eq!(acc.out_dma, TimePs(20_000));
        assert_eq!((acc.n_inputs, acc.n_outputs), (2, 1));
        let dyn_nodes = dispatch_nodes(acc, sim.submit_cost);
        assert_eq!(dyn_nodes.len(), 2 + 1 + 1);
        assert_eq!(dyn_nodes.last().unwrap().kind, NodeKind::OutputDma);
        assert_eq!(acc.latency(TimePs(5_000)), Some(TimePs(15_000 + 110_000 + 20_000)));
    }

    #[test]
    fn override_cannot_extend() {
        let mut config = PlatformConfig::default();
        config.eligibility_overrides.insert("k".into(), [Target::Fpga].into());
        let err = augment(&one_task([Target::Smp].into()), &config).unwrap_err();
        assert!(matches!(err, ExpansionError::OverrideExtends { target: Target::Fpga, .. }));
    }

    #[test]
    fn config_cpu_clock_overrides_trace_clock() {
        let config = PlatformConfig { cpu_freq_mhz: Some(500.0), ..Default::default() };
        let sim = augment(&one_task([Target::Smp].into()), &config).unwrap();
        assert_eq!(sim.variants[0][0].body, TimePs(200_000));
    }
}
