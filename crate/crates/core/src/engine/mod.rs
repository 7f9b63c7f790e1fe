//! Deterministic discrete-event simulation of an augmented task graph on a
//! configured platform.
//!
//! Events are keyed by `(time, node id)` and the ready list is always
//! presented to the policy in ascending node id, so a given input produces
//! the same timeline on every run.
//!
//! An accelerator instance holds at most one running task plus one task in
//! its input phase: once a task is dispatched to an instance, its submit
//! nodes go to the shared submit unit, and its occupancy starts when the
//! last submit finishes and the previous occupant has left. A new dispatch
//! to the instance is possible as soon as the waiting task has started.

mod critical_path;
mod policy;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use critical_path::{critical_path, CriticalPathError, Selector};
pub use policy::{Assignment, AvailabilityGreedy, DeviceState, Policy, ReadyNode};

use crate::expansion::{dispatch_nodes, DeviceClass, NodeId, NodeKind, SimGraph};
use crate::platform::{PlatformConfig, SchedulerKind, TimePs};

pub type DeviceId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum DeviceKind {
    SmpMain,
    SmpWorker(u32),
    Accel { kernel: String, instance: u32 },
    SubmitUnit,
    OutputDmaUnit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Device {
    pub id: DeviceId,
    pub kind: DeviceKind,
}

impl Device {
    pub fn is_smp(&self) -> bool {
        matches!(self.kind, DeviceKind::SmpMain | DeviceKind::SmpWorker(_))
    }

    pub fn is_accel(&self) -> bool {
        matches!(self.kind, DeviceKind::Accel { .. })
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DeviceKind::SmpMain => f.write_str("smp_main"),
            DeviceKind::SmpWorker(i) => write!(f, "smp_worker{i}"),
            DeviceKind::Accel { kernel, instance } => write!(f, "accel:{kernel}#{instance}"),
            DeviceKind::SubmitUnit => f.write_str("submit_unit"),
            DeviceKind::OutputDmaUnit => f.write_str("output_dma_unit"),
        }
    }
}

/// Device inventory for a config: the main SMP thread, the remaining SMP
/// workers, accelerator instances in config order, then the shared submit
/// and output-DMA units.
pub fn build_devices(config: &PlatformConfig) -> Vec<Device> {
    let mut kinds = vec![DeviceKind::SmpMain];
    kinds.extend((1..config.smp_workers).map(DeviceKind::SmpWorker));
    for acc in &config.accelerators {
        kinds.extend((0..acc.count).map(|instance| DeviceKind::Accel { kernel: acc.kernel.clone(), instance }));
    }
    kinds.push(DeviceKind::SubmitUnit);
    kinds.push(DeviceKind::OutputDmaUnit);
    kinds.into_iter().enumerate().map(|(id, kind)| Device { id, kind }).collect()
}

/// One executed node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub node: NodeId,
    pub origin: Option<usize>,
    pub device: DeviceId,
    pub start: TimePs,
    pub end: TimePs,
    pub kind: NodeKind,
    pub kernel: String,
}

impl Interval {
    pub fn label(&self) -> String {
        format!("{}:{}", self.kind, self.kernel)
    }

    pub fn duration(&self) -> TimePs {
        self.end - self.start
    }
}

impl Serialize for NodeKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Placement {
    Smp,
    Fpga,
}

/// Per-task schedule summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskOutcome {
    pub task: usize,
    pub placement: Placement,
    pub device: DeviceId,
    /// Creation done and all predecessors published.
    pub ready_at: TimePs,
    pub dispatched_at: TimePs,
    /// Start of the first scheduled element (first input submit, or the
    /// body itself).
    pub first_start: TimePs,
    /// Occupancy of the executing device.
    pub body_start: TimePs,
    pub body_end: TimePs,
    pub published_at: TimePs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DispatchCounts {
    pub smp: u64,
    pub fpga: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimResult {
    pub devices: Vec<Device>,
    /// Sorted by `(start, device, node)`.
    pub timeline: Vec<Interval>,
    pub makespan: TimePs,
    /// Busy time per device id.
    pub busy: Vec<TimePs>,
    pub dispatch: BTreeMap<String, DispatchCounts>,
    pub tasks: Vec<TaskOutcome>,
}

impl SimResult {
    pub fn intervals_on(&self, device: DeviceId) -> impl Iterator<Item = &Interval> {
        self.timeline.iter().filter(move |i| i.device == device)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("deadlock at {at_ps} ps: {} nodes can never run (first: {:?})", stuck.len(), stuck.first())]
    Deadlock { at_ps: u64, stuck: Vec<NodeId> },
    #[error("time overflow")]
    TimeOverflow,
    #[error("policy `{policy}` produced an invalid assignment: {reason}")]
    InvalidAssignment { policy: String, reason: String },
}

pub fn policy_for(kind: SchedulerKind) -> Box<dyn Policy> {
    match kind {
        SchedulerKind::AvailabilityGreedy => Box::new(AvailabilityGreedy),
    }
}

/// Runs the simulation with the policy named in `config`.
pub fn simulate(sim: &SimGraph, config: &PlatformConfig) -> Result<SimResult, EngineError> {
    simulate_with(sim, config, policy_for(config.scheduler).as_ref())
}

pub fn simulate_with(sim: &SimGraph, config: &PlatformConfig, policy: &dyn Policy) -> Result<SimResult, EngineError> {
    Engine::new(sim, config, policy).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Waiting,
    Ready,
    /// Compute node bound to an accelerator, waiting for its inputs.
    Dispatched,
    Running,
    Done,
}

#[derive(Debug, Clone)]
struct NodeRt {
    kind: NodeKind,
    origin: usize,
    duration: TimePs,
    pending: usize,
    status: Status,
}

#[derive(Debug, Clone, Default)]
struct AccelRt {
    occupant: Option<usize>,
    waiting: Option<usize>,
}

#[derive(Debug, Clone)]
struct FpgaRt {
    device: DeviceId,
    inputs_left: usize,
    submit_outs: Vec<NodeId>,
    dma: NodeId,
}

#[derive(Debug, Clone)]
struct TaskRt {
    ready_at: Option<TimePs>,
    dispatched_at: TimePs,
    device: Option<DeviceId>,
    first_start: Option<TimePs>,
    body: Option<(TimePs, TimePs)>,
    published_at: Option<TimePs>,
    fpga: Option<FpgaRt>,
}

struct Engine<'a> {
    sim: &'a SimGraph,
    policy: &'a dyn Policy,
    devices: Vec<Device>,
    nodes: Vec<NodeRt>,
    tasks: Vec<TaskRt>,
    /// Non-accelerator devices: currently running node.
    running: Vec<Option<NodeId>>,
    accels: BTreeMap<DeviceId, AccelRt>,
    ready: BTreeSet<NodeId>,
    events: BinaryHeap<Reverse<(TimePs, NodeId)>>,
    timeline: Vec<Interval>,
    now: TimePs,
}

impl<'a> Engine<'a> {
    fn new(sim: &'a SimGraph, config: &PlatformConfig, policy: &'a dyn Policy) -> Self {
        let devices = build_devices(config);
        let n = sim.n_tasks();
        let nodes = sim
            .nodes
            .iter()
            .map(|node| {
                let origin = node.origin.expect("static nodes belong to a task");
                let pending = match node.kind {
                    NodeKind::Compute => node.preds.len() + sim.publication_preds(origin).len(),
                    _ => node.preds.len(),
                };
                NodeRt { kind: node.kind, origin, duration: node.duration, pending, status: Status::Waiting }
            })
            .collect();
        let tasks = vec![
            TaskRt {
                ready_at: None,
                dispatched_at: TimePs::ZERO,
                device: None,
                first_start: None,
                body: None,
                published_at: None,
                fpga: None,
            };
            n
        ];
        let accels = devices.iter().filter(|d| d.is_accel()).map(|d| (d.id, AccelRt::default())).collect();
        let mut engine = Self {
            sim,
            policy,
            running: vec![None; devices.len()],
            devices,
            nodes,
            tasks,
            accels,
            ready: BTreeSet::new(),
            events: BinaryHeap::new(),
            timeline: Vec::new(),
            now: TimePs::ZERO,
        };
        if n > 0 {
            engine.mark_ready(SimGraph::creation_node(0));
        }
        engine
    }

    fn run(mut self) -> Result<SimResult, EngineError> {
        loop {
            self.schedule()?;
            let Some(&Reverse((t, _))) = self.events.peek() else { break };
            self.now = t;
            while let Some(&Reverse((t, node))) = self.events.peek() {
                if t != self.now {
                    break;
                }
                self.events.pop();
                self.complete(node);
            }
        }

        let stuck: Vec<NodeId> =
            self.nodes.iter().enumerate().filter(|(_, n)| n.status != Status::Done).map(|(id, _)| id).collect();
        if !stuck.is_empty() {
            return Err(EngineError::Deadlock { at_ps: self.now.0, stuck });
        }
        Ok(self.finish())
    }

    fn kernel(&self, task: usize) -> &'a str {
        &self.sim.graph.tasks[task].kernel
    }

    fn mark_ready(&mut self, node: NodeId) {
        let rt = &mut self.nodes[node];
        debug_assert_eq!(rt.status, Status::Waiting);
        rt.status = Status::Ready;
        if rt.kind == NodeKind::Compute {
            self.tasks[rt.origin].ready_at = Some(self.now);
        }
        self.ready.insert(node);
    }

    fn release(&mut self, node: NodeId) {
        let rt = &mut self.nodes[node];
        rt.pending -= 1;
        if rt.pending == 0 {
            self.mark_ready(node);
        }
    }

    fn publish(&mut self, task: usize) {
        self.tasks[task].published_at = Some(self.now);
        for &succ in self.sim.graph.succs(task) {
            self.release(SimGraph::compute_node(succ));
        }
    }

    fn start(&mut self, node: NodeId, device: DeviceId, duration: TimePs) -> Result<(), EngineError> {
        let end = self.now.checked_add(duration).ok_or(EngineError::TimeOverflow)?;
        let rt = &mut self.nodes[node];
        rt.status = Status::Running;
        let task = rt.origin;
        let kind = rt.kind;
        if !self.devices[device].is_accel() {
            self.running[device] = Some(node);
        }
        let first = &mut self.tasks[task].first_start;
        if first.is_none() && matches!(kind, NodeKind::Compute | NodeKind::SubmitIn) {
            *first = Some(self.now);
        }
        if kind == NodeKind::Compute {
            self.tasks[task].body = Some((self.now, end));
        }
        self.timeline.push(Interval {
            node,
            origin: Some(task),
            device,
            start: self.now,
            end,
            kind,
            kernel: self.kernel(task).to_owned(),
        });
        self.events.push(Reverse((end, node)));
        Ok(())
    }

    fn complete(&mut self, node: NodeId) {
        self.nodes[node].status = Status::Done;
        let task = self.nodes[node].origin;
        match self.nodes[node].kind {
            NodeKind::Creation => {
                self.running[0] = None;
                if task + 1 < self.sim.n_tasks() {
                    self.release(SimGraph::creation_node(task + 1));
                }
                self.release(SimGraph::compute_node(task));
            }
            NodeKind::Compute => match &self.tasks[task].fpga {
                None => {
                    let device = self.tasks[task].device.expect("dispatched");
                    self.running[device] = None;
                    self.publish(task);
                }
                Some(fpga) => {
                    let (device, outs, dma) = (fpga.device, fpga.submit_outs.clone(), fpga.dma);
                    self.accels.get_mut(&device).expect("accelerator").occupant = None;
                    if outs.is_empty() {
                        self.release(dma);
                    }
                    for out in outs {
                        self.release(out);
                    }
                }
            },
            kind @ (NodeKind::SubmitIn | NodeKind::SubmitOut | NodeKind::OutputDma) => {
                let unit = self.unit_of(kind);
                self.running[unit] = None;
                let fpga = self.tasks[task].fpga.as_mut().expect("fpga dispatch");
                match kind {
                    NodeKind::SubmitIn => fpga.inputs_left -= 1,
                    NodeKind::SubmitOut => {
                        let dma = fpga.dma;
                        self.release(dma);
                    }
                    _ => self.publish(task),
                }
            }
        }
    }

    fn unit_of(&self, kind: NodeKind) -> DeviceId {
        let n = self.devices.len();
        match kind {
            NodeKind::OutputDma => n - 1,
            _ => n - 2,
        }
    }

    fn device_states(&self) -> Vec<DeviceState<'_>> {
        self.devices
            .iter()
            .map(|device| {
                let available = match self.accels.get(&device.id) {
                    Some(acc) => acc.waiting.is_none(),
                    None => self.running[device.id].is_none(),
                };
                DeviceState { device, available }
            })
            .collect()
    }

    fn ready_nodes(&self) -> Vec<ReadyNode<'a>> {
        self.ready
            .iter()
            .map(|&id| {
                let rt = &self.nodes[id];
                let (smp_eligible, accel_eligible) = if rt.kind == NodeKind::Compute {
                    (self.sim.smp_variant(rt.origin).is_some(), self.sim.accel_variant(rt.origin).is_some())
                } else {
                    (false, false)
                };
                ReadyNode { id, kind: rt.kind, kernel: self.kernel(rt.origin), smp_eligible, accel_eligible }
            })
            .collect()
    }

    /// Starts every occupancy whose inputs have arrived, then lets the policy
    /// dispatch ready nodes, until nothing more can start at this instant.
    fn schedule(&mut self) -> Result<(), EngineError> {
        loop {
            let mut progress = false;
            let startable: Vec<(DeviceId, usize)> = self
                .accels
                .iter()
                .filter_map(|(&dev, acc)| {
                    let task = acc.waiting?;
                    let inputs_done = self.tasks[task].fpga.as_ref().is_some_and(|f| f.inputs_left == 0);
                    (acc.occupant.is_none() && inputs_done).then_some((dev, task))
                })
                .collect();
            for (dev, task) in startable {
                let acc = self.accels.get_mut(&dev).expect("accelerator");
                acc.waiting = None;
                acc.occupant = Some(task);
                let body = self.sim.accel_variant(task).expect("accel variant").body;
                self.start(SimGraph::compute_node(task), dev, body)?;
                progress = true;
            }

            if !self.ready.is_empty() {
                let assignments = {
                    let ready = self.ready_nodes();
                    let states = self.device_states();
                    self.policy.assign(&ready, &states)
                };
                self.check(&assignments)?;
                for a in &assignments {
                    self.apply(*a)?;
                }
                progress |= !assignments.is_empty();
            }

            if !progress {
                return Ok(());
            }
        }
    }

    fn check(&self, assignments: &[Assignment]) -> Result<(), EngineError> {
        let invalid = |reason: String| EngineError::InvalidAssignment { policy: self.policy.name().to_owned(), reason };
        let states = self.device_states();
        let mut nodes = BTreeSet::new();
        let mut devices = BTreeSet::new();
        for a in assignments {
            if !self.ready.contains(&a.node) {
                return Err(invalid(format!("node {} is not ready", a.node)));
            }
            let Some(state) = states.get(a.device) else {
                return Err(invalid(format!("no device {}", a.device)));
            };
            if !state.available {
                return Err(invalid(format!("device {} is not available", state.device)));
            }
            if !nodes.insert(a.node) || !devices.insert(a.device) {
                return Err(invalid(format!("node {} or device {} assigned twice", a.node, a.device)));
            }
            let rt = &self.nodes[a.node];
            let ok = match (&rt.kind, &state.device.kind) {
                (NodeKind::Creation, DeviceKind::SmpMain) => true,
                (NodeKind::SubmitIn | NodeKind::SubmitOut, DeviceKind::SubmitUnit) => true,
                (NodeKind::OutputDma, DeviceKind::OutputDmaUnit) => true,
                (NodeKind::Compute, DeviceKind::SmpMain | DeviceKind::SmpWorker(_)) => {
                    self.sim.smp_variant(rt.origin).is_some()
                }
                (NodeKind::Compute, DeviceKind::Accel { kernel, .. }) => {
                    matches!(self.sim.accel_variant(rt.origin), Some(v) if v.device == DeviceClass::Accel(kernel.clone()))
                }
                _ => false,
            };
            if !ok {
                return Err(invalid(format!("{} node {} cannot run on {}", rt.kind, a.node, state.device)));
            }
        }
        Ok(())
    }

    fn apply(&mut self, a: Assignment) -> Result<(), EngineError> {
        self.ready.remove(&a.node);
        let rt = &self.nodes[a.node];
        let (kind, task) = (rt.kind, rt.origin);
        if kind != NodeKind::Compute {
            return self.start(a.node, a.device, rt.duration);
        }

        self.tasks[task].device = Some(a.device);
        self.tasks[task].dispatched_at = self.now;
        if !self.devices[a.device].is_accel() {
            let body = self.sim.smp_variant(task).expect("checked").body;
            return self.start(a.node, a.device, body);
        }

        // Accelerator dispatch: bind the instance and materialize transfers.
        self.nodes[a.node].status = Status::Dispatched;
        self.accels.get_mut(&a.device).expect("accelerator").waiting = Some(task);
        let variant = self.sim.accel_variant(task).expect("checked");
        let mut submit_ins = Vec::new();
        let mut submit_outs = Vec::new();
        let mut dma = None;
        for node in dispatch_nodes(variant, self.sim.submit_cost) {
            let id = self.nodes.len();
            let pending = match node.kind {
                NodeKind::SubmitIn => 0,
                NodeKind::SubmitOut => 1,
                _ => variant.n_outputs.max(1),
            };
            self.nodes.push(NodeRt {
                kind: node.kind,
                origin: task,
                duration: node.duration,
                pending,
                status: Status::Waiting,
            });
            match node.kind {
                NodeKind::SubmitIn => submit_ins.push(id),
                NodeKind::SubmitOut => submit_outs.push(id),
                _ => dma = Some(id),
            }
        }
        self.tasks[task].fpga = Some(FpgaRt {
            device: a.device,
            inputs_left: submit_ins.len(),
            submit_outs,
            dma: dma.expect("dispatch always adds an output DMA"),
        });
        for id in submit_ins {
            self.mark_ready(id);
        }
        Ok(())
    }

    fn finish(mut self) -> SimResult {
        self.timeline.sort_by_key(|i| (i.start, i.device, i.node));
        let makespan = self.timeline.iter().map(|i| i.end).max().unwrap_or(TimePs::ZERO);
        let mut busy = vec![TimePs::ZERO; self.devices.len()];
        for i in &self.timeline {
            busy[i.device] = busy[i.device] + i.duration();
        }
        let mut dispatch: BTreeMap<String, DispatchCounts> = BTreeMap::new();
        let tasks = self
            .tasks
            .iter()
            .enumerate()
            .map(|(task, rt)| {
                let placement = if rt.fpga.is_some() { Placement::Fpga } else { Placement::Smp };
                let counts = dispatch.entry(self.kernel(task).to_owned()).or_default();
                match placement {
                    Placement::Smp => counts.smp += 1,
                    Placement::Fpga => counts.fpga += 1,
                }
                let (body_start, body_end) = rt.body.expect("every task ran");
                TaskOutcome {
                    task,
                    placement,
                    device: rt.device.expect("every task was dispatched"),
                    ready_at: rt.ready_at.expect("every task became ready"),
                    dispatched_at: rt.dispatched_at,
                    first_start: rt.first_start.expect("every task started"),
                    body_start,
                    body_end,
                    published_at: rt.published_at.expect("every task published"),
                }
            })
            .collect();
        SimResult { devices: self.devices, timeline: self.timeline, makespan, busy, dispatch, tasks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::{build_graph, Matching};
    use crate::expansion::augment;
    use crate::trace::{Dependence, Direction, Target, TaskRecord, TaskTrace};

    fn smp_task(id: u64, cycles: u64, deps: Vec<Dependence>) -> TaskRecord {
        TaskRecord {
            id,
            kernel: "k".into(),
            created_at_cycles: 0,
            smp_cycles: cycles,
            targets: [Target::Smp].into(),
            deps,
        }
    }

    fn run(tasks: Vec<TaskRecord>, config: &PlatformConfig) -> SimResult {
        let trace = TaskTrace { cpu_freq_mhz: 1000.0, tasks };
        let sim = augment(&build_graph(&trace, Matching::ExactBase), config).unwrap();
        simulate(&sim, config).unwrap()
    }

    fn no_creation(workers: u32) -> PlatformConfig {
        PlatformConfig { smp_workers: workers, creation_overhead_ns: 0, ..Default::default() }
    }

    #[test]
    fn empty_graph() {
        let r = run(vec![], &no_creation(1));
        assert_eq!(r.makespan, TimePs::ZERO);
        assert!(r.timeline.is_empty());
    }

    #[test]
    fn single_task() {
        let r = run(vec![smp_task(0, 100, vec![])], &no_creation(1));
        assert_eq!(r.makespan, TimePs(100_000));
    }

    #[test]
    fn chain_does_not_speed_up_with_workers() {
        let chain = || {
            (0..3u64)
                .map(|i| {
                    let mut deps = vec![Dependence::new(0x100, 8, Direction::InOut)];
                    if i == 0 {
                        deps[0].dir = Direction::Out;
                    }
                    smp_task(i, (i + 1) * 1000, deps)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(chain(), &no_creation(1)).makespan, TimePs(6_000_000));
        assert_eq!(run(chain(), &no_creation(4)).makespan, TimePs(6_000_000));
    }

    #[test]
    fn independent_tasks_pack() {
        let tasks = (0..4).map(|i| smp_task(i, 1000, vec![])).collect();
        let r = run(tasks, &no_creation(2));
        assert_eq!(r.makespan, TimePs(2_000_000));
    }

    #[test]
    fn creation_chain_alone() {
        let tasks: Vec<_> = (0..5).map(|i| smp_task(i, 1, vec![])).collect();
        let config = PlatformConfig {
            smp_workers: 1,
            creation_overhead_ns: 1_000,
            cpu_freq_mhz: Some(1e12),
            ..Default::default()
        };
        // 1 cycle at 1e12 MHz rounds to 0 ps
        let r = run(tasks, &config);
        assert_eq!(r.makespan, TimePs(5 * 1_000_000));
    }

    #[test]
    fn main_thread_runs_compute_when_no_creation_waits() {
        let config = PlatformConfig { smp_workers: 1, creation_overhead_ns: 1, ..Default::default() };
        let r = run(vec![smp_task(0, 10, vec![]), smp_task(1, 10, vec![])], &config);
        // c0 [0,1) c1 [1,2) t0 [2,12) t1 [12,22)
        assert_eq!(r.makespan, TimePs(22_000));
        assert!(r.timeline.iter().all(|i| i.device == 0));
    }
}
