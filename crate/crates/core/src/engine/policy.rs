//! Dispatch policies.

use super::{Device, DeviceId, DeviceKind};
use crate::expansion::{NodeId, NodeKind};

/// A node whose predecessors have all completed and that has not been
/// dispatched yet.
#[derive(Debug, Clone)]
pub struct ReadyNode<'a> {
    pub id: NodeId,
    pub kind: NodeKind,
    pub kernel: &'a str,
    /// Compute nodes only: whether an SMP / accelerator variant exists.
    pub smp_eligible: bool,
    pub accel_eligible: bool,
}

#[derive(Debug, Clone)]
pub struct DeviceState<'a> {
    pub device: &'a Device,
    /// For SMP cores and shared units: idle. For accelerators: no other task
    /// is waiting for its inputs on this instance.
    pub available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub node: NodeId,
    pub device: DeviceId,
}

/// Maps ready nodes onto available devices at one scheduling instant.
///
/// `ready` is sorted by ascending node id and `devices` is indexed by device
/// id. Each node and each device may appear in at most one assignment; the
/// engine rejects anything else.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn assign(&self, ready: &[ReadyNode<'_>], devices: &[DeviceState<'_>]) -> Vec<Assignment>;
}

/// Walks the ready list in program order and hands each node the first
/// matching available device. Compute nodes prefer an accelerator, then an
/// SMP worker, and only fall back to the main thread when no creation node
/// is waiting for it.
#[derive(Debug, Default, Clone, Copy)]
pub struct AvailabilityGreedy;

impl Policy for AvailabilityGreedy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn assign(&self, ready: &[ReadyNode<'_>], devices: &[DeviceState<'_>]) -> Vec<Assignment> {
        let creation_waiting = ready.iter().any(|n| n.kind == NodeKind::Creation);
        let mut taken = vec![false; devices.len()];
        let mut out = Vec::new();

        for node in ready {
            let mut pick = |want: &dyn Fn(&DeviceKind) -> bool| {
                let found = devices.iter().position(|d| d.available && !taken[d.device.id] && want(&d.device.kind))?;
                taken[found] = true;
                Some(devices[found].device.id)
            };
            let device = match node.kind {
                NodeKind::Creation => pick(&|k| matches!(k, DeviceKind::SmpMain)),
                NodeKind::SubmitIn | NodeKind::SubmitOut => pick(&|k| matches!(k, DeviceKind::SubmitUnit)),
                NodeKind::OutputDma => pick(&|k| matches!(k, DeviceKind::OutputDmaUnit)),
                NodeKind::Compute => {
                    let accel = node
                        .accel_eligible
                        .then(|| pick(&|k| matches!(k, DeviceKind::Accel { kernel, .. } if kernel == node.kernel)))
                        .flatten();
                    accel
                        .or_else(|| {
                            node.smp_eligible.then(|| pick(&|k| matches!(k, DeviceKind::SmpWorker(_)))).flatten()
                        })
                        .or_else(|| {
                            (node.smp_eligible && !creation_waiting)
                                .then(|| pick(&|k| matches!(k, DeviceKind::SmpMain)))
                                .flatten()
                        })
                }
            };
            if let Some(device) = device {
                out.push(Assignment { node: node.id, device });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn devices() -> Vec<Device> {
        vec![
            Device { id: 0, kind: DeviceKind::SmpMain },
            Device { id: 1, kind: DeviceKind::SmpWorker(1) },
            Device { id: 2, kind: DeviceKind::Accel { kernel: "k".into(), instance: 0 } },
            Device { id: 3, kind: DeviceKind::SubmitUnit },
            Device { id: 4, kind: DeviceKind::OutputDmaUnit },
        ]
    }

    fn states<'a>(devs: &'a [Device], available: &[bool]) -> Vec<DeviceState<'a>> {
        devs.iter().zip(available).map(|(device, &available)| DeviceState { device, available }).collect()
    }

    fn compute(id: NodeId) -> ReadyNode<'static> {
        ReadyNode { id, kind: NodeKind::Compute, kernel: "k", smp_eligible: true, accel_eligible: true }
    }

    #[test]
    fn accelerator_preferred_over_idle_worker() {
        let devs = devices();
        let a = AvailabilityGreedy.assign(&[compute(1)], &states(&devs, &[true; 5]));
        assert_eq!(a, vec![Assignment { node: 1, device: 2 }]);
    }

    #[test]
    fn creation_beats_compute_for_main_thread() {
        let devs = devices();
        let creation =
            ReadyNode { id: 2, kind: NodeKind::Creation, kernel: "k", smp_eligible: false, accel_eligible: false };
        let avail = [true, false, false, true, true];
        // compute 1 comes first in FIFO order but may not take smp_main
        let a = AvailabilityGreedy.assign(&[compute(1), creation], &states(&devs, &avail));
        assert_eq!(a, vec![Assignment { node: 2, device: 0 }]);
    }

    #[test]
    fn one_node_per_device() {
        let devs = devices();
        let a = AvailabilityGreedy.assign(&[compute(1), compute(3), compute(5)], &states(&devs, &[true; 5]));
        assert_eq!(
            a,
            vec![
                Assignment { node: 1, device: 2 },
                Assignment { node: 3, device: 1 },
                Assignment { node: 5, device: 0 },
            ]
        );
    }

    #[test]
    fn accel_only_node_waits() {
        let devs = devices();
        let mut n = compute(1);
        n.smp_eligible = false;
        let a = AvailabilityGreedy.assign(&[n], &states(&devs, &[true, true, false, true, true]));
        assert!(a.is_empty());
    }
}
