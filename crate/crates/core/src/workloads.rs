//! Synthetic traces of the tiled benchmark kernels: blocked matrix
//! multiplication and left-looking blocked Cholesky.
//!
//! Each logical block gets a synthetic base address (`matrix base +
//! block index * block bytes`), so distinct blocks never alias and the same
//! block always maps to the same address. SMP durations are per-kernel
//! inputs; the defaults scale as multiply-adds times a fixed cycle cost and
//! are meant to be replaced by measured values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trace::{Dependence, Direction, Target, TargetSet, TaskRecord, TaskTrace};

pub const MXM_BLOCK: &str = "mxmBlock";
pub const DSYRK: &str = "dsyrk";
pub const DPOTRF: &str = "dpotrf";
pub const DGEMM: &str = "dgemm";
pub const DTRSM: &str = "dtrsm";

/// Cycles per multiply-add assumed by the default SMP durations.
pub const DEFAULT_CYCLES_PER_FMA: u64 = 4;
pub const DEFAULT_CPU_FREQ_MHZ: f64 = 667.0;

const ADDRESS_BASE: u64 = 0x1000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Workload {
    Matmul,
    Cholesky,
}

impl Workload {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matmul" => Some(Workload::Matmul),
            "cholesky" => Some(Workload::Cholesky),
            _ => None,
        }
    }

    pub fn kernels(self) -> &'static [&'static str] {
        match self {
            Workload::Matmul => &[MXM_BLOCK],
            Workload::Cholesky => &[DSYRK, DPOTRF, DGEMM, DTRSM],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorkloadDoc", into = "WorkloadDoc")]
pub struct WorkloadSpec {
    workload: Workload,
    nb: u32,
    bs: u32,
    element_size: u32,
    cpu_freq_mhz: f64,
    smp_cycles: BTreeMap<String, u64>,
    targets: BTreeMap<String, TargetSet>,
}

impl WorkloadSpec {
    /// Defaults: single-precision elements, every kernel SMP+FPGA.
    pub fn matmul(nb: u32, bs: u32) -> Self {
        Self::with_defaults(Workload::Matmul, nb, bs, 4)
    }

    /// Defaults: double-precision elements; `dpotrf` is SMP-only, the
    /// other kernels SMP+FPGA.
    pub fn cholesky(nb: u32, bs: u32) -> Self {
        Self::with_defaults(Workload::Cholesky, nb, bs, 8)
    }

    pub fn new(workload: Workload, nb: u32, bs: u32) -> Self {
        match workload {
            Workload::Matmul => Self::matmul(nb, bs),
            Workload::Cholesky => Self::cholesky(nb, bs),
        }
    }

    fn with_defaults(workload: Workload, nb: u32, bs: u32, element_size: u32) -> Self {
        assert!(nb >= 1 && bs >= 1, "block count and block size must be >= 1");
        let b = u64::from(bs);
        let fmas = |kernel: &str| match kernel {
            MXM_BLOCK | DGEMM => b * b * b,
            DSYRK | DTRSM => b * b * b / 2,
            _ => b * b * b / 6,
        };
        let both: TargetSet = [Target::Smp, Target::Fpga].into();
        let mut smp_cycles = BTreeMap::new();
        let mut targets = BTreeMap::new();
        for &k in workload.kernels() {
            smp_cycles.insert(k.to_owned(), (fmas(k) * DEFAULT_CYCLES_PER_FMA).max(1));
            let t = if k == DPOTRF { [Target::Smp].into() } else { both.clone() };
            targets.insert(k.to_owned(), t);
        }
        Self { workload, nb, bs, element_size, cpu_freq_mhz: DEFAULT_CPU_FREQ_MHZ, smp_cycles, targets }
    }

    pub fn workload(&self) -> Workload {
        self.workload
    }

    pub fn nb(&self) -> u32 {
        self.nb
    }

    pub fn bs(&self) -> u32 {
        self.bs
    }

    /// Bytes per block.
    pub fn block_len(&self) -> u64 {
        u64::from(self.bs) * u64::from(self.bs) * u64::from(self.element_size)
    }

    pub fn smp_cycles(&self, kernel: &str) -> u64 {
        self.smp_cycles[kernel]
    }

    pub fn targets(&self, kernel: &str) -> &TargetSet {
        &self.targets[kernel]
    }

    pub fn with_element_size(mut self, bytes: u32) -> Self {
        assert!(bytes >= 1);
        self.element_size = bytes;
        self
    }

    pub fn with_cpu_freq_mhz(mut self, mhz: f64) -> Self {
        self.cpu_freq_mhz = mhz;
        self
    }

    /// Panics if `kernel` is not emitted by this workload or `cycles` is 0.
    pub fn with_smp_cycles(mut self, kernel: &str, cycles: u64) -> Self {
        assert!(cycles > 0, "smp_cycles must be positive");
        *self.smp_cycles.get_mut(kernel).unwrap_or_else(|| panic!("unknown kernel {kernel}")) = cycles;
        self
    }

    /// Panics if `kernel` is not emitted by this workload or `targets` is
    /// empty.
    pub fn with_targets(mut self, kernel: &str, targets: TargetSet) -> Self {
        assert!(!targets.is_empty(), "targets must be non-empty");
        *self.targets.get_mut(kernel).unwrap_or_else(|| panic!("unknown kernel {kernel}")) = targets;
        self
    }

    pub fn generate(&self) -> TaskTrace {
        match self.workload {
            Workload::Matmul => gen_matmul(self),
            Workload::Cholesky => gen_cholesky(self),
        }
    }
}

/// Serialized form, used by sweep files: unspecified maps fall back to the
/// workload defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    name: Workload,
    nb: u32,
    bs: u32,
    #[serde(default)]
    element_size: Option<u32>,
    #[serde(default)]
    cpu_freq_mhz: Option<f64>,
    #[serde(default)]
    smp_cycles: BTreeMap<String, u64>,
    #[serde(default)]
    targets: BTreeMap<String, TargetSet>,
}

impl TryFrom<WorkloadDoc> for WorkloadSpec {
    type Error = String;

    fn try_from(doc: WorkloadDoc) -> Result<Self, String> {
        if doc.nb == 0 || doc.bs == 0 {
            return Err("nb and bs must be >= 1".into());
        }
        let mut spec = WorkloadSpec::new(doc.name, doc.nb, doc.bs);
        if let Some(e) = doc.element_size {
            if e == 0 {
                return Err("element_size must be >= 1".into());
            }
            spec.element_size = e;
        }
        if let Some(f) = doc.cpu_freq_mhz {
            spec.cpu_freq_mhz = f;
        }
        for (k, c) in doc.smp_cycles {
            match spec.smp_cycles.get_mut(&k) {
                Some(slot) if c > 0 => *slot = c,
                Some(_) => return Err(format!("smp_cycles for {k} must be positive")),
                None => return Err(format!("workload does not emit kernel \"{k}\"")),
            }
        }
        for (k, t) in doc.targets {
            match spec.targets.get_mut(&k) {
                Some(slot) if !t.is_empty() => *slot = t,
                Some(_) => return Err(format!("targets for {k} must be non-empty")),
                None => return Err(format!("workload does not emit kernel \"{k}\"")),
            }
        }
        Ok(spec)
    }
}

impl From<WorkloadSpec> for WorkloadDoc {
    fn from(s: WorkloadSpec) -> Self {
        WorkloadDoc {
            name: s.workload,
            nb: s.nb,
            bs: s.bs,
            element_size: Some(s.element_size),
            cpu_freq_mhz: Some(s.cpu_freq_mhz),
            smp_cycles: s.smp_cycles,
            targets: s.targets,
        }
    }
}

/// Appends tasks in program order, stamping creation times as the serial
/// run would observe them.
struct TraceBuilder<'a> {
    spec: &'a WorkloadSpec,
    trace: TaskTrace,
    clock: u64,
}

impl<'a> TraceBuilder<'a> {
    fn new(spec: &'a WorkloadSpec) -> Self {
        Self { spec, trace: TaskTrace::new(spec.cpu_freq_mhz), clock: 0 }
    }

    fn block(&self, matrix: u64, index: u64) -> u64 {
        let nb = u64::from(self.spec.nb);
        let len = self.spec.block_len();
        ADDRESS_BASE + matrix * nb * nb * len + index * len
    }

    fn emit(&mut self, kernel: &str, deps: &[(u64, Direction)]) {
        let len = self.spec.block_len();
        let smp_cycles = self.spec.smp_cycles(kernel);
        self.trace.tasks.push(TaskRecord {
            id: self.trace.tasks.len() as u64,
            kernel: kernel.to_owned(),
            created_at_cycles: self.clock,
            smp_cycles,
            targets: self.spec.targets(kernel).clone(),
            deps: deps.iter().map(|&(addr, dir)| Dependence::new(addr, len, dir)).collect(),
        });
        self.clock += smp_cycles;
    }
}

/// `for k, for i, for j: mxmBlock(A[i,k], B[k,j], C[i,j])`, with A and B
/// read and C updated in place.
pub fn gen_matmul(spec: &WorkloadSpec) -> TaskTrace {
    let mut b = TraceBuilder::new(spec);
    let nb = u64::from(spec.nb);
    for k in 0..nb {
        for i in 0..nb {
            for j in 0..nb {
                let a = b.block(0, i * nb + k);
                let bb = b.block(1, k * nb + j);
                let c = b.block(2, i * nb + j);
                b.emit(MXM_BLOCK, &[(a, Direction::In), (bb, Direction::In), (c, Direction::InOut)]);
            }
        }
    }
    b.trace
}

/// Blocked Cholesky over a single matrix of `nb * nb` blocks, in the
/// program order of the left-looking loop nest:
///
/// ```text
/// for k:
///   for j < k:          dsyrk (in A[j*NB+k], inout A[k*NB+k])
///   dpotrf              (inout A[k*NB+k])
///   for i > k, j < k:   dgemm (in A[j*NB+i], in A[j*NB+k], inout A[k*NB+i])
///   for i > k:          dtrsm (in A[k*NB+k], inout A[k*NB+i])
/// ```
pub fn gen_cholesky(spec: &WorkloadSpec) -> TaskTrace {
    let mut b = TraceBuilder::new(spec);
    let nb = u64::from(spec.nb);
    let blk = |b: &TraceBuilder<'_>, idx| b.block(0, idx);
    for k in 0..nb {
        for j in 0..k {
            let (a, c) = (blk(&b, j * nb + k), blk(&b, k * nb + k));
            b.emit(DSYRK, &[(a, Direction::In), (c, Direction::InOut)]);
        }
        let diag = blk(&b, k * nb + k);
        b.emit(DPOTRF, &[(diag, Direction::InOut)]);
        for i in k + 1..nb {
            for j in 0..k {
                let (a, bb, c) = (blk(&b, j * nb + i), blk(&b, j * nb + k), blk(&b, k * nb + i));
                b.emit(DGEMM, &[(a, Direction::In), (bb, Direction::In), (c, Direction::InOut)]);
            }
        }
        for i in k + 1..nb {
            let (a, bb) = (blk(&b, k * nb + k), blk(&b, k * nb + i));
            b.emit(DTRSM, &[(a, Direction::In), (bb, Direction::InOut)]);
        }
    }
    b.trace
}
