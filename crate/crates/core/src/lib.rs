//! Trace-driven performance estimation for task-parallel programs on
//! heterogeneous SMP + FPGA platforms.
//!
//! The pipeline mirrors what a dataflow task runtime does with a program:
//!
//! 1. [`trace`]: load the sequential task trace of an instrumented run (or
//!    generate one with [`workloads`]).
//! 2. [`depgraph`]: rebuild the RAW/WAR/WAW task graph from the declared
//!    `in`/`out`/`inout` regions.
//! 3. [`expansion`]: add creation costs and per-device execution variants
//!    using a [`platform::PlatformConfig`] and accelerator timing digests.
//! 4. [`engine`]: simulate the execution event by event.
//! 5. [`metrics`] and [`chrome_trace`]: summarize, compare, and export the
//!    timeline.
//!
//! [`sweep`] runs steps 1-5 for several configurations and ranks them.

pub mod chrome_trace;
pub mod cli;
pub mod depgraph;
pub mod engine;
pub mod expansion;
pub mod metrics;
pub mod platform;
pub mod sweep;
pub mod trace;
pub mod workloads;

pub use depgraph::{build_graph, conflict_oracle, DepEdge, DepKind, Matching, TaskGraph};
pub use engine::{simulate, SimResult};
pub use expansion::{augment, SimGraph};
pub use platform::{cycles_to_ps, KernelProfile, PlatformConfig, TimePs};
pub use trace::{Dependence, Direction, Target, TaskRecord, TaskTrace};
pub use workloads::WorkloadSpec;
