//! Task dependency graph reconstruction.
//!
//! Tasks are processed in program order against a registry of regions, each
//! holding its last writer and the readers since that write, the same way a
//! dataflow task runtime tracks `in`/`out`/`inout` clauses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io;
use std::path::Path;

use crate::trace::{Dependence, TaskRecord, TaskTrace};

/// How two dependence regions are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Matching {
    /// Regions conflict iff their base addresses are equal.
    #[default]
    ExactBase,
    /// Regions conflict iff their byte ranges intersect.
    Overlap,
}

impl Matching {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" | "exact_base" | "exact-base" => Some(Matching::ExactBase),
            "overlap" => Some(Matching::Overlap),
            _ => None,
        }
    }

    pub fn conflicts(self, a: &Dependence, b: &Dependence) -> bool {
        match self {
            Matching::ExactBase => a.addr == b.addr,
            Matching::Overlap => a.overlaps(b),
        }
    }
}

/// Hazard that induced an edge. Declaration order is reporting strength,
/// weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DepKind {
    War,
    Waw,
    Raw,
}

impl DepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DepKind::Raw => "RAW",
            DepKind::War => "WAR",
            DepKind::Waw => "WAW",
        }
    }
}

impl fmt::Display for DepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DepEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: DepKind,
    /// Base address of the region that induced the edge.
    pub addr: u64,
}

/// Collapses parallel edges, keeping the strongest kind per `(src, dst)`.
#[derive(Default)]
struct EdgeSet {
    edges: BTreeMap<(usize, usize), (DepKind, u64)>,
}

impl EdgeSet {
    fn add(&mut self, src: usize, dst: usize, kind: DepKind, addr: u64) {
        if src == dst {
            return;
        }
        debug_assert!(src < dst);
        self.edges
            .entry((src, dst))
            .and_modify(|e| {
                if kind > e.0 {
                    *e = (kind, addr);
                }
            })
            .or_insert((kind, addr));
    }

    fn into_vec(self) -> Vec<DepEdge> {
        self.edges.into_iter().map(|((src, dst), (kind, addr))| DepEdge { src, dst, kind, addr }).collect()
    }
}

/// Dependency DAG over the tasks of a trace. Edges always point forward in
/// program order, so `0..n` is a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    pub tasks: Vec<TaskRecord>,
    pub cpu_freq_mhz: f64,
    edges: Vec<DepEdge>,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl TaskGraph {
    fn from_edges(trace: &TaskTrace, edges: Vec<DepEdge>) -> Self {
        let n = trace.tasks.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for e in &edges {
            succs[e.src].push(e.dst);
            preds[e.dst].push(e.src);
        }
        Self { tasks: trace.tasks.clone(), cpu_freq_mhz: trace.cpu_freq_mhz, edges, succs, preds }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Edges sorted by `(src, dst)`.
    pub fn edges(&self) -> &[DepEdge] {
        &self.edges
    }

    pub fn succs(&self, task: usize) -> &[usize] {
        &self.succs[task]
    }

    pub fn preds(&self, task: usize) -> &[usize] {
        &self.preds[task]
    }

    /// Transitive closure as one successor bitset per task.
    pub fn reachability(&self) -> Reachability {
        Reachability::from_edges(self.len(), &self.edges)
    }

    pub fn to_dot(&self) -> String {
        if self.tasks.is_empty() {
            return "digraph G {}\n".to_owned();
        }
        let mut s = String::from("digraph G {\n");
        for t in &self.tasks {
            let _ = writeln!(s, "  t{} [label=\"{}#{}\"];", t.id, t.kernel, t.id);
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  t{} -> t{} [kind={}, label=\"{}\", addr=\"{:#x}\"];",
                e.src, e.dst, e.kind, e.kind, e.addr
            );
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Default)]
struct Region {
    last_writer: Option<usize>,
    readers: Vec<usize>,
}

/// Reconstructs the dependency graph of `trace`.
///
/// Every dependence of task `t` is checked against all registered regions it
/// conflicts with: reads pick up a RAW edge from the last writer, writes pick
/// up WAR edges from the readers and a WAW edge from the last writer. The
/// region `t` touches is then updated (a write becomes last writer and clears
/// readers). `inout` is handled as a read followed by a write.
///
/// In overlap mode the registry is keyed by the exact `(addr, len)` range, so
/// a write to a sub-range does not retire older writers of the enclosing
/// range; the edges kept are a superset of what transitivity needs.
pub fn build_graph(trace: &TaskTrace, matching: Matching) -> TaskGraph {
    let mut registry: BTreeMap<(u64, u64), Region> = BTreeMap::new();
    let mut edges = EdgeSet::default();

    let key = |d: &Dependence| match matching {
        Matching::ExactBase => (d.addr, 0),
        Matching::Overlap => (d.addr, d.len),
    };

    for (t, task) in trace.tasks.iter().enumerate() {
        for dep in &task.deps {
            let conflicting: Vec<(u64, u64)> = match matching {
                Matching::ExactBase => {
                    let k = key(dep);
                    registry.contains_key(&k).then_some(k).into_iter().collect()
                }
                Matching::Overlap => registry
                    .range(..(dep.end(), 0))
                    .filter(|(&(addr, len), _)| addr.saturating_add(len) > dep.addr)
                    .map(|(&k, _)| k)
                    .collect(),
            };

            for k in &conflicting {
                let region = &registry[k];
                if dep.dir.reads() {
                    if let Some(w) = region.last_writer {
                        edges.add(w, t, DepKind::Raw, k.0);
                    }
                }
                if dep.dir.writes() {
                    for &r in &region.readers {
                        edges.add(r, t, DepKind::War, k.0);
                    }
                    if let Some(w) = region.last_writer {
                        edges.add(w, t, DepKind::Waw, k.0);
                    }
                }
            }

            let region = registry.entry(key(dep)).or_default();
            if dep.dir.reads() && !region.readers.contains(&t) {
                region.readers.push(t);
            }
            if dep.dir.writes() {
                region.last_writer = Some(t);
                region.readers.clear();
            }
        }
    }

    TaskGraph::from_edges(trace, edges.into_vec())
}

/// Brute-force pairwise conflict detection: every ordered pair of tasks
/// with a conflicting pair of regions, at least one written, gets an edge.
/// No registry and no reduction; meant for checking [`build_graph`].
pub fn conflict_oracle(trace: &TaskTrace, matching: Matching) -> Vec<DepEdge> {
    let mut edges = EdgeSet::default();
    for (i, a) in trace.tasks.iter().enumerate() {
        for (j, b) in trace.tasks.iter().enumerate().skip(i + 1) {
            for da in &a.deps {
                for db in &b.deps {
                    if !matching.conflicts(da, db) {
                        continue;
                    }
                    let kind = if da.dir.writes() && db.dir.reads() {
                        DepKind::Raw
                    } else if da.dir.writes() && db.dir.writes() {
                        DepKind::Waw
                    } else if db.dir.writes() {
                        DepKind::War
                    } else {
                        continue;
                    };
                    edges.add(i, j, kind, da.addr.max(db.addr));
                }
            }
        }
    }
    edges.into_vec()
}

/// Transitive closure of a forward-edge DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachability {
    reach: Vec<BTreeSet<usize>>,
}

impl Reachability {
    pub fn from_edges(n: usize, edges: &[DepEdge]) -> Self {
        let mut direct = vec![Vec::new(); n];
        for e in edges {
            direct[e.src].push(e.dst);
        }
        let mut reach: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        // Forward edges only, so a reverse sweep sees every successor finished.
        for v in (0..n).rev() {
            let mut set = BTreeSet::new();
            for &s in &direct[v] {
                set.insert(s);
                set.extend(reach[s].iter().copied());
            }
            reach[v] = set;
        }
        Self { reach }
    }

    pub fn reaches(&self, from: usize, to: usize) -> bool {
        self.reach[from].contains(&to)
    }

    pub fn successors(&self, from: usize) -> &BTreeSet<usize> {
        &self.reach[from]
    }

    pub fn pair_count(&self) -> usize {
        self.reach.iter().map(BTreeSet::len).sum()
    }
}

pub fn export_dot(graph: &TaskGraph, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, graph.to_dot())
}
