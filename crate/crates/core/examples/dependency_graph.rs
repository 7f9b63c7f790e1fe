//! Rebuilds the tiled Cholesky task graph, checks it against the pairwise
//! conflict oracle, and prints it as DOT.
//!
//!     cargo run --example dependency_graph | dot -Tsvg > cholesky.svg

use hetsim::depgraph::{build_graph, conflict_oracle, DepKind, Matching, Reachability};
use hetsim::workloads::WorkloadSpec;

fn main() {
    let trace = WorkloadSpec::cholesky(4, 64).generate();
    for matching in [Matching::ExactBase, Matching::Overlap] {
        let graph = build_graph(&trace, matching);
        let oracle = Reachability::from_edges(trace.len(), &conflict_oracle(&trace, matching));
        let raw = graph.edges().iter().filter(|e| e.kind == DepKind::Raw).count();
        eprintln!(
            "{matching:?}: {} tasks, {} edges ({raw} RAW), closure matches oracle: {}",
            graph.len(),
            graph.edges().len(),
            graph.reachability() == oracle
        );
    }
    print!("{}", build_graph(&trace, Matching::ExactBase).to_dot());
}
