//! Top-down compilation of CNF into layered decision-DNNF, and selection of
//! relaxed variables.
//!
//! The compiler follows the usual exhaustive-DPLL scheme: unit propagation,
//! connected-component decomposition into `And` nodes, a component cache
//! keyed by the residual clauses, and binary decisions. When an upper set
//! is given, any component still holding an unassigned upper variable must
//! decide on an upper variable, which yields a layered graph.
//!
//! Pure-literal elimination is never applied: it preserves satisfiability
//! but not model counts.

mod compile;
mod graph;
mod select;
mod verify;

pub use compile::{compile, Budget, CompileError, CompileOptions, CompileStats, Heuristic};
pub use graph::{DnnfGraph, GraphBuilder, Node, NodeId, FALSE, TRUE};
pub use select::{select_relaxed, select_relaxed_bfs, select_relaxed_dfs, RelaxOrder, Selection};
pub use verify::{check_structure, check_structure_with, verify_graph, Violation, VerifyReport, EQUIVALENCE_LIMIT};

use crate::formula::Var;
use std::collections::BTreeSet;

/// Smooths `g` over `universe`; see [`DnnfGraph::smooth`].
pub fn smooth(g: &DnnfGraph, universe: &BTreeSet<Var>) -> DnnfGraph {
    g.smooth(universe)
}
