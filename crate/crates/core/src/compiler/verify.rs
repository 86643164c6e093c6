use std::collections::BTreeSet;
use std::fmt;

use super::graph::{DnnfGraph, Node, NodeId};
use crate::formula::{Cnf, PartialAssignment, Var};

/// Largest formula checked for equivalence by enumeration.
pub const EQUIVALENCE_LIMIT: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A child id does not precede its parent.
    Cycle { node: NodeId, child: NodeId },
    /// Two children of an And node share a variable.
    NotDecomposable { node: NodeId, var: Var },
    /// A decision variable occurs below its own decision.
    NotDecision { node: NodeId, var: Var },
    /// A lower-layer decision has an upper variable beneath it.
    NotLayered { node: NodeId, var: Var },
    /// The graph and the formula disagree on this assignment.
    NotEquivalent { assignment: PartialAssignment, graph: bool },
    /// Equivalence was not checked because the formula is too large.
    EquivalenceSkipped { vars: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { node, child } => write!(f, "node {node} refers to later node {child}"),
            Violation::NotDecomposable { node, var } => {
                write!(f, "And node {node} shares variable {var} between children")
            }
            Violation::NotDecision { node, var } => write!(f, "Ite node {node} on {var} mentions {var} below"),
            Violation::NotLayered { node, var } => {
                write!(f, "lower decision node {node} has upper variable {var} beneath")
            }
            Violation::NotEquivalent { assignment, graph } => {
                let bits: Vec<String> = assignment.iter().map(|(v, b)| format!("{v}={}", u8::from(b))).collect();
                write!(f, "graph is {graph} but formula is {} at {}", !graph, bits.join(","))
            }
            Violation::EquivalenceSkipped { vars } => {
                write!(f, "equivalence not checked: {vars} variables exceed {EQUIVALENCE_LIMIT}")
            }
        }
    }
}

/// Outcome of [`verify_graph`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifyReport {
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    /// True when no structural or semantic violation was found. A skipped
    /// equivalence check does not count as a violation.
    pub fn is_ok(&self) -> bool {
        self.violations
            .iter()
            .all(|v| matches!(v, Violation::EquivalenceSkipped { .. }))
    }

    pub fn has_layering_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::NotLayered { .. }))
    }
}

/// Structural checks (acyclicity, decomposability, decision form, layering
/// against the graph's own upper set) only.
pub fn check_structure(g: &DnnfGraph) -> Vec<Violation> {
    check_structure_with(g, g.upper())
}

/// Structural checks with an explicit upper set for the layering condition.
pub fn check_structure_with(g: &DnnfGraph, upper: &BTreeSet<Var>) -> Vec<Violation> {
    let mut out = Vec::new();
    let upper_bits: Vec<usize> = upper.iter().map(|v| v.offset()).collect();
    for (id, node) in g.nodes().iter().enumerate() {
        match node {
            Node::Ite { var, hi, lo } => {
                for c in [*hi, *lo] {
                    if c >= id {
                        out.push(Violation::Cycle { node: id, child: c });
                    }
                }
                if g.support_bits(*hi).contains(var.offset()) || g.support_bits(*lo).contains(var.offset()) {
                    out.push(Violation::NotDecision { node: id, var: *var });
                }
                if !upper.contains(var) {
                    for &u in &upper_bits {
                        if g.support_bits(*hi).contains(u) || g.support_bits(*lo).contains(u) {
                            out.push(Violation::NotLayered {
                                node: id,
                                var: Var::from_offset(u),
                            });
                            break;
                        }
                    }
                }
            }
            Node::And(children) => {
                for &c in children {
                    if c >= id {
                        out.push(Violation::Cycle { node: id, child: c });
                    }
                }
                for (i, &a) in children.iter().enumerate() {
                    for &b in &children[i + 1..] {
                        if let Some(shared) = g.support_bits(a).intersection(g.support_bits(b)).next() {
                            out.push(Violation::NotDecomposable {
                                node: id,
                                var: Var::from_offset(shared),
                            });
                        }
                    }
                }
            }
            Node::False | Node::True => {}
        }
    }
    out
}

/// Checks that `g` is a valid decision-DNNF, layered on its recorded upper
/// set, and equivalent to `f` (by enumeration, up to
/// [`EQUIVALENCE_LIMIT`] variables).
pub fn verify_graph(g: &DnnfGraph, f: &Cnf) -> VerifyReport {
    let mut violations = check_structure(g);
    let structural_ok = violations.iter().all(|v| !matches!(v, Violation::Cycle { .. }));
    let n = f.num_vars().max(g.num_vars());
    if n > EQUIVALENCE_LIMIT {
        violations.push(Violation::EquivalenceSkipped { vars: n });
    } else if structural_ok {
        for bits in 0..1u64 << n {
            let m: PartialAssignment = (0..n as usize).map(|i| (Var::from_offset(i), bits >> i & 1 == 1)).collect();
            let expected = f.eval(&m).expect("total assignment");
            let got = g.eval(&m);
            if got != expected {
                violations.push(Violation::NotEquivalent { assignment: m, graph: got });
                break;
            }
        }
    }
    VerifyReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::graph::{GraphBuilder, FALSE, TRUE};

    #[test]
    fn overlapping_and_is_reported() {
        let nodes = vec![
            Node::False,
            Node::True,
            Node::Ite { var: Var::new(1), hi: TRUE, lo: FALSE },
            Node::Ite { var: Var::new(1), hi: FALSE, lo: TRUE },
            Node::And(vec![2, 3]),
        ];
        let g = DnnfGraph::from_nodes(nodes, 4, 1);
        let f = Cnf::from_dimacs_clauses(1, &[&[1], &[-1]]);
        let report = verify_graph(&g, &f);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NotDecomposable { node: 4, .. })));
    }

    #[test]
    fn wrong_function_is_reported() {
        // graph of (x1 ∨ x2) against the formula x1 ∧ x2
        let mut b = GraphBuilder::new(2);
        let x2 = b.literal(Var::new(2), true);
        let root = b.ite(Var::new(1), TRUE, x2);
        let g = b.finish(root, BTreeSet::new());
        let f = Cnf::from_dimacs_clauses(2, &[&[1], &[2]]);
        let report = verify_graph(&g, &f);
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| matches!(v, Violation::NotEquivalent { .. })));
        let f = Cnf::from_dimacs_clauses(2, &[&[1, 2]]);
        assert!(verify_graph(&g, &f).is_ok());
    }

    #[test]
    fn layering_and_decision_violations() {
        // lower decision on x2 with upper x1 beneath
        let nodes = vec![
            Node::False,
            Node::True,
            Node::Ite { var: Var::new(1), hi: TRUE, lo: FALSE },
            Node::Ite { var: Var::new(2), hi: 2, lo: FALSE },
        ];
        let g = DnnfGraph::from_nodes(nodes, 3, 2);
        let upper = [Var::new(1)].into();
        let v = check_structure_with(&g, &upper);
        assert!(v.iter().any(|v| matches!(v, Violation::NotLayered { node: 3, .. })));

        let nodes = vec![
            Node::False,
            Node::True,
            Node::Ite { var: Var::new(1), hi: TRUE, lo: FALSE },
            Node::Ite { var: Var::new(1), hi: 2, lo: FALSE },
        ];
        let g = DnnfGraph::from_nodes(nodes, 3, 1);
        assert!(check_structure(&g).iter().any(|v| matches!(v, Violation::NotDecision { .. })));
    }

    #[test]
    fn forward_reference_is_a_cycle() {
        let nodes = vec![Node::False, Node::True, Node::And(vec![3]), Node::And(vec![2])];
        let g = DnnfGraph::from_nodes(nodes, 3, 1);
        assert!(check_structure(&g).iter().any(|v| matches!(v, Violation::Cycle { node: 2, .. })));
    }
}
