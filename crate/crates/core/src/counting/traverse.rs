use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::compiler::{DnnfGraph, Node, NodeId};
use crate::formula::{PartialAssignment, Var, VarPartition};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CountError {
    #[error("graph is not smooth over the requested universe")]
    NotSmooth,
    #[error("decision node {node} on a lower variable has upper variable {var} beneath it")]
    NotLayered { node: NodeId, var: Var },
}

/// Number of models of a smooth graph over `universe`.
pub fn model_count(g: &DnnfGraph, universe: &BTreeSet<Var>) -> Result<BigUint, CountError> {
    if !g.is_smooth_over(universe) {
        return Err(CountError::NotSmooth);
    }
    let counts = bottom_up(g, |_| false);
    Ok(counts[g.root()].clone())
}

/// `g|m`.
pub fn condition(g: &DnnfGraph, m: &PartialAssignment) -> DnnfGraph {
    g.condition(m)
}

/// Rejects graphs where a decision on a variable outside `upper` has an
/// upper variable below it.
pub fn check_layering(g: &DnnfGraph, upper: &BTreeSet<Var>) -> Result<(), CountError> {
    let mut bits = FixedBitSet::with_capacity(g.num_vars() as usize);
    for v in upper {
        if v.offset() < bits.len() {
            bits.insert(v.offset());
        }
    }
    for (id, node) in g.nodes().iter().enumerate() {
        if let Node::Ite { var, hi, lo } = node {
            if bits.contains(var.offset()) {
                continue;
            }
            for child in [*hi, *lo] {
                if let Some(o) = g.support_bits(child).intersection(&bits).next() {
                    return Err(CountError::NotLayered {
                        node: id,
                        var: Var::from_offset(o),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Per-node values of the max/sum recursion: decisions on variables for
/// which `is_max` holds take the larger branch, others add, `And` multiplies.
fn bottom_up(g: &DnnfGraph, is_max: impl Fn(Var) -> bool) -> Vec<BigUint> {
    let mut val: Vec<BigUint> = Vec::with_capacity(g.len());
    for node in g.nodes() {
        let v = match node {
            Node::False => BigUint::zero(),
            Node::True => BigUint::one(),
            Node::Ite { var, hi, lo } => {
                if is_max(*var) {
                    val[*hi].clone().max(val[*lo].clone())
                } else {
                    &val[*hi] + &val[*lo]
                }
            }
            Node::And(children) => children.iter().fold(BigUint::one(), |acc, &c| acc * &val[c]),
        };
        val.push(v);
    }
    val
}

/// Follows the maximising branches from the root. Decisions on `is_max`
/// variables record the chosen value (ties to ⊤, except when both branches
/// are the same node); summed decisions contribute nothing below them.
fn extract_witness(g: &DnnfGraph, val: &[BigUint], is_max: impl Fn(Var) -> bool) -> PartialAssignment {
    let mut w = PartialAssignment::new();
    let mut seen = vec![false; g.len()];
    let mut stack = vec![g.root()];
    while let Some(id) = stack.pop() {
        if std::mem::replace(&mut seen[id], true) {
            continue;
        }
        match g.node(id) {
            Node::Ite { var, hi, lo } if is_max(*var) => {
                if hi == lo {
                    stack.push(*lo);
                } else if val[*hi] >= val[*lo] {
                    w.set(*var, true);
                    stack.push(*hi);
                } else {
                    w.set(*var, false);
                    stack.push(*lo);
                }
            }
            Node::And(children) => stack.extend(children.iter().copied()),
            _ => {}
        }
    }
    w
}

fn complete(mut w: PartialAssignment, vars: &BTreeSet<Var>) -> PartialAssignment {
    for &v in vars {
        if !w.contains(v) {
            w.set(v, false);
        }
    }
    w
}

fn check_smooth(g: &DnnfGraph, p: &VarPartition) -> Result<(), CountError> {
    if g.is_smooth_over(&p.universe()) {
        Ok(())
    } else {
        Err(CountError::NotSmooth)
    }
}

/// Exact f-E-MAJSAT of a graph layered on `(A, X)` and smoothed over `A ∪ X`,
/// with a witness over `A`. `p.relaxed` is ignored.
pub fn constrained_emajsat(g: &DnnfGraph, p: &VarPartition) -> Result<(BigUint, PartialAssignment), CountError> {
    check_smooth(g, p)?;
    check_layering(g, &p.choice)?;
    let is_max = |v: Var| p.choice.contains(&v);
    let val = bottom_up(g, is_max);
    let w = extract_witness(g, &val, is_max);
    Ok((val[g.root()].clone(), complete(w, &p.choice)))
}

/// Max over choice decisions, sum over chance decisions, without any
/// layering requirement. An upper bound on f-E-MAJSAT.
pub fn unconstrained_upper(g: &DnnfGraph, p: &VarPartition) -> Result<BigUint, CountError> {
    check_smooth(g, p)?;
    let val = bottom_up(g, |v| p.choice.contains(&v));
    Ok(val[g.root()].clone())
}

fn relaxed_upper_set(p: &VarPartition) -> BTreeSet<Var> {
    p.choice.union(&p.relaxed).copied().collect()
}

/// Upper bound of a graph layered on `(A ∪ R, X ∖ R)`: relaxed decisions
/// are summed like chance ones.
pub fn relax_upper(g: &DnnfGraph, p: &VarPartition) -> Result<BigUint, CountError> {
    check_smooth(g, p)?;
    check_layering(g, &relaxed_upper_set(p))?;
    let val = bottom_up(g, |v| p.choice.contains(&v));
    Ok(val[g.root()].clone())
}

/// Lower bound of a graph layered on `(A ∪ R, X ∖ R)`: maximises over
/// `A ∪ R`, keeps the `A` part `w` of the witness and counts `g|w` over `X`.
pub fn relax_lower(g: &DnnfGraph, p: &VarPartition) -> Result<(BigUint, PartialAssignment), CountError> {
    check_smooth(g, p)?;
    let upper = relaxed_upper_set(p);
    check_layering(g, &upper)?;
    let is_max = |v: Var| upper.contains(&v);
    let val = bottom_up(g, is_max);
    let w = complete(extract_witness(g, &val, is_max).restrict(&p.choice), &p.choice);
    let count = model_count(&g.condition(&w), &p.chance)?;
    Ok((count, w))
}
