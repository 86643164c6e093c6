use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::compile::{compile, compile_capture, Capture, CompileError, CompileOptions};
use crate::formula::{Cnf, Var, VarPartition};

/// Strategy used to pick the relaxed variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelaxOrder {
    /// Chance variables the constrained compiler would have decided.
    Dfs,
    /// Top-most chance decisions of an unconstrained compilation.
    #[default]
    Bfs,
}

impl FromStr for RelaxOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dfs" => Ok(RelaxOrder::Dfs),
            "bfs" => Ok(RelaxOrder::Bfs),
            other => Err(format!("unknown relaxation order `{other}` (expected dfs or bfs)")),
        }
    }
}

impl fmt::Display for RelaxOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelaxOrder::Dfs => "dfs",
            RelaxOrder::Bfs => "bfs",
        })
    }
}

/// Relaxed variables picked by a selection strategy, in pick order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub order: Vec<Var>,
    /// The selection compile ran out of budget; `order` holds what was
    /// collected until then.
    pub partial: bool,
}

impl Selection {
    pub fn vars(&self) -> BTreeSet<Var> {
        self.order.iter().copied().collect()
    }
}

/// DFS(r): runs a constrained compilation with upper set `A`; whenever the
/// unrestricted heuristic would decide a chance variable while choice
/// variables remain in the component, that variable joins `R` and becomes
/// decidable. Stops once `r` variables are collected.
pub fn select_relaxed_dfs(
    f: &Cnf,
    p: &VarPartition,
    r: usize,
    options: &CompileOptions,
) -> Result<Selection, CompileError> {
    if r == 0 {
        return Ok(Selection::default());
    }
    let mut capture = Capture {
        limit: r,
        chosen: Vec::new(),
    };
    let partial = compile_capture(f, &p.choice, options, &mut capture)?;
    Ok(Selection {
        order: capture.chosen,
        partial,
    })
}

/// BFS(r): compiles without layering constraint, then collects the first
/// `r` distinct chance variables met on decision nodes in breadth-first order
/// from the root.
pub fn select_relaxed_bfs(
    f: &Cnf,
    p: &VarPartition,
    r: usize,
    options: &CompileOptions,
) -> Result<Selection, CompileError> {
    if r == 0 {
        return Ok(Selection::default());
    }
    match compile(f, &BTreeSet::new(), options) {
        Ok((g, _)) => Ok(Selection {
            order: bfs_chance_vars(&g.bfs_decision_vars(), p, r),
            partial: false,
        }),
        Err(CompileError::BudgetExhausted { .. }) => Ok(Selection {
            order: Vec::new(),
            partial: true,
        }),
        Err(e) => Err(e),
    }
}

fn bfs_chance_vars(decisions: &[Var], p: &VarPartition, r: usize) -> Vec<Var> {
    decisions.iter().copied().filter(|v| p.chance.contains(v)).take(r).collect()
}

pub fn select_relaxed(
    order: RelaxOrder,
    f: &Cnf,
    p: &VarPartition,
    r: usize,
    options: &CompileOptions,
) -> Result<Selection, CompileError> {
    match order {
        RelaxOrder::Dfs => select_relaxed_dfs(f, p, r, options),
        RelaxOrder::Bfs => select_relaxed_bfs(f, p, r, options),
    }
}
