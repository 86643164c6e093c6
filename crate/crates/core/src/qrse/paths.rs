use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::Arc;

use super::program::{conjoin, negate, Program, Stmt};
use crate::bitvector::BvExpr;

/// One explored path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathConstraint {
    /// Branch decisions, `T` for then and `F` for else, in execution order.
    pub id: String,
    /// Conjunction of the branch conditions, over inputs only.
    pub predicate: Arc<BvExpr>,
    pub reaches_target: bool,
    /// False when the path was cut after `k` decisions.
    pub complete: bool,
}

/// Replaces variable placeholders by their symbolic values.
pub fn substitute(e: &Arc<BvExpr>, state: &HashMap<String, Arc<BvExpr>>) -> Arc<BvExpr> {
    fn go(
        e: &Arc<BvExpr>,
        state: &HashMap<String, Arc<BvExpr>>,
        memo: &mut HashMap<*const BvExpr, Arc<BvExpr>>,
    ) -> Arc<BvExpr> {
        let key = Arc::as_ptr(e);
        if let Some(done) = memo.get(&key) {
            return done.clone();
        }
        let out = match e.as_ref() {
            BvExpr::Const { .. } => e.clone(),
            BvExpr::Input { name, .. } => state.get(name).cloned().unwrap_or_else(|| e.clone()),
            BvExpr::Unary(op, a) => Arc::new(BvExpr::Unary(*op, go(a, state, memo))),
            BvExpr::Binary(op, a, b) => Arc::new(BvExpr::Binary(*op, go(a, state, memo), go(b, state, memo))),
            BvExpr::Ite(c, t, f) => Arc::new(BvExpr::Ite(go(c, state, memo), go(t, state, memo), go(f, state, memo))),
        };
        memo.insert(key, out.clone());
        out
    }
    go(e, state, &mut HashMap::new()).simplify()
}

enum Work {
    Seq(Arc<Vec<Stmt>>, usize),
    Loop {
        cond: Arc<BvExpr>,
        bound: u32,
        body: Arc<Vec<Stmt>>,
        done: u32,
    },
}

impl Clone for Work {
    fn clone(&self) -> Self {
        match self {
            Work::Seq(s, i) => Work::Seq(s.clone(), *i),
            Work::Loop { cond, bound, body, done } => Work::Loop {
                cond: cond.clone(),
                bound: *bound,
                body: body.clone(),
                done: *done,
            },
        }
    }
}

struct Explorer<'a, F> {
    k: usize,
    emit: &'a mut F,
}

impl<F: FnMut(PathConstraint) -> ControlFlow<()>> Explorer<'_, F> {
    fn finish(&mut self, pc: &[Arc<BvExpr>], id: String, reaches_target: bool, complete: bool) -> ControlFlow<()> {
        (self.emit)(PathConstraint {
            id,
            predicate: conjoin(pc).simplify(),
            reaches_target,
            complete,
        })
    }

    fn run(
        &mut self,
        mut work: Vec<Work>,
        mut state: HashMap<String, Arc<BvExpr>>,
        mut pc: Vec<Arc<BvExpr>>,
        id: String,
    ) -> ControlFlow<()> {
        while let Some(item) = work.pop() {
            match item {
                Work::Seq(stmts, i) => {
                    let Some(stmt) = stmts.get(i) else { continue };
                    work.push(Work::Seq(stmts.clone(), i + 1));
                    match stmt {
                        Stmt::Assign { var, value } => {
                            let v = substitute(value, &state);
                            state.insert(var.clone(), v);
                        }
                        Stmt::Skip => {}
                        Stmt::Target => return self.finish(&pc, id, true, true),
                        Stmt::If { cond, then, otherwise } => {
                            let c = substitute(cond, &state);
                            let mut on_true = work.clone();
                            on_true.push(Work::Seq(then.clone(), 0));
                            work.push(Work::Seq(otherwise.clone(), 0));
                            return self.fork(c, on_true, work, state, pc, id);
                        }
                        Stmt::While { cond, bound, body } => work.push(Work::Loop {
                            cond: cond.clone(),
                            bound: *bound,
                            body: body.clone(),
                            done: 0,
                        }),
                    }
                }
                Work::Loop { cond, bound, body, done } => {
                    let c = substitute(&cond, &state);
                    if done == bound {
                        // executions needing another iteration are dropped
                        match c.as_const() {
                            Some(1) => return ControlFlow::Continue(()),
                            Some(_) => {}
                            None => pc.push(negate(c)),
                        }
                        continue;
                    }
                    let mut on_true = work.clone();
                    on_true.push(Work::Loop {
                        cond,
                        bound,
                        body: body.clone(),
                        done: done + 1,
                    });
                    on_true.push(Work::Seq(body, 0));
                    return self.fork(c, on_true, work, state, pc, id);
                }
            }
        }
        self.finish(&pc, id, false, true)
    }

    /// Branches on `c`. Constant conditions do not count as decisions.
    fn fork(
        &mut self,
        c: Arc<BvExpr>,
        on_true: Vec<Work>,
        on_false: Vec<Work>,
        state: HashMap<String, Arc<BvExpr>>,
        pc: Vec<Arc<BvExpr>>,
        id: String,
    ) -> ControlFlow<()> {
        match c.as_const() {
            Some(1) => return self.run(on_true, state, pc, id),
            Some(_) => return self.run(on_false, state, pc, id),
            None => {}
        }
        if id.len() >= self.k {
            return self.finish(&pc, id, false, false);
        }
        let mut then_pc = pc.clone();
        then_pc.push(c.clone());
        self.run(on_true, state.clone(), then_pc, format!("{id}T"))?;
        let mut else_pc = pc;
        else_pc.push(negate(c));
        self.run(on_false, state, else_pc, format!("{id}F"))
    }
}

/// Depth-first, then-branch-first enumeration of the paths with at most
/// `k` decisions. `emit` may stop the enumeration early.
pub fn for_each_path(p: &Program, k: usize, mut emit: impl FnMut(PathConstraint) -> ControlFlow<()>) {
    let state = p
        .inputs
        .iter()
        .map(|i| {
            let e = BvExpr::input(&i.name, i.width, i.controlled).expect("declared width");
            (i.name.clone(), e)
        })
        .collect();
    let mut explorer = Explorer { k, emit: &mut emit };
    let _ = explorer.run(vec![Work::Seq(Arc::new(p.body.clone()), 0)], state, Vec::new(), String::new());
}

/// All paths with at most `k` decisions, in enumeration order.
pub fn enumerate_paths(p: &Program, k: usize) -> Vec<PathConstraint> {
    let mut out = Vec::new();
    for_each_path(p, k, |pc| {
        out.push(pc);
        ControlFlow::Continue(())
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qrse::program::parse_program;

    const MERGE: &str = "input a 1 controlled;\ninput x 1 uncontrolled;\n\
                         if (x) x++; else x--;\nif (!a) target;\n";

    fn env(pairs: &[(&str, u64)]) -> HashMap<String, u64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    #[test]
    fn merge_example_has_two_target_paths() {
        let p = parse_program(MERGE).unwrap();
        let paths = enumerate_paths(&p, 2);
        let ids: Vec<_> = paths.iter().map(|p| (p.id.as_str(), p.reaches_target)).collect();
        assert_eq!(ids, [("TT", true), ("TF", false), ("FT", true), ("FF", false)]);
        let holds = |i: usize, a, x| paths[i].predicate.eval(&env(&[("a", a), ("x", x)])).unwrap() == 1;
        assert!(holds(0, 0, 1) && !holds(0, 0, 0) && !holds(0, 1, 1));
        assert!(holds(2, 0, 0) && !holds(2, 0, 1) && !holds(2, 1, 0));
    }

    #[test]
    fn straight_line_program_has_one_path() {
        let p = parse_program("input a 4 controlled;\nb := a + 1;\ntarget;\n").unwrap();
        let paths = enumerate_paths(&p, 0);
        assert_eq!(paths.len(), 1);
        assert!(paths[0].reaches_target && paths[0].complete);
        assert_eq!(paths[0].predicate.as_const(), Some(1));
    }

    #[test]
    fn zero_bound_cuts_branching_programs() {
        let p = parse_program(MERGE).unwrap();
        let paths = enumerate_paths(&p, 0);
        assert_eq!(paths.len(), 1);
        assert!(!paths[0].complete && !paths[0].reaches_target);
        let paths = enumerate_paths(&p, 1);
        assert!(paths.iter().all(|p| !p.reaches_target));
    }

    #[test]
    fn constant_conditions_do_not_fork() {
        let p = parse_program("input a 4 controlled;\nb := 4'3;\nif (b == 3) { if (a == b) target; }\n").unwrap();
        let paths = enumerate_paths(&p, 1);
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].id, "T");
        assert!(paths[0].reaches_target);
    }

    #[test]
    fn loops_unroll_up_to_their_bound() {
        let p = parse_program("input n 3 controlled;\ni := 3'0;\nwhile (i <u n) bound 2 i++;\ntarget;\n").unwrap();
        let paths = enumerate_paths(&p, 10);
        // n = 0, n = 1, n = 2; n > 2 would need a third iteration
        assert_eq!(paths.len(), 3);
        for n in 0..8u64 {
            let hits = paths
                .iter()
                .filter(|pc| pc.predicate.eval(&env(&[("n", n)])).unwrap() == 1)
                .count();
            assert_eq!(hits, usize::from(n <= 2), "n = {n}");
        }
    }

    #[test]
    fn predicates_mention_inputs_only() {
        let p = parse_program("input a 4 controlled;\ninput x 4 uncontrolled;\nt := a + x;\nu := t ^ a;\nif (u == 5) target;\n")
            .unwrap();
        for pc in enumerate_paths(&p, 4) {
            for (name, _, _) in pc.predicate.inputs() {
                assert!(name == "a" || name == "x");
            }
        }
    }
}
