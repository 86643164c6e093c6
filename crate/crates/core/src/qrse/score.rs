use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use super::paths::{for_each_path, PathConstraint};
use super::program::{holds, run_concrete, Outcome, Program};
use crate::bitvector::{mask, BinaryOp, Blaster, BvError, BvExpr};
use crate::compiler::{Budget, Heuristic};
use crate::counting::{decimal, millis, solve_portfolio, solve_with_chance_bits, SolveConfig, SolveError, Stage, Status};

/// Stack size for threads that compile formulas; the compiler recurses once
/// per decision.
pub(crate) const SOLVER_STACK: usize = 256 << 20;

#[derive(Debug, Error)]
pub enum QrseError {
    #[error(transparent)]
    Bitvector(#[from] BvError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("could not count the uncontrolled inputs allowed by the assumptions within the budget")]
    AssumptionCount,
    #[error("{0} input bits are too many for exhaustive enumeration (at most {1})")]
    TooLarge(usize, usize),
}

/// How each path formula is solved.
#[derive(Debug, Clone)]
pub enum Solver {
    Single(SolveConfig),
    /// Stages share the time budget equally; intervals are intersected.
    Portfolio {
        stages: Vec<Stage>,
        budget: Budget,
        heuristic: Heuristic,
    },
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Single(SolveConfig::exact())
    }
}

impl Solver {
    pub fn describe(&self) -> String {
        match self {
            Solver::Single(c) => c.algorithm(),
            Solver::Portfolio { stages, .. } => {
                stages.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct QrseConfig {
    /// Maximum number of branch decisions per path.
    pub bound: usize,
    pub threshold: BigRational,
    pub solver: Solver,
    /// Score the running disjunction of target paths instead of single paths.
    pub merge: bool,
    /// Score every path instead of stopping at the first one meeting the threshold.
    pub all: bool,
}

impl Default for QrseConfig {
    fn default() -> Self {
        QrseConfig {
            bound: 16,
            threshold: BigRational::one(),
            solver: Solver::default(),
            merge: false,
            all: false,
        }
    }
}

/// The score of one path, or of a disjunction of paths when merging.
#[derive(Debug, Clone, PartialEq)]
pub struct PathScore {
    pub id: String,
    pub lower: BigRational,
    pub upper: BigRational,
    /// Controlled input values achieving at least `lower`.
    pub witness: BTreeMap<String, u64>,
    pub algorithm: String,
    pub status: Status,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl PathScore {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    fn to_json(&self) -> Value {
        json!({
            "path": self.id,
            "lower": self.lower.to_string(),
            "upper": self.upper.to_string(),
            "lower_decimal": decimal(&self.lower, 10),
            "upper_decimal": decimal(&self.upper, 10),
            "witness": self.witness,
            "algorithm": self.algorithm,
            "status": self.status.to_string(),
            "error": self.error,
            "wall_ms": self.wall_ms,
        })
    }
}

/// Scores path predicates against one program. Caches the number of
/// uncontrolled inputs allowed by the assumptions.
pub struct Scorer<'a> {
    program: &'a Program,
    solver: Solver,
    allowed: BigUint,
    chance_bits: usize,
}

impl<'a> Scorer<'a> {
    pub fn new(program: &'a Program, solver: Solver) -> Result<Scorer<'a>, QrseError> {
        let chance_bits = program.inputs.iter().filter(|i| !i.controlled).map(|i| i.width as usize).sum();
        let h_x = program.h_x().simplify();
        let allowed = if h_x.as_const() == Some(1) {
            BigUint::one() << chance_bits
        } else {
            let mut blaster = Blaster::new();
            for i in program.inputs.iter().filter(|i| !i.controlled) {
                blaster.declare_input(&i.name, i.width, false)?;
            }
            blaster.assert(&h_x)?;
            let b = blaster.finish();
            let budget = match &solver {
                Solver::Single(c) => c.budget,
                Solver::Portfolio { budget, .. } => *budget,
            };
            let r = solve_with_chance_bits(&b.cnf, &b.partition, chance_bits, &SolveConfig::exact().with_budget(budget))?;
            if !r.is_exact() {
                return Err(QrseError::AssumptionCount);
            }
            r.lower
        };
        Ok(Scorer {
            program,
            solver,
            allowed,
            chance_bits,
        })
    }

    /// Number of uncontrolled inputs satisfying the assumptions.
    pub fn allowed(&self) -> &BigUint {
        &self.allowed
    }

    /// Quantitative robustness interval of `predicate` under the assumptions.
    pub fn score(&self, id: &str, predicate: &Arc<BvExpr>) -> PathScore {
        let start = Instant::now();
        let mut out = match self.try_score(id, predicate) {
            Ok(s) => s,
            Err(e) => PathScore {
                id: id.to_string(),
                lower: BigRational::zero(),
                upper: BigRational::one(),
                witness: BTreeMap::new(),
                algorithm: self.solver.describe(),
                status: Status::Partial,
                error: Some(e.to_string()),
                wall_ms: 0.0,
            },
        };
        out.wall_ms = millis(start.elapsed());
        out
    }

    fn try_score(&self, id: &str, predicate: &Arc<BvExpr>) -> Result<PathScore, QrseError> {
        let p = self.program;
        let exact_zero = |algorithm: String| PathScore {
            id: id.to_string(),
            lower: BigRational::zero(),
            upper: BigRational::zero(),
            witness: p.inputs.iter().filter(|i| i.controlled).map(|i| (i.name.clone(), 0)).collect(),
            algorithm,
            status: Status::Complete,
            error: None,
            wall_ms: 0.0,
        };
        if self.allowed.is_zero() {
            return Ok(exact_zero("empty".into()));
        }
        let mut blaster = Blaster::new();
        for i in &p.inputs {
            blaster.declare_input(&i.name, i.width, i.controlled)?;
        }
        blaster.assert(&p.h_a())?;
        blaster.assert(&p.h_x())?;
        blaster.assert(predicate)?;
        let b = blaster.finish();
        let r = match &self.solver {
            Solver::Single(c) => solve_with_chance_bits(&b.cnf, &b.partition, self.chance_bits, c)?,
            Solver::Portfolio {
                stages,
                budget,
                heuristic,
            } => solve_portfolio(&b.cnf, &b.partition, self.chance_bits, stages, *budget, *heuristic, |r| {
                r.is_exact()
            })?,
        };
        let allowed = BigRational::from_integer(self.allowed.clone().into());
        let clamp = |n: &BigUint| {
            let n = BigRational::from_integer(n.clone().into());
            if n > allowed {
                BigRational::one()
            } else {
                n / &allowed
            }
        };
        if r.upper.is_zero() && r.status == Status::Complete {
            return Ok(exact_zero(r.algorithm));
        }
        Ok(PathScore {
            id: id.to_string(),
            lower: clamp(&r.lower),
            upper: clamp(&r.upper),
            witness: b.decode_controlled(&r.witness),
            algorithm: r.algorithm,
            status: r.status,
            error: r.note,
            wall_ms: 0.0,
        })
    }
}

/// Quantitative robustness interval of a single path.
pub fn path_qr(p: &Program, pc: &PathConstraint, solver: &Solver) -> Result<PathScore, QrseError> {
    Ok(Scorer::new(p, solver.clone())?.score(&pc.id, &pc.predicate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Some score's lower bound meets the threshold.
    Found,
    /// Every score's upper bound is below the threshold.
    NotFound,
    /// Some interval straddles the threshold and none meets it.
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Found => "found",
            Verdict::NotFound => "not-found",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone)]
pub struct QrReport {
    pub threshold: BigRational,
    pub merge: bool,
    pub bound: usize,
    pub solver: String,
    /// Scores, sorted by decreasing lower bound.
    pub entries: Vec<PathScore>,
    pub verdict: Verdict,
    /// The first score in enumeration order meeting the threshold.
    pub first: Option<PathScore>,
    pub paths_explored: usize,
    pub target_paths: usize,
    /// Paths cut after `bound` decisions.
    pub truncated: usize,
    pub wall_ms: f64,
}

impl QrReport {
    /// The reported robustness: the first qualifying score, else the best.
    pub fn chi(&self) -> Option<&PathScore> {
        self.first.as_ref().or_else(|| self.entries.first())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "verdict": self.verdict.to_string(),
            "threshold": self.threshold.to_string(),
            "merge": self.merge,
            "bound": self.bound,
            "solver": self.solver,
            "chi": self.chi().map(PathScore::to_json),
            "first": self.first.as_ref().map(|s| s.id.clone()),
            "paths_explored": self.paths_explored,
            "target_paths": self.target_paths,
            "truncated": self.truncated,
            "wall_ms": self.wall_ms,
            "paths": self.entries.iter().map(PathScore::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "verdict {} at threshold {} ({} target paths of {} explored, {} truncated, solver {})",
            self.verdict, self.threshold, self.target_paths, self.paths_explored, self.truncated, self.solver
        );
        if let Some(chi) = self.chi() {
            let _ = writeln!(out, "chi [{}, {}] on path {}", chi.lower, chi.upper, chi.id);
        }
        let id_width = self.entries.iter().map(|e| e.id.len()).max().unwrap_or(0).max(4);
        let _ = writeln!(out, "{:<id_width$}  {:>12}  {:>12}  {:<8}  witness", "path", "lower", "upper", "status");
        for e in &self.entries {
            let witness = e.witness.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
            let id = if e.id.is_empty() { "-" } else { &e.id };
            let _ = writeln!(
                out,
                "{:<id_width$}  {:>12}  {:>12}  {:<8}  {}",
                id,
                decimal(&e.lower, 10),
                decimal(&e.upper, 10),
                e.status.to_string(),
                witness
            );
        }
        out
    }
}

fn verdict(scores: &[PathScore], threshold: &BigRational) -> Verdict {
    if scores.iter().any(|s| &s.lower >= threshold) {
        Verdict::Found
    } else if scores.iter().all(|s| &s.upper < threshold) {
        Verdict::NotFound
    } else {
        Verdict::Unknown
    }
}

fn sort_desc(entries: &mut [PathScore]) {
    entries.sort_by(|a, b| b.lower.cmp(&a.lower).then_with(|| b.upper.cmp(&a.upper)));
}

struct Counts {
    explored: usize,
    targets: usize,
    truncated: usize,
}

/// Scores target paths one at a time, stopping at the first whose lower
/// bound meets the threshold unless `cfg.all` is set.
pub fn run_qrse(p: &Program, cfg: &QrseConfig) -> Result<QrReport, QrseError> {
    if cfg.merge {
        return run_qrse_plus(p, cfg);
    }
    let start = Instant::now();
    let scorer = Scorer::new(p, cfg.solver.clone())?;
    let mut counts = Counts {
        explored: 0,
        targets: 0,
        truncated: 0,
    };
    let mut entries = Vec::new();
    let mut first = None;
    if cfg.all {
        let mut targets = Vec::new();
        for_each_path(p, cfg.bound, |pc| {
            tally(&mut counts, &pc);
            if pc.reaches_target {
                targets.push(pc);
            }
            ControlFlow::Continue(())
        });
        let pool = rayon::ThreadPoolBuilder::new()
            .stack_size(SOLVER_STACK)
            .build()
            .expect("thread pool");
        entries = pool.install(|| targets.par_iter().map(|pc| scorer.score(&pc.id, &pc.predicate)).collect::<Vec<_>>());
        first = entries.iter().find(|s| s.lower >= cfg.threshold).cloned();
    } else {
        for_each_path(p, cfg.bound, |pc| {
            tally(&mut counts, &pc);
            if !pc.reaches_target {
                return ControlFlow::Continue(());
            }
            let s = scorer.score(&pc.id, &pc.predicate);
            let hit = s.lower >= cfg.threshold;
            if hit {
                first = Some(s.clone());
            }
            entries.push(s);
            if hit {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
    }
    Ok(report(cfg, scorer.solver.describe(), entries, first, counts, start))
}

/// Scores the running disjunction of target path predicates after each new
/// target path. With `cfg.all` the whole disjunction is always reached.
pub fn run_qrse_plus(p: &Program, cfg: &QrseConfig) -> Result<QrReport, QrseError> {
    let start = Instant::now();
    let scorer = Scorer::new(p, cfg.solver.clone())?;
    let mut counts = Counts {
        explored: 0,
        targets: 0,
        truncated: 0,
    };
    let mut entries: Vec<PathScore> = Vec::new();
    let mut first = None;
    let mut phi: Option<Arc<BvExpr>> = None;
    let mut ids: Vec<String> = Vec::new();
    for_each_path(p, cfg.bound, |pc| {
        tally(&mut counts, &pc);
        if !pc.reaches_target {
            return ControlFlow::Continue(());
        }
        phi = Some(match phi.take() {
            None => pc.predicate.clone(),
            Some(prev) => BvExpr::binary(BinaryOp::BoolOr, prev, pc.predicate.clone()).expect("boolean operands"),
        });
        ids.push(pc.id.clone());
        let s = scorer.score(&ids.join("|"), phi.as_ref().expect("set above"));
        let hit = s.lower >= cfg.threshold;
        if hit && first.is_none() {
            first = Some(s.clone());
        }
        entries.push(s);
        if hit && !cfg.all {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    if entries.is_empty() {
        entries.push(PathScore {
            id: String::new(),
            lower: BigRational::zero(),
            upper: BigRational::zero(),
            witness: BTreeMap::new(),
            algorithm: "none".into(),
            status: Status::Complete,
            error: None,
            wall_ms: 0.0,
        });
    }
    let mut out = report(cfg, scorer.solver.describe(), entries, first, counts, start);
    // only the final disjunction bounds the program's robustness from above
    let last = out.entries.iter().max_by_key(|e| e.id.len()).cloned();
    if out.verdict != Verdict::Found {
        out.verdict = verdict(&last.into_iter().collect::<Vec<_>>(), &cfg.threshold);
    }
    Ok(out)
}

fn tally(counts: &mut Counts, pc: &PathConstraint) {
    counts.explored += 1;
    if pc.reaches_target {
        counts.targets += 1;
    }
    if !pc.complete {
        counts.truncated += 1;
    }
}

fn report(
    cfg: &QrseConfig,
    solver: String,
    mut entries: Vec<PathScore>,
    first: Option<PathScore>,
    counts: Counts,
    start: Instant,
) -> QrReport {
    let v = verdict(&entries, &cfg.threshold);
    sort_desc(&mut entries);
    QrReport {
        threshold: cfg.threshold.clone(),
        merge: cfg.merge,
        bound: cfg.bound,
        solver,
        entries,
        verdict: v,
        first,
        paths_explored: counts.explored,
        target_paths: counts.targets,
        truncated: counts.truncated,
        wall_ms: millis(start.elapsed()),
    }
}

/// Largest input space [`brute_force_qr`] accepts, in bits.
pub const BRUTE_FORCE_BITS: usize = 16;

fn assignments(decls: &[&crate::bitvector::InputDecl]) -> Vec<HashMap<String, u64>> {
    let mut out = vec![HashMap::new()];
    for d in decls {
        out = out
            .into_iter()
            .flat_map(|env| {
                (0..=mask(d.width)).map(move |v| {
                    let mut env = env.clone();
                    env.insert(d.name.clone(), v);
                    env
                })
            })
            .collect();
    }
    out
}

/// Exact robustness by running the program on every input pair: the best
/// share, over controlled inputs allowed by the assumptions, of allowed
/// uncontrolled inputs that reach the target.
pub fn brute_force_qr(p: &Program) -> Result<BigRational, QrseError> {
    let bits = p.input_bits();
    if bits > BRUTE_FORCE_BITS {
        return Err(QrseError::TooLarge(bits, BRUTE_FORCE_BITS));
    }
    let controlled: Vec<_> = p.inputs.iter().filter(|i| i.controlled).collect();
    let uncontrolled: Vec<_> = p.inputs.iter().filter(|i| !i.controlled).collect();
    let h_a = p.h_a();
    let h_x = p.h_x();
    let xs: Vec<_> = assignments(&uncontrolled).into_iter().filter(|x| holds(&h_x, x)).collect();
    if xs.is_empty() {
        return Ok(BigRational::zero());
    }
    let mut best = 0usize;
    for a in assignments(&controlled) {
        if !holds(&h_a, &a) {
            continue;
        }
        let hits = xs
            .iter()
            .filter(|x| {
                let mut env = a.clone();
                env.extend(x.iter().map(|(k, v)| (k.clone(), *v)));
                run_concrete(p, &env) == Outcome::Target
            })
            .count();
        best = best.max(hits);
    }
    Ok(BigRational::new(best.into(), xs.len().into()))
}

/// Parses a rational in `[0, 1]` written as `p/q`, as a decimal, or as an integer.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let bad = || format!("`{s}` is not a fraction or decimal");
    let value = if let Some((n, d)) = s.split_once('/') {
        let n: num_bigint::BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: num_bigint::BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(format!("`{s}` has a zero denominator"));
        }
        BigRational::new(n, d)
    } else if let Some((int, frac)) = s.split_once('.') {
        if !frac.chars().all(|c| c.is_ascii_digit()) || int.starts_with('-') {
            return Err(bad());
        }
        let digits = format!("{}{frac}", if int.is_empty() { "0" } else { int });
        let n: num_bigint::BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
        BigRational::new(n, d)
    } else {
        BigRational::from_integer(s.parse().map_err(|_| bad())?)
    };
    if value < BigRational::zero() || value > BigRational::one() {
        return Err(format!("threshold {s} is outside [0, 1]"));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qrse::{enumerate_paths, parse_program};

    const MERGE: &str = "input a 1 controlled;\ninput x 1 uncontrolled;\n\
                         if (x) x++; else x--;\nif (!a) target;\n";

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn cfg(threshold: BigRational, merge: bool) -> QrseConfig {
        QrseConfig {
            bound: 8,
            threshold,
            merge,
            ..QrseConfig::default()
        }
    }

    #[test]
    fn merge_example_paths_score_one_half() {
        let p = parse_program(MERGE).unwrap();
        let paths = enumerate_paths(&p, 2);
        let s = path_qr(&p, &paths[0], &Solver::default()).unwrap();
        assert_eq!((s.lower.clone(), s.upper.clone()), (q(1, 2), q(1, 2)));
        assert_eq!(s.witness, BTreeMap::from([("a".to_string(), 0)]));
    }

    #[test]
    fn merge_example_verdicts() {
        let p = parse_program(MERGE).unwrap();
        let r = run_qrse(&p, &cfg(q(1, 2), false)).unwrap();
        assert_eq!(r.verdict, Verdict::Found);
        assert_eq!(r.first.as_ref().unwrap().lower, q(1, 2));
        assert_eq!(r.first.as_ref().unwrap().id, "TT");
        let r = run_qrse(&p, &cfg(q(3, 5), false)).unwrap();
        assert_eq!(r.verdict, Verdict::NotFound);
        let r = run_qrse(&p, &cfg(q(1, 1), false)).unwrap();
        assert_eq!(r.verdict, Verdict::NotFound);
        let r = run_qrse_plus(&p, &cfg(q(1, 1), true)).unwrap();
        assert_eq!(r.verdict, Verdict::Found);
        assert_eq!(r.first.as_ref().unwrap().lower, q(1, 1));
        assert_eq!(brute_force_qr(&p).unwrap(), q(1, 1));
    }

    #[test]
    fn false_predicate_scores_zero() {
        let p = parse_program(MERGE).unwrap();
        let s = Scorer::new(&p, Solver::default()).unwrap().score("x", &BvExpr::boolean(false));
        assert_eq!((s.lower, s.upper), (q(0, 1), q(0, 1)));
    }

    #[test]
    fn unreachable_target_merges_to_zero() {
        let p = parse_program("input a 2 controlled;\nif (a == 1) { if (a == 2) target; }\n").unwrap();
        let r = run_qrse_plus(&p, &cfg(q(1, 5), true)).unwrap();
        assert_eq!(r.verdict, Verdict::NotFound);
        assert_eq!(r.chi().unwrap().upper, q(0, 1));
        assert_eq!(brute_force_qr(&p).unwrap(), q(0, 1));
    }

    #[test]
    fn brute_force_one_value_per_controlled_input() {
        let p = parse_program("input a 2 controlled;\ninput x 2 uncontrolled;\nif (a == x) target;\n").unwrap();
        assert_eq!(brute_force_qr(&p).unwrap(), q(1, 4));
        let r = run_qrse(&p, &QrseConfig { all: true, ..cfg(q(1, 5), false) }).unwrap();
        assert_eq!(r.verdict, Verdict::Found);
        assert_eq!(r.entries[0].lower, q(1, 4));
    }

    #[test]
    fn assumptions_restrict_both_sides() {
        let text = "input a 3 controlled;\ninput x 3 uncontrolled;\nassume a <u 4;\nassume x <u 5;\n\
                    if (x <u a) target;\n";
        let p = parse_program(text).unwrap();
        // a = 3 hits x in {0, 1, 2} out of the five allowed values
        assert_eq!(brute_force_qr(&p).unwrap(), q(3, 5));
        let r = run_qrse_plus(&p, &cfg(q(1, 2), true)).unwrap();
        assert_eq!(r.chi().unwrap().lower, q(3, 5));
        assert_eq!(r.chi().unwrap().witness["a"], 3);
    }

    #[test]
    fn rationals_parse_exactly() {
        assert_eq!(parse_rational("1/5").unwrap(), q(1, 5));
        assert_eq!(parse_rational("0.2").unwrap(), q(1, 5));
        assert_eq!(parse_rational(".25").unwrap(), q(1, 4));
        assert_eq!(parse_rational("1").unwrap(), q(1, 1));
        assert!(parse_rational("3/2").is_err());
        assert!(parse_rational("-0.5").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }
}
