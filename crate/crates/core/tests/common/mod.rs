#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use qrobust::bitvector::{mask, BinaryOp, BvExpr, UnaryOp};
use qrobust::formula::{Cnf, Lit, Var, VarPartition};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random CNF with at most `max_vars` variables and `max_clauses` clauses
/// of width 1 to 4, and a random choice/chance split.
pub fn random_instance(rng: &mut ChaCha8Rng, max_vars: u32, max_clauses: usize) -> (Cnf, VarPartition) {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(0..=max_clauses);
    let mut clauses = Vec::with_capacity(m);
    for _ in 0..m {
        let width = rng.gen_range(1..=4.min(n as usize));
        let mut vars: Vec<u32> = Vec::new();
        while vars.len() < width {
            let v = rng.gen_range(1..=n);
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        clauses.push(vars.into_iter().map(|v| Lit::new(Var::new(v), rng.gen_bool(0.5))).collect());
    }
    let f = Cnf::from_clauses(n, clauses).expect("in range");
    let choice: BTreeSet<Var> = (1..=n).filter(|_| rng.gen_bool(0.4)).map(Var::new).collect();
    let p = VarPartition::with_choice(&f, choice);
    (f, p)
}

/// Runs `f` on a thread with a large stack; the compiler recurses once per
/// decision level.
pub fn big_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(f)
        .expect("spawn")
        .join()
        .expect("worker panicked")
}

pub fn data_path(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// An input or program variable available to generated expressions.
#[derive(Debug, Clone)]
pub struct Slot {
    pub name: String,
    pub width: u32,
    pub controlled: bool,
}

impl Slot {
    pub fn new(name: &str, width: u32, controlled: bool) -> Slot {
        Slot {
            name: name.to_string(),
            width,
            controlled,
        }
    }

    fn expr(&self) -> Arc<BvExpr> {
        BvExpr::input(&self.name, self.width, self.controlled).unwrap()
    }
}

/// A random word of `width` bits over the slots of that width.
pub fn random_word(rng: &mut ChaCha8Rng, slots: &[Slot], width: u32, depth: u32) -> Arc<BvExpr> {
    let same: Vec<&Slot> = slots.iter().filter(|s| s.width == width).collect();
    if depth == 0 || rng.gen_bool(0.3) {
        if !same.is_empty() && rng.gen_bool(0.75) {
            return same[rng.gen_range(0..same.len())].expr();
        }
        return BvExpr::constant(width, rng.gen_range(0..=mask(width))).unwrap();
    }
    let sub = |rng: &mut ChaCha8Rng| random_word(rng, slots, width, depth - 1);
    match rng.gen_range(0..7) {
        0 => BvExpr::unary(UnaryOp::Not, sub(rng)).unwrap(),
        1 => {
            let c = random_bool(rng, slots, depth - 1);
            BvExpr::ite(c, sub(rng), sub(rng)).unwrap()
        }
        k => {
            let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::BitAnd, BinaryOp::BitOr, BinaryOp::BitXor][k - 2];
            BvExpr::binary(op, sub(rng), sub(rng)).unwrap()
        }
    }
}

/// A random boolean over the slots.
pub fn random_bool(rng: &mut ChaCha8Rng, slots: &[Slot], depth: u32) -> Arc<BvExpr> {
    if depth == 0 || rng.gen_bool(0.4) {
        let width = if slots.is_empty() {
            rng.gen_range(1..=4)
        } else {
            slots[rng.gen_range(0..slots.len())].width
        };
        let op = [BinaryOp::Eq, BinaryOp::Neq, BinaryOp::Ult, BinaryOp::Ule][rng.gen_range(0..4)];
        let l = random_word(rng, slots, width, depth.saturating_sub(1));
        let r = random_word(rng, slots, width, depth.saturating_sub(1));
        return BvExpr::binary(op, l, r).unwrap();
    }
    match rng.gen_range(0..3) {
        0 => BvExpr::unary(UnaryOp::BoolNot, random_bool(rng, slots, depth - 1)).unwrap(),
        1 => BvExpr::binary(BinaryOp::BoolAnd, random_bool(rng, slots, depth - 1), random_bool(rng, slots, depth - 1))
            .unwrap(),
        _ => BvExpr::binary(BinaryOp::BoolOr, random_bool(rng, slots, depth - 1), random_bool(rng, slots, depth - 1))
            .unwrap(),
    }
}

/// Random inputs with at most `max_bits` bits in total, at least one of
/// each kind.
pub fn random_inputs(rng: &mut ChaCha8Rng, max_bits: u32) -> Vec<Slot> {
    let mut slots = Vec::new();
    let mut left = max_bits;
    let count = rng.gen_range(2..=3);
    for i in 0..count {
        let reserve = count - i - 1;
        let width = rng.gen_range(1..=(left - reserve).min(5));
        left -= width;
        let controlled = match i {
            0 => true,
            1 => false,
            _ => rng.gen_bool(0.5),
        };
        let prefix = if controlled { "a" } else { "x" };
        slots.push(Slot::new(&format!("{prefix}{i}"), width, controlled));
    }
    slots
}

fn program_block(
    rng: &mut ChaCha8Rng,
    slots: &[Slot],
    branches: &mut u32,
    depth: u32,
    out: &mut String,
    indent: &str,
) {
    for _ in 0..rng.gen_range(1..=3) {
        let roll = rng.gen_range(0..10);
        if roll < 4 {
            let s = &slots[rng.gen_range(0..slots.len())];
            let value = random_word(rng, slots, s.width, 2);
            out.push_str(&format!("{indent}{} := {value};\n", s.name));
        } else if roll < 8 && *branches > 0 && depth < 3 {
            *branches -= 1;
            let cond = random_bool(rng, slots, 2);
            if rng.gen_bool(0.15) {
                out.push_str(&format!("{indent}while ({cond}) bound 2 {{\n"));
                program_block(rng, slots, branches, depth + 1, out, &format!("{indent}  "));
                out.push_str(&format!("{indent}}}\n"));
                continue;
            }
            out.push_str(&format!("{indent}if ({cond}) {{\n"));
            program_block(rng, slots, branches, depth + 1, out, &format!("{indent}  "));
            out.push_str(&format!("{indent}}} else {{\n"));
            program_block(rng, slots, branches, depth + 1, out, &format!("{indent}  "));
            out.push_str(&format!("{indent}}}\n"));
        } else if roll < 9 && depth > 0 {
            out.push_str(&format!("{indent}target;\n"));
        } else {
            out.push_str(&format!("{indent}skip;\n"));
        }
    }
}

/// Source of a random program with at most `max_bits` input bits and at
/// most `max_branches` conditionals or loops.
pub fn random_program(rng: &mut ChaCha8Rng, max_bits: u32, max_branches: u32) -> String {
    let inputs = random_inputs(rng, max_bits);
    let mut out = String::new();
    for s in &inputs {
        let kind = if s.controlled { "controlled" } else { "uncontrolled" };
        out.push_str(&format!("input {} {} {kind};\n", s.name, s.width));
    }
    for controlled in [true, false] {
        if rng.gen_bool(0.25) {
            let side: Vec<Slot> = inputs.iter().filter(|s| s.controlled == controlled).cloned().collect();
            let e = random_bool(rng, &side, 1);
            if !e.inputs().is_empty() {
                out.push_str(&format!("assume {e};\n"));
            }
        }
    }
    // one branch is kept for the final conditional target
    let mut branches = max_branches.saturating_sub(1);
    program_block(rng, &inputs, &mut branches, 0, &mut out, "");
    let cond = random_bool(rng, &inputs, 2);
    out.push_str(&format!("if ({cond}) target;\n"));
    out
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Checks the robustness laws of QRSE on one program against exhaustive
/// execution. Returns the program's robustness.
pub fn check_qrse_laws(text: &str) -> Result<BigRational, String> {
    use qrobust::counting::SolveConfig;
    use qrobust::compiler::RelaxOrder;
    use qrobust::qrse::*;

    const EXHAUSTIVE: usize = 64;
    let p = parse_program(text).map_err(|e| format!("{e}\n{text}"))?;
    let truth = brute_force_qr(&p).map_err(|e| e.to_string())?;
    let paths = enumerate_paths(&p, EXHAUSTIVE);
    ensure!(paths.iter().all(|pc| pc.complete), "truncated paths\n{text}");
    let targets: Vec<_> = paths.iter().filter(|pc| pc.reaches_target).collect();
    let scorer = Scorer::new(&p, Solver::default()).map_err(|e| e.to_string())?;
    let mut qr = Vec::new();
    for pc in &targets {
        let s = scorer.score(&pc.id, &pc.predicate);
        ensure!(s.is_exact(), "inexact exact score on {}\n{text}", pc.id);
        // monotonicity: a single path never beats the program
        ensure!(s.lower <= truth, "path {} scores {} > {truth}\n{text}", pc.id, s.lower);
        qr.push(s.lower);
    }
    // subadditivity over every pair
    for i in 0..targets.len() {
        for j in i + 1..targets.len() {
            let both = BvExpr::binary(BinaryOp::BoolOr, targets[i].predicate.clone(), targets[j].predicate.clone())
                .unwrap();
            let merged = scorer.score("pair", &both);
            ensure!(merged.lower <= &qr[i] + &qr[j], "subadditivity fails on {i},{j}\n{text}");
        }
    }
    // k-completeness of the merged loop
    let cfg = QrseConfig {
        bound: EXHAUSTIVE,
        threshold: BigRational::one(),
        merge: true,
        all: true,
        ..QrseConfig::default()
    };
    let plus = run_qrse_plus(&p, &cfg).map_err(|e| e.to_string())?;
    let last = plus.entries.iter().max_by_key(|e| e.id.len()).unwrap();
    ensure!(last.lower == truth && last.upper == truth, "merged {} != {truth}\n{text}", last.lower);
    // pseudo-conservation
    if let Some(best) = qr.iter().max() {
        let n = BigRational::from_integer(qr.len().into());
        ensure!(best * &n >= last.lower, "pseudo-conservation fails\n{text}");
    }
    // correctness of every reported score, exact and relaxed
    for solver in [
        Solver::default(),
        Solver::Single(SolveConfig::relax(RelaxOrder::Bfs, 2)),
        Solver::Single(SolveConfig::relax(RelaxOrder::Dfs, 1)),
    ] {
        for merge in [false, true] {
            let cfg = QrseConfig {
                bound: EXHAUSTIVE,
                threshold: BigRational::new(1.into(), 3.into()),
                solver: solver.clone(),
                merge,
                all: true,
            };
            let report = run_qrse(&p, &cfg).map_err(|e| e.to_string())?;
            for e in &report.entries {
                ensure!(e.lower <= truth, "{} reported {} > {truth}\n{text}", e.id, e.lower);
                ensure!(e.lower <= e.upper, "empty interval on {}\n{text}", e.id);
            }
            if report.verdict == Verdict::Found {
                ensure!(truth >= cfg.threshold, "found below the threshold\n{text}");
            }
        }
    }
    // extremes, by running every input pair
    let mut per_a: std::collections::BTreeMap<Vec<(String, u64)>, (usize, usize)> = Default::default();
    let (h_a, h_x) = (p.h_a(), p.h_x());
    let mut envs = vec![std::collections::HashMap::new()];
    for i in &p.inputs {
        envs = envs
            .into_iter()
            .flat_map(|env| {
                (0..=mask(i.width)).map(move |v| {
                    let mut env = env.clone();
                    env.insert(i.name.clone(), v);
                    env
                })
            })
            .collect();
    }
    for env in envs {
        if h_a.eval(&env).unwrap() != 1 || h_x.eval(&env).unwrap() != 1 {
            continue;
        }
        let key: Vec<(String, u64)> =
            p.inputs.iter().filter(|i| i.controlled).map(|i| (i.name.clone(), env[&i.name])).collect();
        let e = per_a.entry(key).or_default();
        e.0 += 1;
        e.1 += usize::from(run_concrete(&p, &env) == Outcome::Target);
    }
    let reachable = per_a.values().any(|(_, hits)| *hits > 0);
    ensure!(truth.is_zero() == !reachable, "zero robustness law fails\n{text}");
    let robust = per_a.values().any(|(n, hits)| n == hits);
    ensure!((truth == BigRational::one()) == robust, "unit robustness law fails\n{text}");
    Ok(truth)
}
