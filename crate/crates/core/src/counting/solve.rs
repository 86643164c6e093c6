use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use super::traverse::{constrained_emajsat, model_count, relax_lower, relax_upper, CountError};
use crate::compiler::{compile, select_relaxed, Budget, CompileError, CompileOptions, Heuristic, RelaxOrder};
use crate::formula::{pow2, Cnf, FormulaError, PartialAssignment, Var, VarPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Exact,
    Relax,
    Unconstrained,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "relax" => Ok(Mode::Relax),
            "unconstrained" => Ok(Mode::Unconstrained),
            other => Err(format!("unknown mode `{other}` (expected exact, relax or unconstrained)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Relax => "relax",
            Mode::Unconstrained => "unconstrained",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveConfig {
    pub mode: Mode,
    pub relax_count: usize,
    pub relax_order: RelaxOrder,
    /// Shared by relaxed-variable selection and the main compilation.
    pub budget: Budget,
    pub heuristic: Heuristic,
}

impl SolveConfig {
    pub fn exact() -> SolveConfig {
        SolveConfig::default()
    }

    pub fn relax(order: RelaxOrder, r: usize) -> SolveConfig {
        SolveConfig {
            mode: Mode::Relax,
            relax_count: r,
            relax_order: order,
            ..SolveConfig::default()
        }
    }

    pub fn unconstrained() -> SolveConfig {
        SolveConfig {
            mode: Mode::Unconstrained,
            ..SolveConfig::default()
        }
    }

    pub fn with_budget(self, budget: Budget) -> SolveConfig {
        SolveConfig { budget, ..self }
    }

    pub fn with_timeout(self, timeout: Duration) -> SolveConfig {
        SolveConfig {
            budget: self.budget.with_time(timeout),
            ..self
        }
    }

    /// Short name such as `exact`, `relax-bfs(8)` or `unconstrained`.
    pub fn algorithm(&self) -> String {
        match self.mode {
            Mode::Relax => format!("relax-{}({})", self.relax_order, self.relax_count),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// The budget ran out; the bounds are sound but may be trivial.
    Partial,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Complete => "complete",
            Status::Partial => "partial",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub selection_time: Duration,
    pub compile_time: Duration,
    pub traversal_time: Duration,
    pub nodes: usize,
    pub edges: usize,
    pub decisions: usize,
    pub cache_hits: usize,
}

impl SolveStats {
    pub fn total_time(&self) -> Duration {
        self.selection_time + self.compile_time + self.traversal_time
    }
}

/// Bounds on f-E-MAJSAT with a witness achieving `lower`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub lower: BigUint,
    pub upper: BigUint,
    /// Over the choice variables; reaches `lower` models.
    pub witness: PartialAssignment,
    pub algorithm: String,
    /// Exponent of the chance-universe size used for normalisation.
    pub chance_bits: usize,
    pub relaxed_vars: Vec<Var>,
    pub status: Status,
    /// Why the result is partial, if it is.
    pub note: Option<String>,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn is_exact(&self) -> bool {
        self.status == Status::Complete && self.lower == self.upper
    }

    /// `upper / lower`, or `None` when `lower` is zero.
    pub fn imprecision(&self) -> Option<BigRational> {
        if self.lower.is_zero() {
            return None;
        }
        Some(BigRational::new(self.upper.clone().into(), self.lower.clone().into()))
    }

    /// The bounds divided by `2^chance_bits`.
    pub fn ratio(&self) -> (BigRational, BigRational) {
        let d: num_bigint::BigInt = pow2(self.chance_bits).into();
        (
            BigRational::new(self.lower.clone().into(), d.clone()),
            BigRational::new(self.upper.clone().into(), d),
        )
    }

    pub fn to_json(&self) -> Value {
        let witness: serde_json::Map<String, Value> = self
            .witness
            .iter()
            .map(|(v, b)| (v.index().to_string(), Value::Bool(b)))
            .collect();
        json!({
            "lower": self.lower.to_string(),
            "upper": self.upper.to_string(),
            "witness": witness,
            "chance_bits": self.chance_bits,
            "algorithm": self.algorithm,
            "relaxed_vars": self.relaxed_vars.iter().map(|v| v.index()).collect::<Vec<_>>(),
            "status": self.status.to_string(),
            "note": self.note,
            "times_ms": {
                "selection": millis(self.stats.selection_time),
                "compile": millis(self.stats.compile_time),
                "traversal": millis(self.stats.traversal_time),
                "total": millis(self.stats.total_time()),
            },
            "nodes": self.stats.nodes,
            "edges": self.stats.edges,
        })
    }
}

pub(crate) fn millis(d: Duration) -> f64 {
    (d.as_secs_f64() * 1e6).round() / 1e3
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error("compilation failed: {0}")]
    Compile(CompileError),
    #[error("witness reaches {recount} models but the solver reported {lower}")]
    WitnessMismatch { lower: BigUint, recount: BigUint },
    #[error("precision bound violated: upper {upper} > 2^{relaxed} * lower {lower}")]
    PrecisionViolated { lower: BigUint, upper: BigUint, relaxed: usize },
}

struct Deadline {
    budget: Budget,
    end: Option<Instant>,
}

impl Deadline {
    fn new(budget: Budget) -> Deadline {
        Deadline {
            budget,
            end: budget.max_time.map(|t| Instant::now() + t),
        }
    }

    fn options(&self, heuristic: Heuristic) -> CompileOptions {
        let mut budget = self.budget;
        if let Some(end) = self.end {
            budget.max_time = Some(end.saturating_duration_since(Instant::now()));
        }
        CompileOptions {
            heuristic,
            budget,
            cache: true,
        }
    }
}

/// Solves `f` under `p` with `2^|X|` as the chance-universe size.
pub fn solve(f: &Cnf, p: &VarPartition, config: &SolveConfig) -> Result<SolveResult, SolveError> {
    solve_with_chance_bits(f, p, p.chance.len(), config)
}

/// Like [`solve`], with an explicit normalisation exponent. Bitblasted
/// formulas count models over input bits plus functionally determined
/// auxiliaries, so their universe is the number of uncontrolled input bits.
pub fn solve_with_chance_bits(
    f: &Cnf,
    p: &VarPartition,
    chance_bits: usize,
    config: &SolveConfig,
) -> Result<SolveResult, SolveError> {
    p.validate(f)?;
    let deadline = Deadline::new(config.budget);
    let mut stats = SolveStats::default();
    let mut p = p.clone();
    let mut selection_partial = false;

    let started = Instant::now();
    let upper_set: BTreeSet<Var> = match config.mode {
        Mode::Exact => {
            p.relaxed.clear();
            p.choice.clone()
        }
        Mode::Unconstrained => {
            p.relaxed = p.chance.clone();
            BTreeSet::new()
        }
        Mode::Relax => {
            let selection = select_relaxed(
                config.relax_order,
                f,
                &p,
                config.relax_count,
                &deadline.options(config.heuristic),
            )
            .map_err(SolveError::Compile)?;
            selection_partial = selection.partial;
            p.relaxed = selection.vars();
            p.choice.union(&p.relaxed).copied().collect()
        }
    };
    stats.selection_time = started.elapsed();

    let partial = |stats: SolveStats, p: &VarPartition, note: String| SolveResult {
        lower: BigUint::zero(),
        upper: pow2(chance_bits),
        witness: PartialAssignment::all_false(&p.choice),
        algorithm: config.algorithm(),
        chance_bits,
        relaxed_vars: p.relaxed.iter().copied().collect(),
        status: Status::Partial,
        note: Some(note),
        stats,
    };

    let started = Instant::now();
    let compiled = compile(f, &upper_set, &deadline.options(config.heuristic));
    stats.compile_time = started.elapsed();
    let (graph, cstats) = match compiled {
        Ok(ok) => ok,
        Err(CompileError::BudgetExhausted { reason, nodes }) => {
            stats.nodes = nodes;
            return Ok(partial(stats, &p, format!("compilation stopped: {reason} after {nodes} nodes")));
        }
        Err(e) => return Err(SolveError::Compile(e)),
    };
    stats.decisions = cstats.decisions;
    stats.cache_hits = cstats.cache_hits;

    let started = Instant::now();
    let universe = p.universe();
    let g = graph.smooth(&universe);
    stats.nodes = g.len();
    stats.edges = g.edge_count();
    let (lower, mut upper, witness) = match config.mode {
        Mode::Exact => {
            let (c, w) = constrained_emajsat(&g, &p)?;
            (c.clone(), c, w)
        }
        Mode::Relax | Mode::Unconstrained => {
            let u = relax_upper(&g, &p)?;
            let (l, w) = relax_lower(&g, &p)?;
            (l, u, w)
        }
    };
    // summing over relaxed auxiliaries can overshoot the universe; the true
    // value never does
    let ceiling = pow2(chance_bits);
    if upper > ceiling {
        upper = ceiling;
    }
    let recount = model_count(&g.condition(&witness), &p.chance)?;
    stats.traversal_time = started.elapsed();
    if recount != lower {
        return Err(SolveError::WitnessMismatch { lower, recount });
    }
    let relaxed_in_f = p.relaxed.intersection(&f.vars()).count();
    if upper > (&lower << relaxed_in_f) {
        return Err(SolveError::PrecisionViolated {
            lower,
            upper,
            relaxed: relaxed_in_f,
        });
    }
    Ok(SolveResult {
        lower,
        upper,
        witness,
        algorithm: config.algorithm(),
        chance_bits,
        relaxed_vars: p.relaxed.iter().copied().collect(),
        status: if selection_partial { Status::Partial } else { Status::Complete },
        note: selection_partial.then(|| "relaxed-variable selection stopped early".to_string()),
        stats,
    })
}

/// One stage of a portfolio, written `exact`, `unconstrained`, `bfs:R` or
/// `dfs:R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub mode: Mode,
    pub order: RelaxOrder,
    pub r: usize,
}

impl Stage {
    pub fn config(&self) -> SolveConfig {
        SolveConfig {
            mode: self.mode,
            relax_count: self.r,
            relax_order: self.order,
            ..SolveConfig::default()
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((order, r)) = s.split_once(':') {
            let order: RelaxOrder = order.parse()?;
            let r = r.trim().parse().map_err(|_| format!("bad relax count in stage `{s}`"))?;
            return Ok(Stage {
                mode: Mode::Relax,
                order,
                r,
            });
        }
        let mode: Mode = s.parse()?;
        if mode == Mode::Relax {
            return Err("relax stages are written `bfs:R` or `dfs:R`".into());
        }
        Ok(Stage {
            mode,
            order: RelaxOrder::default(),
            r: 0,
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            Mode::Relax => write!(f, "{}:{}", self.order, self.r),
            other => write!(f, "{other}"),
        }
    }
}

/// Parses a comma-separated stage list.
pub fn parse_portfolio(s: &str) -> Result<Vec<Stage>, String> {
    let stages: Vec<Stage> = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
    if stages.is_empty() {
        return Err("empty portfolio".into());
    }
    Ok(stages)
}

/// Runs the stages in order, each with an equal share of the budget's time,
/// and intersects their intervals. Stops after the first stage for which
/// `done` holds on the combined result.
pub fn solve_portfolio(
    f: &Cnf,
    p: &VarPartition,
    chance_bits: usize,
    stages: &[Stage],
    budget: Budget,
    heuristic: Heuristic,
    done: impl Fn(&SolveResult) -> bool,
) -> Result<SolveResult, SolveError> {
    let share = budget.max_time.map(|t| t / stages.len().max(1) as u32);
    let mut best: Option<SolveResult> = None;
    for stage in stages {
        let mut config = stage.config();
        config.heuristic = heuristic;
        config.budget = Budget {
            max_nodes: budget.max_nodes,
            max_time: share,
        };
        let r = solve_with_chance_bits(f, p, chance_bits, &config)?;
        let combined = match best.take() {
            None => r,
            Some(prev) => merge(prev, r),
        };
        let stop = done(&combined);
        best = Some(combined);
        if stop {
            break;
        }
    }
    Ok(best.expect("at least one stage"))
}

fn merge(a: SolveResult, b: SolveResult) -> SolveResult {
    let (mut out, other) = if b.lower > a.lower { (b, a) } else { (a, b) };
    if other.upper < out.upper {
        out.upper = other.upper.clone();
    }
    out.algorithm = format!("{}+{}", other.algorithm, out.algorithm);
    if other.status == Status::Complete {
        out.status = Status::Complete;
        out.note = None;
    }
    let s = &mut out.stats;
    s.selection_time += other.stats.selection_time;
    s.compile_time += other.stats.compile_time;
    s.traversal_time += other.stats.traversal_time;
    out
}

/// Decimal rendering of a rational with `digits` fractional digits.
pub fn decimal(r: &BigRational, digits: usize) -> String {
    if let Some(x) = r.to_f64() {
        if digits <= 15 {
            return format!("{x:.digits$}");
        }
    }
    let scale = num_bigint::BigInt::from(10u32).pow(digits as u32);
    let scaled = (r * BigRational::from_integer(scale.clone())).round().to_integer();
    let s = scaled.magnitude().to_string();
    let s = format!("{s:0>width$}", width = digits + 1);
    let (int, frac) = s.split_at(s.len() - digits);
    let sign = if scaled < num_bigint::BigInt::zero() { "-" } else { "" };
    format!("{sign}{int}.{frac}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::brute_force_emajsat;

    fn figure() -> (Cnf, VarPartition) {
        let f = Cnf::from_dimacs_clauses(3, &[&[-2, 1], &[-2, -3], &[2, -1, -3], &[2, 1, 3]]);
        let p = VarPartition::with_choice(&f, [Var::new(1)]);
        (f, p)
    }

    #[test]
    fn exact_on_the_figure() {
        let (f, p) = figure();
        let r = solve(&f, &p, &SolveConfig::exact()).unwrap();
        assert_eq!(r.lower, BigUint::from(2u32));
        assert_eq!(r.upper, BigUint::from(2u32));
        assert_eq!(r.witness.get(Var::new(1)), Some(true));
        assert!(r.is_exact());
        assert_eq!(r.chance_bits, 2);
    }

    #[test]
    fn every_mode_sandwiches_the_oracle() {
        let (f, p) = figure();
        let (exact, _) = brute_force_emajsat(&f, &p).unwrap();
        for config in [
            SolveConfig::relax(RelaxOrder::Dfs, 1),
            SolveConfig::relax(RelaxOrder::Bfs, 1),
            SolveConfig::relax(RelaxOrder::Bfs, 0),
            SolveConfig::unconstrained(),
        ] {
            let r = solve(&f, &p, &config).unwrap();
            assert!(r.lower <= exact && exact <= r.upper, "{}", config.algorithm());
        }
    }

    #[test]
    fn absent_chance_variables_scale_the_count() {
        // x3 unconstrained, x4 declared but unused
        let f = Cnf::from_dimacs_clauses(4, &[&[1, 2]]);
        let p = VarPartition::with_choice(&f, [Var::new(1)]);
        let r = solve(&f, &p, &SolveConfig::exact()).unwrap();
        assert_eq!(r.lower, BigUint::from(8u32));
        assert_eq!(r.witness.get(Var::new(1)), Some(true));
        assert_eq!(r.chance_bits, 3);
    }

    #[test]
    fn exhausted_budget_gives_trivial_interval() {
        let clauses: Vec<Vec<i64>> = (1..30).map(|i| vec![i, -(i + 1), i + 2]).collect();
        let refs: Vec<&[i64]> = clauses.iter().map(|c| c.as_slice()).collect();
        let f = Cnf::from_dimacs_clauses(31, &refs);
        let p = VarPartition::with_choice(&f, (1..=10).map(Var::new));
        let config = SolveConfig::exact().with_budget(Budget::default().with_nodes(3));
        let r = solve(&f, &p, &config).unwrap();
        assert_eq!(r.status, Status::Partial);
        assert!(r.lower.is_zero());
        assert_eq!(r.upper, pow2(21));
    }

    #[test]
    fn stages_parse() {
        let s = parse_portfolio("bfs:8, dfs:2,exact").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].to_string(), "bfs:8");
        assert_eq!(s[1].r, 2);
        assert_eq!(s[2].mode, Mode::Exact);
        assert!(parse_portfolio("relax").is_err());
        assert!(parse_portfolio("bfs:x").is_err());
    }

    #[test]
    fn portfolio_intersects_intervals() {
        let (f, p) = figure();
        let stages = parse_portfolio("bfs:1,exact").unwrap();
        let r = solve_portfolio(&f, &p, 2, &stages, Budget::default(), Heuristic::default(), |_| false).unwrap();
        assert_eq!(r.lower, BigUint::from(2u32));
        assert_eq!(r.upper, BigUint::from(2u32));
        let first = solve_portfolio(&f, &p, 2, &stages, Budget::default(), Heuristic::default(), |_| true).unwrap();
        assert_eq!(first.algorithm, "relax-bfs(1)");
    }

    #[test]
    fn json_renders_integers_as_strings() {
        let (f, p) = figure();
        let v = solve(&f, &p, &SolveConfig::exact()).unwrap().to_json();
        assert_eq!(v["lower"], "2");
        assert_eq!(v["witness"]["1"], true);
        assert_eq!(v["status"], "complete");
    }

    #[test]
    fn decimal_rendering() {
        let r = BigRational::new(4294958295u64.into(), 4294967296u64.into());
        assert_eq!(decimal(&r, 10), "0.9999979043");
        assert_eq!(decimal(&r, 20), "0.99999790429137647152");
        let half = BigRational::new(1.into(), 2.into());
        assert_eq!(decimal(&half, 3), "0.500");
    }
}
