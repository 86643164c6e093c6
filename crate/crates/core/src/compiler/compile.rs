use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::graph::{DnnfGraph, GraphBuilder, NodeId, FALSE, TRUE};
use crate::formula::{Cnf, Lit, Var};

/// Branching heuristic of the compiler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Heuristic {
    /// Static order from nested dissection of the primal graph: a small
    /// vertex separator is decided first, then each side recursively.
    #[default]
    Dissection,
    /// Static order: the reverse of a min-degree elimination order of the
    /// primal graph, so separators of the constraint graph are decided
    /// before the parts they separate.
    MinDegree,
    /// Most occurrences in the residual component, ties to the smallest index.
    LiteralCount,
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dissection" | "nd" => Ok(Heuristic::Dissection),
            "min-degree" | "md" => Ok(Heuristic::MinDegree),
            "literal-count" | "lc" => Ok(Heuristic::LiteralCount),
            other => Err(format!("unknown heuristic `{other}`")),
        }
    }
}

/// Resource limits; `None` means unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Budget {
    pub max_nodes: Option<usize>,
    pub max_time: Option<Duration>,
}

impl Budget {
    pub fn unlimited() -> Budget {
        Budget::default()
    }

    pub fn with_time(self, time: Duration) -> Budget {
        Budget {
            max_time: Some(time),
            ..self
        }
    }

    pub fn with_nodes(self, nodes: usize) -> Budget {
        Budget {
            max_nodes: Some(nodes),
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub heuristic: Heuristic,
    pub budget: Budget,
    /// Component cache; disabling it never changes the compiled function.
    pub cache: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            heuristic: Heuristic::default(),
            budget: Budget::unlimited(),
            cache: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompileStats {
    pub nodes: usize,
    pub decisions: usize,
    pub cache_hits: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("compilation budget exhausted ({reason}) after {nodes} nodes")]
    BudgetExhausted { reason: &'static str, nodes: usize },
    #[error("upper variable {0} is not declared by the formula")]
    UpperOutOfRange(u32),
}

/// Relaxed-variable capture for the depth-first selection strategy.
#[derive(Debug, Clone, Default)]
pub(crate) struct Capture {
    pub limit: usize,
    pub chosen: Vec<Var>,
}

/// Why a compilation stopped early.
#[derive(Debug)]
enum Abort {
    Budget(&'static str),
    CaptureFull,
}

struct Compiler<'a> {
    clauses: Vec<Vec<Lit>>,
    occurrences: Vec<Vec<usize>>,
    value: Vec<Option<bool>>,
    trail: Vec<Lit>,
    upper: Vec<bool>,
    builder: GraphBuilder,
    cache: HashMap<(bool, Vec<u32>), NodeId>,
    options: &'a CompileOptions,
    stats: CompileStats,
    start: Instant,
    calls: usize,
    capture: Option<&'a mut Capture>,
    // decision priority per variable offset, higher first
    priority: Vec<u32>,
    // scratch for component detection, indexed by variable offset
    stamp: Vec<u32>,
    local: Vec<u32>,
    epoch: u32,
}

impl<'a> Compiler<'a> {
    fn new(cnf: &Cnf, upper: &BTreeSet<Var>, options: &'a CompileOptions, capture: Option<&'a mut Capture>) -> Self {
        let n = cnf.num_vars() as usize;
        let mut clauses = Vec::new();
        for clause in cnf.clauses() {
            let mut c = clause.clone();
            c.sort_unstable();
            c.dedup();
            // tautologies are always satisfied
            if c.windows(2).any(|w| w[0] == !w[1]) {
                continue;
            }
            clauses.push(c);
        }
        let mut occurrences = vec![Vec::new(); 2 * n];
        for (i, c) in clauses.iter().enumerate() {
            for l in c {
                occurrences[l.code()].push(i);
            }
        }
        let mut upper_flags = vec![false; n];
        for v in upper {
            upper_flags[v.offset()] = true;
        }
        let priority = match options.heuristic {
            Heuristic::Dissection => dissection_priority(n, &clauses),
            Heuristic::MinDegree => elimination_priority(n, &clauses),
            Heuristic::LiteralCount => Vec::new(),
        };
        Compiler {
            priority,
            clauses,
            occurrences,
            value: vec![None; n],
            trail: Vec::new(),
            upper: upper_flags,
            builder: GraphBuilder::new(cnf.num_vars()),
            cache: HashMap::new(),
            options,
            stats: CompileStats::default(),
            start: Instant::now(),
            calls: 0,
            capture,
            stamp: vec![0; n],
            local: vec![0; n],
            epoch: 0,
        }
    }

    fn lit_value(&self, l: Lit) -> Option<bool> {
        self.value[l.var().offset()].map(|v| l.eval(v))
    }

    fn check_budget(&mut self) -> Result<(), Abort> {
        if let Some(max) = self.options.budget.max_nodes {
            if self.builder.len() > max {
                return Err(Abort::Budget("node limit"));
            }
        }
        self.calls += 1;
        if self.calls.is_multiple_of(64) {
            if let Some(max) = self.options.budget.max_time {
                if self.start.elapsed() > max {
                    return Err(Abort::Budget("time limit"));
                }
            }
        }
        Ok(())
    }

    /// Assigns `lit` and propagates units. Returns false on conflict; the
    /// trail then holds the partial propagation, undone by the caller.
    fn propagate(&mut self, lit: Lit) -> bool {
        let mut head = self.trail.len();
        self.value[lit.var().offset()] = Some(lit.is_positive());
        self.trail.push(lit);
        while head < self.trail.len() {
            let falsified = !self.trail[head];
            head += 1;
            for k in 0..self.occurrences[falsified.code()].len() {
                let ci = self.occurrences[falsified.code()][k];
                let mut unassigned = None;
                let mut free = 0;
                let mut satisfied = false;
                for &l in &self.clauses[ci] {
                    match self.lit_value(l) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            free += 1;
                            unassigned = Some(l);
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match (free, unassigned) {
                    (0, _) => return false,
                    (1, Some(unit)) => {
                        self.value[unit.var().offset()] = Some(unit.is_positive());
                        self.trail.push(unit);
                    }
                    _ => {}
                }
            }
        }
        true
    }

    fn undo(&mut self, len: usize) {
        for l in self.trail.drain(len..) {
            self.value[l.var().offset()] = None;
        }
    }

    /// Residual clauses (unassigned literals only) of the unsatisfied clauses in `ids`.
    fn residual(&self, ids: &[usize]) -> Vec<(usize, Vec<Lit>)> {
        let mut out = Vec::new();
        for &ci in ids {
            let mut lits = Vec::new();
            let mut satisfied = false;
            for &l in &self.clauses[ci] {
                match self.lit_value(l) {
                    Some(true) => {
                        satisfied = true;
                        break;
                    }
                    Some(false) => {}
                    None => lits.push(l),
                }
            }
            if !satisfied {
                out.push((ci, lits));
            }
        }
        out
    }

    /// Splits residual clauses into variable-disjoint groups.
    fn components(&mut self, residual: &[(usize, Vec<Lit>)]) -> Vec<Vec<usize>> {
        self.epoch += 1;
        let epoch = self.epoch;
        let mut vars = 0u32;
        for (_, lits) in residual {
            for l in lits {
                let o = l.var().offset();
                if self.stamp[o] != epoch {
                    self.stamp[o] = epoch;
                    self.local[o] = vars;
                    vars += 1;
                }
            }
        }
        let mut parent: Vec<u32> = (0..vars).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for (_, lits) in residual {
            let first = self.local[lits[0].var().offset()];
            for l in &lits[1..] {
                let a = find(&mut parent, first);
                let b = find(&mut parent, self.local[l.var().offset()]);
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
        let mut group_of: HashMap<u32, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (ci, lits) in residual {
            let root = find(&mut parent, self.local[lits[0].var().offset()]);
            let g = *group_of.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(*ci);
        }
        groups
    }

    fn choose(&self, residual: &[(usize, Vec<Lit>)], restrict_upper: bool) -> Var {
        match self.options.heuristic {
            Heuristic::LiteralCount => {
                let mut counts: HashMap<Var, usize> = HashMap::new();
                for (_, lits) in residual {
                    for l in lits {
                        if !restrict_upper || self.upper[l.var().offset()] {
                            *counts.entry(l.var()).or_default() += 1;
                        }
                    }
                }
                counts
                    .into_iter()
                    .max_by(|(va, ca), (vb, cb)| ca.cmp(cb).then(vb.cmp(va)))
                    .map(|(v, _)| v)
                    .expect("non-empty component")
            }
            Heuristic::Dissection | Heuristic::MinDegree => residual
                .iter()
                .flat_map(|(_, lits)| lits.iter().map(|l| l.var()))
                .filter(|v| !restrict_upper || self.upper[v.offset()])
                .max_by_key(|v| self.priority[v.offset()])
                .expect("non-empty component"),
        }
    }

    fn compile(&mut self, ids: &[usize]) -> Result<NodeId, Abort> {
        self.check_budget()?;
        let residual = self.residual(ids);
        if residual.is_empty() {
            return Ok(TRUE);
        }
        if residual.iter().any(|(_, lits)| lits.is_empty()) {
            return Ok(FALSE);
        }
        let groups = self.components(&residual);
        if groups.len() > 1 {
            let mut children = Vec::with_capacity(groups.len());
            for group in groups {
                let child = self.compile(&group)?;
                if child == FALSE {
                    return Ok(FALSE);
                }
                children.push(child);
            }
            return Ok(self.builder.and(children));
        }

        let has_upper = residual
            .iter()
            .any(|(_, lits)| lits.iter().any(|l| self.upper[l.var().offset()]));
        let key = if self.options.cache {
            let mut clauses: Vec<Vec<u32>> = residual
                .iter()
                .map(|(_, lits)| {
                    let mut c: Vec<u32> = lits.iter().map(|l| l.code() as u32 + 1).collect();
                    c.sort_unstable();
                    c
                })
                .collect();
            clauses.sort_unstable();
            let mut flat = Vec::with_capacity(clauses.iter().map(|c| c.len() + 1).sum());
            for c in clauses {
                flat.extend(c);
                flat.push(0);
            }
            let key = (has_upper, flat);
            if let Some(&hit) = self.cache.get(&key) {
                self.stats.cache_hits += 1;
                return Ok(hit);
            }
            Some(key)
        } else {
            None
        };

        let var = self.pick(&residual, has_upper)?;
        self.stats.decisions += 1;
        let hi = self.branch(var.pos(), ids)?;
        let lo = self.branch(var.neg(), ids)?;
        let node = self.builder.ite(var, hi, lo);
        if let Some(key) = key {
            self.cache.insert(key, node);
        }
        Ok(node)
    }

    /// Decision variable for a component; upper variables first while any
    /// remain. In capture mode, a chance variable the unrestricted heuristic
    /// prefers is promoted to the upper layer instead.
    fn pick(&mut self, residual: &[(usize, Vec<Lit>)], has_upper: bool) -> Result<Var, Abort> {
        if !has_upper {
            return Ok(self.choose(residual, false));
        }
        if let Some(capture) = self.capture.as_deref() {
            let top = self.choose(residual, false);
            if !self.upper[top.offset()] {
                if capture.chosen.len() >= capture.limit {
                    return Err(Abort::CaptureFull);
                }
                self.upper[top.offset()] = true;
                self.capture.as_deref_mut().expect("capture").chosen.push(top);
                return Ok(top);
            }
        }
        Ok(self.choose(residual, true))
    }

    fn branch(&mut self, lit: Lit, ids: &[usize]) -> Result<NodeId, Abort> {
        let mark = self.trail.len();
        if !self.propagate(lit) {
            self.undo(mark);
            return Ok(FALSE);
        }
        let implied: Vec<Lit> = self.trail[mark + 1..].to_vec();
        let rest = self.compile(ids);
        self.undo(mark);
        let rest = rest?;
        if rest == FALSE {
            return Ok(FALSE);
        }
        let mut children: Vec<NodeId> = implied.iter().map(|l| self.builder.literal(l.var(), l.is_positive())).collect();
        children.push(rest);
        Ok(self.builder.and(children))
    }

    fn run(&mut self) -> Result<NodeId, Abort> {
        if self.clauses.iter().any(|c| c.is_empty()) {
            return Ok(FALSE);
        }
        // top-level units
        let units: Vec<Lit> = self.clauses.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect();
        for u in units {
            match self.lit_value(u) {
                Some(true) => continue,
                Some(false) => return Ok(FALSE),
                None => {
                    if !self.propagate(u) {
                        return Ok(FALSE);
                    }
                }
            }
        }
        let implied = self.trail.clone();
        let all: Vec<usize> = (0..self.clauses.len()).collect();
        let rest = self.compile(&all)?;
        if rest == FALSE {
            return Ok(FALSE);
        }
        let mut children: Vec<NodeId> = implied.iter().map(|l| self.builder.literal(l.var(), l.is_positive())).collect();
        children.push(rest);
        Ok(self.builder.and(children))
    }
}

fn primal_graph(n: usize, clauses: &[Vec<Lit>]) -> Vec<Vec<u32>> {
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for c in clauses {
        for (i, a) in c.iter().enumerate() {
            for b in &c[i + 1..] {
                let (a, b) = (a.var().offset(), b.var().offset());
                adj[a].push(b as u32);
                adj[b].push(a as u32);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Parts at most this large are not split further.
const DISSECTION_LEAF: usize = 6;

/// Priority of each variable from a nested dissection of the primal graph:
/// separators found by breadth-first level structures from a
/// pseudo-peripheral vertex rank above the parts they split.
fn dissection_priority(n: usize, clauses: &[Vec<Lit>]) -> Vec<u32> {
    let adj = primal_graph(n, clauses);
    let mut order: Vec<u32> = Vec::with_capacity(n);
    // region id per vertex; a vertex leaves all regions once ordered
    let mut region = vec![0u32; n];
    let mut next_region = 1u32;
    let mut level = vec![u32::MAX; n];
    let mut work: Vec<Vec<u32>> = vec![(0..n as u32).collect()];
    while let Some(part) = work.pop() {
        let id = next_region;
        next_region += 1;
        for &v in &part {
            region[v as usize] = id;
        }
        // connected components of the part
        let mut components: Vec<Vec<u32>> = Vec::new();
        for &s in &part {
            if region[s as usize] != id {
                continue;
            }
            let comp_id = next_region;
            next_region += 1;
            region[s as usize] = comp_id;
            let mut comp = vec![s];
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for &u in &adj[v as usize] {
                    if region[u as usize] == id {
                        region[u as usize] = comp_id;
                        comp.push(u);
                    }
                }
            }
            components.push(comp);
        }
        for comp in components {
            if comp.len() <= DISSECTION_LEAF {
                let mut comp = comp;
                comp.sort_by_key(|&v| (std::cmp::Reverse(adj[v as usize].len()), v));
                for &v in &comp {
                    region[v as usize] = 0;
                }
                order.extend(comp);
                continue;
            }
            let rid = region[comp[0] as usize];
            let levels = level_structure(&adj, &region, rid, &comp, &mut level);
            let sep = pick_separator(&levels, comp.len());
            let mut separator = levels[sep].clone();
            separator.sort_by_key(|&v| (std::cmp::Reverse(adj[v as usize].len()), v));
            for &v in &separator {
                region[v as usize] = 0;
            }
            order.extend(separator);
            // pushed in reverse so the side nearer the start is ordered first
            let after: Vec<u32> = levels[sep + 1..].concat();
            let before: Vec<u32> = levels[..sep].concat();
            if !after.is_empty() {
                work.push(after);
            }
            if !before.is_empty() {
                work.push(before);
            }
        }
    }
    let mut priority = vec![0u32; n];
    for (i, &v) in order.iter().enumerate() {
        priority[v as usize] = (n - i) as u32;
    }
    priority
}

/// Breadth-first levels of `comp` (all vertices carry region `rid`) from a
/// pseudo-peripheral start vertex.
fn level_structure(adj: &[Vec<u32>], region: &[u32], rid: u32, comp: &[u32], level: &mut [u32]) -> Vec<Vec<u32>> {
    let bfs = |start: u32, level: &mut [u32]| -> Vec<Vec<u32>> {
        for &v in comp {
            level[v as usize] = u32::MAX;
        }
        level[start as usize] = 0;
        let mut levels = vec![vec![start]];
        loop {
            let mut next = Vec::new();
            let d = levels.len() as u32;
            for &v in levels.last().expect("non-empty") {
                for &u in &adj[v as usize] {
                    if region[u as usize] == rid && level[u as usize] == u32::MAX {
                        level[u as usize] = d;
                        next.push(u);
                    }
                }
            }
            if next.is_empty() {
                return levels;
            }
            levels.push(next);
        }
    };
    let mut start = *comp.iter().min_by_key(|&&v| (adj[v as usize].len(), v)).expect("non-empty");
    let mut levels = bfs(start, level);
    for _ in 0..4 {
        let far = *levels
            .last()
            .expect("non-empty")
            .iter()
            .min_by_key(|&&v| (adj[v as usize].len(), v))
            .expect("non-empty");
        let candidate = bfs(far, level);
        if candidate.len() <= levels.len() {
            break;
        }
        start = far;
        levels = candidate;
    }
    let _ = start;
    levels
}

/// Index of the smallest level that leaves at least a quarter of the
/// vertices on each side, nearest to the middle on ties; the median level
/// when no level is that balanced.
fn pick_separator(levels: &[Vec<u32>], total: usize) -> usize {
    let mut before = 0;
    let mut median = None;
    let mut best: Option<(usize, usize, usize)> = None;
    for (i, l) in levels.iter().enumerate() {
        let after = total - before - l.len();
        if median.is_none() && before + l.len() >= total / 2 {
            median = Some(i);
        }
        if 4 * before >= total && 4 * after >= total {
            let skew = before.abs_diff(after);
            if best.is_none_or(|(size, s, _)| (l.len(), skew) < (size, s)) {
                best = Some((l.len(), skew, i));
            }
        }
        before += l.len();
    }
    best.map(|(_, _, i)| i).or(median).unwrap_or(0)
}

/// Largest neighbourhood turned into a clique during elimination; beyond it
/// the fill edges are skipped and the order only approximates min-degree.
const FILL_LIMIT: usize = 64;

/// Priority of each variable: its position in a min-degree elimination
/// order of the primal graph, so the last eliminated is decided first.
fn elimination_priority(n: usize, clauses: &[Vec<Lit>]) -> Vec<u32> {
    let mut adj: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    for c in clauses {
        for (i, a) in c.iter().enumerate() {
            for b in &c[i + 1..] {
                let (a, b) = (a.var().offset(), b.var().offset());
                adj[a].insert(b as u32);
                adj[b].insert(a as u32);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, u32)>> = (0..n).map(|v| Reverse((adj[v].len(), v as u32))).collect();
    let mut done = vec![false; n];
    let mut priority = vec![0u32; n];
    let mut step = 0u32;
    while let Some(Reverse((degree, v))) = heap.pop() {
        let vi = v as usize;
        if done[vi] || degree != adj[vi].len() {
            continue;
        }
        done[vi] = true;
        priority[vi] = step;
        step += 1;
        let neighbours: Vec<u32> = std::mem::take(&mut adj[vi]).into_iter().collect();
        for &u in &neighbours {
            adj[u as usize].remove(&v);
        }
        if neighbours.len() <= FILL_LIMIT {
            for (i, &a) in neighbours.iter().enumerate() {
                for &b in &neighbours[i + 1..] {
                    adj[a as usize].insert(b);
                    adj[b as usize].insert(a);
                }
            }
        }
        for &u in &neighbours {
            heap.push(Reverse((adj[u as usize].len(), u)));
        }
    }
    priority
}

fn check_upper(cnf: &Cnf, upper: &BTreeSet<Var>) -> Result<(), CompileError> {
    match upper.iter().find(|v| v.index() > cnf.num_vars()) {
        Some(v) => Err(CompileError::UpperOutOfRange(v.index())),
        None => Ok(()),
    }
}

/// Compiles `f` to a decision-DNNF that is layered with respect to
/// `(upper, rest)`: no decision on a variable outside `upper` has an upper
/// variable beneath it.
pub fn compile(
    f: &Cnf,
    upper: &BTreeSet<Var>,
    options: &CompileOptions,
) -> Result<(DnnfGraph, CompileStats), CompileError> {
    check_upper(f, upper)?;
    let mut compiler = Compiler::new(f, upper, options, None);
    let root = compiler.run().map_err(|abort| match abort {
        Abort::Budget(reason) => CompileError::BudgetExhausted {
            reason,
            nodes: compiler.builder.len(),
        },
        Abort::CaptureFull => unreachable!("no capture in plain compilation"),
    })?;
    let mut stats = compiler.stats;
    stats.wall_time = compiler.start.elapsed();
    let graph = compiler.builder.finish(root, upper.clone()).compact();
    stats.nodes = graph.len();
    Ok((graph, stats))
}

/// Runs a constrained compilation that promotes up to `capture.limit` chance
/// variables into the upper layer, stopping as soon as the capture is full.
/// Returns whether the run was cut short by the budget.
pub(crate) fn compile_capture(
    f: &Cnf,
    upper: &BTreeSet<Var>,
    options: &CompileOptions,
    capture: &mut Capture,
) -> Result<bool, CompileError> {
    check_upper(f, upper)?;
    let mut compiler = Compiler::new(f, upper, options, Some(capture));
    match compiler.run() {
        Ok(_) | Err(Abort::CaptureFull) => Ok(false),
        Err(Abort::Budget(_)) => Ok(true),
    }
}
