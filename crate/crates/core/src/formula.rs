//! CNF data model, extended DIMACS I/O and exhaustive oracles.
//!
//! Extended DIMACS adds two comment annotations to the standard format:
//!
//! ```text
//! p cnf 3 2
//! c p choice 1 0
//! c p chance 2 3 0
//! 1 2 0
//! -1 3 0
//! ```
//!
//! Declared variables listed in neither annotation are chance variables.
//! Other `c` lines are ignored, so annotated files stay readable by any
//! DIMACS tool.

use num_bigint::BigUint;
use num_traits::One;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Largest universe the brute-force oracles accept.
pub const BRUTE_FORCE_LIMIT: usize = 24;

/// A propositional variable, 1-based as in DIMACS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    /// Panics on 0; use [`Var::try_new`] for untrusted input.
    pub fn new(index: u32) -> Var {
        assert!(index >= 1, "variables are 1-based");
        Var(index)
    }

    pub fn try_new(index: u32) -> Option<Var> {
        (index >= 1).then_some(Var(index))
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// 0-based position, handy for bitsets and vectors.
    pub fn offset(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_offset(offset: usize) -> Var {
        Var(offset as u32 + 1)
    }

    pub fn pos(self) -> Lit {
        Lit::new(self, true)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(self) -> Lit {
        Lit::new(self, false)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A literal: a variable with a polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit {
    var: Var,
    positive: bool,
}

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        Lit { var, positive }
    }

    /// From a non-zero DIMACS integer.
    pub fn from_dimacs(value: i64) -> Option<Lit> {
        if value == 0 || value.unsigned_abs() > u32::MAX as u64 {
            return None;
        }
        Some(Lit::new(Var(value.unsigned_abs() as u32), value > 0))
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var.0 as i64;
        if self.positive {
            v
        } else {
            -v
        }
    }

    pub fn var(self) -> Var {
        self.var
    }

    pub fn is_positive(self) -> bool {
        self.positive
    }

    /// Truth value of this literal when its variable takes `value`.
    pub fn eval(self, value: bool) -> bool {
        value == self.positive
    }

    /// Dense code: `2 * offset + (negative as usize)`.
    pub fn code(self) -> usize {
        2 * self.var.offset() + usize::from(!self.positive)
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit::new(self.var, !self.positive)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

pub type Clause = Vec<Lit>;

/// A clause database over `num_vars` declared variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Clause>,
}

impl Cnf {
    pub fn new(num_vars: u32) -> Cnf {
        Cnf {
            num_vars,
            clauses: Vec::new(),
        }
    }

    pub fn from_clauses(num_vars: u32, clauses: Vec<Clause>) -> Result<Cnf, FormulaError> {
        let mut cnf = Cnf::new(num_vars);
        for clause in clauses {
            cnf.add_clause(clause)?;
        }
        Ok(cnf)
    }

    /// Convenience constructor from DIMACS integers; panics on out-of-range literals.
    pub fn from_dimacs_clauses(num_vars: u32, clauses: &[&[i64]]) -> Cnf {
        let clauses = clauses
            .iter()
            .map(|c| c.iter().map(|&l| Lit::from_dimacs(l).expect("non-zero literal")).collect())
            .collect();
        Cnf::from_clauses(num_vars, clauses).expect("literal in range")
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn add_clause(&mut self, clause: Clause) -> Result<(), FormulaError> {
        if let Some(lit) = clause.iter().find(|l| l.var().index() > self.num_vars) {
            return Err(FormulaError::VarOutOfRange {
                var: lit.var().index() as i64,
                num_vars: self.num_vars,
            });
        }
        self.clauses.push(clause);
        Ok(())
    }

    /// Grows the declaration; existing clauses are untouched.
    pub fn declare_vars(&mut self, num_vars: u32) {
        self.num_vars = self.num_vars.max(num_vars);
    }

    pub fn declared_vars(&self) -> impl Iterator<Item = Var> {
        (1..=self.num_vars).map(Var)
    }

    /// Variables occurring in at least one clause.
    pub fn vars(&self) -> BTreeSet<Var> {
        self.clauses.iter().flatten().map(|l| l.var()).collect()
    }

    pub fn has_empty_clause(&self) -> bool {
        self.clauses.iter().any(|c| c.is_empty())
    }

    /// `f|m`: drops satisfied clauses and falsified literals. The variable
    /// declaration is kept.
    pub fn condition(&self, m: &PartialAssignment) -> Cnf {
        let mut clauses = Vec::with_capacity(self.clauses.len());
        'clauses: for clause in &self.clauses {
            let mut kept = Vec::with_capacity(clause.len());
            for &lit in clause {
                match m.get(lit.var()) {
                    Some(value) if lit.eval(value) => continue 'clauses,
                    Some(_) => {}
                    None => kept.push(lit),
                }
            }
            clauses.push(kept);
        }
        Cnf {
            num_vars: self.num_vars,
            clauses,
        }
    }

    /// Truth value under a total assignment of the clause variables.
    pub fn eval(&self, assignment: &PartialAssignment) -> Option<bool> {
        let mut all = true;
        for clause in &self.clauses {
            let mut sat = false;
            for &lit in clause {
                sat |= lit.eval(assignment.get(lit.var())?);
            }
            all &= sat;
        }
        Some(all)
    }
}

/// Split of the variables into choice (`A`), chance (`X`) and relaxed (`R ⊆ X`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VarPartition {
    pub choice: BTreeSet<Var>,
    pub chance: BTreeSet<Var>,
    pub relaxed: BTreeSet<Var>,
}

impl VarPartition {
    /// Every declared variable of `cnf` not in `choice` becomes chance.
    pub fn with_choice(cnf: &Cnf, choice: impl IntoIterator<Item = Var>) -> VarPartition {
        let choice: BTreeSet<Var> = choice.into_iter().collect();
        let chance = cnf.declared_vars().filter(|v| !choice.contains(v)).collect();
        VarPartition {
            choice,
            chance,
            relaxed: BTreeSet::new(),
        }
    }

    pub fn is_choice(&self, v: Var) -> bool {
        self.choice.contains(&v)
    }

    /// Checks the partition invariants against `cnf`.
    pub fn validate(&self, cnf: &Cnf) -> Result<(), FormulaError> {
        if let Some(v) = self.choice.intersection(&self.chance).next() {
            return Err(FormulaError::ChoiceAndChance(v.index()));
        }
        if let Some(v) = self.relaxed.difference(&self.chance).next() {
            return Err(FormulaError::RelaxedNotChance(v.index()));
        }
        for v in self.choice.iter().chain(&self.chance) {
            if v.index() > cnf.num_vars() {
                return Err(FormulaError::VarOutOfRange {
                    var: v.index() as i64,
                    num_vars: cnf.num_vars(),
                });
            }
        }
        if let Some(v) = cnf
            .vars()
            .into_iter()
            .find(|v| !self.choice.contains(v) && !self.chance.contains(v))
        {
            return Err(FormulaError::Unpartitioned(v.index()));
        }
        Ok(())
    }

    /// `A ∪ X`.
    pub fn universe(&self) -> BTreeSet<Var> {
        self.choice.union(&self.chance).copied().collect()
    }
}

/// A partial mapping from variables to booleans.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct PartialAssignment(BTreeMap<Var, bool>);

impl PartialAssignment {
    pub fn new() -> PartialAssignment {
        PartialAssignment::default()
    }

    pub fn get(&self, v: Var) -> Option<bool> {
        self.0.get(&v).copied()
    }

    pub fn set(&mut self, v: Var, value: bool) {
        self.0.insert(v, value);
    }

    pub fn remove(&mut self, v: Var) -> Option<bool> {
        self.0.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: Var) -> bool {
        self.0.contains_key(&v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, bool)> + '_ {
        self.0.iter().map(|(&v, &b)| (v, b))
    }

    pub fn domain(&self) -> BTreeSet<Var> {
        self.0.keys().copied().collect()
    }

    /// Keeps only the variables in `vars`.
    pub fn restrict(&self, vars: &BTreeSet<Var>) -> PartialAssignment {
        PartialAssignment(self.0.iter().filter(|(v, _)| vars.contains(v)).map(|(&v, &b)| (v, b)).collect())
    }

    /// All variables of `vars` mapped to ⊥.
    pub fn all_false<'a>(vars: impl IntoIterator<Item = &'a Var>) -> PartialAssignment {
        PartialAssignment(vars.into_iter().map(|&v| (v, false)).collect())
    }
}

impl FromIterator<(Var, bool)> for PartialAssignment {
    fn from_iter<T: IntoIterator<Item = (Var, bool)>>(iter: T) -> Self {
        PartialAssignment(iter.into_iter().collect())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("line {line}: invalid token `{token}`")]
    InvalidToken { line: usize, token: String },
    #[error("variable {var} out of range (declared {num_vars})")]
    VarOutOfRange { var: i64, num_vars: u32 },
    #[error("variable {0} listed as both choice and chance")]
    ChoiceAndChance(u32),
    #[error("relaxed variable {0} is not a chance variable")]
    RelaxedNotChance(u32),
    #[error("variable {0} occurs in the formula but is in no partition class")]
    Unpartitioned(u32),
    #[error("line {line}: trailing tokens after terminating 0")]
    TrailingTokens { line: usize },
    #[error("unterminated clause at end of input")]
    UnterminatedClause,
    #[error("universe of {0} variables exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")]
    UniverseTooLarge(usize),
    #[error("variable {0} occurs in the formula but not in the universe")]
    OutsideUniverse(u32),
}

/// Parses extended DIMACS text into a formula and its variable partition.
pub fn parse_extended_dimacs(text: &str) -> Result<(Cnf, VarPartition), FormulaError> {
    let mut cnf: Option<Cnf> = None;
    let mut choice = BTreeSet::new();
    let mut chance = BTreeSet::new();
    let mut pending: Clause = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or_default();
        if first == "c" {
            let rest: Vec<&str> = tokens.collect();
            let class = match rest.as_slice() {
                ["p", "choice", ..] => &mut choice,
                ["p", "chance", ..] => &mut chance,
                _ => continue,
            };
            let cnf = cnf.as_ref().ok_or(FormulaError::MissingHeader)?;
            let vars = parse_zero_terminated(&rest[2..], line_no)?
                .ok_or(FormulaError::InvalidToken { line: line_no, token: "<missing 0>".into() })?;
            for value in vars {
                if value <= 0 || value > cnf.num_vars as i64 {
                    return Err(FormulaError::VarOutOfRange {
                        var: value,
                        num_vars: cnf.num_vars,
                    });
                }
                class.insert(Var(value as u32));
            }
            continue;
        }
        if first == "p" {
            if cnf.is_some() {
                return Err(FormulaError::MalformedHeader { line: line_no, reason: "duplicate header".into() });
            }
            let rest: Vec<&str> = tokens.collect();
            let header_err = |reason: &str| FormulaError::MalformedHeader {
                line: line_no,
                reason: reason.into(),
            };
            if rest.len() != 3 || rest[0] != "cnf" {
                return Err(header_err("expected `p cnf <vars> <clauses>`"));
            }
            let num_vars: u32 = rest[1].parse().map_err(|_| header_err("bad variable count"))?;
            let _: usize = rest[2].parse().map_err(|_| header_err("bad clause count"))?;
            cnf = Some(Cnf::new(num_vars));
            continue;
        }
        let cnf = cnf.as_mut().ok_or(FormulaError::MissingHeader)?;
        let mut terminated = false;
        for token in line.split_whitespace() {
            if terminated {
                return Err(FormulaError::TrailingTokens { line: line_no });
            }
            let value: i64 = token.parse().map_err(|_| FormulaError::InvalidToken {
                line: line_no,
                token: token.into(),
            })?;
            if value == 0 {
                cnf.add_clause(std::mem::take(&mut pending))?;
                terminated = true;
            } else {
                let lit = Lit::from_dimacs(value).ok_or(FormulaError::VarOutOfRange {
                    var: value,
                    num_vars: cnf.num_vars,
                })?;
                if lit.var().index() > cnf.num_vars {
                    return Err(FormulaError::VarOutOfRange {
                        var: value,
                        num_vars: cnf.num_vars,
                    });
                }
                pending.push(lit);
            }
        }
    }
    let cnf = cnf.ok_or(FormulaError::MissingHeader)?;
    if !pending.is_empty() {
        return Err(FormulaError::UnterminatedClause);
    }
    if let Some(v) = choice.intersection(&chance).next() {
        return Err(FormulaError::ChoiceAndChance(v.index()));
    }
    for v in cnf.declared_vars() {
        if !choice.contains(&v) {
            chance.insert(v);
        }
    }
    Ok((
        cnf,
        VarPartition {
            choice,
            chance,
            relaxed: BTreeSet::new(),
        },
    ))
}

/// Integers up to the terminating 0; `None` when no 0 was found.
fn parse_zero_terminated(tokens: &[&str], line: usize) -> Result<Option<Vec<i64>>, FormulaError> {
    let mut out = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        let value: i64 = token.parse().map_err(|_| FormulaError::InvalidToken {
            line,
            token: (*token).into(),
        })?;
        if value == 0 {
            if i + 1 != tokens.len() {
                return Err(FormulaError::TrailingTokens { line });
            }
            return Ok(Some(out));
        }
        out.push(value);
    }
    Ok(None)
}

/// Prints `cnf` and `partition` in extended DIMACS.
pub fn print_extended_dimacs(cnf: &Cnf, partition: &VarPartition) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", cnf.num_vars, cnf.clauses.len());
    let list = |vars: &BTreeSet<Var>| vars.iter().map(|v| format!("{v} ")).collect::<String>();
    let _ = writeln!(out, "c p choice {}0", list(&partition.choice));
    let _ = writeln!(out, "c p chance {}0", list(&partition.chance));
    for clause in &cnf.clauses {
        for lit in clause {
            let _ = write!(out, "{lit} ");
        }
        out.push_str("0\n");
    }
    out
}

/// Clause masks over a bit-indexed universe: a clause is satisfied by
/// `assignment` iff `assignment & pos != 0 || !assignment & neg != 0`.
fn clause_masks(cnf: &Cnf, position: &BTreeMap<Var, usize>) -> Result<Vec<(u64, u64)>, FormulaError> {
    cnf.clauses
        .iter()
        .map(|clause| {
            let (mut pos, mut neg) = (0u64, 0u64);
            for lit in clause {
                let bit = *position
                    .get(&lit.var())
                    .ok_or(FormulaError::OutsideUniverse(lit.var().index()))?;
                if lit.is_positive() {
                    pos |= 1 << bit;
                } else {
                    neg |= 1 << bit;
                }
            }
            Ok((pos, neg))
        })
        .collect()
}

fn satisfies(masks: &[(u64, u64)], assignment: u64) -> bool {
    masks.iter().all(|&(pos, neg)| assignment & pos != 0 || !assignment & neg != 0)
}

/// Number of assignments over `universe` satisfying `f`, by enumeration.
pub fn brute_force_model_count(f: &Cnf, universe: &BTreeSet<Var>) -> Result<BigUint, FormulaError> {
    if universe.len() > BRUTE_FORCE_LIMIT {
        return Err(FormulaError::UniverseTooLarge(universe.len()));
    }
    let position: BTreeMap<Var, usize> = universe.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let masks = clause_masks(f, &position)?;
    let count = (0..1u64 << universe.len()).filter(|&a| satisfies(&masks, a)).count();
    Ok(BigUint::from(count))
}

/// Exhaustive f-E-MAJSAT: the best choice assignment and its chance count.
///
/// Ties go to the lexicographically smallest assignment, comparing variables
/// by ascending index with ⊥ < ⊤.
pub fn brute_force_emajsat(f: &Cnf, p: &VarPartition) -> Result<(BigUint, PartialAssignment), FormulaError> {
    let choice: Vec<Var> = p.choice.iter().copied().collect();
    let chance: Vec<Var> = p.chance.iter().copied().collect();
    let total = choice.len() + chance.len();
    if total > BRUTE_FORCE_LIMIT {
        return Err(FormulaError::UniverseTooLarge(total));
    }
    // chance variables take the low bits, choice variables the high bits with
    // the smallest choice variable most significant
    let mut position = BTreeMap::new();
    for (i, &v) in chance.iter().enumerate() {
        position.insert(v, i);
    }
    for (i, &v) in choice.iter().enumerate() {
        position.insert(v, chance.len() + choice.len() - 1 - i);
    }
    let masks = clause_masks(f, &position)?;
    let mut best: Option<(u64, u64)> = None;
    for a in 0..1u64 << choice.len() {
        let base = a << chance.len();
        let count = (0..1u64 << chance.len()).filter(|&x| satisfies(&masks, base | x)).count() as u64;
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, a));
        }
    }
    let (count, a) = best.expect("at least one choice assignment");
    let witness = choice
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, a >> (choice.len() - 1 - i) & 1 == 1))
        .collect();
    Ok((BigUint::from(count), witness))
}

/// `2^bits` as a big integer.
pub fn pow2(bits: usize) -> BigUint {
    BigUint::one() << bits
}
