use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use super::expr::{BinaryOp, BvExpr, UnaryOp};
use super::BvError;
use crate::formula::{Clause, Cnf, Lit, PartialAssignment, Var, VarPartition};

/// A bit of a blasted word: either a constant or a CNF literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bit {
    Const(bool),
    Lit(Lit),
}

impl std::ops::Not for Bit {
    type Output = Bit;

    fn not(self) -> Bit {
        match self {
            Bit::Const(b) => Bit::Const(!b),
            Bit::Lit(l) => Bit::Lit(!l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum GateKey {
    And(Lit, Lit),
    Xor(Lit, Lit),
    Mux(Lit, Lit, Lit),
    AndN(Vec<Lit>),
}

/// A declared input of a blasted formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputDecl {
    pub name: String,
    pub width: u32,
    pub controlled: bool,
}

/// Output of bitblasting: the CNF, its partition and the variable map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlastResult {
    pub cnf: Cnf,
    pub partition: VarPartition,
    /// `(input name, bit position)` to variable; bit 0 is the least significant.
    pub input_map: BTreeMap<(String, u32), Var>,
    pub aux_vars: BTreeSet<Var>,
    pub inputs: Vec<InputDecl>,
}

impl BlastResult {
    /// Number of bits of uncontrolled inputs, i.e. the chance universe size
    /// once auxiliary variables are discounted.
    pub fn uncontrolled_bits(&self) -> usize {
        self.inputs.iter().filter(|i| !i.controlled).map(|i| i.width as usize).sum()
    }

    /// Reads the value of input `name` off an assignment. Unassigned bits read as 0.
    pub fn decode(&self, assignment: &PartialAssignment, name: &str) -> Option<u64> {
        let decl = self.inputs.iter().find(|i| i.name == name)?;
        let mut value = 0u64;
        for bit in 0..decl.width {
            let var = self.input_map[&(name.to_string(), bit)];
            if assignment.get(var) == Some(true) {
                value |= 1 << bit;
            }
        }
        Some(value)
    }

    /// Values of all controlled inputs under `assignment`.
    pub fn decode_controlled(&self, assignment: &PartialAssignment) -> BTreeMap<String, u64> {
        self.inputs
            .iter()
            .filter(|i| i.controlled)
            .map(|i| (i.name.clone(), self.decode(assignment, &i.name).unwrap_or(0)))
            .collect()
    }
}

/// Incremental bitblaster with full (bi-implication) gate encodings.
///
/// Every auxiliary variable is functionally determined by the input bits, so
/// the number of models over all variables equals the number of input
/// assignments satisfying the asserted expressions.
#[derive(Default)]
pub struct Blaster {
    num_vars: u32,
    clauses: Vec<Clause>,
    inputs: Vec<InputDecl>,
    input_map: BTreeMap<(String, u32), Var>,
    aux: BTreeSet<Var>,
    gates: HashMap<GateKey, Lit>,
    memo: HashMap<*const BvExpr, (Arc<BvExpr>, Vec<Bit>)>,
}

impl Blaster {
    pub fn new() -> Blaster {
        Blaster::default()
    }

    fn fresh(&mut self) -> Var {
        self.num_vars += 1;
        Var::new(self.num_vars)
    }

    fn aux_var(&mut self) -> Lit {
        let v = self.fresh();
        self.aux.insert(v);
        v.pos()
    }

    /// Declares an input; redeclaring with the same shape is a no-op.
    pub fn declare_input(&mut self, name: &str, width: u32, controlled: bool) -> Result<(), BvError> {
        if let Some(decl) = self.inputs.iter().find(|d| d.name == name) {
            if decl.width != width || decl.controlled != controlled {
                return Err(BvError::InconsistentInput(name.to_string()));
            }
            return Ok(());
        }
        for bit in 0..width {
            let v = self.fresh();
            self.input_map.insert((name.to_string(), bit), v);
        }
        self.inputs.push(InputDecl {
            name: name.to_string(),
            width,
            controlled,
        });
        Ok(())
    }

    fn and(&mut self, a: Bit, b: Bit) -> Bit {
        let (a, b) = match (a, b) {
            (Bit::Const(false), _) | (_, Bit::Const(false)) => return Bit::Const(false),
            (Bit::Const(true), x) | (x, Bit::Const(true)) => return x,
            (Bit::Lit(a), Bit::Lit(b)) => (a, b),
        };
        if a == b {
            return Bit::Lit(a);
        }
        if a == !b {
            return Bit::Const(false);
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if let Some(&g) = self.gates.get(&GateKey::And(a, b)) {
            return Bit::Lit(g);
        }
        let g = self.aux_var();
        self.clauses.push(vec![!g, a]);
        self.clauses.push(vec![!g, b]);
        self.clauses.push(vec![g, !a, !b]);
        self.gates.insert(GateKey::And(a, b), g);
        Bit::Lit(g)
    }

    fn or(&mut self, a: Bit, b: Bit) -> Bit {
        !self.and(!a, !b)
    }

    fn xor(&mut self, a: Bit, b: Bit) -> Bit {
        let (a, b) = match (a, b) {
            (Bit::Const(x), y) | (y, Bit::Const(x)) => return if x { !y } else { y },
            (Bit::Lit(a), Bit::Lit(b)) => (a, b),
        };
        if a == b {
            return Bit::Const(false);
        }
        if a == !b {
            return Bit::Const(true);
        }
        // canonical form on positive literals, parity tracked separately
        let flip = a.is_positive() != b.is_positive();
        let (a, b) = (a.var().pos(), b.var().pos());
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let g = match self.gates.get(&GateKey::Xor(a, b)) {
            Some(&g) => g,
            None => {
                let g = self.aux_var();
                self.clauses.push(vec![!g, a, b]);
                self.clauses.push(vec![!g, !a, !b]);
                self.clauses.push(vec![g, !a, b]);
                self.clauses.push(vec![g, a, !b]);
                self.gates.insert(GateKey::Xor(a, b), g);
                g
            }
        };
        if flip {
            Bit::Lit(!g)
        } else {
            Bit::Lit(g)
        }
    }

    fn mux(&mut self, c: Bit, t: Bit, e: Bit) -> Bit {
        let c = match c {
            Bit::Const(true) => return t,
            Bit::Const(false) => return e,
            Bit::Lit(c) => c,
        };
        if t == e {
            return t;
        }
        match (t, e) {
            (Bit::Const(true), _) => return self.or(Bit::Lit(c), e),
            (Bit::Const(false), _) => return self.and(Bit::Lit(!c), e),
            (_, Bit::Const(true)) => return self.or(Bit::Lit(!c), t),
            (_, Bit::Const(false)) => return self.and(Bit::Lit(c), t),
            _ => {}
        }
        let (Bit::Lit(t), Bit::Lit(e)) = (t, e) else { unreachable!() };
        if t == !e {
            return self.xor(Bit::Lit(c), Bit::Lit(e));
        }
        let (c, t, e) = if c.is_positive() { (c, t, e) } else { (!c, e, t) };
        if let Some(&g) = self.gates.get(&GateKey::Mux(c, t, e)) {
            return Bit::Lit(g);
        }
        let g = self.aux_var();
        self.clauses.push(vec![!c, !t, g]);
        self.clauses.push(vec![!c, t, !g]);
        self.clauses.push(vec![c, !e, g]);
        self.clauses.push(vec![c, e, !g]);
        self.gates.insert(GateKey::Mux(c, t, e), g);
        Bit::Lit(g)
    }

    fn and_n(&mut self, bits: &[Bit]) -> Bit {
        let mut lits = BTreeSet::new();
        for &b in bits {
            match b {
                Bit::Const(false) => return Bit::Const(false),
                Bit::Const(true) => {}
                Bit::Lit(l) => {
                    if lits.contains(&!l) {
                        return Bit::Const(false);
                    }
                    lits.insert(l);
                }
            }
        }
        let lits: Vec<Lit> = lits.into_iter().collect();
        match lits.len() {
            0 => return Bit::Const(true),
            1 => return Bit::Lit(lits[0]),
            2 => return self.and(Bit::Lit(lits[0]), Bit::Lit(lits[1])),
            _ => {}
        }
        if let Some(&g) = self.gates.get(&GateKey::AndN(lits.clone())) {
            return Bit::Lit(g);
        }
        let g = self.aux_var();
        let mut big = vec![g];
        for &l in &lits {
            self.clauses.push(vec![!g, l]);
            big.push(!l);
        }
        self.clauses.push(big);
        self.gates.insert(GateKey::AndN(lits), g);
        Bit::Lit(g)
    }

    fn add(&mut self, a: &[Bit], b: &[Bit], mut carry: Bit) -> Vec<Bit> {
        let mut out = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let half = self.xor(x, y);
            out.push(self.xor(half, carry));
            let both = self.and(x, y);
            let propagate = self.and(carry, half);
            carry = self.or(both, propagate);
        }
        out
    }

    /// Unsigned `a < b` (or `a <= b` when `or_equal`), scanning from the
    /// most significant bit.
    fn less_than(&mut self, a: &[Bit], b: &[Bit], or_equal: bool) -> Bit {
        let mut lt = Bit::Const(false);
        let mut eq = Bit::Const(true);
        let n = a.len();
        for i in (0..n).rev() {
            let strictly = self.and(!a[i], b[i]);
            let here = self.and(eq, strictly);
            lt = self.or(lt, here);
            if i > 0 || or_equal {
                let differ = self.xor(a[i], b[i]);
                eq = self.and(eq, !differ);
            }
        }
        if or_equal {
            self.or(lt, eq)
        } else {
            lt
        }
    }

    fn equal(&mut self, a: &[Bit], b: &[Bit]) -> Bit {
        let same: Vec<Bit> = a.iter().zip(b).map(|(&x, &y)| !self.xor(x, y)).collect();
        self.and_n(&same)
    }

    /// Blasts `e` to a word, least significant bit first.
    pub fn blast_expr(&mut self, e: &Arc<BvExpr>) -> Result<Vec<Bit>, BvError> {
        let key = Arc::as_ptr(e);
        if let Some((_, bits)) = self.memo.get(&key) {
            return Ok(bits.clone());
        }
        let bits = match e.as_ref() {
            BvExpr::Const { width, value } => (0..*width).map(|i| Bit::Const(value >> i & 1 == 1)).collect(),
            BvExpr::Input { name, width, controlled } => {
                self.declare_input(name, *width, *controlled)?;
                (0..*width)
                    .map(|i| Bit::Lit(self.input_map[&(name.clone(), i)].pos()))
                    .collect()
            }
            BvExpr::Unary(UnaryOp::Not | UnaryOp::BoolNot, a) => {
                self.blast_expr(a)?.into_iter().map(|b| !b).collect()
            }
            BvExpr::Binary(op, l, r) => {
                let a = self.blast_expr(l)?;
                let b = self.blast_expr(r)?;
                match op {
                    BinaryOp::Add => self.add(&a, &b, Bit::Const(false)),
                    BinaryOp::Sub => {
                        let nb: Vec<Bit> = b.iter().map(|&x| !x).collect();
                        self.add(&a, &nb, Bit::Const(true))
                    }
                    BinaryOp::BitAnd | BinaryOp::BoolAnd => {
                        a.iter().zip(&b).map(|(&x, &y)| self.and(x, y)).collect()
                    }
                    BinaryOp::BitOr | BinaryOp::BoolOr => {
                        a.iter().zip(&b).map(|(&x, &y)| self.or(x, y)).collect()
                    }
                    BinaryOp::BitXor => a.iter().zip(&b).map(|(&x, &y)| self.xor(x, y)).collect(),
                    BinaryOp::Eq => vec![self.equal(&a, &b)],
                    BinaryOp::Neq => vec![!self.equal(&a, &b)],
                    BinaryOp::Ult => vec![self.less_than(&a, &b, false)],
                    BinaryOp::Ule => vec![self.less_than(&a, &b, true)],
                }
            }
            BvExpr::Ite(c, t, f) => {
                let c = self.blast_expr(c)?[0];
                let t = self.blast_expr(t)?;
                let f = self.blast_expr(f)?;
                t.iter().zip(&f).map(|(&x, &y)| self.mux(c, x, y)).collect()
            }
        };
        self.memo.insert(key, (e.clone(), bits.clone()));
        Ok(bits)
    }

    /// Adds `e` (boolean-sorted) as a constraint.
    pub fn assert(&mut self, e: &Arc<BvExpr>) -> Result<(), BvError> {
        if !e.is_boolean() {
            return Err(BvError::NotBoolean { op: "assert", width: e.width() });
        }
        match self.blast_expr(e)?[0] {
            Bit::Const(true) => {}
            Bit::Const(false) => self.clauses.push(Vec::new()),
            Bit::Lit(l) => self.clauses.push(vec![l]),
        }
        Ok(())
    }

    pub fn finish(self) -> BlastResult {
        let cnf = Cnf::from_clauses(self.num_vars, self.clauses).expect("blaster allocates every variable");
        let mut choice = BTreeSet::new();
        let mut chance = self.aux.clone();
        for decl in &self.inputs {
            for bit in 0..decl.width {
                let v = self.input_map[&(decl.name.clone(), bit)];
                if decl.controlled {
                    choice.insert(v);
                } else {
                    chance.insert(v);
                }
            }
        }
        BlastResult {
            cnf,
            partition: VarPartition {
                choice,
                chance,
                relaxed: BTreeSet::new(),
            },
            input_map: self.input_map,
            aux_vars: self.aux,
            inputs: self.inputs,
        }
    }
}

/// Bitblasts a boolean-sorted expression; inputs are declared in
/// first-occurrence order.
pub fn bitblast(e: &Arc<BvExpr>) -> Result<BlastResult, BvError> {
    let mut blaster = Blaster::new();
    for (name, width, controlled) in e.inputs() {
        blaster.declare_input(&name, width, controlled)?;
    }
    blaster.assert(e)?;
    Ok(blaster.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{brute_force_model_count, print_extended_dimacs};

    fn input(name: &str, width: u32, controlled: bool) -> Arc<BvExpr> {
        BvExpr::input(name, width, controlled).unwrap()
    }

    fn count_all(r: &BlastResult) -> u64 {
        let universe = r.cnf.declared_vars().collect();
        let n = brute_force_model_count(&r.cnf, &universe).unwrap();
        n.try_into().unwrap()
    }

    #[test]
    fn equality_of_two_bit_words() {
        let e = BvExpr::binary(BinaryOp::Eq, input("u", 2, false), input("v", 2, false)).unwrap();
        assert_eq!(count_all(&bitblast(&e).unwrap()), 4);
    }

    #[test]
    fn strict_order_of_two_bit_words() {
        let e = BvExpr::binary(BinaryOp::Ult, input("u", 2, false), input("v", 2, false)).unwrap();
        assert_eq!(count_all(&bitblast(&e).unwrap()), 6);
    }

    #[test]
    fn equality_with_constant_has_one_model() {
        let e = BvExpr::binary(BinaryOp::Eq, input("x", 8, false), BvExpr::constant(8, 100).unwrap()).unwrap();
        let r = bitblast(&e).unwrap();
        assert_eq!(count_all(&r), 1);
    }

    #[test]
    fn partition_follows_control() {
        let e = BvExpr::binary(BinaryOp::Ult, input("a", 3, true), input("x", 2, false)).unwrap_err();
        assert!(matches!(e, BvError::WidthMismatch { .. }));
        let e = BvExpr::binary(BinaryOp::Ult, input("a", 3, true), input("x", 3, false)).unwrap();
        let r = bitblast(&e).unwrap();
        let a_bits: BTreeSet<Var> = (0..3).map(|i| r.input_map[&("a".to_string(), i)]).collect();
        assert_eq!(r.partition.choice, a_bits);
        assert!(r.aux_vars.is_subset(&r.partition.chance));
        assert!(r.partition.validate(&r.cnf).is_ok());
    }

    #[test]
    fn constant_targets() {
        let r = bitblast(&BvExpr::boolean(false)).unwrap();
        assert!(r.cnf.has_empty_clause());
        let r = bitblast(&BvExpr::boolean(true)).unwrap();
        assert!(r.cnf.clauses().is_empty());
    }

    #[test]
    fn blasting_is_deterministic() {
        let a = input("a", 4, true);
        let x = input("x", 4, false);
        let sum = BvExpr::binary(BinaryOp::Add, a.clone(), x.clone()).unwrap();
        let e = BvExpr::binary(BinaryOp::Ule, sum, BvExpr::constant(4, 9).unwrap()).unwrap();
        let r1 = bitblast(&e).unwrap();
        let r2 = bitblast(&e).unwrap();
        assert_eq!(
            print_extended_dimacs(&r1.cnf, &r1.partition),
            print_extended_dimacs(&r2.cnf, &r2.partition)
        );
    }

    #[test]
    fn decode_reads_input_bits() {
        let e = BvExpr::binary(BinaryOp::Eq, input("a", 4, true), BvExpr::constant(4, 6).unwrap()).unwrap();
        let r = bitblast(&e).unwrap();
        let m: PartialAssignment = (0..4).map(|i| (r.input_map[&("a".to_string(), i)], 6 >> i & 1 == 1)).collect();
        assert_eq!(r.decode(&m, "a"), Some(6));
        assert_eq!(r.decode_controlled(&m)["a"], 6);
    }
}
