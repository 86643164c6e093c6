use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use super::BvError;

/// Widest supported bitvector.
pub const MAX_WIDTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    /// Bitwise complement.
    Not,
    /// Logical negation of a boolean (width 1).
    BoolNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    BitAnd,
    BitOr,
    BitXor,
    Eq,
    Neq,
    Ult,
    Ule,
    BoolAnd,
    BoolOr,
}

impl BinaryOp {
    pub fn is_comparison(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::Neq | BinaryOp::Ult | BinaryOp::Ule)
    }

    pub fn is_boolean(self) -> bool {
        matches!(self, BinaryOp::BoolAnd | BinaryOp::BoolOr)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::BitAnd => "&",
            BinaryOp::BitOr => "|",
            BinaryOp::BitXor => "^",
            BinaryOp::Eq => "==",
            BinaryOp::Neq => "!=",
            BinaryOp::Ult => "<u",
            BinaryOp::Ule => "<=u",
            BinaryOp::BoolAnd => "&&",
            BinaryOp::BoolOr => "||",
        }
    }
}

/// A bitvector expression. Booleans are bitvectors of width 1.
///
/// Children are shared through [`Arc`], so symbolic substitution can reuse
/// subtrees without copying.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BvExpr {
    Const { width: u32, value: u64 },
    Input { name: String, width: u32, controlled: bool },
    Unary(UnaryOp, Arc<BvExpr>),
    Binary(BinaryOp, Arc<BvExpr>, Arc<BvExpr>),
    Ite(Arc<BvExpr>, Arc<BvExpr>, Arc<BvExpr>),
}

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn check_width(width: u32) -> Result<(), BvError> {
    if width == 0 || width > MAX_WIDTH {
        return Err(BvError::BadWidth(width));
    }
    Ok(())
}

impl BvExpr {
    pub fn constant(width: u32, value: u64) -> Result<Arc<BvExpr>, BvError> {
        check_width(width)?;
        if value & !mask(width) != 0 {
            return Err(BvError::ConstOverflow { value, width });
        }
        Ok(Arc::new(BvExpr::Const { width, value }))
    }

    pub fn boolean(value: bool) -> Arc<BvExpr> {
        Arc::new(BvExpr::Const {
            width: 1,
            value: u64::from(value),
        })
    }

    pub fn input(name: impl Into<String>, width: u32, controlled: bool) -> Result<Arc<BvExpr>, BvError> {
        check_width(width)?;
        Ok(Arc::new(BvExpr::Input {
            name: name.into(),
            width,
            controlled,
        }))
    }

    pub fn unary(op: UnaryOp, e: Arc<BvExpr>) -> Result<Arc<BvExpr>, BvError> {
        if op == UnaryOp::BoolNot && e.width() != 1 {
            return Err(BvError::NotBoolean { op: "!", width: e.width() });
        }
        Ok(Arc::new(BvExpr::Unary(op, e)))
    }

    pub fn binary(op: BinaryOp, l: Arc<BvExpr>, r: Arc<BvExpr>) -> Result<Arc<BvExpr>, BvError> {
        if op.is_boolean() {
            for side in [&l, &r] {
                if side.width() != 1 {
                    return Err(BvError::NotBoolean {
                        op: op.symbol(),
                        width: side.width(),
                    });
                }
            }
        } else if l.width() != r.width() {
            return Err(BvError::WidthMismatch {
                op: op.symbol(),
                left: l.width(),
                right: r.width(),
            });
        }
        Ok(Arc::new(BvExpr::Binary(op, l, r)))
    }

    pub fn ite(c: Arc<BvExpr>, t: Arc<BvExpr>, e: Arc<BvExpr>) -> Result<Arc<BvExpr>, BvError> {
        if c.width() != 1 {
            return Err(BvError::NotBoolean { op: "?:", width: c.width() });
        }
        if t.width() != e.width() {
            return Err(BvError::WidthMismatch {
                op: "?:",
                left: t.width(),
                right: e.width(),
            });
        }
        Ok(Arc::new(BvExpr::Ite(c, t, e)))
    }

    pub fn width(&self) -> u32 {
        match self {
            BvExpr::Const { width, .. } | BvExpr::Input { width, .. } => *width,
            BvExpr::Unary(_, e) => e.width(),
            BvExpr::Binary(op, l, _) => {
                if op.is_comparison() || op.is_boolean() {
                    1
                } else {
                    l.width()
                }
            }
            BvExpr::Ite(_, t, _) => t.width(),
        }
    }

    pub fn is_boolean(&self) -> bool {
        self.width() == 1
    }

    pub fn as_const(&self) -> Option<u64> {
        match self {
            BvExpr::Const { value, .. } => Some(*value),
            _ => None,
        }
    }

    /// Inputs in first-occurrence order (depth-first, left to right).
    pub fn inputs(&self) -> Vec<(String, u32, bool)> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut visited = HashSet::new();
        self.collect_inputs(&mut seen, &mut out, &mut visited);
        out
    }

    fn collect_inputs(
        &self,
        seen: &mut HashSet<String>,
        out: &mut Vec<(String, u32, bool)>,
        visited: &mut HashSet<*const BvExpr>,
    ) {
        if !visited.insert(self as *const BvExpr) {
            return;
        }
        match self {
            BvExpr::Const { .. } => {}
            BvExpr::Input { name, width, controlled } => {
                if seen.insert(name.clone()) {
                    out.push((name.clone(), *width, *controlled));
                }
            }
            BvExpr::Unary(_, e) => e.collect_inputs(seen, out, visited),
            BvExpr::Binary(_, l, r) => {
                l.collect_inputs(seen, out, visited);
                r.collect_inputs(seen, out, visited);
            }
            BvExpr::Ite(c, t, e) => {
                c.collect_inputs(seen, out, visited);
                t.collect_inputs(seen, out, visited);
                e.collect_inputs(seen, out, visited);
            }
        }
    }

    /// Concrete evaluation with modular semantics; comparisons and boolean
    /// operators yield 0 or 1.
    pub fn eval(&self, env: &HashMap<String, u64>) -> Result<u64, BvError> {
        let mut memo = HashMap::new();
        self.eval_memo(env, &mut memo)
    }

    fn eval_memo(&self, env: &HashMap<String, u64>, memo: &mut HashMap<*const BvExpr, u64>) -> Result<u64, BvError> {
        let key = self as *const BvExpr;
        if let Some(&v) = memo.get(&key) {
            return Ok(v);
        }
        let w = mask(self.width());
        let value = match self {
            BvExpr::Const { value, .. } => *value,
            BvExpr::Input { name, width, .. } => {
                let v = *env.get(name).ok_or_else(|| BvError::MissingInput(name.clone()))?;
                if v & !mask(*width) != 0 {
                    return Err(BvError::InputOverflow {
                        name: name.clone(),
                        value: v,
                        width: *width,
                    });
                }
                v
            }
            BvExpr::Unary(op, e) => {
                let v = e.eval_memo(env, memo)?;
                match op {
                    UnaryOp::Not => !v & w,
                    UnaryOp::BoolNot => u64::from(v == 0),
                }
            }
            BvExpr::Binary(op, l, r) => {
                let a = l.eval_memo(env, memo)?;
                let b = r.eval_memo(env, memo)?;
                match op {
                    BinaryOp::Add => a.wrapping_add(b) & w,
                    BinaryOp::Sub => a.wrapping_sub(b) & w,
                    BinaryOp::BitAnd => a & b,
                    BinaryOp::BitOr => a | b,
                    BinaryOp::BitXor => a ^ b,
                    BinaryOp::Eq => u64::from(a == b),
                    BinaryOp::Neq => u64::from(a != b),
                    BinaryOp::Ult => u64::from(a < b),
                    BinaryOp::Ule => u64::from(a <= b),
                    BinaryOp::BoolAnd => u64::from(a != 0 && b != 0),
                    BinaryOp::BoolOr => u64::from(a != 0 || b != 0),
                }
            }
            BvExpr::Ite(c, t, e) => {
                if c.eval_memo(env, memo)? != 0 {
                    t.eval_memo(env, memo)?
                } else {
                    e.eval_memo(env, memo)?
                }
            }
        };
        memo.insert(key, value);
        Ok(value)
    }

    /// Constant folding of operations whose operands are all constants, plus
    /// the boolean identities with a constant operand.
    pub fn simplify(self: &Arc<BvExpr>) -> Arc<BvExpr> {
        let mut memo = HashMap::new();
        simplify_memo(self, &mut memo)
    }
}

fn simplify_memo(e: &Arc<BvExpr>, memo: &mut HashMap<*const BvExpr, Arc<BvExpr>>) -> Arc<BvExpr> {
    let key = Arc::as_ptr(e);
    if let Some(s) = memo.get(&key) {
        return s.clone();
    }
    let folded = |x: &BvExpr| -> Arc<BvExpr> {
        let v = x.eval(&HashMap::new()).expect("closed expression");
        Arc::new(BvExpr::Const { width: x.width(), value: v })
    };
    let out = match e.as_ref() {
        BvExpr::Const { .. } | BvExpr::Input { .. } => e.clone(),
        BvExpr::Unary(op, a) => {
            let a = simplify_memo(a, memo);
            let node = BvExpr::Unary(*op, a.clone());
            if a.as_const().is_some() {
                folded(&node)
            } else {
                Arc::new(node)
            }
        }
        BvExpr::Binary(op, l, r) => {
            let l = simplify_memo(l, memo);
            let r = simplify_memo(r, memo);
            let node = BvExpr::Binary(*op, l.clone(), r.clone());
            match (op, l.as_const(), r.as_const()) {
                (_, Some(_), Some(_)) => folded(&node),
                (BinaryOp::BoolAnd, Some(0), _) | (BinaryOp::BoolAnd, _, Some(0)) => BvExpr::boolean(false),
                (BinaryOp::BoolOr, Some(1), _) | (BinaryOp::BoolOr, _, Some(1)) => BvExpr::boolean(true),
                (BinaryOp::BoolAnd, Some(1), _) | (BinaryOp::BoolOr, Some(0), _) => r,
                (BinaryOp::BoolAnd, _, Some(1)) | (BinaryOp::BoolOr, _, Some(0)) => l,
                _ => Arc::new(node),
            }
        }
        BvExpr::Ite(c, t, f) => {
            let c = simplify_memo(c, memo);
            match c.as_const() {
                Some(0) => simplify_memo(f, memo),
                Some(_) => simplify_memo(t, memo),
                None => Arc::new(BvExpr::Ite(c, simplify_memo(t, memo), simplify_memo(f, memo))),
            }
        }
    };
    memo.insert(key, out.clone());
    out
}

impl fmt::Display for BvExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BvExpr::Const { width, value } => write!(f, "{width}'{value}"),
            BvExpr::Input { name, .. } => write!(f, "{name}"),
            BvExpr::Unary(UnaryOp::Not, e) => write!(f, "~({e})"),
            BvExpr::Unary(UnaryOp::BoolNot, e) => write!(f, "!({e})"),
            BvExpr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            BvExpr::Ite(c, t, e) => write!(f, "({c} ? {t} : {e})"),
        }
    }
}
