use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::bitvector::parse::{ast_line, elaborate, elaborate_sized, parse_input_decl, tokenize, Ast, Parser, Token};
use crate::bitvector::{BinaryOp, BvExpr, InputDecl, ParseError, UnaryOp};

/// A statement. Expressions refer to program variables by name through
/// placeholder `Input` nodes; symbolic execution substitutes their values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assign { var: String, value: Arc<BvExpr> },
    If { cond: Arc<BvExpr>, then: Arc<Vec<Stmt>>, otherwise: Arc<Vec<Stmt>> },
    /// Runs at most `bound` iterations; executions needing more are cut.
    While { cond: Arc<BvExpr>, bound: u32, body: Arc<Vec<Stmt>> },
    Target,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub inputs: Vec<InputDecl>,
    /// Assumptions over controlled inputs only (`h_a`).
    pub assume_controlled: Vec<Arc<BvExpr>>,
    /// Assumptions over uncontrolled inputs only (`h_x`).
    pub assume_uncontrolled: Vec<Arc<BvExpr>>,
    pub body: Vec<Stmt>,
}

impl Program {
    pub fn input_bits(&self) -> usize {
        self.inputs.iter().map(|i| i.width as usize).sum()
    }

    /// The input as an expression (with its control flag).
    pub fn input_expr(&self, name: &str) -> Option<Arc<BvExpr>> {
        let i = self.inputs.iter().find(|i| i.name == name)?;
        BvExpr::input(&i.name, i.width, i.controlled).ok()
    }

    /// `h_a`, or `true` without controlled assumptions.
    pub fn h_a(&self) -> Arc<BvExpr> {
        conjoin(&self.assume_controlled)
    }

    /// `h_x`, or `true` without uncontrolled assumptions.
    pub fn h_x(&self) -> Arc<BvExpr> {
        conjoin(&self.assume_uncontrolled)
    }

    pub fn has_target(&self) -> bool {
        fn any(stmts: &[Stmt]) -> bool {
            stmts.iter().any(|s| match s {
                Stmt::Target => true,
                Stmt::If { then, otherwise, .. } => any(then) || any(otherwise),
                Stmt::While { body, .. } => any(body),
                _ => false,
            })
        }
        any(&self.body)
    }
}

pub(crate) fn conjoin(parts: &[Arc<BvExpr>]) -> Arc<BvExpr> {
    parts
        .iter()
        .cloned()
        .reduce(|a, b| BvExpr::binary(BinaryOp::BoolAnd, a, b).expect("boolean operands"))
        .unwrap_or_else(|| BvExpr::boolean(true))
}

/// Variable widths known at a program point.
type Scope = BTreeMap<String, u32>;

struct ProgramParser {
    p: Parser,
    inputs: Vec<InputDecl>,
}

impl ProgramParser {
    /// Placeholder expressions for the variables of `scope`.
    fn placeholders(scope: &Scope) -> HashMap<String, Arc<BvExpr>> {
        scope
            .iter()
            .map(|(name, &w)| (name.clone(), BvExpr::input(name, w, false).expect("valid width")))
            .collect()
    }

    /// A condition; non-boolean values test for non-zero.
    fn condition(&self, ast: &Ast, scope: &Scope) -> Result<Arc<BvExpr>, ParseError> {
        let line = ast_line(ast);
        let e = elaborate(ast, &Self::placeholders(scope))?;
        if e.is_boolean() {
            return Ok(e);
        }
        let zero = BvExpr::constant(e.width(), 0).map_err(|err| ParseError::new(line, err.to_string()))?;
        BvExpr::binary(BinaryOp::Neq, e, zero).map_err(|err| ParseError::new(line, err.to_string()))
    }

    fn block(&mut self, scope: &mut Scope) -> Result<Vec<Stmt>, ParseError> {
        if self.p.eat_sym("{") {
            let mut out = Vec::new();
            while !self.p.eat_sym("}") {
                if self.p.at_end() {
                    return Err(self.p.unexpected("`}`"));
                }
                out.push(self.statement(scope)?);
            }
            Ok(out)
        } else {
            Ok(vec![self.statement(scope)?])
        }
    }

    fn statement(&mut self, scope: &mut Scope) -> Result<Stmt, ParseError> {
        let line = self.p.line();
        if self.p.eat_keyword("if") {
            self.p.expect_sym("(")?;
            let ast = self.p.expr()?;
            self.p.expect_sym(")")?;
            let cond = self.condition(&ast, scope)?;
            let mut then_scope = scope.clone();
            let then = self.block(&mut then_scope)?;
            let mut else_scope = scope.clone();
            let otherwise = if self.p.eat_keyword("else") {
                self.block(&mut else_scope)?
            } else {
                Vec::new()
            };
            // a variable survives the conditional only if both arms define it
            for (name, w) in then_scope {
                if else_scope.get(&name) == Some(&w) {
                    scope.insert(name, w);
                }
            }
            return Ok(Stmt::If {
                cond,
                then: Arc::new(then),
                otherwise: Arc::new(otherwise),
            });
        }
        if self.p.eat_keyword("while") {
            self.p.expect_sym("(")?;
            let ast = self.p.expr()?;
            self.p.expect_sym(")")?;
            let cond = self.condition(&ast, scope)?;
            if !self.p.eat_keyword("bound") {
                return Err(self.p.unexpected("`bound N` after the loop condition"));
            }
            let bound = self.p.expect_number()?;
            let bound = u32::try_from(bound).map_err(|_| ParseError::new(line, "loop bound too large"))?;
            let mut body_scope = scope.clone();
            let body = self.block(&mut body_scope)?;
            return Ok(Stmt::While {
                cond,
                bound,
                body: Arc::new(body),
            });
        }
        if self.p.eat_keyword("target") {
            self.p.expect_sym(";")?;
            return Ok(Stmt::Target);
        }
        if self.p.eat_keyword("skip") {
            self.p.expect_sym(";")?;
            return Ok(Stmt::Skip);
        }
        if matches!(self.p.peek(), Some(Token::Ident(k)) if k == "input" || k == "assume") {
            return Err(ParseError::new(line, "declarations must precede statements"));
        }
        let var = self.p.expect_ident()?;
        let step = if self.p.eat_sym("++") {
            Some(BinaryOp::Add)
        } else if self.p.eat_sym("--") {
            Some(BinaryOp::Sub)
        } else {
            None
        };
        let value = if let Some(op) = step {
            let w = *scope
                .get(&var)
                .ok_or_else(|| ParseError::new(line, format!("`{var}` is used before it is assigned")))?;
            let current = BvExpr::input(&var, w, false).expect("valid width");
            let one = BvExpr::constant(w, 1).expect("fits");
            BvExpr::binary(op, current, one).expect("equal widths")
        } else {
            if !(self.p.eat_sym(":=") || self.p.eat_sym("=")) {
                return Err(self.p.unexpected("`:=`, `=`, `++` or `--`"));
            }
            let ast = self.p.expr()?;
            let placeholders = Self::placeholders(scope);
            match scope.get(&var) {
                Some(&w) => {
                    let e = elaborate_sized(&ast, &placeholders, w)?;
                    if e.width() != w {
                        return Err(ParseError::new(
                            line,
                            format!("`{var}` has width {w} but is assigned a value of width {}", e.width()),
                        ));
                    }
                    e
                }
                None => elaborate(&ast, &placeholders)?,
            }
        };
        self.p.expect_sym(";")?;
        scope.insert(var.clone(), value.width());
        Ok(Stmt::Assign { var, value })
    }
}

/// Parses a `.qimp` program: `input` and `assume` declarations, then
/// statements (`x := e;`, `x++;`, `x--;`, `if (c) s [else s]`,
/// `while (c) bound N s`, `{ ... }`, `target;`, `skip;`).
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut pp = ProgramParser {
        p: Parser::new(tokenize(text)?),
        inputs: Vec::new(),
    };
    let mut assume_controlled = Vec::new();
    let mut assume_uncontrolled = Vec::new();
    let mut real_inputs: HashMap<String, Arc<BvExpr>> = HashMap::new();
    loop {
        let line = pp.p.line();
        if pp.p.eat_keyword("input") {
            let (name, width, controlled) = parse_input_decl(&mut pp.p)?;
            if real_inputs.contains_key(&name) {
                return Err(ParseError::new(line, format!("input `{name}` declared twice")));
            }
            let e = BvExpr::input(&name, width, controlled).map_err(|e| ParseError::new(line, e.to_string()))?;
            real_inputs.insert(name.clone(), e);
            pp.inputs.push(InputDecl {
                name,
                width,
                controlled,
            });
        } else if pp.p.eat_keyword("assume") {
            let ast = pp.p.expr()?;
            pp.p.expect_sym(";")?;
            let e = elaborate(&ast, &real_inputs)?;
            if !e.is_boolean() {
                return Err(ParseError::new(line, "assumption must be boolean"));
            }
            let inputs = e.inputs();
            let controlled = inputs.iter().filter(|(_, _, c)| *c).count();
            if controlled > 0 && controlled < inputs.len() {
                return Err(ParseError::new(
                    line,
                    "an assumption may not mix controlled and uncontrolled inputs",
                ));
            }
            if controlled > 0 {
                assume_controlled.push(e);
            } else {
                assume_uncontrolled.push(e);
            }
        } else {
            break;
        }
    }
    let mut scope: Scope = pp.inputs.iter().map(|i| (i.name.clone(), i.width)).collect();
    let mut body = Vec::new();
    while !pp.p.at_end() {
        body.push(pp.statement(&mut scope)?);
    }
    let program = Program {
        inputs: pp.inputs,
        assume_controlled,
        assume_uncontrolled,
        body,
    };
    if !program.has_target() {
        return Err(ParseError::new(pp.p.line(), "program has no `target;` statement"));
    }
    Ok(program)
}

/// How a concrete run ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Target,
    End,
    /// A loop needed more iterations than its bound.
    Cut,
}

/// Runs the program on concrete input values.
pub fn run_concrete(p: &Program, inputs: &HashMap<String, u64>) -> Outcome {
    fn exec(stmts: &[Stmt], env: &mut HashMap<String, u64>) -> Option<Outcome> {
        for s in stmts {
            match s {
                Stmt::Assign { var, value } => {
                    let v = value.eval(env).expect("well-formed program");
                    env.insert(var.clone(), v);
                }
                Stmt::If { cond, then, otherwise } => {
                    let branch = if cond.eval(env).expect("well-formed program") == 1 {
                        then
                    } else {
                        otherwise
                    };
                    if let Some(o) = exec(branch, env) {
                        return Some(o);
                    }
                }
                Stmt::While { cond, bound, body } => {
                    let mut iterations = 0;
                    while cond.eval(env).expect("well-formed program") == 1 {
                        if iterations == *bound {
                            return Some(Outcome::Cut);
                        }
                        iterations += 1;
                        if let Some(o) = exec(body, env) {
                            return Some(o);
                        }
                    }
                }
                Stmt::Target => return Some(Outcome::Target),
                Stmt::Skip => {}
            }
        }
        None
    }
    let mut env = inputs.clone();
    exec(&p.body, &mut env).unwrap_or(Outcome::End)
}

/// Evaluates a boolean expression over inputs.
pub(crate) fn holds(e: &Arc<BvExpr>, env: &HashMap<String, u64>) -> bool {
    e.eval(env).expect("inputs cover the expression") == 1
}

pub(crate) fn negate(e: Arc<BvExpr>) -> Arc<BvExpr> {
    match e.as_ref() {
        BvExpr::Unary(UnaryOp::BoolNot, inner) => inner.clone(),
        BvExpr::Const { width: 1, value } => BvExpr::boolean(*value == 0),
        _ => BvExpr::unary(UnaryOp::BoolNot, e).expect("boolean operand"),
    }
}
