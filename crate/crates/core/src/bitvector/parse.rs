//! Infix surface syntax shared by `.mbv` constraint files and `.qimp` programs.
//!
//! Precedence, loosest first: `?:`, `||`, `&&`, `|`, `^`, `&`, `== !=`,
//! `<u <=u >u >=u`, `+ -`, then the prefix operators `~` and `!`.
//! Literals are decimal or `0x` hexadecimal; an unsized literal takes the
//! width of the operand it is combined with, and `W'V` gives literal `V` the
//! explicit width `W`. Comments run from `//` or `#` to the end of the line.

use std::collections::HashMap;
use std::sync::Arc;

use super::expr::{BinaryOp, BvExpr, UnaryOp};
use super::{BvError, ParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Num { value: u64, width: Option<u32> },
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spanned {
    pub token: Token,
    pub line: usize,
}

const SYMBOLS: &[&str] = &[
    "<=u", ">=u", "<u", ">u", "==", "!=", "&&", "||", "++", "--", ":=", "+", "-", "&", "|", "^", "~", "!", "?", ":",
    "(", ")", "{", "}", ";", "=",
];

pub fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let code = match (raw_line.find("//"), raw_line.find('#')) {
            (Some(a), Some(b)) => &raw_line[..a.min(b)],
            (Some(a), None) | (None, Some(a)) => &raw_line[..a],
            (None, None) => raw_line,
        };
        let bytes = code.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned {
                    token: Token::Ident(code[start..i].to_string()),
                    line,
                });
                continue;
            }
            if c.is_ascii_digit() {
                let (first, next) = lex_number(code, i, line)?;
                i = next;
                let token = if i < bytes.len() && bytes[i] == b'\'' {
                    let (value, next) = lex_number(code, i + 1, line)?;
                    i = next;
                    let width = u32::try_from(first).map_err(|_| ParseError::new(line, "literal width too large"))?;
                    Token::Num {
                        value,
                        width: Some(width),
                    }
                } else {
                    Token::Num {
                        value: first,
                        width: None,
                    }
                };
                out.push(Spanned { token, line });
                continue;
            }
            let sym = SYMBOLS
                .iter()
                .find(|s| code[i..].starts_with(**s))
                .ok_or_else(|| ParseError::new(line, format!("unexpected character `{c}`")))?;
            i += sym.len();
            out.push(Spanned {
                token: Token::Sym(sym),
                line,
            });
        }
    }
    Ok(out)
}

fn lex_number(code: &str, start: usize, line: usize) -> Result<(u64, usize), ParseError> {
    let bytes = code.as_bytes();
    let (radix, digits_start) = if code[start..].starts_with("0x") || code[start..].starts_with("0X") {
        (16, start + 2)
    } else {
        (10, start)
    };
    let mut end = digits_start;
    while end < bytes.len() && (bytes[end] as char).is_digit(radix) {
        end += 1;
    }
    if end == digits_start {
        return Err(ParseError::new(line, "malformed number"));
    }
    let value = u64::from_str_radix(&code[digits_start..end], radix)
        .map_err(|_| ParseError::new(line, "number does not fit in 64 bits"))?;
    Ok((value, end))
}

/// Expression syntax tree before name resolution and width inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ast {
    Ident(String, usize),
    Num { value: u64, width: Option<u32>, line: usize },
    Unary(UnaryOp, Box<Ast>),
    Binary(BinaryOp, Box<Ast>, Box<Ast>),
    Ite(Box<Ast>, Box<Ast>, Box<Ast>),
}

/// Cursor over a token stream.
pub struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    pub fn new(tokens: Vec<Spanned>) -> Parser {
        Parser { tokens, pos: 0 }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    pub fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |t| t.line)
    }

    pub fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.token)
    }

    pub fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset).map(|t| &t.token)
    }

    pub fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|t| t.token.clone());
        self.pos += 1;
        t
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Token::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{sym}`")))
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Token::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Token::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    pub fn expect_number(&mut self) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Token::Num { value, width: None }) => {
                let v = *value;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    pub fn unexpected(&self, expected: &str) -> ParseError {
        let found = match self.peek() {
            Some(Token::Ident(s)) => format!("`{s}`"),
            Some(Token::Num { value, .. }) => format!("`{value}`"),
            Some(Token::Sym(s)) => format!("`{s}`"),
            None => "end of input".to_string(),
        };
        ParseError::new(self.line(), format!("expected {expected}, found {found}"))
    }

    pub fn expr(&mut self) -> Result<Ast, ParseError> {
        let cond = self.binary(0)?;
        if self.eat_sym("?") {
            let then = self.expr()?;
            self.expect_sym(":")?;
            let otherwise = self.expr()?;
            return Ok(Ast::Ite(Box::new(cond), Box::new(then), Box::new(otherwise)));
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Result<Ast, ParseError> {
        const LEVELS: &[&[&str]] = &[
            &["||"],
            &["&&"],
            &["|"],
            &["^"],
            &["&"],
            &["==", "!="],
            &["<u", "<=u", ">u", ">=u"],
            &["+", "-"],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match self.peek() {
                Some(Token::Sym(s)) if LEVELS[level].contains(s) => *s,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            let (op, l, r) = match op {
                "||" => (BinaryOp::BoolOr, lhs, rhs),
                "&&" => (BinaryOp::BoolAnd, lhs, rhs),
                "|" => (BinaryOp::BitOr, lhs, rhs),
                "^" => (BinaryOp::BitXor, lhs, rhs),
                "&" => (BinaryOp::BitAnd, lhs, rhs),
                "==" => (BinaryOp::Eq, lhs, rhs),
                "!=" => (BinaryOp::Neq, lhs, rhs),
                "<u" => (BinaryOp::Ult, lhs, rhs),
                "<=u" => (BinaryOp::Ule, lhs, rhs),
                ">u" => (BinaryOp::Ult, rhs, lhs),
                ">=u" => (BinaryOp::Ule, rhs, lhs),
                "+" => (BinaryOp::Add, lhs, rhs),
                "-" => (BinaryOp::Sub, lhs, rhs),
                _ => unreachable!(),
            };
            lhs = Ast::Binary(op, Box::new(l), Box::new(r));
        }
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if self.eat_sym("~") {
            return Ok(Ast::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        if self.eat_sym("!") {
            return Ok(Ast::Unary(UnaryOp::BoolNot, Box::new(self.unary()?)));
        }
        let line = self.line();
        match self.bump() {
            Some(Token::Ident(name)) => Ok(Ast::Ident(name, line)),
            Some(Token::Num { value, width }) => Ok(Ast::Num { value, width, line }),
            Some(Token::Sym("(")) => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            _ => {
                self.pos -= 1;
                Err(self.unexpected("an expression"))
            }
        }
    }
}

/// Resolves identifiers through `scope` and infers literal widths.
pub fn elaborate(ast: &Ast, scope: &HashMap<String, Arc<BvExpr>>) -> Result<Arc<BvExpr>, ParseError> {
    elaborate_with(ast, scope, None)
}

/// Like [`elaborate`], giving unsized literals at the top level the width
/// `width` when the expression does not fix one itself.
pub fn elaborate_sized(
    ast: &Ast,
    scope: &HashMap<String, Arc<BvExpr>>,
    width: u32,
) -> Result<Arc<BvExpr>, ParseError> {
    elaborate_with(ast, scope, Some(width))
}

/// Line on which the expression starts.
pub fn ast_line(ast: &Ast) -> usize {
    line_of(ast)
}

fn line_of(ast: &Ast) -> usize {
    match ast {
        Ast::Ident(_, line) | Ast::Num { line, .. } => *line,
        Ast::Unary(_, e) => line_of(e),
        Ast::Binary(_, l, _) => line_of(l),
        Ast::Ite(c, _, _) => line_of(c),
    }
}

/// Width implied by the expression itself, `None` when it only contains
/// unsized literals.
fn natural_width(ast: &Ast, scope: &HashMap<String, Arc<BvExpr>>) -> Option<u32> {
    match ast {
        Ast::Ident(name, _) => scope.get(name).map(|e| e.width()),
        Ast::Num { width, .. } => *width,
        Ast::Unary(UnaryOp::BoolNot, _) => Some(1),
        Ast::Unary(UnaryOp::Not, e) => natural_width(e, scope),
        Ast::Binary(op, l, r) => {
            if op.is_comparison() || op.is_boolean() {
                Some(1)
            } else {
                natural_width(l, scope).or_else(|| natural_width(r, scope))
            }
        }
        Ast::Ite(_, t, e) => natural_width(t, scope).or_else(|| natural_width(e, scope)),
    }
}

fn elaborate_with(
    ast: &Ast,
    scope: &HashMap<String, Arc<BvExpr>>,
    hint: Option<u32>,
) -> Result<Arc<BvExpr>, ParseError> {
    let line = line_of(ast);
    let wrap = |e: BvError| ParseError::new(line, e.to_string());
    match ast {
        Ast::Ident(name, line) => scope
            .get(name)
            .cloned()
            .ok_or_else(|| ParseError::new(*line, format!("undeclared identifier `{name}`"))),
        Ast::Num { value, width, line } => {
            let width = width
                .or(hint)
                .ok_or_else(|| ParseError::new(*line, format!("cannot infer the width of literal {value}")))?;
            BvExpr::constant(width, *value).map_err(wrap)
        }
        Ast::Unary(op, e) => {
            let hint = if *op == UnaryOp::BoolNot { Some(1) } else { hint };
            BvExpr::unary(*op, elaborate_with(e, scope, hint)?).map_err(wrap)
        }
        Ast::Binary(op, l, r) => {
            let operand_hint = if op.is_boolean() {
                Some(1)
            } else if op.is_comparison() {
                natural_width(l, scope).or_else(|| natural_width(r, scope))
            } else {
                hint.or_else(|| natural_width(l, scope)).or_else(|| natural_width(r, scope))
            };
            let l = elaborate_with(l, scope, operand_hint)?;
            let r = elaborate_with(r, scope, operand_hint)?;
            BvExpr::binary(*op, l, r).map_err(wrap)
        }
        Ast::Ite(c, t, e) => {
            let c = elaborate_with(c, scope, Some(1))?;
            let hint = hint
                .or_else(|| natural_width(t, scope))
                .or_else(|| natural_width(e, scope));
            let t = elaborate_with(t, scope, hint)?;
            let e = elaborate_with(e, scope, hint)?;
            BvExpr::ite(c, t, e).map_err(wrap)
        }
    }
}

/// Parses a standalone expression over the given inputs.
pub fn parse_expr(text: &str, scope: &HashMap<String, Arc<BvExpr>>) -> Result<Arc<BvExpr>, ParseError> {
    let mut p = Parser::new(tokenize(text)?);
    let ast = p.expr()?;
    if !p.at_end() {
        return Err(p.unexpected("end of expression"));
    }
    elaborate(&ast, scope)
}

/// Parses `input NAME WIDTH controlled|uncontrolled;` after the `input` keyword.
pub fn parse_input_decl(p: &mut Parser) -> Result<(String, u32, bool), ParseError> {
    let name = p.expect_ident()?;
    let width = p.expect_number()?;
    let width = u32::try_from(width).map_err(|_| ParseError::new(p.line(), "width too large"))?;
    let controlled = if p.eat_keyword("controlled") {
        true
    } else if p.eat_keyword("uncontrolled") {
        false
    } else {
        return Err(p.unexpected("`controlled` or `uncontrolled`"));
    };
    p.expect_sym(";")?;
    Ok((name, width, controlled))
}

/// A parsed `.mbv` constraint file.
#[derive(Debug, Clone)]
pub struct MbvFile {
    pub inputs: Vec<Arc<BvExpr>>,
    pub assumes: Vec<Arc<BvExpr>>,
    pub target: Arc<BvExpr>,
}

impl MbvFile {
    /// Conjunction of the assumptions and the target.
    pub fn formula(&self) -> Arc<BvExpr> {
        self.assumes.iter().fold(self.target.clone(), |acc, a| {
            BvExpr::binary(BinaryOp::BoolAnd, a.clone(), acc).expect("boolean operands")
        })
    }

    /// Bitblasts the conjunction with every declared input registered, so
    /// inputs absent from the constraints still count.
    pub fn blast(&self) -> Result<super::BlastResult, BvError> {
        let mut blaster = super::Blaster::new();
        for input in &self.inputs {
            if let BvExpr::Input { name, width, controlled } = input.as_ref() {
                blaster.declare_input(name, *width, *controlled)?;
            }
        }
        blaster.assert(&self.formula())?;
        Ok(blaster.finish())
    }
}

pub fn parse_mbv(text: &str) -> Result<MbvFile, ParseError> {
    let mut p = Parser::new(tokenize(text)?);
    let mut scope: HashMap<String, Arc<BvExpr>> = HashMap::new();
    let mut inputs = Vec::new();
    let mut assumes = Vec::new();
    let mut target = None;
    while !p.at_end() {
        let line = p.line();
        if p.eat_keyword("input") {
            let (name, width, controlled) = parse_input_decl(&mut p)?;
            if scope.contains_key(&name) {
                return Err(ParseError::new(line, format!("input `{name}` declared twice")));
            }
            let e = BvExpr::input(&name, width, controlled).map_err(|e| ParseError::new(line, e.to_string()))?;
            scope.insert(name, e.clone());
            inputs.push(e);
        } else if p.eat_keyword("assume") || p.eat_keyword("target") {
            let is_target = matches!(&p.tokens[p.pos - 1].token, Token::Ident(k) if k == "target");
            let ast = p.expr()?;
            p.expect_sym(";")?;
            let e = elaborate(&ast, &scope)?;
            if !e.is_boolean() {
                return Err(ParseError::new(line, "constraint must be boolean (width 1)"));
            }
            if is_target {
                if target.is_some() {
                    return Err(ParseError::new(line, "more than one target"));
                }
                target = Some(e);
            } else {
                assumes.push(e);
            }
        } else {
            return Err(p.unexpected("`input`, `assume` or `target`"));
        }
    }
    let target = target.ok_or_else(|| ParseError::new(p.line(), "missing `target` line"))?;
    Ok(MbvFile {
        inputs,
        assumes,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope() -> HashMap<String, Arc<BvExpr>> {
        let mut s = HashMap::new();
        s.insert("a".to_string(), BvExpr::input("a", 8, true).unwrap());
        s.insert("x".to_string(), BvExpr::input("x", 8, false).unwrap());
        s.insert("b".to_string(), BvExpr::input("b", 1, true).unwrap());
        s
    }

    fn eval(text: &str, a: u64, x: u64, b: u64) -> u64 {
        let e = parse_expr(text, &scope()).unwrap();
        let env = HashMap::from([("a".to_string(), a), ("x".to_string(), x), ("b".to_string(), b)]);
        e.eval(&env).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("a + 1 == x", 4, 5, 0), 1);
        assert_eq!(eval("a == 1 || x == 2 && b", 0, 2, 0), 0);
        assert_eq!(eval("a & 0x0f ^ x", 0x3c, 0x0f, 0), 0x03);
        assert_eq!(eval("b ? a : x", 1, 2, 1), 1);
        assert_eq!(eval("!b && a <u x", 1, 2, 0), 1);
        assert_eq!(eval("x >=u a", 3, 3, 0), 1);
        assert_eq!(eval("~a", 0, 0, 0), 255);
        assert_eq!(eval("4'3 == 4'3", 0, 0, 0), 1);
    }

    #[test]
    fn literal_widths() {
        assert!(parse_expr("1 == 1", &scope()).is_err());
        assert!(parse_expr("a == 256", &scope()).is_err());
        let err = parse_expr("a == y", &scope()).unwrap_err();
        assert!(err.to_string().contains("undeclared"), "{err}");
        assert!(parse_expr("a == b", &scope()).is_err());
    }

    #[test]
    fn mbv_file() {
        let text = "// prog1\ninput command 8 controlled;\ninput uninit 8 uncontrolled;\n\
                    target command != 2 && uninit == 100;\n";
        let f = parse_mbv(text).unwrap();
        assert_eq!(f.inputs.len(), 2);
        assert!(f.assumes.is_empty());
        let r = f.blast().unwrap();
        assert_eq!(r.uncontrolled_bits(), 8);
        assert!(parse_mbv("input x 8 uncontrolled;\n").is_err());
        assert!(parse_mbv("input x 8 uncontrolled;\ntarget x;\n").is_err());
        assert!(parse_mbv("input x 8 sometimes;\ntarget x == 1;\n").is_err());
    }
}
