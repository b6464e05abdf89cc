//! Arithmetic expressions over chart coordinates.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   = term { ("+"|"-") term } ;
//! term   = factor { ("*"|"/") factor } ;
//! factor = ["-"] base [ "^" exponent ] ;
//! base   = number | ident | "(" expr ")" | func "(" expr ")" ;
//! func   = "sin"|"cos"|"exp"|"ln"|"sqrt"|"tanh" ;
//! exponent = signed_number | "(" expr ")"      -- must fold to a constant
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`. Identifiers are
//! either chart coordinates or named parameters; parameters become literal
//! constants during parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::diff::taylor::{pow_value, DomainError, Taylor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, a: f64) -> Result<f64, DomainError> {
        match self {
            Func::Sin => Ok(a.sin()),
            Func::Cos => Ok(a.cos()),
            Func::Exp => Ok(a.exp()),
            Func::Tanh => Ok(a.tanh()),
            Func::Ln => {
                if a > 0.0 {
                    Ok(a.ln())
                } else {
                    Err(DomainError {
                        op: "ln",
                        argument: a,
                    })
                }
            }
            Func::Sqrt => {
                if a > 0.0 {
                    pow_value(a, 0.5)
                } else {
                    Err(DomainError {
                        op: "sqrt",
                        argument: a,
                    })
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Expression tree node. Coordinates are referenced by chart index.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Coord(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    /// Power with a constant exponent.
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("exponent at byte {offset} is not a constant")]
    NonConstantExponent { offset: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("point has {got} coordinates, expected {expected}")]
    Arity { expected: usize, got: usize },
    #[error("domain violation in `{subexpr}`: {cause}")]
    Domain { subexpr: String, cause: DomainError },
}

/// A parsed expression bound to the chart coordinate names it was parsed against.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    coords: Arc<Vec<String>>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.coords == other.coords
    }
}

impl Expr {
    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn coordinates(&self) -> &[String] {
        &self.coords
    }

    pub fn constant(value: f64, coords: Arc<Vec<String>>) -> Expr {
        Expr {
            root: Node::Const(value),
            coords,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.root, Node::Const(_))
    }

    /// Prefix rendering, e.g. `(+ (^ x 2) y)`.
    pub fn to_sexpr(&self) -> String {
        fn go(n: &Node, names: &[String], out: &mut String) {
            match n {
                Node::Const(v) => out.push_str(&fmt_number(*v)),
                Node::Coord(i) => out.push_str(&names[*i]),
                Node::Neg(a) => {
                    out.push_str("(neg ");
                    go(a, names, out);
                    out.push(')');
                }
                Node::Binary(op, a, b) => {
                    out.push('(');
                    out.push(op.symbol());
                    out.push(' ');
                    go(a, names, out);
                    out.push(' ');
                    go(b, names, out);
                    out.push(')');
                }
                Node::Pow(a, c) => {
                    out.push_str("(^ ");
                    go(a, names, out);
                    out.push(' ');
                    out.push_str(&fmt_number(*c));
                    out.push(')');
                }
                Node::Call(f, a) => {
                    out.push('(');
                    out.push_str(f.name());
                    out.push(' ');
                    go(a, names, out);
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        go(&self.root, &self.coords, &mut s);
        s
    }

    fn render_node(&self, n: &Node) -> String {
        Expr {
            root: n.clone(),
            coords: self.coords.clone(),
        }
        .to_string()
    }

    fn domain_err(&self, n: &Node, cause: DomainError) -> EvalError {
        EvalError::Domain {
            subexpr: self.render_node(n),
            cause,
        }
    }

    /// Evaluates at a chart point.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.coords.len() {
            return Err(EvalError::Arity {
                expected: self.coords.len(),
                got: point.len(),
            });
        }
        self.eval_node(&self.root, point)
    }

    fn eval_node(&self, n: &Node, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match n {
            Node::Const(v) => *v,
            Node::Coord(i) => x[*i],
            Node::Neg(a) => -self.eval_node(a, x)?,
            Node::Binary(op, a, b) => {
                let (a, b) = (self.eval_node(a, x)?, self.eval_node(b, x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain_err(
                                n,
                                DomainError {
                                    op: "division",
                                    argument: b,
                                },
                            ));
                        }
                        a / b
                    }
                }
            }
            Node::Pow(a, c) => {
                let base = self.eval_node(a, x)?;
                pow_value(base, *c).map_err(|e| self.domain_err(n, e))?
            }
            Node::Call(f, a) => {
                let arg = self.eval_node(a, x)?;
                f.apply(arg).map_err(|e| self.domain_err(n, e))?
            }
        })
    }

    /// Evaluates over Taylor-expanded coordinates; `vars[i]` expands coordinate `i`.
    pub fn evaluate_taylor(&self, vars: &[Taylor]) -> Result<Taylor, EvalError> {
        if vars.len() != self.coords.len() {
            return Err(EvalError::Arity {
                expected: self.coords.len(),
                got: vars.len(),
            });
        }
        self.taylor_node(&self.root, vars)
    }

    fn taylor_node(&self, n: &Node, x: &[Taylor]) -> Result<Taylor, EvalError> {
        Ok(match n {
            Node::Const(v) => x[0].constant_like(*v),
            Node::Coord(i) => x[*i].clone(),
            Node::Neg(a) => -self.taylor_node(a, x)?,
            Node::Binary(op, a, b) => {
                let (a, b) = (self.taylor_node(a, x)?, self.taylor_node(b, x)?);
                match op {
                    BinOp::Add => &a + &b,
                    BinOp::Sub => &a - &b,
                    BinOp::Mul => &a * &b,
                    BinOp::Div => a.div(&b).map_err(|e| self.domain_err(n, e))?,
                }
            }
            Node::Pow(a, c) => {
                let base = self.taylor_node(a, x)?;
                base.powf(*c).map_err(|e| self.domain_err(n, e))?
            }
            Node::Call(f, a) => {
                let arg = self.taylor_node(a, x)?;
                let r = match f {
                    Func::Sin => Ok(arg.sin()),
                    Func::Cos => Ok(arg.cos()),
                    Func::Exp => Ok(arg.exp()),
                    Func::Tanh => Ok(arg.tanh()),
                    Func::Ln => arg.ln(),
                    Func::Sqrt => arg.sqrt(),
                };
                r.map_err(|e| self.domain_err(n, e))?
            }
        })
    }
}

/// Shortest round-trip decimal for a finite float.
fn fmt_number(v: f64) -> String {
    let s = format!("{v:?}");
    // Debug prints e.g. "1e-5" and "2.0"; both are valid number tokens.
    s
}

impl fmt::Display for Expr {
    /// Fully parenthesized source text that re-parses to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(n: &Node, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match n {
                Node::Const(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                    write!(f, "(-{})", fmt_number(-v))
                }
                Node::Const(v) => write!(f, "{}", fmt_number(*v)),
                Node::Coord(i) => write!(f, "{}", names[*i]),
                Node::Neg(a) => {
                    write!(f, "(-")?;
                    go(a, names, f)?;
                    write!(f, ")")
                }
                Node::Binary(op, a, b) => {
                    write!(f, "(")?;
                    go(a, names, f)?;
                    write!(f, " {} ", op.symbol())?;
                    go(b, names, f)?;
                    write!(f, ")")
                }
                Node::Pow(a, c) => {
                    write!(f, "(")?;
                    go(a, names, f)?;
                    write!(f, ")^{}", fmt_number(*c))
                }
                Node::Call(func, a) => {
                    write!(f, "{}(", func.name())?;
                    go(a, names, f)?;
                    write!(f, ")")
                }
            }
        }
        go(&self.root, &self.coords, f)
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{lit}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or(c);
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            out.push((tok, start));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    coords: &'a [String],
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, o)| o).unwrap_or(self.end)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.syntax("expected `)`"),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = fold_binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = fold_binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let negate = matches!(self.peek(), Some(Tok::Op('-')));
        if negate {
            self.pos += 1;
        }
        let mut base = self.base()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.exponent()?;
            base = fold_pow(base, exponent);
        }
        Ok(if negate { fold_neg(base) } else { base })
    }

    fn exponent(&mut self) -> Result<f64, ParseError> {
        let at = self.offset();
        let node = match self.peek() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_rparen()?;
                e
            }
            Some(Tok::Op('-')) => {
                self.pos += 1;
                fold_neg(self.exponent_atom(at)?)
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.exponent_atom(at)?
            }
            _ => self.exponent_atom(at)?,
        };
        match node {
            Node::Const(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::NonConstantExponent { offset: at }),
        }
    }

    fn exponent_atom(&mut self, at: usize) -> Result<Node, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::Ident(_)) => {
                let n = self.base()?;
                match n {
                    Node::Const(_) => Ok(n),
                    _ => Err(ParseError::NonConstantExponent { offset: at }),
                }
            }
            _ => self.syntax("expected exponent"),
        }
    }

    fn base(&mut self) -> Result<Node, ParseError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let called = matches!(self.peek(), Some(Tok::LParen));
                if called {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownIdentifier { name, offset: at });
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(fold_call(func, arg));
                }
                if let Some(i) = self.coords.iter().position(|c| *c == name) {
                    Ok(Node::Coord(i))
                } else if let Some(v) = self.params.get(&name) {
                    Ok(Node::Const(*v))
                } else if Func::from_name(&name).is_some() {
                    Err(ParseError::Syntax {
                        offset: at,
                        message: format!("function `{name}` needs a parenthesized argument"),
                    })
                } else {
                    Err(ParseError::UnknownIdentifier { name, offset: at })
                }
            }
            Some(_) => self.syntax("expected number, identifier or `(`"),
            None => self.syntax("unexpected end of input"),
        }
    }
}

fn fold_neg(a: Node) -> Node {
    match a {
        Node::Const(v) => Node::Const(-v),
        other => Node::Neg(Box::new(other)),
    }
}

fn fold_binary(op: BinOp, a: Node, b: Node) -> Node {
    if let (Node::Const(x), Node::Const(y)) = (&a, &b) {
        let v = match op {
            BinOp::Add => Some(x + y),
            BinOp::Sub => Some(x - y),
            BinOp::Mul => Some(x * y),
            // division by zero is left for evaluation to report
            BinOp::Div if *y != 0.0 => Some(x / y),
            BinOp::Div => None,
        };
        if let Some(v) = v.filter(|v| v.is_finite()) {
            return Node::Const(v);
        }
    }
    Node::Binary(op, Box::new(a), Box::new(b))
}

fn fold_pow(a: Node, c: f64) -> Node {
    if let Node::Const(x) = a {
        if let Some(v) = pow_value(x, c).ok().filter(|v| v.is_finite()) {
            return Node::Const(v);
        }
    }
    Node::Pow(Box::new(a), c)
}

fn fold_call(f: Func, a: Node) -> Node {
    if let Node::Const(x) = a {
        if let Some(v) = f.apply(x).ok().filter(|v| v.is_finite()) {
            return Node::Const(v);
        }
    }
    Node::Call(f, Box::new(a))
}

/// Parses `text` against the given chart coordinates and parameter bindings.
pub fn parse_expression(
    text: &str,
    coordinates: &[String],
    params: &BTreeMap<String, f64>,
) -> Result<Expr, ParseError> {
    parse_with_shared(text, Arc::new(coordinates.to_vec()), params)
}

pub(crate) fn parse_with_shared(
    text: &str,
    coords: Arc<Vec<String>>,
    params: &BTreeMap<String, f64>,
) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        coords: &coords,
        params,
    };
    let root = p.expr()?;
    if p.pos != p.toks.len() {
        return p.syntax("unexpected trailing input");
    }
    Ok(Expr { root, coords })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn parse(text: &str, coords: &[&str]) -> Result<Expr, ParseError> {
        parse_expression(text, &names(coords), &BTreeMap::new())
    }

    #[test]
    fn grammar_tree_shape() {
        let e = parse("x^2 + y", &["x", "y"]).unwrap();
        assert_eq!(e.to_sexpr(), "(+ (^ x 2.0) y)");
    }

    #[test]
    fn generating_function_with_parameter() {
        let mut params = BTreeMap::new();
        params.insert("t0".to_string(), 0.0);
        let e = parse_expression("(1 - 3*(t - t0))^(-1/3)", &names(&["t"]), &params).unwrap();
        assert_eq!(e.evaluate(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn unknown_function_is_rejected() {
        match parse("foo(x)", &["x"]) {
            Err(ParseError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("x + w", &["x"]),
            Err(ParseError::UnknownIdentifier { offset: 4, .. })
        ));
    }

    #[test]
    fn exponent_must_be_constant() {
        assert!(matches!(
            parse("x^y", &["x", "y"]),
            Err(ParseError::NonConstantExponent { offset: 2 })
        ));
        assert!(matches!(
            parse("x^(y+1)", &["x", "y"]),
            Err(ParseError::NonConstantExponent { .. })
        ));
        assert!(parse("x^-2", &["x"]).is_ok());
        assert!(parse("x^(2*3)", &["x"]).is_ok());
    }

    #[test]
    fn power_binds_tighter_than_negation() {
        let e = parse("-x^2", &["x"]).unwrap();
        assert_eq!(e.evaluate(&[3.0]).unwrap(), -9.0);
        assert_eq!(e.to_sexpr(), "(neg (^ x 2.0))");
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert!(matches!(parse("", &["x"]), Err(ParseError::Empty)));
        assert!(matches!(
            parse("x + * y", &["x", "y"]),
            Err(ParseError::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            parse("(x + 1", &["x"]),
            Err(ParseError::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            parse("x $ 1", &["x"]),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(parse("sin x", &["x"]), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn division_by_zero_is_an_evaluation_error() {
        let e = parse("1/(x - 1)", &["x"]).unwrap();
        assert!(matches!(e.evaluate(&[1.0]), Err(EvalError::Domain { .. })));
        let c = parse("1/0", &["x"]).unwrap();
        assert!(c.evaluate(&[0.0]).is_err());
    }

    #[test]
    fn evaluation_basics() {
        assert_eq!(parse("x^2 + y", &["x", "y"]).unwrap().evaluate(&[3.0, 1.0]).unwrap(), 10.0);
        assert_eq!(parse("ln(1)", &["x"]).unwrap().evaluate(&[7.0]).unwrap(), 0.0);
        let err = parse("ln(x)", &["x"]).unwrap().evaluate(&[-1.0]).unwrap_err();
        match err {
            EvalError::Domain { subexpr, .. } => assert_eq!(subexpr, "ln(x)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn display_round_trips() {
        for src in ["-x^2 + 3*y/(x+2)", "sqrt(x*x + 1)^(-1/3) - tanh(-y)", "(-2.5)*x - -1e-3"] {
            let e = parse(src, &["x", "y"]).unwrap();
            let again = parse(&e.to_string(), &["x", "y"]).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
    }
}
