//! Expression language for scalar model functions.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := base ("^" factor)?                  -- power right-associative
//! base   := number | ident | ident "(" expr ")" | "(" expr ")" | "-" base
//! ```
//!
//! The function set is fixed: `exp`, `log`, `sqrt`, `abs`, `tanh`, `sin`,
//! `cos`, each taking exactly one argument. Variables must be declared at
//! parse time; evaluation is positional over the declared list.
//!
//! Domain violations (log of a non-positive value, sqrt of a negative,
//! division by zero, non-finite results) are reported as errors and never
//! propagated as NaN or infinity.

use std::fmt;

use thiserror::Error;

/// Built-in single-argument functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Sin,
    Cos,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression over a fixed list of declared variables.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("unknown function '{name}' at offset {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("arity error at offset {offset}: '{name}' takes exactly one argument")]
    Arity { offset: usize, name: String },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("{base}^{exponent} is not a real number")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite result (overflow)")]
    NonFinite,
    #[error("expected {expected} argument values, got {got}")]
    ArgCount { expected: usize, got: usize },
    #[error("'{0}' is not a declared variable")]
    NoSuchVariable(String),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => self.syntax(format!("expected '{}', found '{}'", c as char, got as char)),
            None => self.syntax(format!("expected '{}', found end of input", c as char)),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Node::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Node::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.factor()?;
            Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => self.syntax(format!("unexpected character '{}'", c as char)),
            None => self.syntax("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // "1e" followed by a non-digit: the 'e' belongs to whatever
                // comes next, not the number.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Num(v)),
            _ => Err(ParseError::Syntax {
                offset: start,
                message: format!("invalid numeric literal '{text}'"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_owned();
        if self.peek() == Some(b'(') {
            let func = Func::from_name(&name).ok_or(ParseError::UnknownFunction {
                offset: start,
                name: name.clone(),
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() == Some(b',') {
                return Err(ParseError::Arity { offset: self.pos, name });
            }
            self.expect(b')')?;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        match self.vars.iter().position(|v| *v == name) {
            Some(idx) => Ok(Node::Var(idx)),
            None => Err(ParseError::UnknownIdentifier { offset: start, name }),
        }
    }
}

impl Expr {
    /// Parse `source` against the declared variable list.
    pub fn parse(source: &str, declared_vars: &[&str]) -> Result<Expr, ParseError> {
        if source.trim().is_empty() {
            return Err(ParseError::Empty);
        }
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            vars: declared_vars,
        };
        let root = p.expr()?;
        if p.peek().is_some() {
            return p.syntax("trailing input");
        }
        Ok(Expr {
            root,
            vars: declared_vars.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn var_names(&self) -> &[String] {
        &self.vars
    }

    /// Evaluate with one value per declared variable, in declaration order.
    pub fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        if args.len() != self.vars.len() {
            return Err(EvalError::ArgCount {
                expected: self.vars.len(),
                got: args.len(),
            });
        }
        let v = eval_node(&self.root, args)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Central finite difference with respect to `var` at `args`:
    /// `(e(p + step) - e(p - step)) / (2 step)`.
    pub fn diff_fd(&self, var: &str, args: &[f64], step: f64) -> Result<f64, EvalError> {
        let idx = self
            .vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| EvalError::NoSuchVariable(var.to_owned()))?;
        let mut hi = args.to_vec();
        let mut lo = args.to_vec();
        hi[idx] += step;
        lo[idx] -= step;
        let d = (self.eval(&hi)? - self.eval(&lo)?) / (2.0 * step);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

fn eval_node(node: &Node, args: &[f64]) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Var(i) => Ok(args[*i]),
        Node::Neg(n) => Ok(-eval_node(n, args)?),
        Node::Bin(op, l, r) => {
            let a = eval_node(l, args)?;
            let b = eval_node(r, args)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => {
                    let v = a.powf(b);
                    if v.is_nan() {
                        Err(EvalError::PowDomain { base: a, exponent: b })
                    } else {
                        Ok(v)
                    }
                }
            }
        }
        Node::Call(f, arg) => {
            let x = eval_node(arg, args)?;
            match f {
                Func::Exp => Ok(x.exp()),
                Func::Log => {
                    if x <= 0.0 {
                        Err(EvalError::LogDomain(x))
                    } else {
                        Ok(x.ln())
                    }
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        Err(EvalError::SqrtDomain(x))
                    } else {
                        Ok(x.sqrt())
                    }
                }
                Func::Abs => Ok(x.abs()),
                Func::Tanh => Ok(x.tanh()),
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
            }
        }
    }
}

// Binding strength for the printer: 1 = +/-, 2 = */÷, 3 = ^, 4 = atoms
// and unary minus (which lives at `base` level in the grammar).
fn binding(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Bin(BinOp::Pow, ..) => 3,
        Node::Num(_) | Node::Var(_) | Node::Neg(_) | Node::Call(..) => 4,
    }
}

fn fmt_node(node: &Node, vars: &[String], min_binding: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let b = binding(node);
    let parens = b < min_binding;
    if parens {
        f.write_str("(")?;
    }
    match node {
        Node::Num(v) => write!(f, "{v}")?,
        Node::Var(i) => f.write_str(&vars[*i])?,
        Node::Neg(n) => {
            f.write_str("-")?;
            // the grammar only admits a `base` after unary minus
            fmt_node(n, vars, 4, f)?;
        }
        Node::Bin(op, l, r) => {
            let (sym, lb, rb) = match op {
                BinOp::Add => ("+", 1, 2),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                // right-associative: left operand must be a plain base
                BinOp::Pow => ("^", 4, 3),
            };
            fmt_node(l, vars, lb, f)?;
            f.write_str(sym)?;
            fmt_node(r, vars, rb, f)?;
        }
        Node::Call(func, arg) => {
            f.write_str(func.name())?;
            f.write_str("(")?;
            fmt_node(arg, vars, 1, f)?;
            f.write_str(")")?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.root, &self.vars, 1, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, var: &str, x: f64) -> Result<f64, EvalError> {
        Expr::parse(src, &[var]).unwrap().eval(&[x])
    }

    #[test]
    fn polynomial_arithmetic() {
        assert_eq!(eval1("2*x+1", "x", 3.0).unwrap(), 7.0);
    }

    #[test]
    fn exp_identity() {
        assert_eq!(Expr::parse("exp(0)", &[]).unwrap().eval(&[]).unwrap(), 1.0);
    }

    #[test]
    fn direct_substitution() {
        assert_eq!(eval1("0.5 + 1/(1+v^2)", "v", 0.0).unwrap(), 1.5);
    }

    #[test]
    fn division_by_zero_reported() {
        assert_eq!(eval1("x/ (x-1)", "x", 1.0), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn log_domain_reported() {
        assert_eq!(eval1("log(x)", "x", 0.0), Err(EvalError::LogDomain(0.0)));
        assert!(matches!(eval1("log(x)", "x", -2.0), Err(EvalError::LogDomain(_))));
    }

    #[test]
    fn sqrt_domain_reported() {
        assert!(matches!(eval1("sqrt(x)", "x", -1.0), Err(EvalError::SqrtDomain(_))));
    }

    #[test]
    fn tanh_at_origin() {
        assert_eq!(Expr::parse("tanh(0)", &[]).unwrap().eval(&[]).unwrap(), 0.0);
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(eval1("exp(x)", "x", 1e6), Err(EvalError::NonFinite));
    }

    #[test]
    fn precedence() {
        assert_eq!(Expr::parse("2+3*4", &[]).unwrap().eval(&[]).unwrap(), 14.0);
        assert_eq!(Expr::parse("2^3^2", &[]).unwrap().eval(&[]).unwrap(), 512.0);
    }

    #[test]
    fn unary_minus_binds_at_base_level() {
        // base := "-" base, then factor applies "^": -2^2 == (-2)^2
        assert_eq!(Expr::parse("-2^2", &[]).unwrap().eval(&[]).unwrap(), 4.0);
        assert_eq!(Expr::parse("-(2^2)", &[]).unwrap().eval(&[]).unwrap(), -4.0);
        assert_eq!(Expr::parse("2^-1", &[]).unwrap().eval(&[]).unwrap(), 0.5);
    }

    #[test]
    fn diff_fd_quadratic() {
        let e = Expr::parse("x^2", &["x"]).unwrap();
        let d = e.diff_fd("x", &[3.0], 1e-5).unwrap();
        assert!((d - 6.0).abs() <= 1e-8, "got {d}");
    }

    #[test]
    fn diff_fd_constant() {
        let e = Expr::parse("4.25", &["x"]).unwrap();
        assert_eq!(e.diff_fd("x", &[0.0], 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn diff_fd_exponential() {
        let e = Expr::parse("exp(x)", &["x"]).unwrap();
        let d = e.diff_fd("x", &[0.0], 1e-5).unwrap();
        assert!((d - 1.0).abs() <= 1e-9, "got {d}");
    }

    #[test]
    fn diff_fd_agrees_with_known_derivatives_to_second_order() {
        // d/dx [sin(x^2)] = 2x cos(x^2) at x = 0.7
        let e = Expr::parse("sin(x^2)", &["x"]).unwrap();
        let exact = 2.0 * 0.7 * (0.7f64 * 0.7).cos();
        for step in [1e-3, 1e-4, 1e-5] {
            let d = e.diff_fd("x", &[0.7], step).unwrap();
            assert!((d - exact).abs() <= 2.0 * step * step + 1e-10);
        }
    }

    #[test]
    fn syntax_error_carries_offset() {
        match Expr::parse("1 + * 2", &[]) {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_carries_name() {
        match Expr::parse("2*y", &["x"]) {
            Err(ParseError::UnknownIdentifier { name, .. }) => assert_eq!(name, "y"),
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn unknown_function_carries_name() {
        match Expr::parse("foo(1)", &[]) {
            Err(ParseError::UnknownFunction { name, .. }) => assert_eq!(name, "foo"),
            other => panic!("expected unknown function, got {other:?}"),
        }
    }

    #[test]
    fn arity_error_on_two_arguments() {
        assert!(matches!(
            Expr::parse("sin(1, 2)", &[]),
            Err(ParseError::Arity { .. })
        ));
    }

    #[test]
    fn empty_source_rejected() {
        assert!(matches!(Expr::parse("   ", &[]), Err(ParseError::Empty)));
        assert!(Expr::parse("", &[]).is_err());
    }

    #[test]
    fn trailing_input_rejected() {
        assert!(matches!(Expr::parse("1 2", &[]), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(Expr::parse("1e-3", &[]).unwrap().eval(&[]).unwrap(), 1e-3);
        assert_eq!(Expr::parse("2.5E+2", &[]).unwrap().eval(&[]).unwrap(), 250.0);
        assert_eq!(Expr::parse(".5", &[]).unwrap().eval(&[]).unwrap(), 0.5);
    }

    #[test]
    fn round_trip_evaluates_identically() {
        use rand::{Rng, SeedableRng};
        let corpus = [
            "2*x+1",
            "0.5 + 1/(1+x^2)",
            "x - (1 - x) - 2",
            "x/(2/x)",
            "2^x^2",
            "(2^x)^2",
            "-x^2",
            "-(x^2)",
            "exp(-x) * tanh(x/2) + sqrt(abs(x))",
            "sin(x)*cos(x) - x/3 + 1e-2",
            "x^-2 + 3",
            "1 - -x",
            "abs(x - 0.25)/(0.5 + abs(x))",
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for src in corpus {
            let e = Expr::parse(src, &["x"]).unwrap();
            let printed = e.to_string();
            let e2 = Expr::parse(&printed, &["x"]).unwrap();
            for _ in 0..100 {
                let x = rng.gen_range(-3.0..3.0);
                let a = e.eval(&[x]);
                let b = e2.eval(&[x]);
                match (a, b) {
                    (Ok(a), Ok(b)) => assert_eq!(a, b, "{src} vs {printed} at x={x}"),
                    (a, b) => assert_eq!(a, b, "{src} vs {printed} at x={x}"),
                }
            }
        }
    }

    #[test]
    fn printer_preserves_associativity_structure() {
        for src in ["a-(b-c)", "(a-b)-c", "a/(b/c)", "(a^b)^c", "a^(b^c)"] {
            let e = Expr::parse(src, &["a", "b", "c"]).unwrap();
            let printed = e.to_string();
            let e2 = Expr::parse(&printed, &["a", "b", "c"]).unwrap();
            let pt = [1.7, 2.3, 0.9];
            assert_eq!(e.eval(&pt).unwrap(), e2.eval(&pt).unwrap(), "{src} -> {printed}");
        }
    }
}
