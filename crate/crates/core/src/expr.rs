//! Coefficient expressions.
//!
//! A small arithmetic language over the variables `x`, `l`, `beta` and
//! `theta1..thetaN` (`theta` is shorthand for `theta1`). Supported syntax:
//! numbers, `+ - * / ^` (`^` is right associative and binds tighter than unary
//! minus), parentheses, the constant `pi` and the functions `abs exp ln sqrt sin
//! cos sinh cosh tanh` (one argument), `pow` (two) and `min max` (two or more).

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    /// Byte offset into the source string.
    pub offset: usize,
    pub message: String,
}

/// A variable an expression may refer to. `Theta(k)` is zero based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variable {
    X,
    L,
    Beta,
    Theta(usize),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::X => f.write_str("x"),
            Variable::L => f.write_str("l"),
            Variable::Beta => f.write_str("beta"),
            Variable::Theta(k) => write!(f, "theta{}", k + 1),
        }
    }
}

/// Values of the variables at one evaluation point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Vars<'a> {
    pub x: f64,
    pub l: f64,
    pub beta: f64,
    pub theta: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Abs,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Pow,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "pow" => Func::Pow,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Pow => "pow",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Pow => n == 2,
            Func::Min | Func::Max => n >= 2,
            _ => n == 1,
        }
    }

    fn apply(self, a: &[f64]) -> f64 {
        match self {
            Func::Abs => a[0].abs(),
            Func::Exp => math::exp(a[0]),
            Func::Ln => math::ln(a[0]),
            Func::Sqrt => math::sqrt(a[0]),
            Func::Sin => math::sin(a[0]),
            Func::Cos => math::cos(a[0]),
            Func::Sinh => math::sinh(a[0]),
            Func::Cosh => math::cosh(a[0]),
            Func::Tanh => math::tanh(a[0]),
            Func::Pow => math::powf(a[0], a[1]),
            Func::Min => a.iter().copied().fold(f64::INFINITY, f64::min),
            Func::Max => a.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Variable),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, v: &Vars<'_>) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(Variable::X) => v.x,
            Node::Var(Variable::L) => v.l,
            Node::Var(Variable::Beta) => v.beta,
            Node::Var(Variable::Theta(k)) => v.theta.get(*k).copied().unwrap_or(f64::NAN),
            Node::Neg(a) => -a.eval(v),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(v), b.eval(v));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Node::Call(f, args) => match args.len() {
                1 => f.apply(&[args[0].eval(v)]),
                2 => f.apply(&[args[0].eval(v), args[1].eval(v)]),
                _ => {
                    let vals: Vec<f64> = args.iter().map(|a| a.eval(v)).collect();
                    f.apply(&vals)
                }
            },
        }
    }

    fn visit_vars(&self, out: &mut Vec<Variable>) {
        match self {
            Node::Const(_) => {}
            Node::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Node::Neg(a) => a.visit_vars(out),
            Node::Bin(_, a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.visit_vars(out)),
        }
    }

    fn fold(self) -> Node {
        let empty = Vars::default();
        match self {
            Node::Neg(a) => match a.fold() {
                Node::Const(c) => Node::Const(-c),
                a => Node::Neg(Box::new(a)),
            },
            Node::Bin(op, a, b) => {
                let (a, b) = (a.fold(), b.fold());
                let n = Node::Bin(op, Box::new(a), Box::new(b));
                match &n {
                    Node::Bin(_, a, b)
                        if matches!((&**a, &**b), (Node::Const(_), Node::Const(_))) =>
                    {
                        Node::Const(n.eval(&empty))
                    }
                    _ => n,
                }
            }
            Node::Call(f, args) => {
                let args: Vec<Node> = args.into_iter().map(Node::fold).collect();
                if args.iter().all(|a| matches!(a, Node::Const(_))) {
                    Node::Const(Node::Call(f, args).eval(&empty))
                } else {
                    Node::Call(f, args)
                }
            }
            n => n,
        }
    }
}

/// Integer powers by repeated multiplication so `x^2` is exact.
fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b == 3.0 {
        a * a * a
    } else if b == 1.0 {
        a
    } else {
        math::powf(a, b)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(v) => write!(f, "{v}"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A parsed, constant-folded coefficient expression.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExpr {
    root: Node,
}

impl CoefficientExpr {
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        if p.pos == p.src.len() {
            return Err(p.error("empty expression"));
        }
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { root: root.fold() })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            root: Node::Const(c),
        }
    }

    pub fn var(v: Variable) -> Self {
        Self { root: Node::Var(v) }
    }

    #[inline]
    pub fn eval(&self, vars: &Vars<'_>) -> f64 {
        self.root.eval(vars)
    }

    /// `self + other`, folded.
    pub fn plus(&self, other: &Self) -> Self {
        Self {
            root: Node::Bin(
                BinOp::Add,
                Box::new(self.root.clone()),
                Box::new(other.root.clone()),
            )
            .fold(),
        }
    }

    /// `self * other`, folded.
    pub fn times(&self, other: &Self) -> Self {
        Self {
            root: Node::Bin(
                BinOp::Mul,
                Box::new(self.root.clone()),
                Box::new(other.root.clone()),
            )
            .fold(),
        }
    }

    /// `self + c`.
    pub fn offset(&self, c: f64) -> Self {
        self.plus(&Self::constant(c))
    }

    /// Distinct variables referenced, in order of first appearance.
    pub fn variables(&self) -> Vec<Variable> {
        let mut v = Vec::new();
        self.root.visit_vars(&mut v);
        v
    }

    pub fn uses(&self, var: Variable) -> bool {
        self.variables().contains(&var)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl core::str::FromStr for CoefficientExpr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        Self::parse(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = core::str::from_utf8(&s[start..i]).map_err(|_| self.error("invalid number"))?;
        let v: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            message: "invalid number".to_string(),
        })?;
        self.pos = i;
        Ok(Node::Const(v))
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_alphanumeric() || s[i] == b'_') {
            i += 1;
        }
        let name = core::str::from_utf8(&s[start..i]).unwrap_or("");
        self.pos = i;
        if let Some(f) = Func::lookup(name) {
            if self.peek() != Some(b'(') {
                return Err(self.error("expected `(` after function name"));
            }
            self.pos += 1;
            let mut args = Vec::new();
            if self.peek() == Some(b')') {
                return Err(self.error("function needs arguments"));
            }
            loop {
                args.push(self.expr()?);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
            if !f.arity_ok(args.len()) {
                return Err(ParseError {
                    offset: start,
                    message: alloc::format!("wrong number of arguments to `{name}`"),
                });
            }
            return Ok(Node::Call(f, args));
        }
        let var = match name {
            "x" => Variable::X,
            "l" => Variable::L,
            "beta" => Variable::Beta,
            "theta" => Variable::Theta(0),
            "pi" => return Ok(Node::Const(core::f64::consts::PI)),
            _ => match name
                .strip_prefix("theta")
                .and_then(|d| d.parse::<usize>().ok())
            {
                Some(k) if k >= 1 => Variable::Theta(k - 1),
                _ => {
                    return Err(ParseError {
                        offset: start,
                        message: alloc::format!("unknown identifier `{name}`"),
                    })
                }
            },
        };
        Ok(Node::Var(var))
    }
}
