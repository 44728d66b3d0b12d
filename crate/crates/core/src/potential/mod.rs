//! Scalar potential expressions `U(x, y, z, t)`.
//!
//! A small infix language with named parameters, exact first derivatives by
//! forward-mode dual numbers, and a printer whose output parses back to the
//! same tree.

mod dual;
mod eval;
mod parser;
mod print;

use std::collections::BTreeMap;
use std::fmt;

pub use dual::Dual;
pub use eval::{DomainKind, EvalError};
pub use parser::ParseError;

/// Parameter bindings, keyed by declared name.
pub type Params = BTreeMap<String, f64>;

/// Half-open byte range into the source text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Coordinate variables available to every expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coord {
    X,
    Y,
    Z,
    T,
}

impl Coord {
    pub const ALL: [Coord; 4] = [Coord::X, Coord::Y, Coord::Z, Coord::T];

    /// Slot in the `(x, y, z, t)` gradient.
    pub fn index(self) -> usize {
        match self {
            Coord::X => 0,
            Coord::Y => 1,
            Coord::Z => 2,
            Coord::T => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Coord::X => "x",
            Coord::Y => "y",
            Coord::Z => "z",
            Coord::T => "t",
        }
    }

    fn from_name(name: &str) -> Option<Coord> {
        match name {
            "x" => Some(Coord::X),
            "y" => Some(Coord::Y),
            "z" => Some(Coord::Z),
            "t" => Some(Coord::T),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Clone, Debug)]
pub enum NodeKind {
    Const(f64),
    Var(Coord),
    Param(String),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// An expression node together with the source bytes it came from.
///
/// Equality is structural: spans are ignored, so a reprinted and reparsed
/// tree compares equal to the original.
#[derive(Clone, Debug)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Span,
}

impl Node {
    pub fn new(kind: NodeKind, span: Span) -> Self {
        Self { kind, span }
    }

    /// Node with an empty span, for trees built in code.
    pub fn synthetic(kind: NodeKind) -> Self {
        Self {
            kind,
            span: Span::default(),
        }
    }

    fn visit_params<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.kind {
            NodeKind::Param(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            NodeKind::Const(_) | NodeKind::Var(_) => {}
            NodeKind::Neg(a) | NodeKind::Call(_, a) => a.visit_params(out),
            NodeKind::Binary(_, a, b) => {
                a.visit_params(out);
                b.visit_params(out);
            }
        }
    }

    fn depends_on(&self, coord: Coord) -> bool {
        match &self.kind {
            NodeKind::Var(c) => *c == coord,
            NodeKind::Const(_) | NodeKind::Param(_) => false,
            NodeKind::Neg(a) | NodeKind::Call(_, a) => a.depends_on(coord),
            NodeKind::Binary(_, a, b) => a.depends_on(coord) || b.depends_on(coord),
        }
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (NodeKind::Const(a), NodeKind::Const(b)) => a.to_bits() == b.to_bits(),
            (NodeKind::Var(a), NodeKind::Var(b)) => a == b,
            (NodeKind::Param(a), NodeKind::Param(b)) => a == b,
            (NodeKind::Neg(a), NodeKind::Neg(b)) => a == b,
            (NodeKind::Binary(o1, a1, b1), NodeKind::Binary(o2, a2, b2)) => {
                o1 == o2 && a1 == a2 && b1 == b2
            }
            (NodeKind::Call(f1, a1), NodeKind::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

/// Parsed potential. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialExpr {
    root: Node,
    declared: Vec<String>,
}

impl PotentialExpr {
    /// Parses `source`, accepting the coordinates `x, y, z, t` and the given
    /// parameter names as identifiers.
    pub fn parse<S: AsRef<str>>(source: &str, declared: &[S]) -> Result<Self, ParseError> {
        let declared: Vec<String> = declared.iter().map(|s| s.as_ref().to_owned()).collect();
        let root = parser::parse(source, &declared)?;
        Ok(Self { root, declared })
    }

    /// Wraps a tree built in code. Every parameter it references becomes declared.
    pub fn from_node(root: Node) -> Self {
        let mut names = Vec::new();
        root.visit_params(&mut names);
        let declared = names.into_iter().map(str::to_owned).collect();
        Self { root, declared }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn declared_params(&self) -> &[String] {
        &self.declared
    }

    /// Parameters actually referenced by the tree, in first-use order.
    pub fn referenced_params(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.visit_params(&mut out);
        out
    }

    /// True when the expression mentions `t`.
    pub fn is_time_dependent(&self) -> bool {
        self.root.depends_on(Coord::T)
    }
}

/// Point at which a potential is evaluated.
#[derive(Clone, Copy, Debug)]
pub struct EvalPoint<'a> {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub params: &'a Params,
}

impl<'a> EvalPoint<'a> {
    pub fn new(position: [f64; 3], t: f64, params: &'a Params) -> Self {
        Self {
            x: position[0],
            y: position[1],
            z: position[2],
            t,
            params,
        }
    }

    fn coord(&self, c: Coord) -> f64 {
        match c {
            Coord::X => self.x,
            Coord::Y => self.y,
            Coord::Z => self.z,
            Coord::T => self.t,
        }
    }
}
