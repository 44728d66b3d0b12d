use std::fmt;

use super::{BinOp, Node, NodeKind, PotentialExpr};

// Binding strength, matching the parser's grammar levels.
const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match &node.kind {
        NodeKind::Binary(BinOp::Add | BinOp::Sub, ..) => ADD,
        NodeKind::Binary(BinOp::Mul | BinOp::Div, ..) => MUL,
        NodeKind::Neg(_) => NEG,
        NodeKind::Binary(BinOp::Pow, ..) => POW,
        NodeKind::Const(v) if v.is_sign_negative() => NEG,
        _ => ATOM,
    }
}

fn child(f: &mut fmt::Formatter<'_>, node: &Node, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({node})")
    } else {
        write!(f, "{node}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            // `{}` on f64 prints the shortest decimal that reads back to the same bits.
            NodeKind::Const(v) => write!(f, "{v}"),
            NodeKind::Var(c) => f.write_str(c.name()),
            NodeKind::Param(name) => f.write_str(name),
            NodeKind::Neg(a) => {
                f.write_str("-")?;
                child(f, a, precedence(a) < NEG)
            }
            NodeKind::Call(func, a) => write!(f, "{}({a})", func.name()),
            NodeKind::Binary(BinOp::Pow, a, b) => {
                child(f, a, precedence(a) <= POW)?;
                f.write_str("^")?;
                child(f, b, precedence(b) < NEG)
            }
            NodeKind::Binary(op, a, b) => {
                let p = if matches!(op, BinOp::Add | BinOp::Sub) {
                    ADD
                } else {
                    MUL
                };
                child(f, a, precedence(a) < p)?;
                f.write_str(op.symbol())?;
                child(f, b, precedence(b) <= p)
            }
        }
    }
}

impl fmt::Display for PotentialExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}
