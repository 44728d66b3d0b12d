use std::fmt;

use thiserror::Error;

use super::{BinOp, Dual, EvalPoint, Func, Node, NodeKind, PotentialExpr, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogOfNonPositive,
    SqrtOfNegative,
    NegativeBaseFractionalPower,
    Overflow,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogOfNonPositive => "ln of a non-positive argument",
            DomainKind::SqrtOfNegative => "sqrt of a negative argument",
            DomainKind::NegativeBaseFractionalPower => {
                "negative base raised to a non-integer power"
            }
            DomainKind::Overflow => "non-finite result",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {kind} in subexpression at bytes {span}")]
    Domain { kind: DomainKind, span: Span },
    #[error("not differentiable at this point: subexpression at bytes {span}")]
    NonDifferentiable { span: Span },
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("evaluation point has a non-finite coordinate")]
    NonFinitePoint,
}

/// Scalar type an expression can be evaluated in.
trait Scalar: Copy {
    const DIFFERENTIATING: bool;
    fn constant(v: f64) -> Self;
    fn coordinate(v: f64, slot: usize) -> Self;
    fn value(&self) -> f64;
    fn has_gradient(&self) -> bool;
    fn finite(&self) -> bool;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn neg(self) -> Self;
    /// `self` raised to a power whose own gradient is zero.
    fn powf(self, n: f64) -> Self;
    /// `self^o` with `self > 0`, via `exp(o ln self)`.
    fn pow_general(self, o: Self) -> Self;
    fn unary(self, value: f64, slope: f64) -> Self;
}

impl Scalar for f64 {
    const DIFFERENTIATING: bool = false;
    fn constant(v: f64) -> Self {
        v
    }
    fn coordinate(v: f64, _: usize) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn has_gradient(&self) -> bool {
        false
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn powf(self, n: f64) -> Self {
        self.powf(n)
    }
    fn pow_general(self, o: Self) -> Self {
        self.powf(o)
    }
    fn unary(self, value: f64, _: f64) -> Self {
        value
    }
}

impl Scalar for Dual {
    const DIFFERENTIATING: bool = true;
    fn constant(v: f64) -> Self {
        Dual::constant(v)
    }
    fn coordinate(v: f64, slot: usize) -> Self {
        Dual::variable(v, slot)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn has_gradient(&self) -> bool {
        Dual::has_gradient(self)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn powf(self, n: f64) -> Self {
        let value = self.value.powf(n);
        if n == 0.0 || !self.has_gradient() {
            return Dual::constant(value);
        }
        self.chain(value, n * self.value.powf(n - 1.0))
    }
    fn pow_general(self, o: Self) -> Self {
        let value = self.value.powf(o.value);
        let ln = self.value.ln();
        Dual {
            value,
            grad: std::array::from_fn(|i| {
                value * (o.grad[i] * ln + o.value * self.grad[i] / self.value)
            }),
        }
    }
    fn unary(self, value: f64, slope: f64) -> Self {
        self.chain(value, slope)
    }
}

fn domain(kind: DomainKind, node: &Node) -> EvalError {
    EvalError::Domain {
        kind,
        span: node.span,
    }
}

fn checked<S: Scalar>(out: S, node: &Node) -> Result<S, EvalError> {
    if out.finite() {
        Ok(out)
    } else if S::DIFFERENTIATING && out.value().is_finite() {
        Err(EvalError::NonDifferentiable { span: node.span })
    } else {
        Err(domain(DomainKind::Overflow, node))
    }
}

fn eval_node<S: Scalar>(node: &Node, p: &EvalPoint<'_>) -> Result<S, EvalError> {
    let out = match &node.kind {
        NodeKind::Const(v) => S::constant(*v),
        NodeKind::Var(c) => S::coordinate(p.coord(*c), c.index()),
        NodeKind::Param(name) => match p.params.get(name) {
            Some(v) => S::constant(*v),
            None => return Err(EvalError::UnboundParameter(name.clone())),
        },
        NodeKind::Neg(a) => eval_node::<S>(a, p)?.neg(),
        NodeKind::Binary(op, a, b) => {
            let l = eval_node::<S>(a, p)?;
            let r = eval_node::<S>(b, p)?;
            match op {
                BinOp::Add => l.add(r),
                BinOp::Sub => l.sub(r),
                BinOp::Mul => l.mul(r),
                BinOp::Div => {
                    if r.value() == 0.0 {
                        return Err(domain(DomainKind::DivisionByZero, node));
                    }
                    l.div(r)
                }
                BinOp::Pow => power(l, r, node)?,
            }
        }
        NodeKind::Call(func, a) => {
            let x = eval_node::<S>(a, p)?;
            let v = x.value();
            match func {
                Func::Sin => x.unary(v.sin(), v.cos()),
                Func::Cos => x.unary(v.cos(), -v.sin()),
                Func::Exp => {
                    let e = v.exp();
                    x.unary(e, e)
                }
                Func::Ln => {
                    if v <= 0.0 {
                        return Err(domain(DomainKind::LogOfNonPositive, node));
                    }
                    x.unary(v.ln(), 1.0 / v)
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(domain(DomainKind::SqrtOfNegative, node));
                    }
                    let s = v.sqrt();
                    if v == 0.0 && S::DIFFERENTIATING {
                        if x.has_gradient() {
                            return Err(EvalError::NonDifferentiable { span: node.span });
                        }
                        x.unary(0.0, 0.0)
                    } else {
                        x.unary(s, 0.5 / s)
                    }
                }
                Func::Abs => {
                    if v == 0.0 && S::DIFFERENTIATING {
                        return Err(EvalError::NonDifferentiable { span: node.span });
                    }
                    x.unary(v.abs(), v.signum())
                }
            }
        }
    };
    checked(out, node)
}

fn power<S: Scalar>(base: S, exponent: S, node: &Node) -> Result<S, EvalError> {
    let b = base.value();
    let n = exponent.value();
    if b == 0.0 && n < 0.0 {
        return Err(domain(DomainKind::DivisionByZero, node));
    }
    if exponent.has_gradient() {
        if b <= 0.0 {
            // d/dn b^n = b^n ln b, undefined unless b > 0.
            return Err(if b < 0.0 {
                domain(DomainKind::NegativeBaseFractionalPower, node)
            } else {
                EvalError::NonDifferentiable { span: node.span }
            });
        }
        return Ok(base.pow_general(exponent));
    }
    if b < 0.0 && n.fract() != 0.0 {
        return Err(domain(DomainKind::NegativeBaseFractionalPower, node));
    }
    Ok(base.powf(n))
}

fn check_point(p: &EvalPoint<'_>) -> Result<(), EvalError> {
    if [p.x, p.y, p.z, p.t].iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EvalError::NonFinitePoint)
    }
}

impl PotentialExpr {
    /// Value of the potential at `p`.
    pub fn eval(&self, p: &EvalPoint<'_>) -> Result<f64, EvalError> {
        check_point(p)?;
        eval_node::<f64>(&self.root, p)
    }

    /// Value and exact partials `(∂x, ∂y, ∂z, ∂t)` by dual-number propagation.
    pub fn eval_with_gradient(&self, p: &EvalPoint<'_>) -> Result<(f64, [f64; 4]), EvalError> {
        check_point(p)?;
        let d = eval_node::<Dual>(&self.root, p)?;
        Ok((d.value, d.grad))
    }
}
