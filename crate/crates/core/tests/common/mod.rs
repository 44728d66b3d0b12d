#![allow(dead_code)]

use proptest::prelude::*;
use torsion_geodesic::dynamics::{KinematicState, Problem};
use torsion_geodesic::field::{MetricField, ParticleParams};
use torsion_geodesic::potential::{
    BinOp, Coord, EvalPoint, Func, Node, NodeKind, Params, PotentialExpr,
};

pub fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
}

/// Problem with the energy fixed by the initial speed.
pub fn problem(
    src: &str,
    pairs: &[(&str, f64)],
    mass: f64,
    x: [f64; 3],
    v: [f64; 3],
    t_end: f64,
) -> Problem {
    let names: Vec<&str> = pairs.iter().map(|p| p.0).collect();
    let expr = PotentialExpr::parse(src, &names).unwrap();
    let params = params(pairs);
    let u0 = expr.eval(&EvalPoint::new(x, 0.0, &params)).unwrap();
    let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let energy = ParticleParams::energy_for_speed(mass, 1.0, speed, u0);
    let field = MetricField::new(
        expr,
        params,
        ParticleParams::new(mass, 1.0, energy).unwrap(),
    )
    .unwrap();
    Problem {
        field,
        initial: KinematicState::new(0.0, x, v),
        t_end,
    }
}

pub fn free_particle() -> Problem {
    problem("0", &[], 1.0, [0.0; 3], [0.6, 0.0, 0.0], 1.0)
}

pub fn uniform_field() -> Problem {
    problem("k*x", &[("k", 0.1)], 1.0, [0.0; 3], [0.6, 0.0, 0.0], 1.0)
}

/// Faster dynamics in the same field: `m c / k = 0.1`.
pub fn uniform_field_light() -> Problem {
    problem("k*x", &[("k", 0.1)], 0.01, [0.0; 3], [0.0, 0.6, 0.0], 1.0)
}

pub fn harmonic() -> Problem {
    problem(
        "k*x^2/2",
        &[("k", 1.0)],
        1.0,
        [1.0, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        6.0,
    )
}

/// Circular orbit of radius `r` at speed `v`, one period.
pub fn coulomb_circular(r: f64, v: f64) -> Problem {
    let gamma = 1.0 / (1.0 - v * v).sqrt();
    let q = gamma * v * v * r;
    let period = 2.0 * std::f64::consts::PI * r / v;
    problem(
        "-q/sqrt(x^2+y^2+z^2)",
        &[("q", q)],
        1.0,
        [r, 0.0, 0.0],
        [0.0, v, 0.0],
        period,
    )
}

pub fn harmonic_turning_point() -> Problem {
    problem(
        "k*x^2/2",
        &[("k", 1.0)],
        1.0,
        [0.0; 3],
        [0.3, 0.0, 0.0],
        5.0,
    )
}

/// Exact relativistic motion in `U = k x` starting in the x–y plane.
pub struct UniformOracle {
    pub k: f64,
    pub m: f64,
    pub c: f64,
    pub x0: [f64; 3],
    pub p0: [f64; 3],
}

impl UniformOracle {
    pub fn new(k: f64, m: f64, c: f64, x0: [f64; 3], v0: [f64; 3]) -> Self {
        let gamma = 1.0 / (1.0 - (v0[0] * v0[0] + v0[1] * v0[1] + v0[2] * v0[2]) / (c * c)).sqrt();
        Self {
            k,
            m,
            c,
            x0,
            p0: v0.map(|v| gamma * m * v),
        }
    }

    fn energy(&self, px: f64) -> f64 {
        let (m, c) = (self.m, self.c);
        (m * m * c.powi(4) + c * c * (px * px + self.p0[1] * self.p0[1])).sqrt()
    }

    pub fn momentum(&self, t: f64) -> [f64; 3] {
        [self.p0[0] - self.k * t, self.p0[1], 0.0]
    }

    pub fn position(&self, t: f64) -> [f64; 3] {
        let (k, m, c) = (self.k, self.m, self.c);
        let px = self.p0[0] - k * t;
        let x = self.x0[0] - (self.energy(px) - self.energy(self.p0[0])) / k;
        let a = (m * m * c.powi(4) + c * c * self.p0[1] * self.p0[1]).sqrt();
        let (s0, s) = (c * self.p0[0], c * px);
        let y = self.x0[1] + c * self.p0[1] / k * ((s0 / a).asinh() - (s / a).asinh());
        [x, y, self.x0[2]]
    }
}

fn node(kind: NodeKind) -> Node {
    Node::synthetic(kind)
}

fn bin(op: BinOp, a: Node, b: Node) -> Node {
    node(NodeKind::Binary(op, Box::new(a), Box::new(b)))
}

fn call(f: Func, a: Node) -> Node {
    node(NodeKind::Call(f, Box::new(a)))
}

pub fn konst(v: f64) -> Node {
    node(NodeKind::Const(v))
}

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        prop::sample::select(Coord::ALL.to_vec()).prop_map(|c| node(NodeKind::Var(c))),
        prop::sample::select(vec!["k", "q", "alpha"]).prop_map(|p| node(NodeKind::Param(p.into()))),
        // The printer renders negative constants as negation, so they do not
        // survive a round trip as `Const`.
        (0.0f64..1e6).prop_map(konst),
        (0u32..100).prop_map(|n| konst(n as f64)),
        prop::sample::select(vec![1e-300, 1.5e300, 0.1, 1.0 / 3.0]).prop_map(konst),
    ]
}

/// Any tree the grammar can express.
pub fn any_expr() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(6, 64, 2, |inner| {
        let op = prop::sample::select(vec![
            BinOp::Add,
            BinOp::Sub,
            BinOp::Mul,
            BinOp::Div,
            BinOp::Pow,
        ]);
        prop_oneof![
            inner.clone().prop_map(|a| node(NodeKind::Neg(Box::new(a)))),
            (prop::sample::select(Func::ALL.to_vec()), inner.clone()).prop_map(|(f, a)| call(f, a)),
            (op, inner.clone(), inner).prop_map(|(op, a, b)| bin(op, a, b)),
        ]
    })
}

fn smooth_leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        prop::sample::select(Coord::ALL.to_vec()).prop_map(|c| node(NodeKind::Var(c))),
        Just(node(NodeKind::Param("k".into()))),
        (0.1f64..3.0).prop_map(konst),
    ]
}

/// Trees built so every subexpression is smooth and bounded on `[-1, 1]⁴`
/// with `k ∈ [0.5, 2]`.
pub fn smooth_expr() -> impl Strategy<Value = Node> {
    smooth_leaf().prop_recursive(4, 32, 2, |inner| {
        let positive = |a: Node| bin(BinOp::Add, konst(1.0), bin(BinOp::Pow, a, konst(2.0)));
        prop_oneof![
            inner.clone().prop_map(|a| node(NodeKind::Neg(Box::new(a)))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Sub, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Mul, a, b)),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| bin(BinOp::Div, a, positive(b))),
            (inner.clone(), 2u32..4).prop_map(|(a, n)| bin(BinOp::Pow, a, konst(n as f64))),
            (inner.clone(), 0.5f64..2.5).prop_map(move |(a, p)| bin(
                BinOp::Pow,
                positive(a),
                konst(p)
            )),
            inner.clone().prop_map(|a| call(Func::Sin, a)),
            inner.clone().prop_map(|a| call(Func::Cos, a)),
            inner
                .clone()
                .prop_map(|a| call(Func::Exp, call(Func::Sin, a))),
            inner.clone().prop_map(move |a| call(Func::Ln, positive(a))),
            inner
                .clone()
                .prop_map(move |a| call(Func::Sqrt, positive(a))),
            inner.prop_map(move |a| call(Func::Abs, positive(a))),
        ]
    })
}

/// Central differences refined by one Richardson step.
pub fn fd_gradient(expr: &PotentialExpr, x: [f64; 4], params: &Params) -> [f64; 4] {
    let f = |p: [f64; 4]| {
        expr.eval(&EvalPoint::new([p[0], p[1], p[2]], p[3], params))
            .unwrap()
    };
    let central = |i: usize, h: f64| {
        let (mut a, mut b) = (x, x);
        a[i] += h;
        b[i] -= h;
        (f(a) - f(b)) / (2.0 * h)
    };
    std::array::from_fn(|i| {
        let h = 1e-3;
        (4.0 * central(i, h / 2.0) - central(i, h)) / 3.0
    })
}

pub fn max_norm_diff(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}
