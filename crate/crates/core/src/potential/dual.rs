use std::ops::{Add, Div, Mul, Neg, Sub};

/// Forward-mode dual number carrying the value and its partials with
/// respect to `(x, y, z, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: [f64; 4],
}

impl Dual {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            grad: [0.0; 4],
        }
    }

    /// Seed for the coordinate in gradient slot `slot`.
    pub fn variable(value: f64, slot: usize) -> Self {
        let mut grad = [0.0; 4];
        grad[slot] = 1.0;
        Self { value, grad }
    }

    /// Chain rule for a unary function with derivative `slope` at `self.value`.
    pub fn chain(self, value: f64, slope: f64) -> Self {
        Self {
            value,
            grad: self.grad.map(|d| d * slope),
        }
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.iter().any(|&d| d != 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|d| d.is_finite())
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value + rhs.value,
            grad: std::array::from_fn(|i| self.grad[i] + rhs.grad[i]),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value - rhs.value,
            grad: std::array::from_fn(|i| self.grad[i] - rhs.grad[i]),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value * rhs.value,
            grad: std::array::from_fn(|i| self.grad[i] * rhs.value + self.value * rhs.grad[i]),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.value;
        let value = self.value * inv;
        Dual {
            value,
            grad: std::array::from_fn(|i| (self.grad[i] - value * rhs.grad[i]) * inv),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            value: -self.value,
            grad: self.grad.map(|d| -d),
        }
    }
}
