use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::Real;

/// Forward-mode dual number carrying six partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: [f64; 6],
}

impl Dual {
    pub fn constant(value: f64) -> Self {
        Self { value, grad: [0.0; 6] }
    }

    /// The `i`-th independent variable.
    pub fn variable(value: f64, i: usize) -> Self {
        let mut grad = [0.0; 6];
        grad[i] = 1.0;
        Self { value, grad }
    }

    fn chain(self, value: f64, dv: f64) -> Self {
        Self { value, grad: self.grad.map(|g| g * dv) }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        let mut grad = self.grad;
        for (g, h) in grad.iter_mut().zip(o.grad) {
            *g += h;
        }
        Dual { value: self.value + o.value, grad }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + (-o)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut grad = [0.0; 6];
        for (i, g) in grad.iter_mut().enumerate() {
            *g = self.grad[i] * o.value + self.value * o.grad[i];
        }
        Dual { value: self.value * o.value, grad }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.value;
        let mut grad = [0.0; 6];
        for (i, g) in grad.iter_mut().enumerate() {
            *g = (self.grad[i] - self.value * inv * o.grad[i]) * inv;
        }
        Dual { value: self.value * inv, grad }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.chain(-self.value, -1.0)
    }
}

impl Real for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, if s > 0.0 { 0.5 / s } else { 0.0 })
    }
    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }
}
