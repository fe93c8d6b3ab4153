//! Second-order forward-mode dual numbers in two variables.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D2 {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl D2 {
    pub fn constant(v: f64) -> Self {
        D2 { v, g: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    pub fn variable(v: f64, slot: usize) -> Self {
        let mut g = [0.0; 2];
        g[slot] = 1.0;
        D2 { v, g, h: [[0.0; 2]; 2] }
    }

    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut h = [[0.0; 2]; 2];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = df * self.h[i][j] + d2f * self.g[i] * self.g[j];
            }
        }
        D2 { v: f, g: [df * self.g[0], df * self.g[1]], h }
    }

    pub fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn scale(self, c: f64) -> Self {
        D2 {
            v: c * self.v,
            g: [c * self.g[0], c * self.g[1]],
            h: [[c * self.h[0][0], c * self.h[0][1]], [c * self.h[1][0], c * self.h[1][1]]],
        }
    }
}

impl Add for D2 {
    type Output = D2;
    fn add(self, o: D2) -> D2 {
        D2 {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h: [
                [self.h[0][0] + o.h[0][0], self.h[0][1] + o.h[0][1]],
                [self.h[1][0] + o.h[1][0], self.h[1][1] + o.h[1][1]],
            ],
        }
    }
}

impl Sub for D2 {
    type Output = D2;
    fn sub(self, o: D2) -> D2 {
        self + (-o)
    }
}

impl Neg for D2 {
    type Output = D2;
    fn neg(self) -> D2 {
        self.scale(-1.0)
    }
}

impl Mul for D2 {
    type Output = D2;
    fn mul(self, o: D2) -> D2 {
        let mut h = [[0.0; 2]; 2];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.h[i][j] * o.v + o.h[i][j] * self.v + self.g[i] * o.g[j] + self.g[j] * o.g[i];
            }
        }
        D2 { v: self.v * o.v, g: [self.g[0] * o.v + o.g[0] * self.v, self.g[1] * o.v + o.g[1] * self.v], h }
    }
}

impl Div for D2 {
    type Output = D2;
    fn div(self, o: D2) -> D2 {
        let inv = 1.0 / o.v;
        self * o.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Add<f64> for D2 {
    type Output = D2;
    fn add(mut self, c: f64) -> D2 {
        self.v += c;
        self
    }
}

impl Mul<f64> for D2 {
    type Output = D2;
    fn mul(self, c: f64) -> D2 {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_form_derivatives() {
        let (x0, y0) = (0.3, -0.7);
        let x = D2::variable(x0, 0);
        let y = D2::variable(y0, 1);
        let f = (x * y + x.sqr()).exp() / (y.sqr() + 2.0).ln();
        let e = (x0 * y0 + x0 * x0).exp();
        let l = (y0 * y0 + 2.0).ln();
        let fx = e * (y0 + 2.0 * x0) / l;
        assert!((f.v - e / l).abs() < 1e-14);
        assert!((f.g[0] - fx).abs() < 1e-13);
        let fxx = e * ((y0 + 2.0 * x0).powi(2) + 2.0) / l;
        assert!((f.h[0][0] - fxx).abs() < 1e-12);
        assert!((f.h[0][1] - f.h[1][0]).abs() < 1e-15);
    }
}
