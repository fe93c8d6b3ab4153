//! Small numerical kernels shared by the modules.

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Σ e^{log_w[j]} u[j] v[j] with each term formed in log space and summed
/// with compensation.
pub fn weighted_inner(log_w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    compensated_sum(log_w.iter().zip(u.iter().zip(v)).map(|(lw, (a, b))| {
        let prod = a * b;
        if prod == 0.0 {
            0.0
        } else {
            prod.signum() * (lw + prod.abs().ln()).exp()
        }
    }))
}

/// log(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Area of the unit sphere S^{n-1} in R^n.
pub fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    // |S^0| = 2, |S^1| = 2π, |S^{k+1}| = 2π/k |S^{k-1}|
    let (mut area, mut k) = if n % 2 == 1 { (2.0, 1) } else { (2.0 * PI, 2) };
    while k < n {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

/// Finite-difference weights (Fornberg) for derivatives 0..=order at `x0`
/// from nodes `xs`. Returns `w[d][i]`.
pub fn fd_weights(x0: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let npts = xs.len();
    let mut c = vec![vec![0.0; npts]; order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..npts {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Parity of a sampled function under reflection through an end node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Stencil width used by [`uniform_derivative`].
pub const STENCIL_WIDTH: usize = 15;

/// Derivative of order 1 or 2 of samples on a uniform grid with spacing `h`,
/// using `STENCIL_WIDTH`-point stencils (shifted windows near the ends). A
/// parity at the start node supplies mirrored ghost values.
pub fn uniform_derivative(f: &[f64], h: f64, order: usize, start: Option<Parity>) -> Vec<f64> {
    let n = f.len();
    let width = STENCIL_WIDTH.min(n);
    let half = (width / 2) as isize;
    let lo: isize = if start.is_some() { -(n as isize - 1) } else { 0 };
    let hi: isize = n as isize - 1;
    let value = |k: isize| -> f64 {
        if k >= 0 {
            f[k as usize]
        } else {
            match start {
                Some(Parity::Odd) => -f[(-k) as usize],
                _ => f[(-k) as usize],
            }
        }
    };
    let mut out = vec![0.0; n];
    let mut cache: Vec<(isize, Vec<f64>)> = Vec::new();
    for (j, o) in out.iter_mut().enumerate() {
        let j = j as isize;
        let mut a = j - half;
        if a < lo {
            a = lo;
        }
        if a + width as isize - 1 > hi {
            a = hi - width as isize + 1;
        }
        let shift = a - j;
        let w = match cache.iter().find(|(s, _)| *s == shift) {
            Some((_, w)) => w.clone(),
            None => {
                let xs: Vec<f64> = (0..width).map(|i| (shift + i as isize) as f64).collect();
                let w = fd_weights(0.0, &xs, order)[order].clone();
                cache.push((shift, w.clone()));
                w
            }
        };
        // weights sum to zero; differencing against f_j keeps constants exact
        let fj = f[j as usize];
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            acc += wi * (value(a + i as isize) - fj);
        }
        *o = acc / h.powi(order as i32);
    }
    out
}

/// Cumulative integral of uniformly sampled `f` (fourth-order panel rule).
pub fn cumulative_integral(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for j in 1..n {
            out[j] = out[j - 1] + 0.5 * h * (f[j - 1] + f[j]);
        }
        return out;
    }
    for j in 0..n - 1 {
        let panel = if j == 0 {
            (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0
        } else if j == n - 2 {
            (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4]) / 24.0
        } else {
            (-f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2]) / 24.0
        };
        out[j + 1] = out[j] + h * panel;
    }
    out
}

/// General tridiagonal system `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]`
/// solved by LU with partial pivoting. `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    // rows hold (a0, a1, a2) = coefficients of x[i], x[i+1], x[i+2]
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    let mut cur = (diag[0], if n > 1 { sup[0] } else { 0.0 }, 0.0);
    let scale = diag.iter().chain(sub.iter()).chain(sup.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    for i in 0..n {
        if i + 1 < n {
            let next = (sub[i + 1], diag[i + 1], if i + 2 < n { sup[i + 1] } else { 0.0 });
            let (pivot_row, other, pb, ob);
            if next.0.abs() > cur.0.abs() {
                pivot_row = (next.0, next.1, next.2);
                other = (cur.0, cur.1, cur.2);
                pb = b[i + 1];
                ob = b[i];
            } else {
                pivot_row = cur;
                other = (next.0, next.1, next.2);
                pb = b[i];
                ob = b[i + 1];
            }
            let p = if pivot_row.0.abs() < tiny { tiny } else { pivot_row.0 };
            let l = other.0 / p;
            u0[i] = p;
            u1[i] = pivot_row.1;
            u2[i] = pivot_row.2;
            b[i] = pb;
            b[i + 1] = ob - l * pb;
            cur = (other.1 - l * pivot_row.1, other.2 - l * pivot_row.2, 0.0);
        } else {
            u0[i] = if cur.0.abs() < tiny { tiny } else { cur.0 };
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
        if !x[i].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Ordinary least squares via normal equations with column scaling.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first()?.len();
    let mut scale = vec![0.0f64; k];
    for r in rows {
        for (s, v) in scale.iter_mut().zip(r) {
            *s = s.max(v.abs());
        }
    }
    if scale.contains(&0.0) {
        return None;
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j] / scale[j]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-14).ok()?;
    Some((0..k).map(|j| x[j] / scale[j]).collect())
}

/// Slope and intercept of a straight-line fit.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_central_stencil() {
        let xs = [-1.0, 0.0, 1.0];
        let w = fd_weights(0.0, &xs, 2);
        assert!((w[1][0] + 0.5).abs() < 1e-15 && (w[1][2] - 0.5).abs() < 1e-15);
        assert!((w[2][0] - 1.0).abs() < 1e-15 && (w[2][1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_sine_is_sixth_order() {
        let h = 0.01;
        let x: Vec<f64> = (0..400).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let d = uniform_derivative(&f, h, 1, Some(Parity::Odd));
        let err = x.iter().zip(&d).map(|(t, v)| (t.cos() - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        let d2 = uniform_derivative(&f, h, 2, None);
        let err2 = x.iter().zip(&d2).map(|(t, v)| (t.sin() + v).abs()).fold(0.0, f64::max);
        assert!(err2 < 1e-7, "{err2}");
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let sub = [0.0, 1.0, -2.0, 0.5];
        let diag = [1e-3, 3.0, 1.0, 4.0];
        let sup = [2.0, -1.0, 0.3, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        for i in 0..4 {
            let mut r = diag[i] * x[i];
            if i > 0 {
                r += sub[i] * x[i - 1];
            }
            if i < 3 {
                r += sup[i] * x[i + 1];
            }
            assert!((r - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = compensated_sum([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(s, 2.0);
    }

    #[test]
    fn cumulative_integral_polynomial() {
        let h = 0.1;
        let f: Vec<f64> = (0..21).map(|i| (i as f64 * h).powi(3)).collect();
        let c = cumulative_integral(&f, h);
        assert!((c[20] - 4.0).abs() < 1e-12);
    }
}
