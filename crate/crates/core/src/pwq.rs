//! Convex piecewise-quadratic unaries described by their derivative.

use crate::error::{invalid, Result};
use crate::pwl::PwlFunc;

/// Convex function whose derivative on piece `p` (between `λ_p` and
/// `λ_{p+1}`) is `a_p·z + b_p`. The derivative is taken left-continuous, and
/// the function value at 0 is `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwqFunc {
    breaks: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    offset: f64,
}

impl PwqFunc {
    pub fn new(breaks: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != breaks.len() + 1 || b.len() != a.len() {
            return invalid("piecewise-quadratic needs t breakpoints and t+1 (a, b) pairs");
        }
        if breaks.iter().chain(&a).chain(&b).any(|v| !v.is_finite()) {
            return invalid("piecewise-quadratic coefficients must be finite");
        }
        if breaks.windows(2).any(|w| w[0] > w[1]) {
            return invalid("breakpoints must be non-decreasing");
        }
        if let Some(p) = a.iter().position(|&v| v < 0.0) {
            return invalid(format!("piece {p} is concave (a = {})", a[p]));
        }
        for (p, &z) in breaks.iter().enumerate() {
            let jump = (a[p + 1] - a[p]) * z + (b[p + 1] - b[p]);
            if jump < 0.0 {
                return invalid(format!("derivative decreases by {} at breakpoint {z}", -jump));
            }
        }
        Ok(Self { breaks, a, b, offset: 0.0 })
    }

    /// `½ a z² - b z`, the form used by the quadratic chain solver.
    pub fn quadratic(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![], vec![a], vec![-b])
    }

    /// `|z - center| + (z - target)² / (2 tau)`: the pixel-wise proximal term of TV-ℓ1.
    pub fn abs_plus_tether(center: f64, target: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return invalid("tether step must be positive");
        }
        let a = 1.0 / tau;
        let b = -target / tau;
        let mut f = Self::new(vec![center], vec![a, a], vec![b - 1.0, b + 1.0])?;
        f.offset = center.abs() + target * target / (2.0 * tau);
        Ok(f)
    }

    /// Convex piecewise-linear function as a special case (zero curvature).
    pub fn from_pwl(f: &PwlFunc) -> Result<Self> {
        let mut q = Self::new(f.breaks().to_vec(), vec![0.0; f.slopes().len()], f.slopes().to_vec())?;
        if f.anchor().is_some() {
            q.offset = f.eval(0.0);
        }
        Ok(q)
    }

    pub fn with_offset(mut self, value_at_zero: f64) -> Self {
        self.offset = value_at_zero;
        self
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Left-continuous derivative.
    pub fn derivative(&self, z: f64) -> f64 {
        let p = self.breaks.partition_point(|&l| l < z);
        self.a[p] * z + self.b[p]
    }

    fn integral(&self, p: usize, u: f64, v: f64) -> f64 {
        0.5 * self.a[p] * (v * v - u * u) + self.b[p] * (v - u)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
        let mut acc = 0.0;
        let mut left = lo;
        let mut p = self.breaks.partition_point(|&l| l <= lo);
        while p < self.breaks.len() && self.breaks[p] < hi {
            acc += self.integral(p, left, self.breaks[p]);
            left = self.breaks[p];
            p += 1;
        }
        acc += self.integral(p, left, hi);
        self.offset + sign * acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_tether() {
        let f = PwqFunc::abs_plus_tether(1.0, 2.0, 0.5).unwrap();
        for k in 0..41 {
            let x = -3.0 + 0.15 * k as f64;
            let want = (x - 1.0).abs() + (x - 2.0) * (x - 2.0);
            assert!((f.eval(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn eval_matches_pwl() {
        let g = PwlFunc::new(vec![-2.0, 0.5, 3.0], vec![-1.0, 2.0]).unwrap().with_anchor(0.0, 1.0);
        let f = PwqFunc::from_pwl(&g).unwrap();
        for k in 0..41 {
            let x = -4.0 + 0.2 * k as f64;
            assert!((f.eval(x) - g.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonconvex() {
        assert!(PwqFunc::new(vec![0.0], vec![0.0, 0.0], vec![1.0, -1.0]).is_err());
        assert!(PwqFunc::new(vec![], vec![-1.0], vec![0.0]).is_err());
    }
}
