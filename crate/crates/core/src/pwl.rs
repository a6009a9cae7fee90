//! Continuous piecewise-linear functions stored as a slope/breakpoint sequence.
//!
//! A function with `t` breakpoints is the sequence `(s_0, λ_1, s_1, …, λ_t, s_t)`:
//! `s_p` is the slope of the segment between `λ_p` and `λ_{p+1}` (with `λ_0 = -∞`
//! and `λ_{t+1} = +∞`). Without an [`Anchor`] the function is only known up to an
//! additive constant, which is all the message algebra needs; the anchor pins the
//! constant whenever absolute values are required.
//!
//! Coincident breakpoints are legal and are never merged implicitly. Call
//! [`PwlFunc::normalize`] to drop breakpoints between equal slopes.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};

/// A point `(x, value)` fixing the additive constant of a [`PwlFunc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PwlFunc {
    slopes: Vec<f64>,
    breaks: Vec<f64>,
    anchor: Option<Anchor>,
}

impl PwlFunc {
    /// Builds a function from `t + 1` slopes and `t` non-decreasing breakpoints.
    pub fn new(slopes: Vec<f64>, breaks: Vec<f64>) -> Result<Self> {
        if slopes.len() != breaks.len() + 1 {
            return invalid(format!(
                "expected {} slopes for {} breakpoints, got {}",
                breaks.len() + 1,
                breaks.len(),
                slopes.len()
            ));
        }
        if slopes.iter().chain(&breaks).any(|v| !v.is_finite()) {
            return invalid("slopes and breakpoints must be finite");
        }
        if breaks.windows(2).any(|w| w[0] > w[1]) {
            return invalid("breakpoints must be non-decreasing");
        }
        Ok(Self::from_parts(slopes, breaks, None))
    }

    /// Unchecked constructor for callers that already maintain the invariants.
    pub(crate) fn from_parts(slopes: Vec<f64>, breaks: Vec<f64>, anchor: Option<Anchor>) -> Self {
        debug_assert_eq!(slopes.len(), breaks.len() + 1);
        debug_assert!(breaks.windows(2).all(|w| w[0] <= w[1]));
        Self { slopes, breaks, anchor }
    }

    pub fn linear(slope: f64) -> Self {
        Self::from_parts(vec![slope], Vec::new(), None)
    }

    /// `weight * |x - center|`, anchored at its minimum.
    pub fn abs(center: f64, weight: f64) -> Self {
        Self::from_parts(vec![-weight, weight], vec![center], Some(Anchor { x: center, value: 0.0 }))
    }

    /// Linear interpolation of the points `(xs[k], ys[k])`, extended beyond the
    /// first and last knot with the given outer slopes.
    pub fn interpolate(xs: &[f64], ys: &[f64], left_slope: f64, right_slope: f64) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return invalid("interpolation needs matching, non-empty knot arrays");
        }
        let mut slopes = Vec::with_capacity(xs.len() + 1);
        slopes.push(left_slope);
        for k in 1..xs.len() {
            let dx = xs[k] - xs[k - 1];
            if dx <= 0.0 {
                return invalid("interpolation knots must be strictly increasing");
            }
            slopes.push((ys[k] - ys[k - 1]) / dx);
        }
        slopes.push(right_slope);
        Ok(Self::new(slopes, xs.to_vec())?.with_anchor(xs[0], ys[0]))
    }

    pub fn with_anchor(mut self, x: f64, value: f64) -> Self {
        self.anchor = Some(Anchor { x, value });
        self
    }

    pub fn without_anchor(mut self) -> Self {
        self.anchor = None;
        self
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn anchor(&self) -> Option<Anchor> {
        self.anchor
    }

    pub fn num_breaks(&self) -> usize {
        self.breaks.len()
    }

    pub fn first_slope(&self) -> f64 {
        self.slopes[0]
    }

    pub fn last_slope(&self) -> f64 {
        self.slopes[self.slopes.len() - 1]
    }

    /// True when the function does not tend to `-∞` on either side.
    pub fn is_bounded_below(&self) -> bool {
        self.first_slope() <= 0.0 && self.last_slope() >= 0.0
    }

    /// Index of the segment containing `x`; segment `p` is `(λ_p, λ_{p+1}]`.
    fn segment_of(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b < x)
    }

    /// Value relative to `h(λ_1) = 0` (or `h(0) = 0` when there are no breakpoints),
    /// walking from the left.
    fn relative(&self, x: f64) -> f64 {
        if self.breaks.is_empty() {
            return self.slopes[0] * x;
        }
        let seg = self.segment_of(x);
        if seg == 0 {
            return self.slopes[0] * (x - self.breaks[0]);
        }
        let mut v = 0.0;
        for p in 1..seg {
            v += self.slopes[p] * (self.breaks[p] - self.breaks[p - 1]);
        }
        v + self.slopes[seg] * (x - self.breaks[seg - 1])
    }

    /// Evaluates the function. Panics if no anchor is set.
    pub fn eval(&self, x: f64) -> f64 {
        let a = self.anchor.expect("PwlFunc::eval requires an anchor");
        a.value + self.relative(x) - self.relative(a.x)
    }

    /// Values `h(λ_1), …, h(λ_t)`. Panics if no anchor is set.
    pub fn values_at_breaks(&self) -> Vec<f64> {
        let a = self.anchor.expect("PwlFunc::values_at_breaks requires an anchor");
        if self.breaks.is_empty() {
            return Vec::new();
        }
        let base = a.value - self.relative(a.x);
        let mut out = Vec::with_capacity(self.breaks.len());
        let mut v = base;
        out.push(v);
        for p in 1..self.breaks.len() {
            v += self.slopes[p] * (self.breaks[p] - self.breaks[p - 1]);
            out.push(v);
        }
        out
    }

    /// Moves the anchor onto the first breakpoint (no-op without breakpoints).
    pub fn rebased(self) -> Self {
        match (self.anchor, self.breaks.first()) {
            (Some(_), Some(&b0)) => {
                let v = self.eval(b0);
                let mut out = self;
                out.anchor = Some(Anchor { x: b0, value: v });
                out
            }
            _ => self,
        }
    }

    /// `x ↦ f(x) + a·x`: every slope increased by `a`.
    pub fn add_linear(&self, a: f64) -> Self {
        let slopes = self.slopes.iter().map(|s| s + a).collect();
        let anchor = self.anchor.map(|an| Anchor { x: an.x, value: an.value + a * an.x });
        Self::from_parts(slopes, self.breaks.clone(), anchor)
    }

    /// `x ↦ k·f(x)` for `k ≥ 0`.
    pub fn scale(&self, k: f64) -> Self {
        debug_assert!(k >= 0.0);
        let slopes = self.slopes.iter().map(|s| s * k).collect();
        let anchor = self.anchor.map(|an| Anchor { x: an.x, value: an.value * k });
        Self::from_parts(slopes, self.breaks.clone(), anchor)
    }

    /// `x ↦ f(-x)`: sequence reversed, every component negated.
    pub fn reverse(&self) -> Self {
        let slopes = self.slopes.iter().rev().map(|s| -s).collect();
        let breaks = self.breaks.iter().rev().map(|b| -b).collect();
        let anchor = self.anchor.map(|an| Anchor { x: -an.x, value: an.value });
        Self::from_parts(slopes, breaks, anchor)
    }

    /// Drops breakpoints whose two adjacent segments have identical slopes.
    pub fn normalize(&self) -> Self {
        let mut slopes = vec![self.slopes[0]];
        let mut breaks = Vec::new();
        for (p, &b) in self.breaks.iter().enumerate() {
            let s = self.slopes[p + 1];
            if s != *slopes.last().unwrap() {
                breaks.push(b);
                slopes.push(s);
            }
        }
        Self::from_parts(slopes, breaks, self.anchor)
    }

    /// Lowest minimizer and minimum value; `None` if unbounded below.
    ///
    /// When the function is flat all the way to `-∞` the lowest finite
    /// breakpoint attaining the minimum is reported. Panics without an anchor.
    pub fn argmin(&self) -> Option<(f64, f64)> {
        if !self.is_bounded_below() {
            return None;
        }
        if self.breaks.is_empty() {
            let a = self.anchor.expect("PwlFunc::argmin requires an anchor");
            return Some((a.x, a.value));
        }
        let vals = self.values_at_breaks();
        let mut best = 0;
        for (p, &v) in vals.iter().enumerate().skip(1) {
            if v < vals[best] {
                best = p;
            }
        }
        Some((self.breaks[best], vals[best]))
    }

    /// Sum of several functions by a k-way merge of their sorted breakpoints.
    ///
    /// Runs in `O(t log k)` for `t` total breakpoints. The output keeps every
    /// input breakpoint (coincident ones included). The result is anchored only
    /// if every input is.
    pub fn sum_many(fs: &[&PwlFunc]) -> PwlFunc {
        match fs.len() {
            0 => return PwlFunc::linear(0.0).with_anchor(0.0, 0.0),
            1 => return fs[0].clone(),
            _ => {}
        }
        let total: usize = fs.iter().map(|f| f.breaks.len()).sum();
        let mut slopes = Vec::with_capacity(total + 1);
        let mut breaks = Vec::with_capacity(total);
        let mut slope: f64 = fs.iter().map(|f| f.slopes[0]).sum();
        slopes.push(slope);

        let mut heap: BinaryHeap<Reverse<HeapKey>> = fs
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.breaks.is_empty())
            .map(|(k, f)| Reverse(HeapKey { at: f.breaks[0], list: k, pos: 0 }))
            .collect();
        while let Some(Reverse(key)) = heap.pop() {
            let f = fs[key.list];
            slope += f.slopes[key.pos + 1] - f.slopes[key.pos];
            breaks.push(key.at);
            slopes.push(slope);
            if key.pos + 1 < f.breaks.len() {
                heap.push(Reverse(HeapKey { at: f.breaks[key.pos + 1], list: key.list, pos: key.pos + 1 }));
            }
        }

        let anchor = if fs.iter().all(|f| f.anchor.is_some()) {
            let x = fs[0].anchor.unwrap().x;
            Some(Anchor { x, value: fs.iter().map(|f| f.eval(x)).sum() })
        } else {
            None
        };
        PwlFunc::from_parts(slopes, breaks, anchor)
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapKey {
    at: f64,
    list: usize,
    pos: usize,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at.total_cmp(&other.at).then(self.list.cmp(&other.list))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pwl(rng: &mut ChaCha8Rng, t: usize) -> PwlFunc {
        let mut breaks: Vec<f64> = (0..t).map(|_| rng.gen_range(-5.0..5.0)).collect();
        breaks.sort_by(f64::total_cmp);
        let slopes = (0..=t).map(|_| rng.gen_range(-3.0..3.0)).collect();
        PwlFunc::new(slopes, breaks).unwrap().with_anchor(rng.gen_range(-6.0..6.0), rng.gen_range(-2.0..2.0))
    }

    /// Independent evaluation: accumulate slope * dx over a fine partition.
    fn eval_by_accumulation(f: &PwlFunc, x: f64) -> f64 {
        let a = f.anchor().unwrap();
        let slope_at = |z: f64| f.slopes()[f.breaks().iter().filter(|&&b| b < z).count()];
        let mut pts: Vec<f64> = f.breaks().iter().copied().filter(|&b| b > a.x.min(x) && b < a.x.max(x)).collect();
        pts.push(a.x);
        pts.push(x);
        pts.sort_by(f64::total_cmp);
        let mut acc = 0.0;
        for w in pts.windows(2) {
            acc += slope_at(0.5 * (w[0] + w[1])) * (w[1] - w[0]);
        }
        if x >= a.x {
            a.value + acc
        } else {
            a.value - acc
        }
    }

    #[test]
    fn eval_linear_and_abs() {
        let f = PwlFunc::linear(2.0).with_anchor(0.0, 0.0);
        assert_eq!(f.eval(3.0), 6.0);
        let g = PwlFunc::new(vec![-1.0, 1.0], vec![0.0]).unwrap().with_anchor(0.0, 0.0);
        assert_eq!(g.eval(-2.0), 2.0);
        assert_eq!(g.eval(2.0), 2.0);
    }

    #[test]
    fn eval_matches_accumulation_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let f = random_pwl(&mut rng, 5);
            for k in 0..100 {
                let x = -8.0 + 16.0 * k as f64 / 99.0;
                let want = eval_by_accumulation(&f, x);
                assert!((f.eval(x) - want).abs() < 1e-9, "x={x}: {} vs {want}", f.eval(x));
            }
        }
    }

    #[test]
    fn eval_is_continuous_at_breaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_pwl(&mut rng, 6);
        let bound = f.slopes().iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for &b in f.breaks() {
            let eps = 1e-9;
            assert!((f.eval(b - eps) - f.eval(b + eps)).abs() <= 2.0 * eps * bound + 1e-12);
        }
    }

    #[test]
    fn add_linear_cases() {
        let f = PwlFunc::new(vec![-1.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(f.add_linear(0.0), f);
        assert_eq!(f.add_linear(1.0).slopes(), &[0.0, 2.0]);
        assert_eq!(f.add_linear(1.0).breaks(), f.breaks());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_pwl(&mut rng, 4).without_anchor();
        // Dyadic shift keeps the round trip exact.
        assert_eq!(g.add_linear(0.75).add_linear(-0.75), g);
    }

    #[test]
    fn reverse_cases() {
        let abs = PwlFunc::new(vec![-1.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(abs.reverse(), abs);
        let f = PwlFunc::new(vec![0.0, 1.0], vec![2.0]).unwrap();
        let r = f.reverse();
        assert_eq!(r.slopes(), &[-1.0, -0.0]);
        assert_eq!(r.breaks(), &[-2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_pwl(&mut rng, 7);
        assert_eq!(g.reverse().reverse(), g);
    }

    #[test]
    fn reverse_and_add_linear_commute_with_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = random_pwl(&mut rng, 5);
        let r = f.reverse();
        let l = f.add_linear(0.3);
        for k in 0..50 {
            let x = -7.0 + 0.29 * k as f64;
            assert!((r.eval(x) - f.eval(-x)).abs() < 1e-9);
            assert!((l.eval(x) - (f.eval(x) + 0.3 * x)).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_many_cases() {
        let f = PwlFunc::abs(0.0, 1.0);
        assert_eq!(PwlFunc::sum_many(&[&f]), f);
        let g = PwlFunc::abs(1.0, 1.0);
        let s = PwlFunc::sum_many(&[&f, &g]);
        assert_eq!(s.slopes(), &[-2.0, 0.0, 2.0]);
        assert_eq!(s.breaks(), &[0.0, 1.0]);
    }

    #[test]
    fn sum_many_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fs: Vec<PwlFunc> = (0..8).map(|k| random_pwl(&mut rng, 1 + k % 4)).collect();
        let refs: Vec<&PwlFunc> = fs.iter().collect();
        let s = PwlFunc::sum_many(&refs);
        assert_eq!(s.num_breaks(), fs.iter().map(|f| f.num_breaks()).sum::<usize>());
        for k in 0..400 {
            let x = -7.0 + 14.0 * k as f64 / 399.0;
            let naive: f64 = fs.iter().map(|f| f.eval(x)).sum();
            assert!((s.eval(x) - naive).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_merges_equal_slopes_only() {
        let f = PwlFunc::new(vec![-1.0, -1.0, 2.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        let n = f.normalize();
        assert_eq!(n.slopes(), &[-1.0, 2.0]);
        assert_eq!(n.breaks(), &[1.0]);
    }

    #[test]
    fn argmin_lowest() {
        let f = PwlFunc::new(vec![-1.0, 0.0, 1.0], vec![1.0, 2.0]).unwrap().with_anchor(1.0, 0.0);
        assert_eq!(f.argmin(), Some((1.0, 0.0)));
        assert_eq!(PwlFunc::linear(1.0).with_anchor(0.0, 0.0).argmin(), None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PwlFunc::new(vec![1.0], vec![0.0]).is_err());
        assert!(PwlFunc::new(vec![1.0, 2.0, 3.0], vec![1.0, 0.0]).is_err());
        assert!(PwlFunc::new(vec![f64::INFINITY], vec![]).is_err());
    }
}
