//! Exact message passing for truncated TV with piecewise-linear unaries.
//!
//! The edge term `min(w|z|, C)` is split into three elementary kernels
//! (`f¹`: one-sided ramp to the right, `f²`: its mirror, `f³`: a constant jump
//! of height `C` away from zero). Min-convolving with each kernel in turn gives
//! the message; composing the three back-pointer maps recovers the argmin.

use crate::error::{invalid, Result, SolveError};
use crate::pwl::{Anchor, PwlFunc};
use crate::tree::{dp_solve, MessageOps, Tree, TruncatedWeights};

pub const DEFAULT_BREAKPOINT_BUDGET: usize = 10_000_000;

/// Back-pointer of one elementary min-convolution: each stored interval
/// `[lo, hi]` maps to `target`; points outside all intervals map to themselves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiMap {
    intervals: Vec<PiInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiInterval {
    pub lo: f64,
    pub hi: f64,
    pub target: f64,
}

impl PiMap {
    pub fn intervals(&self) -> &[PiInterval] {
        &self.intervals
    }

    fn push(&mut self, lo: f64, hi: f64, target: f64) {
        debug_assert!(lo <= hi);
        debug_assert!(self.intervals.last().map_or(true, |last| last.hi <= lo));
        self.intervals.push(PiInterval { lo, hi, target });
    }

    pub fn query(&self, y: f64) -> f64 {
        let k = self.intervals.partition_point(|iv| iv.lo <= y);
        if k > 0 {
            let iv = &self.intervals[k - 1];
            if y <= iv.hi {
                return iv.target;
            }
        }
        y
    }

    fn mirrored(self) -> Self {
        let intervals = self
            .intervals
            .into_iter()
            .rev()
            .map(|iv| PiInterval { lo: -iv.hi, hi: -iv.lo, target: -iv.target })
            .collect();
        Self { intervals }
    }
}

/// Composite back-pointer for a full edge: `x = π¹(π²(π³(y)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub ramp_right: PiMap,
    pub ramp_left: PiMap,
    pub jump: Option<PiMap>,
}

impl EdgeMap {
    pub fn query(&self, y: f64) -> f64 {
        let z = match &self.jump {
            Some(p) => p.query(y),
            None => y,
        };
        self.ramp_right.query(self.ramp_left.query(z))
    }
}

/// `y ↦ min_{x ≤ y} h(x) + w (y - x)`.
pub fn minconv_f1(h: &PwlFunc, w: f64) -> Result<(PwlFunc, PiMap)> {
    if !(w >= 0.0) {
        return invalid(format!("ramp weight must be non-negative, got {w}"));
    }
    let s = h.slopes();
    let lam = h.breaks();
    let t = lam.len();
    if s[0] > w {
        return Err(SolveError::Unbounded(format!("message slope {} at -inf exceeds weight {w}", s[0])));
    }
    let mut pi = PiMap::default();
    if t == 0 {
        return Ok((h.clone(), pi));
    }
    let vals = h.values_at_breaks();

    let mut slopes = Vec::with_capacity(t + 1);
    let mut breaks = Vec::with_capacity(t);
    slopes.push(s[0]);
    let mut p = 0;
    while p < t {
        breaks.push(lam[p]);
        slopes.push(s[p + 1].min(w));
        if s[p + 1] >= w {
            let ray = |z: f64| w * (z - lam[p]) + vals[p];
            let mut q = p + 2;
            while q < t && vals[q] >= ray(lam[q]) {
                q += 1;
            }
            // q == t stands for a point far to the right of the last breakpoint.
            if q >= t && !(q == t && s[t] < w) {
                pi.push(lam[p], f64::INFINITY, lam[p]);
                return Ok((finish(slopes, breaks, h), pi));
            }
            let base = lam[q - 1];
            let gap = vals[q - 1] - ray(base);
            let slope = s[q];
            let mut cross = if slope == w { base } else { base + gap / (w - slope) };
            cross = cross.max(base);
            if q < t {
                cross = cross.min(lam[q]);
            }
            breaks.push(cross);
            slopes.push(slope);
            pi.push(lam[p], cross, lam[p]);
            p = q;
        } else {
            p += 1;
        }
    }
    Ok((finish(slopes, breaks, h), pi))
}

fn finish(slopes: Vec<f64>, breaks: Vec<f64>, h: &PwlFunc) -> PwlFunc {
    // Left of the first breakpoint the result coincides with h.
    let anchor = h.anchor().map(|_| {
        let x = h.breaks()[0];
        Anchor { x, value: h.eval(x) }
    });
    PwlFunc::from_parts(slopes, breaks, anchor)
}

/// `y ↦ min_{x ≥ y} h(x) + w (x - y)`, by mirroring [`minconv_f1`].
pub fn minconv_f2(h: &PwlFunc, w: f64) -> Result<(PwlFunc, PiMap)> {
    let (g, pi) = minconv_f1(&h.reverse(), w)?;
    Ok((g.reverse(), pi.mirrored()))
}

/// `y ↦ min(h(y), min h + C)`.
pub fn minconv_f3(h: &PwlFunc, cap: f64) -> Result<(PwlFunc, PiMap)> {
    if !(cap > 0.0) || !cap.is_finite() {
        return invalid(format!("truncation must be positive and finite, got {cap}"));
    }
    if h.anchor().is_none() {
        return invalid("truncation needs an anchored message");
    }
    if !h.is_bounded_below() {
        return Err(SolveError::Unbounded("truncated edge attached to a message unbounded below".into()));
    }
    let s = h.slopes();
    let lam = h.breaks();
    let t = lam.len();
    let mut pi = PiMap::default();
    if t == 0 {
        return Ok((h.clone(), pi));
    }
    let vals = h.values_at_breaks();
    let mut q = 0;
    for p in 1..t {
        if vals[p] < vals[q] {
            q = p;
        }
    }
    let level = vals[q] + cap;
    let target = lam[q];

    // Output pieces (slope, on_cap) separated by knots: original breakpoints
    // plus at most one level crossing per segment of h.
    let mut pieces: Vec<(f64, bool)> = Vec::with_capacity(2 * t + 2);
    let mut knots: Vec<f64> = Vec::with_capacity(2 * t + 1);
    for p in 0..=t {
        let left = match p {
            0 if s[0] < 0.0 => f64::INFINITY,
            0 => vals[0],
            _ => vals[p - 1],
        };
        let right = match p {
            _ if p < t => vals[p],
            _ if s[t] > 0.0 => f64::INFINITY,
            _ => vals[t - 1],
        };
        let (a, b) = (left - level, right - level);
        if a >= 0.0 && b >= 0.0 {
            pieces.push((0.0, true));
        } else if a <= 0.0 && b <= 0.0 {
            pieces.push((s[p], false));
        } else {
            let (x0, v0) = if p == 0 { (lam[0], vals[0]) } else { (lam[p - 1], vals[p - 1]) };
            let mut x = x0 + (level - v0) / s[p];
            if p > 0 {
                x = x.max(lam[p - 1]);
            }
            if p < t {
                x = x.min(lam[p]);
            }
            if a > 0.0 {
                pieces.push((0.0, true));
                knots.push(x);
                pieces.push((s[p], false));
            } else {
                pieces.push((s[p], false));
                knots.push(x);
                pieces.push((0.0, true));
            }
        }
        if p < t {
            knots.push(lam[p]);
        }
    }

    let mut slopes = vec![pieces[0].0];
    let mut breaks = Vec::with_capacity(knots.len());
    let mut run_start = if pieces[0].1 { Some(f64::NEG_INFINITY) } else { None };
    for (k, &x) in knots.iter().enumerate() {
        let (left, right) = (pieces[k].1, pieces[k + 1].1);
        if left && right {
            continue;
        }
        if right {
            run_start = Some(x);
        } else if left {
            pi.push(run_start.take().unwrap_or(f64::NEG_INFINITY), x, target);
        }
        breaks.push(x);
        slopes.push(pieces[k + 1].0);
    }
    if let Some(lo) = run_start {
        pi.push(lo, f64::INFINITY, target);
    }
    let anchor = Anchor { x: lam[0], value: vals[0].min(level) };
    Ok((PwlFunc::from_parts(slopes, breaks, Some(anchor)), pi))
}

/// Min-convolution with `min(w|z|, C)`; `C = +∞` skips the truncation step.
pub fn edge_minconv(h: &PwlFunc, w: f64, cap: f64) -> Result<(PwlFunc, EdgeMap)> {
    let (g1, ramp_right) = minconv_f1(h, w)?;
    let (g2, ramp_left) = minconv_f2(&g1, w)?;
    if cap.is_infinite() {
        return Ok((g2, EdgeMap { ramp_right, ramp_left, jump: None }));
    }
    let (g3, jump) = minconv_f3(&g2, cap)?;
    Ok((g3, EdgeMap { ramp_right, ramp_left, jump: Some(jump) }))
}

/// Breakpoint counts around one edge min-convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeGrowth {
    pub child: usize,
    pub before: usize,
    pub after: usize,
    pub truncated: bool,
}

impl EdgeGrowth {
    /// `after ≤ before` for plain TV, `after ≤ 2·before + 1` when truncated.
    pub fn within_bound(&self) -> bool {
        if self.truncated {
            self.after <= 2 * self.before + 1
        } else {
            self.after <= self.before
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonconvexSolution {
    pub x: Vec<f64>,
    /// Minimum of the root message, i.e. the optimal energy.
    pub root_min: f64,
    pub growth: Vec<EdgeGrowth>,
    pub total_breakpoints: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NonconvexOptions {
    pub budget: usize,
}

impl Default for NonconvexOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BREAKPOINT_BUDGET }
    }
}

struct Ops<'a> {
    unaries: &'a [PwlFunc],
    weights: &'a TruncatedWeights,
    budget: usize,
    used: usize,
    growth: Vec<EdgeGrowth>,
    root_min: f64,
}

impl Ops<'_> {
    fn charge(&mut self, count: usize) -> Result<()> {
        self.used += count;
        if self.used > self.budget {
            return Err(SolveError::BudgetExceeded { used: self.used, limit: self.budget });
        }
        Ok(())
    }
}

impl MessageOps for Ops<'_> {
    type Msg = PwlFunc;
    type Back = EdgeMap;

    fn accumulate(&mut self, i: usize, incoming: Vec<PwlFunc>) -> Result<PwlFunc> {
        let mut parts: Vec<&PwlFunc> = Vec::with_capacity(incoming.len() + 1);
        parts.push(&self.unaries[i]);
        parts.extend(incoming.iter());
        let sum = PwlFunc::sum_many(&parts).rebased();
        self.charge(sum.num_breaks())?;
        Ok(sum)
    }

    fn edge(&mut self, child: usize, msg: PwlFunc) -> Result<(PwlFunc, EdgeMap)> {
        let cap = self.weights.cap[child];
        let (out, back) = edge_minconv(&msg, self.weights.w[child], cap)?;
        let out = out.rebased();
        self.growth.push(EdgeGrowth {
            child,
            before: msg.num_breaks(),
            after: out.num_breaks(),
            truncated: cap.is_finite(),
        });
        self.charge(out.num_breaks())?;
        Ok((out, back))
    }

    fn root_argmin(&mut self, _root: usize, msg: PwlFunc) -> Result<f64> {
        let (x, v) = msg
            .argmin()
            .ok_or_else(|| SolveError::Unbounded("root message is unbounded below".into()))?;
        self.root_min = v;
        Ok(x)
    }

    fn backtrack(&mut self, _child: usize, back: &EdgeMap, x_parent: f64) -> f64 {
        back.query(x_parent)
    }
}

pub(crate) fn check_edge_arrays(tree: &Tree, len: usize) -> Result<()> {
    let n = tree.len();
    let chain_style = tree.is_chain() && len + 1 == n;
    if len != n && !chain_style {
        return invalid(format!("expected {n} per-node edge entries, got {len}"));
    }
    Ok(())
}

/// Global minimizer of `Σ f_i(x_i) + Σ min(w_ij |x_j - x_i|, C_ij)`.
pub fn solve_nonconvex(tree: &Tree, unaries: &[PwlFunc], weights: &TruncatedWeights) -> Result<NonconvexSolution> {
    solve_nonconvex_with(tree, unaries, weights, NonconvexOptions::default())
}

pub fn solve_nonconvex_with(
    tree: &Tree,
    unaries: &[PwlFunc],
    weights: &TruncatedWeights,
    opts: NonconvexOptions,
) -> Result<NonconvexSolution> {
    if unaries.len() != tree.len() {
        return invalid(format!("expected {} unaries, got {}", tree.len(), unaries.len()));
    }
    if unaries.iter().any(|u| u.anchor().is_none()) {
        return invalid("every unary needs an anchor");
    }
    check_edge_arrays(tree, weights.len())?;
    let mut ops = Ops {
        unaries,
        weights,
        budget: opts.budget,
        used: 0,
        growth: Vec::with_capacity(tree.len()),
        root_min: f64::NAN,
    };
    let x = dp_solve(tree, &mut ops)?;
    Ok(NonconvexSolution { x, root_min: ops.root_min, growth: ops.growth, total_breakpoints: ops.used })
}

pub fn nonconvex_energy(tree: &Tree, unaries: &[PwlFunc], weights: &TruncatedWeights, x: &[f64]) -> f64 {
    let unary: f64 = unaries.iter().zip(x).map(|(f, &v)| f.eval(v)).sum();
    let pair: f64 = tree.edges().map(|(i, j)| weights.edge_cost(i, x[j] - x[i])).sum();
    unary + pair
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs() -> PwlFunc {
        PwlFunc::abs(0.0, 1.0)
    }

    /// Dense-grid min-convolution with an arbitrary kernel.
    fn grid_minconv(h: &PwlFunc, g: impl Fn(f64) -> f64, y: f64) -> f64 {
        let lo = h.breaks()[0] - 10.0;
        let hi = h.breaks()[h.num_breaks() - 1] + 10.0;
        let mut cands: Vec<f64> = h.breaks().to_vec();
        cands.push(y);
        let steps = 20_000;
        cands.extend((0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64));
        cands.iter().map(|&x| h.eval(x) + g(y - x)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn f1_all_slopes_below_weight() {
        let (g, pi) = minconv_f1(&abs(), 2.0).unwrap();
        assert_eq!(g.slopes(), abs().slopes());
        assert_eq!(g.breaks(), abs().breaks());
        assert!(pi.intervals().is_empty());
    }

    #[test]
    fn f1_single_clip() {
        let (g, pi) = minconv_f1(&abs(), 0.5).unwrap();
        assert_eq!(g.slopes(), &[-1.0, 0.5]);
        assert_eq!(g.breaks(), &[0.0]);
        assert_eq!(pi.intervals(), &[PiInterval { lo: 0.0, hi: f64::INFINITY, target: 0.0 }]);
    }

    #[test]
    fn f1_w_shape_matches_grid() {
        let h = PwlFunc::new(vec![-1.0, 2.0, -2.0, 3.0], vec![-1.0, 0.0, 1.0]).unwrap().with_anchor(-1.0, 0.0);
        let (g, pi) = minconv_f1(&h, 1.0).unwrap();
        let kernel = |z: f64| if z >= 0.0 { z } else { f64::INFINITY };
        for k in 0..200 {
            let y = -3.0 + 6.0 * k as f64 / 199.0;
            let want = grid_minconv(&h, kernel, y);
            assert!((g.eval(y) - want).abs() < 1e-9, "y={y}: {} vs {want}", g.eval(y));
            let x = pi.query(y);
            assert!((h.eval(x) + kernel(y - x) - g.eval(y)).abs() < 1e-9);
        }
    }

    #[test]
    fn f1_unbounded_left_slope() {
        assert!(matches!(minconv_f1(&PwlFunc::abs(0.0, 1.0).add_linear(3.0), 1.0), Err(SolveError::Unbounded(_))));
    }

    #[test]
    fn f2_mirror_case() {
        let (g, _) = minconv_f2(&abs(), 0.5).unwrap();
        assert_eq!(g.slopes(), &[-0.5, 1.0]);
        assert_eq!(g.breaks(), &[0.0]);
    }

    #[test]
    fn f3_min_with_constant() {
        let (g, pi) = minconv_f3(&abs(), 1.0).unwrap();
        assert_eq!(g.slopes(), &[0.0, -1.0, 1.0, 0.0]);
        assert_eq!(g.breaks(), &[-1.0, 0.0, 1.0]);
        assert_eq!(pi.query(-5.0), 0.0);
        assert_eq!(pi.query(0.5), 0.5);
        assert_eq!(pi.query(3.0), 0.0);
        for k in 0..50 {
            let y = -3.0 + 0.12 * k as f64;
            assert!((g.eval(y) - y.abs().min(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn f3_inactive_cap() {
        let h = PwlFunc::new(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0]).unwrap().with_anchor(0.0, 0.0);
        let (g, _) = minconv_f3(&h, 100.0).unwrap();
        for k in 0..40 {
            let y = -5.0 + 0.25 * k as f64;
            assert!((g.eval(y) - h.eval(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_edge_flattens() {
        let h = PwlFunc::new(vec![-1.0, 2.0, -2.0, 3.0], vec![-1.0, 0.0, 1.0]).unwrap().with_anchor(-1.0, 0.0);
        let (g, map) = edge_minconv(&h, 0.0, f64::INFINITY).unwrap();
        let hmin = h.argmin().unwrap().1;
        for k in 0..30 {
            let y = -4.0 + 0.3 * k as f64;
            assert!((g.eval(y) - hmin).abs() < 1e-12);
            assert!((h.eval(map.query(y)) - hmin).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_slopes_leave_message_unchanged() {
        let (g, _) = edge_minconv(&abs(), 1.0, f64::INFINITY).unwrap();
        for k in 0..30 {
            let y = -4.0 + 0.3 * k as f64;
            assert!((g.eval(y) - y.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_and_decoupled_chain() {
        let t = Tree::chain(1);
        let u = vec![PwlFunc::abs(3.0, 1.0)];
        let sol = solve_nonconvex(&t, &u, &TruncatedWeights::uniform(1, 0.0, f64::INFINITY).unwrap()).unwrap();
        assert_eq!(sol.x, vec![3.0]);

        let t = Tree::chain(2);
        let u = vec![PwlFunc::abs(-1.0, 1.0), PwlFunc::abs(2.0, 1.0)];
        let sol = solve_nonconvex(&t, &u, &TruncatedWeights::uniform(1, 0.0, f64::INFINITY).unwrap()).unwrap();
        assert_eq!(sol.x, vec![-1.0, 2.0]);
    }

    #[test]
    fn constant_signal() {
        let t = Tree::chain(5);
        let u = vec![PwlFunc::abs(1.5, 1.0); 5];
        let sol = solve_nonconvex(&t, &u, &TruncatedWeights::uniform(4, 0.7, 2.0).unwrap()).unwrap();
        assert!(sol.x.iter().all(|&v| v == 1.5));
        assert_eq!(sol.root_min, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let t = Tree::chain(4);
        let u = vec![PwlFunc::abs(0.0, 1.0); 4];
        let w = TruncatedWeights::uniform(3, 1.0, 1.0).unwrap();
        let err = solve_nonconvex_with(&t, &u, &w, NonconvexOptions { budget: 3 }).unwrap_err();
        assert!(matches!(err, SolveError::BudgetExceeded { .. }));
    }
}
