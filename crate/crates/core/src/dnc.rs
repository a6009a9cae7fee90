//! Divide-and-conquer solvers for convex piecewise-linear unaries on a chain.
//!
//! Both solvers work with threshold problems: for a pivot `λ`, the binary
//! labelling `y = argmin⁻ Σ g_i(λ) y_i + Σ f_i(y_{i+1} - y_i)` tells which
//! side of `λ` each component of the lowest minimizer lies on. The
//! [`solve_hochbaum`] variant recurses on runs of equal labels with a median
//! pivot. [`solve_fast`] first solves a subsampled chain whose edges are
//! contracted into [`ContractedMap`]s and then fills the gaps independently.

use crate::error::{invalid, Result};
use crate::pwl::PwlFunc;
use crate::tree::ConvexWeights;

/// `v ↦ δ + clip(v, a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau {
    pub delta: f64,
    pub a: f64,
    pub b: f64,
}

impl Tau {
    pub fn apply(&self, v: f64) -> f64 {
        self.delta + v.max(self.a).min(self.b)
    }

    /// `outer ∘ self`.
    pub fn then(&self, outer: &Tau) -> Tau {
        let (lo, hi) = (outer.a - self.delta, outer.b - self.delta);
        if self.b < lo {
            Tau { delta: outer.delta + outer.a - self.b, a: self.b, b: self.b }
        } else if self.a > hi {
            Tau { delta: outer.delta + outer.b - self.a, a: self.a, b: self.a }
        } else {
            Tau { delta: outer.delta + self.delta, a: self.a.max(lo).min(hi), b: self.b.max(lo).min(hi) }
        }
    }

    /// Lowest optimal label of the tail node of a contracted run given its
    /// message `m` and the label of the head node.
    pub fn back(&self, m: f64, y_head: bool) -> bool {
        if m < self.a {
            true
        } else if m < self.b {
            y_head
        } else {
            false
        }
    }
}

/// Piecewise-constant family `λ ↦ T^λ`: `taus[p]` applies for
/// `lams[p-1] < λ ≤ lams[p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractedMap {
    lams: Vec<f64>,
    taus: Vec<Tau>,
}

impl ContractedMap {
    /// Single edge into a node with derivative slopes/breakpoints `(slopes, breaks)`.
    pub fn single_edge(slopes: &[f64], breaks: &[f64], w_lo: f64, w_hi: f64) -> Self {
        Self {
            lams: breaks.to_vec(),
            taus: slopes.iter().map(|&s| Tau { delta: s, a: w_lo, b: w_hi }).collect(),
        }
    }

    pub fn identity_clip(w_lo: f64, w_hi: f64) -> Self {
        Self { lams: Vec::new(), taus: vec![Tau { delta: 0.0, a: w_lo, b: w_hi }] }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.lams
    }

    pub fn taus(&self) -> &[Tau] {
        &self.taus
    }

    pub fn tau_at(&self, lambda: f64) -> Tau {
        self.taus[self.lams.partition_point(|&l| l < lambda)]
    }

    pub fn eval(&self, lambda: f64, v: f64) -> f64 {
        self.tau_at(lambda).apply(v)
    }

    /// `outer ∘ self`, by merging the two breakpoint sequences.
    pub fn then(&self, outer: &ContractedMap) -> ContractedMap {
        let (l1, l2) = (&self.lams, &outer.lams);
        let mut lams = Vec::with_capacity(l1.len() + l2.len());
        let mut taus = Vec::with_capacity(l1.len() + l2.len() + 1);
        let (mut p, mut q) = (0, 0);
        taus.push(self.taus[0].then(&outer.taus[0]));
        while p < l1.len() || q < l2.len() {
            if q == l2.len() || (p < l1.len() && l1[p] <= l2[q]) {
                lams.push(l1[p]);
                p += 1;
            } else {
                lams.push(l2[q]);
                q += 1;
            }
            taus.push(self.taus[p].then(&outer.taus[q]));
        }
        ContractedMap { lams, taus }
    }

    /// Copy restricted to the window `(a, b)`; queries with `λ ∈ (a, b]` are unchanged.
    pub fn trimmed(&self, a: f64, b: f64) -> ContractedMap {
        let lo = self.lams.partition_point(|&v| v <= a);
        let hi = self.lams.partition_point(|&v| v < b).max(lo);
        ContractedMap { lams: self.lams[lo..hi].to_vec(), taus: self.taus[lo..=hi].to_vec() }
    }

    /// Composes a run of maps (first applied first) by balanced pairwise merging.
    pub fn compose_run(mut maps: Vec<ContractedMap>) -> ContractedMap {
        assert!(!maps.is_empty());
        while maps.len() > 1 {
            let mut next = Vec::with_capacity(maps.len() / 2 + 1);
            let mut it = maps.into_iter();
            while let Some(first) = it.next() {
                match it.next() {
                    Some(second) => next.push(first.then(&second)),
                    None => next.push(first),
                }
            }
            maps = next;
        }
        maps.pop().unwrap()
    }
}

/// Flattened unary derivatives of a chain.
#[derive(Debug, Clone)]
struct Unaries {
    bp: Vec<f64>,
    sl: Vec<f64>,
    start: Vec<usize>,
}

impl Unaries {
    fn new(unaries: &[PwlFunc]) -> Result<Self> {
        let mut bp = Vec::new();
        let mut sl = Vec::new();
        let mut start = vec![0];
        for (i, f) in unaries.iter().enumerate() {
            if f.slopes().windows(2).any(|w| w[0] > w[1]) {
                return invalid(format!("unary {i} is not convex"));
            }
            bp.extend_from_slice(f.breaks());
            sl.extend_from_slice(f.slopes());
            start.push(bp.len());
        }
        Ok(Self { bp, sl, start })
    }

    fn breaks(&self, i: usize) -> &[f64] {
        &self.bp[self.start[i]..self.start[i + 1]]
    }

    fn slopes(&self, i: usize) -> &[f64] {
        &self.sl[self.start[i] + i..self.start[i + 1] + i + 1]
    }

    /// Left-continuous derivative `g_i(λ)`.
    fn g(&self, i: usize, lambda: f64) -> f64 {
        let b = self.breaks(i);
        self.slopes(i)[b.partition_point(|&l| l < lambda)]
    }
}

fn check_chain(unaries: &[PwlFunc], weights: &ConvexWeights) -> Result<()> {
    if unaries.is_empty() {
        return invalid("empty chain");
    }
    if weights.len() + 1 != unaries.len() && weights.len() != unaries.len() {
        return invalid(format!("expected {} edge weights, got {}", unaries.len() - 1, weights.len()));
    }
    Ok(())
}

/// Scalar DP on a chain segment: returns labels given per-node coefficients.
fn binary_dp(coef: &[f64], lo: &[f64], hi: &[f64], msg: &mut Vec<f64>, y: &mut Vec<bool>) {
    let n = coef.len();
    msg.clear();
    let mut d = coef[0];
    msg.push(d);
    for k in 1..n {
        d = coef[k] + d.max(lo[k - 1]).min(hi[k - 1]);
        msg.push(d);
    }
    y.clear();
    y.resize(n, false);
    y[n - 1] = msg[n - 1] < 0.0;
    for k in (0..n - 1).rev() {
        y[k] = if y[k + 1] { msg[k] < hi[k] } else { msg[k] < lo[k] };
    }
}

/// Lowest minimizer of the binary threshold problem at `lambda` on a chain.
pub fn binary_cut(unaries: &[PwlFunc], weights: &ConvexWeights, lambda: f64) -> Result<Vec<bool>> {
    check_chain(unaries, weights)?;
    let u = Unaries::new(unaries)?;
    let coef: Vec<f64> = (0..unaries.len()).map(|i| u.g(i, lambda)).collect();
    let (mut msg, mut y) = (Vec::new(), Vec::new());
    binary_dp(&coef, &weights.lo, &weights.hi, &mut msg, &mut y);
    Ok(y)
}

/// Relation between a segment and the node just outside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Open,
    Below,
    Above,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    from: usize,
    to: usize,
    a: f64,
    b: f64,
    left: Side,
    right: Side,
}

/// Value for a run whose window holds no breakpoints.
fn floor_value(a: f64, b: f64) -> f64 {
    if a.is_finite() {
        a
    } else if b.is_finite() {
        // Energy is flat towards -∞ here; the upper end attains the same value.
        b
    } else {
        0.0
    }
}

/// O(n log n) divide and conquer with median pivots.
pub fn solve_hochbaum(unaries: &[PwlFunc], weights: &ConvexWeights) -> Result<Vec<f64>> {
    check_chain(unaries, weights)?;
    let u = Unaries::new(unaries)?;
    Ok(hochbaum_core(&u, &weights.lo, &weights.hi))
}

fn hochbaum_core(u: &Unaries, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = u.start.len() - 1;
    let mut x = vec![0.0; n];
    let mut lo_idx: Vec<usize> = (0..n).map(|i| u.start[i]).collect();
    let mut hi_idx: Vec<usize> = (0..n).map(|i| u.start[i + 1]).collect();
    let mut stack = vec![Segment {
        from: 0,
        to: n,
        a: f64::NEG_INFINITY,
        b: f64::INFINITY,
        left: Side::Open,
        right: Side::Open,
    }];
    let (mut pool, mut coef, mut msg, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    while let Some(seg) = stack.pop() {
        pool.clear();
        for i in seg.from..seg.to {
            pool.extend_from_slice(&u.bp[lo_idx[i]..hi_idx[i]]);
        }
        if pool.is_empty() {
            let v = floor_value(seg.a, seg.b);
            x[seg.from..seg.to].fill(v);
            continue;
        }
        let total = pool.len();
        let mid = (total - 1) / 2;
        let (_, &mut lambda, _) = pool.select_nth_unstable_by(mid, f64::total_cmp);

        coef.clear();
        coef.extend((seg.from..seg.to).map(|i| u.g(i, lambda)));
        let last = coef.len() - 1;
        match seg.left {
            Side::Below => coef[0] += hi[seg.from - 1],
            Side::Above => coef[0] += lo[seg.from - 1],
            Side::Open => {}
        }
        match seg.right {
            Side::Above => coef[last] -= hi[seg.to - 1],
            Side::Below => coef[last] -= lo[seg.to - 1],
            Side::Open => {}
        }
        binary_dp(&coef, &lo[seg.from..], &hi[seg.from..], &mut msg, &mut y);

        let mut start = 0;
        while start < y.len() {
            let mut end = start + 1;
            while end < y.len() && y[end] == y[start] {
                end += 1;
            }
            let (from, to) = (seg.from + start, seg.from + end);
            let up = y[start];
            for i in from..to {
                let b = &u.bp[lo_idx[i]..hi_idx[i]];
                if up {
                    lo_idx[i] += b.partition_point(|&l| l <= lambda);
                } else {
                    hi_idx[i] = lo_idx[i] + b.partition_point(|&l| l < lambda);
                }
            }
            let neighbour = if up { Side::Below } else { Side::Above };
            let child = Segment {
                from,
                to,
                a: if up { lambda } else { seg.a },
                b: if up { seg.b } else { lambda },
                left: if start == 0 { seg.left } else { neighbour },
                right: if end == y.len() { seg.right } else { neighbour },
            };
            debug_assert!({
                let kept: usize = (from..to).map(|i| hi_idx[i] - lo_idx[i]).sum();
                2 * kept <= total
            });
            stack.push(child);
            start = end;
        }
    }
    x
}

/// View of a contracted edge restricted to a window: breakpoints
/// `lams[lo..hi]` and `taus[lo..=hi]`.
#[derive(Debug, Clone, Copy)]
struct View {
    edge: usize,
    lo: usize,
    hi: usize,
}

impl View {
    fn count(&self) -> usize {
        self.hi - self.lo
    }

    fn tau(&self, maps: &[ContractedMap], lambda: f64) -> Tau {
        let m = &maps[self.edge];
        m.taus[self.lo + m.lams[self.lo..self.hi].partition_point(|&l| l < lambda)]
    }

    fn trimmed(&self, maps: &[ContractedMap], a: f64, b: f64) -> View {
        let l = &maps[self.edge].lams[self.lo..self.hi];
        let lo = self.lo + l.partition_point(|&v| v <= a);
        let hi = self.lo + l.partition_point(|&v| v < b);
        View { edge: self.edge, lo, hi: hi.max(lo) }
    }
}

struct Frame {
    /// Positions `from..to` in the subsampled node list; edges `from-1..to`.
    from: usize,
    to: usize,
    a: f64,
    b: f64,
    y_left: bool,
    y_right: bool,
    views: Vec<View>,
}

/// Smallest value whose cumulative weight reaches half the total weight
/// (expected linear time).
fn weighted_median(items: &mut [(f64, usize)]) -> f64 {
    let total: usize = items.iter().map(|p| p.1).sum();
    let mut need = total.div_ceil(2).max(1);
    let mut slice = items;
    loop {
        if slice.len() == 1 {
            return slice[0].0;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |p, q| p.0.total_cmp(&q.0));
        let (left, rest) = slice.split_at_mut(mid);
        let left_w: usize = left.iter().map(|p| p.1).sum();
        if left_w >= need {
            slice = left;
        } else if left_w + rest[0].1 >= need {
            return rest[0].0;
        } else {
            need -= left_w + rest[0].1;
            slice = &mut rest[1..];
        }
    }
}

/// Default subsampling stride `max(1, ⌈log₂ n⌉)`.
pub fn default_stride(n: usize) -> usize {
    (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1) as usize
}

/// O(n log log n) contraction algorithm; `stride = None` picks [`default_stride`].
pub fn solve_fast(unaries: &[PwlFunc], weights: &ConvexWeights, stride: Option<usize>) -> Result<Vec<f64>> {
    check_chain(unaries, weights)?;
    let n = unaries.len();
    let m = stride.unwrap_or_else(|| default_stride(n));
    if m == 0 {
        return invalid("stride must be at least 1");
    }
    let u = Unaries::new(unaries)?;

    // Extended chain: sentinel 0, nodes 1..=n, sentinel n+1, zero-weight end edges.
    let ext_w = |k: usize| -> (f64, f64) {
        // weights of the edge (k-1, k)
        if k <= 1 || k > n {
            (0.0, 0.0)
        } else {
            (weights.lo[k - 2], weights.hi[k - 2])
        }
    };
    let single = |k: usize| -> ContractedMap {
        let (wl, wh) = ext_w(k);
        if k > n {
            ContractedMap::identity_clip(wl, wh)
        } else {
            ContractedMap::single_edge(u.slopes(k - 1), u.breaks(k - 1), wl, wh)
        }
    };

    let mut nodes = vec![0usize];
    let mut k = 1;
    while k <= n {
        nodes.push(k);
        k += m;
    }
    if *nodes.last().unwrap() != n {
        nodes.push(n);
    }
    nodes.push(n + 1);
    let maps: Vec<ContractedMap> = nodes
        .windows(2)
        .map(|w| ContractedMap::compose_run((w[0] + 1..=w[1]).map(single).collect()))
        .collect();

    let big_n = nodes.len() - 2;
    let mut xs = vec![0.0; nodes.len()];
    let views: Vec<View> = maps.iter().enumerate().map(|(e, mp)| View { edge: e, lo: 0, hi: mp.lams.len() }).collect();
    let mut stack = vec![Frame {
        from: 1,
        to: big_n + 1,
        a: f64::NEG_INFINITY,
        b: f64::INFINITY,
        y_left: false,
        y_right: false,
        views,
    }];
    let (mut meds, mut msg, mut taus, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    while let Some(fr) = stack.pop() {
        meds.clear();
        for v in &fr.views {
            if v.count() > 0 {
                meds.push((maps[v.edge].lams[v.lo + (v.count() - 1) / 2], v.count()));
            }
        }
        if meds.is_empty() {
            let val = floor_value(fr.a, fr.b);
            xs[fr.from..fr.to].fill(val);
            continue;
        }
        let lambda = weighted_median(&mut meds);

        // Forward: message at nodes[from-1] is ±∞ by the boundary label.
        let len = fr.to - fr.from;
        msg.clear();
        taus.clear();
        let mut cur = if fr.y_left { f64::NEG_INFINITY } else { f64::INFINITY };
        for v in &fr.views {
            let t = v.tau(&maps, lambda);
            taus.push(t);
            cur = t.apply(cur);
            msg.push(cur);
        }
        // msg[k] is the message at nodes[from + k]; taus[k + 1] leaves it.
        y.clear();
        y.resize(len, false);
        let mut head = fr.y_right;
        for k in (0..len).rev() {
            head = taus[k + 1].back(msg[k], head);
            y[k] = head;
        }

        let mut start = 0;
        while start < len {
            let mut end = start + 1;
            while end < len && y[end] == y[start] {
                end += 1;
            }
            let up = y[start];
            let (a, b) = if up { (lambda, fr.b) } else { (fr.a, lambda) };
            let views: Vec<View> = fr.views[start..=end].iter().map(|v| v.trimmed(&maps, a, b)).collect();
            debug_assert!(a >= fr.a && b <= fr.b);
            debug_assert!({
                let before: usize = fr.views.iter().map(|v| v.count()).sum();
                let after: usize = views.iter().map(|v| v.count()).sum();
                4 * after <= 3 * before
            });
            stack.push(Frame {
                from: fr.from + start,
                to: fr.from + end,
                a,
                b,
                y_left: if start == 0 { fr.y_left } else { !up },
                y_right: if end == len { fr.y_right } else { !up },
                views,
            });
            start = end;
        }
    }

    let mut x = vec![0.0; n];
    for k in 1..=big_n {
        x[nodes[k] - 1] = xs[k];
    }
    for k in 1..big_n {
        let (i, j) = (nodes[k], nodes[k + 1]);
        if j > i + 1 {
            fill_gap(&u, weights, i - 1, j - 1, &mut x)?;
        }
    }
    Ok(x)
}

/// Solves nodes strictly between `i` and `j` with `x_i`, `x_j` pinned.
fn fill_gap(u: &Unaries, weights: &ConvexWeights, i: usize, j: usize, x: &mut [f64]) -> Result<()> {
    let (xi, xj) = (x[i], x[j]);
    let mut gap: Vec<PwlFunc> = (i + 1..j)
        .map(|k| PwlFunc::from_parts(u.slopes(k).to_vec(), u.breaks(k).to_vec(), None))
        .collect();
    let left = PwlFunc::from_parts(vec![weights.lo[i], weights.hi[i]], vec![xi], None);
    let right = PwlFunc::from_parts(vec![-weights.hi[j - 1], -weights.lo[j - 1]], vec![xj], None);
    let last = gap.len() - 1;
    gap[0] = PwlFunc::sum_many(&[&gap[0], &left]);
    gap[last] = PwlFunc::sum_many(&[&gap[last], &right]);
    let sub = Unaries::new(&gap)?;
    let sol = hochbaum_core(&sub, &weights.lo[i + 1..j - 1], &weights.hi[i + 1..j - 1]);
    x[i + 1..j].copy_from_slice(&sol);
    Ok(())
}
