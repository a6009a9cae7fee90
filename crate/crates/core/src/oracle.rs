//! Brute-force reference solvers and adversarial fixtures.

use crate::convex_tree::{ConvexMessage, QueueStats};
use crate::depq::IntervalHeap;
use crate::error::{invalid, Result};
use crate::pwl::PwlFunc;
use crate::pwq::PwqFunc;
use crate::tree::{ConvexWeights, Tree, TruncatedWeights};

/// Pairwise term used by the label-set oracles.
#[derive(Debug, Clone, Copy)]
pub enum EdgeTerms<'a> {
    Convex(&'a ConvexWeights),
    Truncated(&'a TruncatedWeights),
}

impl EdgeTerms<'_> {
    pub fn cost(&self, child: usize, z: f64) -> f64 {
        match self {
            EdgeTerms::Convex(w) => w.edge_cost(child, z),
            EdgeTerms::Truncated(w) => w.edge_cost(child, z),
        }
    }
}

/// Sorted distinct breakpoints of all unaries.
pub fn breakpoint_set(unaries: &[PwlFunc]) -> Vec<f64> {
    let mut v: Vec<f64> = unaries.iter().flat_map(|f| f.breaks().iter().copied()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Breakpoints plus a uniform grid of spacing `step` covering them with a
/// margin of `1 + range` on each side.
pub fn refined_grid(breaks: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return invalid("grid step must be positive");
    }
    let (lo, hi) = match (breaks.first(), breaks.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0.0, 0.0),
    };
    let margin = 1.0 + (hi - lo);
    let (from, to) = (lo - margin, hi + margin);
    let count = ((to - from) / step).ceil() as usize;
    let mut v: Vec<f64> = (0..=count).map(|k| from + k as f64 * step).collect();
    v.extend_from_slice(breaks);
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// `min_{x ∈ labels} h(x) + f(y - x)` for every label `y`, with the argmin index.
fn edge_transform(h: &[f64], labels: &[f64], edges: EdgeTerms, child: usize) -> (Vec<f64>, Vec<usize>) {
    let l = labels.len();
    let (up, down) = match edges {
        EdgeTerms::Convex(w) => (w.hi[child], -w.lo[child]),
        EdgeTerms::Truncated(w) => (w.w[child], w.w[child]),
    };
    let mut d = h.to_vec();
    let mut arg: Vec<usize> = (0..l).collect();
    for k in 1..l {
        let v = d[k - 1] + up * (labels[k] - labels[k - 1]);
        if v < d[k] {
            d[k] = v;
            arg[k] = arg[k - 1];
        }
    }
    for k in (0..l - 1).rev() {
        let v = d[k + 1] + down * (labels[k + 1] - labels[k]);
        if v < d[k] || (v == d[k] && arg[k + 1] < arg[k]) {
            d[k] = v;
            arg[k] = arg[k + 1];
        }
    }
    if let EdgeTerms::Truncated(w) = edges {
        let cap = w.cap[child];
        if cap.is_finite() {
            let (best, &m) = h.iter().enumerate().fold((0, &h[0]), |acc, (k, v)| if *v < *acc.1 { (k, v) } else { acc });
            for k in 0..l {
                if m + cap < d[k] {
                    d[k] = m + cap;
                    arg[k] = best;
                }
            }
        }
    }
    (d, arg)
}

/// Exact minimum over `labels^n` by dynamic programming on the tree.
///
/// Each edge is an exact distance transform over the sorted label set, which
/// needs the pairwise term to be linear on each side of zero (plus the cap).
pub fn discrete_viterbi(
    tree: &Tree,
    unaries: &[PwlFunc],
    edges: EdgeTerms,
    labels: &[f64],
) -> Result<(Vec<f64>, f64)> {
    if labels.is_empty() {
        return invalid("label set is empty");
    }
    if labels.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("labels must be strictly increasing");
    }
    if let EdgeTerms::Truncated(w) = edges {
        if w.w.iter().any(|&v| v < 0.0) {
            return invalid("truncated weights must be non-negative");
        }
    }
    let n = tree.len();
    let mut acc: Vec<Vec<f64>> = (0..n).map(|i| labels.iter().map(|&x| unaries[i].eval(x)).collect()).collect();
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &i in tree.order() {
        let Some(p) = tree.parent(i) else { continue };
        let (d, arg) = edge_transform(&acc[i], labels, edges, i);
        for (t, v) in acc[p].iter_mut().zip(&d) {
            *t += v;
        }
        back[i] = arg;
    }
    let root = tree.root();
    let mut best = 0;
    for k in 1..labels.len() {
        if acc[root][k] < acc[root][best] {
            best = k;
        }
    }
    let mut idx = vec![0usize; n];
    idx[root] = best;
    for &i in tree.order().iter().rev() {
        if let Some(p) = tree.parent(i) {
            idx[i] = back[i][idx[p]];
        }
    }
    let x: Vec<f64> = idx.iter().map(|&k| labels[k]).collect();
    let e = label_energy(tree, unaries, edges, &x);
    Ok((x, e))
}

pub fn label_energy(tree: &Tree, unaries: &[PwlFunc], edges: EdgeTerms, x: &[f64]) -> f64 {
    let unary: f64 = unaries.iter().zip(x).map(|(f, &v)| f.eval(v)).sum();
    let pair: f64 = tree.edges().map(|(i, j)| edges.cost(i, x[j] - x[i])).sum();
    unary + pair
}

/// Minimum over `labels^n` by enumerating every assignment.
pub fn exhaustive_labels(
    tree: &Tree,
    unaries: &[PwlFunc],
    edges: EdgeTerms,
    labels: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = tree.len();
    let l = labels.len();
    if l == 0 {
        return invalid("label set is empty");
    }
    if (l as f64).powi(n as i32) > 5e6 {
        return invalid("too many assignments to enumerate");
    }
    let mut idx = vec![0usize; n];
    let mut x = vec![labels[0]; n];
    let mut best = (x.clone(), label_energy(tree, unaries, edges, &x));
    loop {
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(best);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < l {
                x[k] = labels[idx[k]];
                break;
            }
            idx[k] = 0;
            x[k] = labels[0];
        }
        let e = label_energy(tree, unaries, edges, &x);
        if e < best.1 {
            best = (x.clone(), e);
        }
    }
}

/// Binary chain energy `Σ c_i y_i + Σ f_i(y_{i+1} - y_i)`.
pub fn binary_energy(coef: &[f64], weights: &ConvexWeights, y: &[bool]) -> f64 {
    let unary: f64 = coef.iter().zip(y).map(|(c, &v)| if v { *c } else { 0.0 }).sum();
    let pair: f64 = (0..y.len().saturating_sub(1))
        .map(|i| weights.edge_cost(i, y[i + 1] as i32 as f64 - y[i] as i32 as f64))
        .sum();
    unary + pair
}

/// Lowest minimizer over `{0,1}^n` by enumeration in lexicographic order.
pub fn exhaustive_binary(coef: &[f64], weights: &ConvexWeights) -> Result<Vec<bool>> {
    let n = coef.len();
    if n == 0 || n > 20 {
        return invalid(format!("exhaustive binary search needs 1 ≤ n ≤ 20, got {n}"));
    }
    let decode = |mask: u32| -> Vec<bool> { (0..n).map(|i| mask >> (n - 1 - i) & 1 == 1).collect() };
    let mut best = decode(0);
    let mut best_e = binary_energy(coef, weights, &best);
    let scale = coef.iter().chain(&weights.lo).chain(&weights.hi).fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale * n as f64;
    for mask in 1..1u32 << n {
        let y = decode(mask);
        let e = binary_energy(coef, weights, &y);
        if e < best_e - tol {
            best = y;
            best_e = e;
        }
    }
    Ok(best)
}

/// Chain whose forward pass emits the sorted input as clip thresholds.
#[derive(Debug, Clone)]
pub struct SortFixture {
    pub unaries: Vec<PwqFunc>,
    pub weights: ConvexWeights,
    pub count: usize,
}

impl SortFixture {
    pub fn new(values: &[f64]) -> Result<Self> {
        let count = values.len();
        if count == 0 {
            return invalid("sort fixture needs at least one value");
        }
        let mut unaries = Vec::with_capacity(2 * count);
        for &b in values {
            unaries.push(PwqFunc::new(vec![b], vec![0.0, 0.0], vec![0.0, 1.0])?);
        }
        for _ in 0..count {
            unaries.push(PwqFunc::new(vec![], vec![0.0], vec![0.0])?);
        }
        let big = count as f64;
        // Edge between 1-based nodes i and i+1 stored at 0-based child i-1.
        let hi: Vec<f64> = (1..2 * count)
            .map(|i| if i < count { big + 1.0 } else { 2.0 * big - i as f64 - 0.5 })
            .collect();
        let weights = ConvexWeights::new(vec![0.0; hi.len()], hi)?;
        Ok(Self { unaries, weights, count })
    }

    /// `λ⁺` on the edges `N..2N-1` (1-based) of the forward pass, reversed so
    /// that it should come out sorted ascending.
    pub fn extract(&self) -> Vec<f64> {
        let mut msg = ConvexMessage::<IntervalHeap>::zero();
        let mut stats = QueueStats::default();
        let mut out = Vec::with_capacity(self.count);
        for i in 0..2 * self.count - 1 {
            msg.add_unary(&mut (), &self.unaries[i], &mut stats);
            let (_, up) = msg.clip(&mut (), self.weights.lo[i], self.weights.hi[i], &mut stats);
            if i + 1 >= self.count {
                out.push(up);
            }
        }
        out.reverse();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_label() {
        let t = Tree::chain(3);
        let u = vec![PwlFunc::abs(0.0, 1.0), PwlFunc::abs(1.0, 1.0), PwlFunc::abs(2.0, 1.0)];
        let w = ConvexWeights::uniform(2, 0.5).unwrap();
        let (x, e) = discrete_viterbi(&t, &u, EdgeTerms::Convex(&w), &[1.0]).unwrap();
        assert_eq!(x, vec![1.0; 3]);
        assert_eq!(e, 2.0);
    }

    #[test]
    fn exhaustive_binary_signs() {
        let w = ConvexWeights::uniform(3, 0.0).unwrap();
        assert_eq!(exhaustive_binary(&[1.0, 2.0, 0.5, 3.0], &w).unwrap(), vec![false; 4]);
        assert_eq!(exhaustive_binary(&[-1.0, -2.0, -0.5, -3.0], &w).unwrap(), vec![true; 4]);
        assert_eq!(exhaustive_binary(&[0.0, -1.0, 0.0, 1.0], &w).unwrap(), vec![false, true, false, false]);
    }

    #[test]
    fn sort_fixture_small() {
        let f = SortFixture::new(&[3.0, 1.0, 2.0, 1.0]).unwrap();
        assert_eq!(f.extract(), vec![1.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn viterbi_matches_enumeration_truncated() {
        let t = Tree::from_parents(vec![Some(2), Some(2), None, Some(2)]).unwrap();
        let u = vec![
            PwlFunc::abs(0.0, 1.0),
            PwlFunc::abs(3.0, 2.0),
            PwlFunc::abs(1.0, 0.5),
            PwlFunc::abs(2.0, 1.0),
        ];
        let w = TruncatedWeights::uniform(4, 1.0, 1.5).unwrap();
        let labels = [0.0, 1.0, 2.0, 3.0];
        let (_, e1) = discrete_viterbi(&t, &u, EdgeTerms::Truncated(&w), &labels).unwrap();
        let (_, e2) = exhaustive_labels(&t, &u, EdgeTerms::Truncated(&w), &labels).unwrap();
        assert!((e1 - e2).abs() < 1e-12, "{e1} vs {e2}");
    }
}
