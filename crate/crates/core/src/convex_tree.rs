//! O(n log n) message passing for convex piecewise-linear or piecewise-quadratic
//! unaries on trees.
//!
//! A message is a non-decreasing, left-continuous derivative
//! `h(z) = lo(z) + Σ_{λσ < z} (δa_σ z + δb_σ)` kept as the affine piece `lo`
//! left of all events, the affine piece `hi` right of all events, and a
//! double-ended queue of events. Clipping to `[w⁻, w⁺]` pops dominated events
//! from either end and pushes at most one new event per side.

use crate::depq::{Depq, Event, IntervalHeap, PairingPair};
use crate::error::{invalid, Result, SolveError};
use crate::nonconvex::check_edge_arrays;
use crate::pwq::PwqFunc;
use crate::tree::{dp_solve, ConvexWeights, MessageOps, Tree};

/// The affine function `a·z + b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Lin {
    pub a: f64,
    pub b: f64,
}

impl Lin {
    pub fn at(self, z: f64) -> f64 {
        self.a * z + self.b
    }

    fn add(self, e: &Event) -> Lin {
        Lin { a: self.a + e.da, b: self.b + e.db }
    }

    fn sub(self, e: &Event) -> Lin {
        Lin { a: self.a - e.da, b: self.b - e.db }
    }

    fn plus(self, o: Lin) -> Lin {
        Lin { a: self.a + o.a, b: self.b + o.b }
    }

    /// Smallest `z` with `a z + b ≥ w` for a strictly increasing piece.
    fn solve(self, w: f64) -> f64 {
        (w - self.b) / self.a
    }
}

/// Operation counters for the amortization argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueStats {
    pub inserts: usize,
    pub removes: usize,
    pub finds: usize,
    pub unary_breakpoints: usize,
    pub edges: usize,
}

/// Derivative message.
#[derive(Debug)]
pub struct ConvexMessage<Q: Depq> {
    pub lo: Lin,
    pub hi: Lin,
    queue: Q,
}

impl<Q: Depq> ConvexMessage<Q> {
    pub fn zero() -> Self {
        Self { lo: Lin::default(), hi: Lin::default(), queue: Q::empty() }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn add_unary(&mut self, store: &mut Q::Store, g: &PwqFunc, stats: &mut QueueStats) {
        let (a, b) = (g.a(), g.b());
        self.lo = self.lo.plus(Lin { a: a[0], b: b[0] });
        let t = g.breaks().len();
        self.hi = self.hi.plus(Lin { a: a[t], b: b[t] });
        for (p, &at) in g.breaks().iter().enumerate() {
            self.queue.push(store, Event { at, da: a[p + 1] - a[p], db: b[p + 1] - b[p] });
        }
        stats.inserts += t;
        stats.unary_breakpoints += t;
    }

    pub fn absorb(&mut self, store: &mut Q::Store, other: ConvexMessage<Q>) {
        self.lo = self.lo.plus(other.lo);
        self.hi = self.hi.plus(other.hi);
        self.queue.meld(store, other.queue);
    }

    /// Evaluates the derivative (O(queue size); for checks only).
    pub fn eval(&self, store: &Q::Store, z: f64) -> f64 {
        let mut v = self.lo;
        for e in self.queue.events(store) {
            if e.at < z {
                v = v.add(&e);
            }
        }
        v.at(z)
    }

    pub fn events(&self, store: &Q::Store) -> Vec<Event> {
        self.queue.events(store)
    }

    /// `h ← max(h, w)`; returns `sup{z : h(z) < w}` (possibly ±∞).
    pub fn clip_below(&mut self, store: &mut Q::Store, w: f64, stats: &mut QueueStats) -> f64 {
        let mut beta = f64::NEG_INFINITY;
        loop {
            stats.finds += 1;
            let Some(e) = self.queue.peek_min(store) else { break };
            if self.lo.at(e.at) >= w {
                break;
            }
            // Co-located events leave together; partial sums at one point are not pieces.
            while let Some(d) = self.queue.peek_min(store).filter(|d| d.at == e.at) {
                self.queue.pop_min(store);
                stats.removes += 1;
                self.lo = self.lo.add(&d);
            }
            beta = e.at;
        }
        let piece = self.lo;
        let lambda = if piece.a > 0.0 {
            piece.solve(w).max(beta)
        } else if piece.b >= w {
            beta
        } else {
            // Constant piece below w: only possible once the queue is exhausted.
            debug_assert!(self.queue.is_empty());
            self.lo = Lin { a: 0.0, b: w };
            self.hi = self.lo;
            return f64::INFINITY;
        };
        if lambda == f64::NEG_INFINITY {
            return lambda;
        }
        self.lo = Lin { a: 0.0, b: w };
        self.queue.push(store, Event { at: lambda, da: piece.a, db: piece.b - w });
        stats.inserts += 1;
        if self.queue.len() == 1 {
            self.hi = piece;
        }
        lambda
    }

    /// `h ← min(h, w)`; returns `sup{z : h(z) < w}` (possibly ±∞).
    pub fn clip_above(&mut self, store: &mut Q::Store, w: f64, stats: &mut QueueStats) -> f64 {
        let mut beta = f64::INFINITY;
        loop {
            stats.finds += 1;
            let Some(e) = self.queue.peek_max(store) else { break };
            if self.hi.at(e.at) < w {
                break;
            }
            while let Some(d) = self.queue.peek_max(store).filter(|d| d.at == e.at) {
                self.queue.pop_max(store);
                stats.removes += 1;
                self.hi = self.hi.sub(&d);
            }
            beta = e.at;
        }
        if self.queue.is_empty() {
            self.lo = self.hi;
        }
        let piece = self.hi;
        let lambda = if piece.a > 0.0 {
            piece.solve(w).min(beta)
        } else if piece.b < w {
            beta
        } else {
            debug_assert!(self.queue.is_empty());
            self.lo = Lin { a: 0.0, b: w };
            self.hi = self.lo;
            return f64::NEG_INFINITY;
        };
        if lambda == f64::INFINITY {
            return lambda;
        }
        let was_empty = self.queue.is_empty();
        self.hi = Lin { a: 0.0, b: w };
        self.queue.push(store, Event { at: lambda, da: -piece.a, db: w - piece.b });
        stats.inserts += 1;
        if was_empty {
            self.lo = piece;
        }
        lambda
    }

    /// Clips to `[w⁻, w⁺]` and returns `(λ⁻, λ⁺)`.
    pub fn clip(&mut self, store: &mut Q::Store, w_lo: f64, w_hi: f64, stats: &mut QueueStats) -> (f64, f64) {
        let l = self.clip_below(store, w_lo, stats);
        let u = self.clip_above(store, w_hi, stats);
        stats.edges += 1;
        (l, u.max(l))
    }

    /// Lowest minimizer of the primitive.
    pub fn root_argmin(&mut self, store: &mut Q::Store, stats: &mut QueueStats) -> Result<f64> {
        if self.lo.a == 0.0 && self.lo.b > 0.0 {
            return Err(SolveError::Unbounded("energy decreases without bound as x → -∞".into()));
        }
        if self.lo.a == 0.0 && self.lo.b == 0.0 {
            // Flat towards -∞: report the leftmost breakpoint (or 0).
            stats.finds += 1;
            return Ok(self.queue.peek_min(store).map_or(0.0, |e| e.at));
        }
        let x = self.clip_below(store, 0.0, stats);
        if x == f64::INFINITY {
            return Err(SolveError::Unbounded("energy decreases without bound as x → +∞".into()));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub x: Vec<f64>,
    pub stats: QueueStats,
}

struct Ops<'a, Q: Depq> {
    unaries: &'a [PwqFunc],
    weights: &'a ConvexWeights,
    store: Q::Store,
    stats: QueueStats,
}

impl<Q: Depq> MessageOps for Ops<'_, Q> {
    type Msg = ConvexMessage<Q>;
    type Back = (f64, f64);

    fn accumulate(&mut self, i: usize, incoming: Vec<ConvexMessage<Q>>) -> Result<ConvexMessage<Q>> {
        let mut it = incoming.into_iter();
        let mut msg = it.next().unwrap_or_else(ConvexMessage::zero);
        for m in it {
            msg.absorb(&mut self.store, m);
        }
        msg.add_unary(&mut self.store, &self.unaries[i], &mut self.stats);
        Ok(msg)
    }

    fn edge(&mut self, child: usize, mut msg: ConvexMessage<Q>) -> Result<(ConvexMessage<Q>, (f64, f64))> {
        let bounds = msg.clip(&mut self.store, self.weights.lo[child], self.weights.hi[child], &mut self.stats);
        Ok((msg, bounds))
    }

    fn root_argmin(&mut self, _root: usize, mut msg: ConvexMessage<Q>) -> Result<f64> {
        msg.root_argmin(&mut self.store, &mut self.stats)
    }

    fn backtrack(&mut self, _child: usize, back: &(f64, f64), x_parent: f64) -> f64 {
        x_parent.max(back.0).min(back.1)
    }
}

/// Exact lowest minimizer of `Σ f_i(x_i) + Σ f_ij(x_j - x_i)` for convex
/// unaries. Chains use an interval heap; other trees use melded pairing heaps.
pub fn solve_convex_tree(tree: &Tree, unaries: &[PwqFunc], weights: &ConvexWeights) -> Result<ConvexSolution> {
    if tree.is_chain() {
        solve_convex_tree_with::<IntervalHeap>(tree, unaries, weights)
    } else {
        solve_convex_tree_with::<PairingPair>(tree, unaries, weights)
    }
}

pub fn solve_convex_tree_with<Q: Depq>(
    tree: &Tree,
    unaries: &[PwqFunc],
    weights: &ConvexWeights,
) -> Result<ConvexSolution> {
    if unaries.len() != tree.len() {
        return invalid(format!("expected {} unaries, got {}", tree.len(), unaries.len()));
    }
    check_edge_arrays(tree, weights.len())?;
    let mut ops = Ops::<Q> { unaries, weights, store: Q::Store::default(), stats: QueueStats::default() };
    let x = dp_solve(tree, &mut ops)?;
    Ok(ConvexSolution { x, stats: ops.stats })
}

pub fn convex_energy(tree: &Tree, unaries: &[PwqFunc], weights: &ConvexWeights, x: &[f64]) -> f64 {
    let unary: f64 = unaries.iter().zip(x).map(|(f, &v)| f.eval(v)).sum();
    let pair: f64 = tree.edges().map(|(i, j)| weights.edge_cost(i, x[j] - x[i])).sum();
    unary + pair
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::PwlFunc;

    fn abs_at(c: f64) -> PwqFunc {
        PwqFunc::from_pwl(&PwlFunc::abs(c, 1.0)).unwrap()
    }

    #[test]
    fn abs_derivative_accumulates_one_event() {
        let mut st = ();
        let mut stats = QueueStats::default();
        let mut m = ConvexMessage::<IntervalHeap>::zero();
        m.add_unary(&mut st, &abs_at(2.0), &mut stats);
        assert_eq!(m.lo, Lin { a: 0.0, b: -1.0 });
        assert_eq!(m.hi, Lin { a: 0.0, b: 1.0 });
        assert_eq!(m.events(&st), vec![Event { at: 2.0, da: 0.0, db: 2.0 }]);

        let mut q = ConvexMessage::<IntervalHeap>::zero();
        q.add_unary(&mut st, &PwqFunc::quadratic(2.0, 3.0).unwrap(), &mut stats);
        assert!(q.is_empty());
        assert_eq!(q.lo, Lin { a: 2.0, b: -3.0 });
    }

    #[test]
    fn inactive_clip() {
        let mut st = ();
        let mut stats = QueueStats::default();
        let mut m = ConvexMessage::<IntervalHeap>::zero();
        m.add_unary(&mut st, &abs_at(0.0), &mut stats);
        let (l, u) = m.clip(&mut st, -2.0, 2.0, &mut stats);
        assert_eq!((l, u), (f64::NEG_INFINITY, f64::INFINITY));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn jump_crossing_clip() {
        let mut st = ();
        let mut stats = QueueStats::default();
        let mut m = ConvexMessage::<IntervalHeap>::zero();
        m.add_unary(&mut st, &abs_at(0.0), &mut stats);
        let (l, u) = m.clip(&mut st, -0.5, 0.5, &mut stats);
        assert_eq!((l, u), (0.0, 0.0));
        for z in [-1.0, 0.0, 1e-9, 3.0] {
            let want = if z <= 0.0 { -0.5 } else { 0.5 };
            assert_eq!(m.eval(&st, z), want);
        }
    }

    #[test]
    fn star_with_zero_weights_decouples() {
        let tree = Tree::from_parents(vec![None, Some(0), Some(0), Some(0)]).unwrap();
        let u = vec![abs_at(0.0), abs_at(1.0), abs_at(1.0), abs_at(1.0)];
        let sol = solve_convex_tree(&tree, &u, &ConvexWeights::uniform(4, 0.0).unwrap()).unwrap();
        assert_eq!(sol.x, vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn strong_coupling_gives_lowest_median() {
        let cs = [3.0, -1.0, 4.0, 1.0, 5.0, 9.0];
        let u: Vec<PwqFunc> = cs.iter().map(|&c| abs_at(c)).collect();
        let sol = solve_convex_tree(&Tree::chain(6), &u, &ConvexWeights::uniform(5, 100.0).unwrap()).unwrap();
        // Lowest median of six values is the third smallest.
        assert!(sol.x.iter().all(|&v| v == 3.0), "{:?}", sol.x);
    }

    #[test]
    fn coincident_events_pop_together() {
        let mut st = ();
        let mut stats = QueueStats::default();
        let mut m = ConvexMessage::<IntervalHeap>::zero();
        m.add_unary(&mut st, &abs_at(1.0), &mut stats);
        m.add_unary(&mut st, &abs_at(1.0), &mut stats);
        let (l, u) = m.clip(&mut st, -1.0, 1.0, &mut stats);
        assert_eq!((l, u), (1.0, 1.0));
        assert_eq!(m.events(&st), vec![Event { at: 1.0, da: 0.0, db: 2.0 }]);
        for z in [-3.0, 1.0, 1.0 + 1e-9, 4.0] {
            let want = if z <= 1.0 { -1.0 } else { 1.0 };
            assert_eq!(m.eval(&st, z), want);
        }
    }

    #[test]
    fn repeated_centers_match_lattice_solver() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = r.gen_range(2..12);
            let pwl: Vec<PwlFunc> = (0..n).map(|_| PwlFunc::abs(r.gen_range(0..3) as f64, 1.0)).collect();
            let w = ConvexWeights::symmetric((0..n - 1).map(|_| r.gen_range(0..4) as f64 * 0.5).collect()).unwrap();
            let u: Vec<PwqFunc> = pwl.iter().map(|f| PwqFunc::from_pwl(f).unwrap()).collect();
            let tree = Tree::chain(n);
            let x = solve_convex_tree(&tree, &u, &w).unwrap().x;
            let y = crate::dnc::solve_hochbaum(&pwl, &w).unwrap();
            let (ex, ey) = (convex_energy(&tree, &u, &w, &x), convex_energy(&tree, &u, &w, &y));
            assert!((ex - ey).abs() < 1e-9, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn unbounded_is_reported() {
        let u = vec![PwqFunc::new(vec![], vec![0.0], vec![1.0]).unwrap(); 3];
        let err = solve_convex_tree(&Tree::chain(3), &u, &ConvexWeights::uniform(2, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, SolveError::Unbounded(_)));
    }
}
