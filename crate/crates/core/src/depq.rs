//! Double-ended priority queues of derivative events keyed by position.
//!
//! [`IntervalHeap`] is the array-backed reference queue (melds by reinserting
//! the smaller side). [`PairingPair`] keeps one min and one max pairing heap
//! over a shared arena with lazy deletion, so melding two queues is O(1).

use std::cmp::Ordering;

/// A derivative breakpoint: at `at` the derivative gains `da·z + db`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub at: f64,
    pub da: f64,
    pub db: f64,
}

impl Event {
    pub fn jump(at: f64, db: f64) -> Self {
        Self { at, da: 0.0, db }
    }
}

fn cmp_at(a: &Event, b: &Event) -> Ordering {
    a.at.total_cmp(&b.at)
}

pub trait Depq: Sized {
    /// Memory shared by all queues of one solve (empty for self-contained queues).
    type Store: Default;

    fn empty() -> Self;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn push(&mut self, store: &mut Self::Store, e: Event);
    fn peek_min(&mut self, store: &mut Self::Store) -> Option<Event>;
    fn peek_max(&mut self, store: &mut Self::Store) -> Option<Event>;
    fn pop_min(&mut self, store: &mut Self::Store) -> Option<Event>;
    fn pop_max(&mut self, store: &mut Self::Store) -> Option<Event>;
    /// Moves every element of `other` into `self`.
    fn meld(&mut self, store: &mut Self::Store, other: Self);
    /// All live events in unspecified order.
    fn events(&self, store: &Self::Store) -> Vec<Event>;
}

/// Interval heap: node `k` holds the pair `(v[2k], v[2k+1])` with `v[2k] ≤ v[2k+1]`;
/// low ends form a min-heap and high ends a max-heap.
#[derive(Debug, Clone, Default)]
pub struct IntervalHeap {
    v: Vec<Event>,
}

impl IntervalHeap {
    fn less(&self, i: usize, j: usize) -> bool {
        cmp_at(&self.v[i], &self.v[j]) == Ordering::Less
    }

    fn sift_up_min(&mut self, mut i: usize) {
        while i >= 2 {
            let p = ((i / 2 - 1) / 2) * 2;
            if self.less(i, p) {
                self.v.swap(i, p);
                i = p;
            } else {
                break;
            }
        }
    }

    fn sift_up_max(&mut self, mut i: usize) {
        while i >= 2 {
            let p = ((i / 2 - 1) / 2) * 2 + 1;
            if self.less(p, i) {
                self.v.swap(i, p);
                i = p;
            } else {
                break;
            }
        }
    }

    fn sift_down_min(&mut self, mut i: usize) {
        let n = self.v.len();
        loop {
            let node = i / 2;
            let (c1, c2) = (2 * node + 1, 2 * node + 2);
            let mut best = i;
            for c in [c1, c2] {
                if 2 * c < n && self.less(2 * c, best) {
                    best = 2 * c;
                }
            }
            if best == i {
                return;
            }
            self.v.swap(i, best);
            i = best;
            if i + 1 < n && self.less(i + 1, i) {
                self.v.swap(i, i + 1);
            }
        }
    }

    fn sift_down_max(&mut self, mut i: usize) {
        let n = self.v.len();
        loop {
            let node = i / 2;
            let mut best = i;
            for c in [2 * node + 1, 2 * node + 2] {
                // A last node with one element stores it in its low slot.
                let slot = if 2 * c + 1 < n { 2 * c + 1 } else { 2 * c };
                if slot < n && self.less(best, slot) {
                    best = slot;
                }
            }
            if best == i {
                return;
            }
            self.v.swap(i, best);
            i = best;
            if i % 2 == 1 && self.less(i, i - 1) {
                self.v.swap(i, i - 1);
            }
        }
    }
}

impl Depq for IntervalHeap {
    type Store = ();

    fn empty() -> Self {
        Self::default()
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    fn push(&mut self, _: &mut (), e: Event) {
        self.v.push(e);
        let i = self.v.len() - 1;
        if i % 2 == 1 {
            if self.less(i, i - 1) {
                self.v.swap(i, i - 1);
                self.sift_up_min(i - 1);
            } else {
                self.sift_up_max(i);
            }
        } else if i >= 2 {
            let p = ((i / 2 - 1) / 2) * 2;
            if self.less(i, p) {
                self.sift_up_min(i);
            } else if self.less(p + 1, i) {
                self.v.swap(i, p + 1);
                self.sift_up_max(p + 1);
            }
        }
    }

    fn peek_min(&mut self, _: &mut ()) -> Option<Event> {
        self.v.first().copied()
    }

    fn peek_max(&mut self, _: &mut ()) -> Option<Event> {
        match self.v.len() {
            0 => None,
            1 => Some(self.v[0]),
            _ => Some(self.v[1]),
        }
    }

    fn pop_min(&mut self, _: &mut ()) -> Option<Event> {
        if self.v.is_empty() {
            return None;
        }
        let top = self.v.swap_remove(0);
        if !self.v.is_empty() {
            if self.v.len() > 1 && self.less(1, 0) {
                self.v.swap(0, 1);
            }
            self.sift_down_min(0);
        }
        Some(top)
    }

    fn pop_max(&mut self, _: &mut ()) -> Option<Event> {
        match self.v.len() {
            0 => None,
            1 => self.v.pop(),
            _ => {
                let top = self.v.swap_remove(1);
                if self.v.len() > 1 {
                    if self.less(1, 0) {
                        self.v.swap(0, 1);
                    }
                    self.sift_down_max(1);
                }
                Some(top)
            }
        }
    }

    fn meld(&mut self, st: &mut (), mut other: Self) {
        if other.v.len() > self.v.len() {
            std::mem::swap(self, &mut other);
        }
        for e in other.v {
            self.push(st, e);
        }
    }

    fn events(&self, _: &()) -> Vec<Event> {
        self.v.clone()
    }
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Slot {
    ev: Event,
    alive: bool,
    /// `[min-heap, max-heap]` first child and next sibling links.
    child: [u32; 2],
    next: [u32; 2],
}

/// Arena shared by every [`PairingPair`] of one solve.
#[derive(Debug, Default)]
pub struct PairingArena {
    slots: Vec<Slot>,
    buf: Vec<u32>,
}

impl PairingArena {
    /// Whether `a` should sit above `b` in heap `h` (0 = min, 1 = max).
    fn wins(&self, h: usize, a: u32, b: u32) -> bool {
        let (ea, eb) = (&self.slots[a as usize].ev, &self.slots[b as usize].ev);
        let ord = cmp_at(ea, eb).then(a.cmp(&b));
        if h == 0 {
            ord == Ordering::Less
        } else {
            ord == Ordering::Greater
        }
    }

    fn link(&mut self, h: usize, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        let (top, sub) = if self.wins(h, a, b) { (a, b) } else { (b, a) };
        self.slots[sub as usize].next[h] = self.slots[top as usize].child[h];
        self.slots[top as usize].child[h] = sub;
        top
    }

    /// Removes `root` from heap `h` and returns the new root (two-pass pairing).
    fn delete_root(&mut self, h: usize, root: u32) -> u32 {
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        let mut c = self.slots[root as usize].child[h];
        while c != NIL {
            let nx = self.slots[c as usize].next[h];
            self.slots[c as usize].next[h] = NIL;
            buf.push(c);
            c = nx;
        }
        self.slots[root as usize].child[h] = NIL;
        let mut paired = Vec::with_capacity(buf.len() / 2 + 1);
        for pair in buf.chunks(2) {
            let merged = if pair.len() == 2 { self.link(h, pair[0], pair[1]) } else { pair[0] };
            paired.push(merged);
        }
        let mut acc = NIL;
        for &r in paired.iter().rev() {
            acc = self.link(h, acc, r);
        }
        self.buf = buf;
        acc
    }
}

/// Min and max pairing heaps over the same elements, with lazy deletion.
#[derive(Debug, Clone, Copy)]
pub struct PairingPair {
    roots: [u32; 2],
    live: usize,
}

impl PairingPair {
    fn clean(&mut self, store: &mut PairingArena, h: usize) {
        while self.roots[h] != NIL && !store.slots[self.roots[h] as usize].alive {
            self.roots[h] = store.delete_root(h, self.roots[h]);
        }
    }

    fn peek(&mut self, store: &mut PairingArena, h: usize) -> Option<Event> {
        self.clean(store, h);
        (self.roots[h] != NIL).then(|| store.slots[self.roots[h] as usize].ev)
    }

    fn pop(&mut self, store: &mut PairingArena, h: usize) -> Option<Event> {
        self.clean(store, h);
        let r = self.roots[h];
        if r == NIL {
            return None;
        }
        store.slots[r as usize].alive = false;
        self.roots[h] = store.delete_root(h, r);
        self.live -= 1;
        if self.live == 0 {
            // Drop the stale copies still referenced by the other heap.
            self.roots = [NIL, NIL];
        }
        Some(store.slots[r as usize].ev)
    }

    fn collect(&self, store: &PairingArena, out: &mut Vec<Event>) {
        let mut stack = vec![self.roots[0]];
        while let Some(v) = stack.pop() {
            if v == NIL {
                continue;
            }
            let s = &store.slots[v as usize];
            if s.alive {
                out.push(s.ev);
            }
            stack.push(s.child[0]);
            stack.push(s.next[0]);
        }
    }
}

impl Depq for PairingPair {
    type Store = PairingArena;

    fn empty() -> Self {
        Self { roots: [NIL, NIL], live: 0 }
    }

    fn len(&self) -> usize {
        self.live
    }

    fn push(&mut self, store: &mut PairingArena, e: Event) {
        let id = u32::try_from(store.slots.len()).expect("pairing arena exceeds u32 indices");
        store.slots.push(Slot { ev: e, alive: true, child: [NIL, NIL], next: [NIL, NIL] });
        self.roots[0] = store.link(0, self.roots[0], id);
        self.roots[1] = store.link(1, self.roots[1], id);
        self.live += 1;
    }

    fn peek_min(&mut self, store: &mut PairingArena) -> Option<Event> {
        self.peek(store, 0)
    }

    fn peek_max(&mut self, store: &mut PairingArena) -> Option<Event> {
        self.peek(store, 1)
    }

    fn pop_min(&mut self, store: &mut PairingArena) -> Option<Event> {
        self.pop(store, 0)
    }

    fn pop_max(&mut self, store: &mut PairingArena) -> Option<Event> {
        self.pop(store, 1)
    }

    fn meld(&mut self, store: &mut PairingArena, other: Self) {
        if other.live == 0 {
            return;
        }
        if self.live == 0 {
            *self = other;
            return;
        }
        for h in 0..2 {
            self.roots[h] = store.link(h, self.roots[h], other.roots[h]);
        }
        self.live += other.live;
    }

    fn events(&self, store: &PairingArena) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.live);
        self.collect(store, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random push/pop/meld script checked against a sorted vector.
    fn exercise<Q: Depq>(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Q::Store::default();
        let mut queues: Vec<(Q, Vec<f64>)> = (0..4).map(|_| (Q::empty(), Vec::new())).collect();
        for _ in 0..3000 {
            let k = rng.gen_range(0..queues.len());
            match rng.gen_range(0..10) {
                0..=3 => {
                    let at = (rng.gen_range(0..50) as f64) * 0.5;
                    queues[k].0.push(&mut store, Event::jump(at, 1.0));
                    queues[k].1.push(at);
                }
                4 | 5 => {
                    let (q, model) = &mut queues[k];
                    model.sort_by(f64::total_cmp);
                    assert_eq!(q.peek_min(&mut store).map(|e| e.at), model.first().copied());
                    let got = q.pop_min(&mut store).map(|e| e.at);
                    let want = if model.is_empty() { None } else { Some(model.remove(0)) };
                    assert_eq!(got, want);
                }
                6 | 7 => {
                    let (q, model) = &mut queues[k];
                    model.sort_by(f64::total_cmp);
                    assert_eq!(q.peek_max(&mut store).map(|e| e.at), model.last().copied());
                    assert_eq!(q.pop_max(&mut store).map(|e| e.at), model.pop());
                }
                _ => {
                    let j = rng.gen_range(0..queues.len());
                    if j != k {
                        let (q, model) = std::mem::replace(&mut queues[j], (Q::empty(), Vec::new()));
                        queues[k].0.meld(&mut store, q);
                        queues[k].1.extend(model);
                    }
                }
            }
            for (q, model) in &queues {
                assert_eq!(q.len(), model.len());
            }
        }
        for (q, model) in &queues {
            let mut got: Vec<f64> = q.events(&store).iter().map(|e| e.at).collect();
            let mut want = model.clone();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn interval_heap_matches_model() {
        for seed in 0..5 {
            exercise::<IntervalHeap>(seed);
        }
    }

    #[test]
    fn pairing_pair_matches_model() {
        for seed in 0..5 {
            exercise::<PairingPair>(seed);
        }
    }
}
