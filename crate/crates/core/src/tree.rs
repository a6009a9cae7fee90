//! Rooted trees, edge weights and the generic two-pass message-passing skeleton.
//!
//! Every non-root node `i` owns exactly one edge `(i, parent(i))`, so edge data
//! is stored in per-node arrays indexed by the child. Chains use
//! `parent(i) = i + 1` with root `n - 1`; edge `i` then joins `i` and `i + 1`.

use std::collections::VecDeque;

use crate::error::{Result, SolveError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    root: usize,
    /// Nodes in leaves-to-root order; the root comes last.
    order: Vec<usize>,
    child_start: Vec<usize>,
    child_list: Vec<usize>,
}

impl Tree {
    /// Builds a tree from a parent array (`None` marks the root).
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(SolveError::InvalidTree("tree has no nodes".into()));
        }
        let mut root = None;
        let mut degree = vec![0usize; n + 1];
        for (i, p) in parent.iter().enumerate() {
            match *p {
                None if root.is_some() => {
                    return Err(SolveError::InvalidTree(format!("nodes {} and {i} are both roots", root.unwrap())))
                }
                None => root = Some(i),
                Some(j) if j >= n => {
                    return Err(SolveError::InvalidTree(format!("node {i} has parent {j} outside 0..{n}")))
                }
                Some(j) if j == i => return Err(SolveError::InvalidTree(format!("node {i} is its own parent"))),
                Some(j) => degree[j + 1] += 1,
            }
        }
        let root = root.ok_or_else(|| SolveError::InvalidTree("no root (every node has a parent)".into()))?;
        for k in 0..n {
            degree[k + 1] += degree[k];
        }
        let child_start = degree;
        let mut fill = child_start.clone();
        let mut child_list = vec![0; n - 1];
        for (i, p) in parent.iter().enumerate() {
            if let Some(j) = *p {
                child_list[fill[j]] = i;
                fill[j] += 1;
            }
        }

        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(&child_list[child_start[v]..child_start[v + 1]]);
        }
        if order.len() != n {
            return Err(SolveError::InvalidTree(format!(
                "{} of {n} nodes are not connected to root {root} (cycle)",
                n - order.len()
            )));
        }
        order.reverse();
        Ok(Self { parent, root, order, child_start, child_list })
    }

    /// The chain `0 - 1 - … - (n-1)` rooted at `n - 1`.
    pub fn chain(n: usize) -> Self {
        assert!(n > 0, "chain needs at least one node");
        let parent = (0..n).map(|i| if i + 1 < n { Some(i + 1) } else { None }).collect();
        Self::from_parents(parent).expect("chain is a valid tree")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.child_list[self.child_start[i]..self.child_start[i + 1]]
    }

    /// Nodes ordered so that every child precedes its parent; the root is last.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_chain(&self) -> bool {
        self.parent.iter().enumerate().all(|(i, p)| match p {
            Some(j) => *j == i + 1,
            None => i + 1 == self.len(),
        })
    }

    /// `(child, parent)` pairs in leaves-to-root order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.order.iter().filter_map(move |&i| self.parent[i].map(|j| (i, j)))
    }
}

/// Convex edge terms `f_ij(z) = w⁻ z` for `z < 0` and `w⁺ z` for `z ≥ 0`,
/// applied to `z = x_parent - x_child`. Arrays are indexed by child node;
/// the root entry is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexWeights {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ConvexWeights {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(SolveError::InvalidInput("weight arrays differ in length".into()));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(SolveError::InvalidInput(format!("edge {k}: need finite w⁻ ≤ w⁺, got ({a}, {b})")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric weights `w |z|`.
    pub fn symmetric(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&v| !(v >= 0.0)) {
            return Err(SolveError::InvalidInput("weights must be non-negative".into()));
        }
        Self::new(w.iter().map(|v| -v).collect(), w)
    }

    pub fn uniform(n: usize, w: f64) -> Result<Self> {
        Self::symmetric(vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// Edge term value for the edge owned by `child`.
    pub fn edge_cost(&self, child: usize, z: f64) -> f64 {
        if z < 0.0 {
            self.lo[child] * z
        } else {
            self.hi[child] * z
        }
    }
}

/// Truncated edge terms `min(w |z|, C)`; `C = +∞` gives plain TV.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedWeights {
    pub w: Vec<f64>,
    pub cap: Vec<f64>,
}

impl TruncatedWeights {
    pub fn new(w: Vec<f64>, cap: Vec<f64>) -> Result<Self> {
        if w.len() != cap.len() {
            return Err(SolveError::InvalidInput("weight arrays differ in length".into()));
        }
        for (k, (a, c)) in w.iter().zip(&cap).enumerate() {
            if !(a.is_finite() && *a >= 0.0) || !(*c > 0.0) {
                return Err(SolveError::InvalidInput(format!("edge {k}: need w ≥ 0 and C > 0, got ({a}, {c})")));
            }
        }
        Ok(Self { w, cap })
    }

    pub fn uniform(n: usize, w: f64, cap: f64) -> Result<Self> {
        Self::new(vec![w; n], vec![cap; n])
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn edge_cost(&self, child: usize, z: f64) -> f64 {
        (self.w[child] * z.abs()).min(self.cap[child])
    }
}

/// Per-solver callbacks driven by [`dp_solve`].
pub trait MessageOps {
    /// Message flowing along an edge.
    type Msg;
    /// Back-pointer recorded per edge.
    type Back;

    /// Combines node `i`'s unary with the messages of its children.
    fn accumulate(&mut self, i: usize, incoming: Vec<Self::Msg>) -> Result<Self::Msg>;

    /// Min-convolves the accumulated message of `child` with its edge term.
    fn edge(&mut self, child: usize, msg: Self::Msg) -> Result<(Self::Msg, Self::Back)>;

    /// Lowest minimizer of the accumulated root message.
    fn root_argmin(&mut self, root: usize, msg: Self::Msg) -> Result<f64>;

    /// Optimal `x_child` given the parent's value.
    fn backtrack(&mut self, child: usize, back: &Self::Back, x_parent: f64) -> f64;
}

/// Forward pass in leaves-to-root order, then backtracking from the root.
pub fn dp_solve<O: MessageOps>(tree: &Tree, ops: &mut O) -> Result<Vec<f64>> {
    let n = tree.len();
    let mut pending: Vec<Vec<O::Msg>> = (0..n).map(|_| Vec::new()).collect();
    let mut backs: Vec<Option<O::Back>> = (0..n).map(|_| None).collect();
    let mut x = vec![0.0; n];
    for &i in tree.order() {
        let incoming = std::mem::take(&mut pending[i]);
        let msg = ops.accumulate(i, incoming)?;
        match tree.parent(i) {
            Some(j) => {
                let (out, back) = ops.edge(i, msg)?;
                pending[j].push(out);
                backs[i] = Some(back);
            }
            None => x[i] = ops.root_argmin(i, msg)?,
        }
    }
    for &i in tree.order().iter().rev() {
        if let Some(j) = tree.parent(i) {
            let back = backs[i].take().expect("every non-root node has a back-pointer");
            x[i] = ops.backtrack(i, &back, x[j]);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_order_is_left_to_right() {
        let t = Tree::chain(4);
        assert_eq!(t.order(), &[0, 1, 2, 3]);
        assert_eq!(t.root(), 3);
        assert!(t.is_chain());
        assert_eq!(t.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn children_precede_parents() {
        let t = Tree::from_parents(vec![Some(2), Some(2), None, Some(0), Some(0), Some(1)]).unwrap();
        let pos: Vec<usize> = (0..6).map(|v| t.order().iter().position(|&u| u == v).unwrap()).collect();
        for (i, j) in t.edges() {
            assert!(pos[i] < pos[j]);
        }
        assert_eq!(t.children(0), &[3, 4]);
        assert_eq!(*t.order().last().unwrap(), 2);
    }

    #[test]
    fn rejects_invalid_topologies() {
        assert!(Tree::from_parents(vec![]).is_err());
        assert!(Tree::from_parents(vec![None, None]).is_err());
        assert!(Tree::from_parents(vec![Some(1), Some(0)]).is_err());
        assert!(Tree::from_parents(vec![Some(1), Some(0), None]).is_err());
        assert!(Tree::from_parents(vec![Some(0), None]).is_err());
        assert!(Tree::from_parents(vec![Some(5), None]).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(ConvexWeights::new(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexWeights::symmetric(vec![-1.0]).is_err());
        assert!(TruncatedWeights::new(vec![1.0], vec![0.0]).is_err());
        assert!(TruncatedWeights::new(vec![1.0], vec![f64::INFINITY]).is_ok());
        let w = ConvexWeights::new(vec![-1.0], vec![2.0]).unwrap();
        assert_eq!(w.edge_cost(0, -3.0), 3.0);
        assert_eq!(w.edge_cost(0, 3.0), 6.0);
    }
}
