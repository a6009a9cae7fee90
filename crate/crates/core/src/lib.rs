//! Exact solvers for total-variation energies on chains and trees.

pub mod bench;
pub mod convex_tree;
pub mod depq;
pub mod dnc;
pub mod error;
pub mod nonconvex;
pub mod oracle;
pub mod pwl;
pub mod prox2d;
pub mod pwq;
pub mod quad_chain;
pub mod tree;

pub use error::{Result, SolveError};
pub use pwl::{Anchor, PwlFunc};
pub use tree::{ConvexWeights, Tree, TruncatedWeights};
