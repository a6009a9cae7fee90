//! Linear-time weighted TV on a chain with strictly convex quadratic unaries
//! `f_i(x) = ½ a_i x² - b_i x`.
//!
//! The derivative message is kept as an interleaved array
//! `(s_0, λ_1, s_1, …, λ_t, s_t)` whose slopes are stored relative to the
//! running sum `ā_i = a_1 + … + a_i`, so adding a unary only updates `ā`.
//! Clipping removes breakpoints from both ends and appends two new ones.

use crate::error::{invalid, Result};

/// Instrumentation from one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadChainStats {
    pub appended: usize,
    pub removed: usize,
    /// Working floats held at once: message array plus recorded clip intervals.
    pub peak_floats: usize,
}

/// Reusable working memory; repeated solves of the same length allocate nothing.
#[derive(Debug, Default, Clone)]
pub struct QuadChainScratch {
    seq: Vec<f64>,
    lam_lo: Vec<f64>,
    lam_hi: Vec<f64>,
}

impl QuadChainScratch {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QuadChainOptions {
    /// Store `λ⁻` in the output array instead of a separate buffer.
    pub compact: bool,
}

/// Solves `min Σ ½a_i x_i² - b_i x_i + Σ f_i(x_{i+1} - x_i)` where
/// `f_i(z) = lo[i]·z` for `z < 0` and `hi[i]·z` otherwise.
pub fn solve_quad_chain(a: &[f64], b: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; a.len()];
    solve_quad_chain_into(a, b, lo, hi, &mut QuadChainScratch::new(), QuadChainOptions::default(), &mut x)?;
    Ok(x)
}

pub fn solve_quad_chain_into(
    a: &[f64],
    b: &[f64],
    lo: &[f64],
    hi: &[f64],
    scratch: &mut QuadChainScratch,
    opts: QuadChainOptions,
    x: &mut [f64],
) -> Result<QuadChainStats> {
    let n = a.len();
    if n == 0 {
        return invalid("empty chain");
    }
    if b.len() != n || x.len() != n {
        return invalid(format!("expected {n} entries in b and x"));
    }
    if lo.len() + 1 != n || hi.len() + 1 != n {
        return invalid(format!("expected {} edge weights", n - 1));
    }
    if let Some(i) = a.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return invalid(format!("quadratic coefficient a[{i}] = {} must be positive", a[i]));
    }
    if let Some(k) = (0..n - 1).find(|&k| !(lo[k] <= hi[k])) {
        return invalid(format!("edge {k}: w⁻ = {} exceeds w⁺ = {}", lo[k], hi[k]));
    }

    let cap = 4 * n + 4;
    let seq = &mut scratch.seq;
    seq.clear();
    seq.resize(cap, 0.0);
    let lam_hi = &mut scratch.lam_hi;
    lam_hi.clear();
    lam_hi.resize(n - 1, 0.0);
    let lam_lo_buf = &mut scratch.lam_lo;
    lam_lo_buf.clear();
    if !opts.compact {
        lam_lo_buf.resize(n - 1, 0.0);
    }
    let mut stats = QuadChainStats {
        appended: 0,
        removed: 0,
        peak_floats: cap + 2 * (n - 1) - if opts.compact { n - 1 } else { 0 },
    };

    if n == 1 {
        x[0] = b[0] / a[0];
        stats.appended = 2;
        return Ok(stats);
    }

    // First edge: the clipped message of a single linear derivative.
    let mut abar = a[0];
    let l0 = (lo[0] + b[0]) / a[0];
    let h0 = (hi[0] + b[0]) / a[0];
    let mut first = 2 * n - 2;
    let mut last = first + 4;
    seq[first..=last].copy_from_slice(&[-abar, l0, 0.0, h0, -abar]);
    record(lam_lo_buf, x, opts.compact, 0, l0);
    lam_hi[0] = h0;
    stats.appended += 2;

    for i in 1..n {
        let (w_lo, w_hi) = if i + 1 < n { (lo[i], hi[i]) } else { (0.0, 0.0) };
        let (prev_lo, prev_hi) = (lo[i - 1], hi[i - 1]);
        abar += a[i];
        let t = (last - first) / 2;
        let lam = |p: usize| seq[first + 2 * p - 1];
        let slope = |p: usize| seq[first + 2 * p] + abar;

        // Largest ell with m(λ_ell) < w⁻, scanning from the left.
        let mut ell = 0;
        let mut v = prev_lo + a[i] * lam(1) - b[i];
        let mut v_ell = v;
        while v < w_lo {
            ell += 1;
            v_ell = v;
            if ell == t {
                break;
            }
            v += slope(ell) * (lam(ell + 1) - lam(ell));
        }
        let new_lo = if ell == 0 {
            lam(1) - (v - w_lo) / slope(0)
        } else {
            lam(ell) + (w_lo - v_ell) / slope(ell)
        };

        // Smallest r > ell with m(λ_r) > w⁺, scanning from the right;
        // v tracks m(λ_{r-1}).
        let mut r = t + 1;
        let mut v = prev_hi + a[i] * lam(t) - b[i];
        let mut v_r = v;
        while r - 1 > ell && v > w_hi {
            r -= 1;
            v_r = v;
            if r - 1 > ell {
                v -= slope(r - 1) * (lam(r) - lam(r - 1));
            }
        }
        let new_hi = if r <= t {
            lam(r) - (v_r - w_hi) / slope(r - 1)
        } else if ell < t {
            lam(t) + (w_hi - v) / slope(t)
        } else {
            new_lo + (w_hi - w_lo) / slope(t)
        };

        stats.appended += 2;
        stats.removed += ell + (t + 1 - r);
        if i + 1 == n {
            x[n - 1] = new_lo;
            break;
        }
        record(lam_lo_buf, x, opts.compact, i, new_lo);
        lam_hi[i] = new_hi;

        let s_r = first + 2 * (r - 1);
        let new_first = first + 2 * ell - 2;
        seq[new_first] = -abar;
        seq[new_first + 1] = new_lo;
        seq[s_r + 1] = new_hi;
        seq[s_r + 2] = -abar;
        first = new_first;
        last = s_r + 2;
        debug_assert!(last < cap);
    }

    for i in (0..n - 1).rev() {
        let l = if opts.compact { x[i] } else { lam_lo_buf[i] };
        x[i] = x[i + 1].clamp(l, lam_hi[i]);
    }
    debug_assert!(stats.removed <= stats.appended);
    Ok(stats)
}

fn record(buf: &mut [f64], x: &mut [f64], compact: bool, i: usize, v: f64) {
    if compact {
        x[i] = v;
    } else {
        buf[i] = v;
    }
}

/// `Σ ½a_i x_i² - b_i x_i + Σ f_i(x_{i+1} - x_i)`.
pub fn quad_chain_energy(a: &[f64], b: &[f64], lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    let unary: f64 = (0..x.len()).map(|i| 0.5 * a[i] * x[i] * x[i] - b[i] * x[i]).sum();
    let pair: f64 = (0..x.len().saturating_sub(1))
        .map(|i| {
            let z = x[i + 1] - x[i];
            if z < 0.0 {
                lo[i] * z
            } else {
                hi[i] * z
            }
        })
        .sum();
    unary + pair
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        assert_eq!(solve_quad_chain(&[2.0], &[3.0], &[], &[]).unwrap(), vec![1.5]);
    }

    #[test]
    fn zero_weights_decouple() {
        let a = [1.0, 2.0, 4.0, 0.5];
        let b = [1.0, -1.0, 2.0, 3.0];
        let x = solve_quad_chain(&a, &b, &[0.0; 3], &[0.0; 3]).unwrap();
        for i in 0..4 {
            assert!((x[i] - b[i] / a[i]).abs() < 1e-15);
        }
    }

    /// Stationary point for each sign of `x₂ - x₁`; the consistent one wins.
    fn kkt_two_nodes(a: [f64; 2], b: [f64; 2], lo: f64, hi: f64) -> [f64; 2] {
        let up = [(b[0] + hi) / a[0], (b[1] - hi) / a[1]];
        if up[1] > up[0] {
            return up;
        }
        let down = [(b[0] + lo) / a[0], (b[1] - lo) / a[1]];
        if down[1] < down[0] {
            return down;
        }
        let v = (b[0] + b[1]) / (a[0] + a[1]);
        [v, v]
    }

    #[test]
    fn two_nodes_against_kkt_enumeration() {
        let x = solve_quad_chain(&[1.0, 1.0], &[0.0, 2.0], &[-1.0], &[1.0]).unwrap();
        let want = kkt_two_nodes([1.0, 1.0], [0.0, 2.0], -1.0, 1.0);
        assert!((x[0] - want[0]).abs() <= 1e-10 && (x[1] - want[1]).abs() <= 1e-10, "{x:?} vs {want:?}");
        for (a, b, lo, hi) in [
            ([2.0, 0.5], [3.0, -1.0], -0.2, 0.4),
            ([1.0, 3.0], [-2.0, 5.0], -4.0, 0.1),
            ([0.7, 0.7], [1.0, 1.0], -0.3, -0.1),
        ] {
            let x = solve_quad_chain(&a, &b, &[lo], &[hi]).unwrap();
            let want = kkt_two_nodes(a, b, lo, hi);
            assert!((x[0] - want[0]).abs() <= 1e-10 && (x[1] - want[1]).abs() <= 1e-10, "{x:?} vs {want:?}");
        }
    }

    #[test]
    fn equal_weights_force_fixed_derivative() {
        // w⁻ = w⁺ = 0.5 makes the edge a linear tilt.
        let x = solve_quad_chain(&[1.0, 1.0], &[0.0, 0.0], &[0.5], &[0.5]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] + 0.5).abs() < 1e-12, "{x:?}");
    }

    #[test]
    fn stats_and_compact_mode_agree() {
        let n = 50;
        let a: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let hi = vec![1.5; n - 1];
        let lo = vec![-0.5; n - 1];
        let mut s = QuadChainScratch::new();
        let mut x1 = vec![0.0; n];
        let mut x2 = vec![0.0; n];
        let st = solve_quad_chain_into(&a, &b, &lo, &hi, &mut s, QuadChainOptions::default(), &mut x1).unwrap();
        solve_quad_chain_into(&a, &b, &lo, &hi, &mut s, QuadChainOptions { compact: true }, &mut x2).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(st.appended, 2 * n);
        assert!(st.removed <= st.appended);
        assert!(st.peak_floats <= 6 * n + 16);
    }

    #[test]
    fn rejects_nonpositive_curvature() {
        assert!(solve_quad_chain(&[1.0, 0.0], &[0.0, 0.0], &[-1.0], &[1.0]).is_err());
        assert!(solve_quad_chain(&[1.0, 1.0], &[0.0, 0.0], &[1.0], &[-1.0]).is_err());
    }
}
