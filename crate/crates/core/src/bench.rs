//! Seeded instance generators and the scaling benchmark.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dnc::{solve_fast, solve_hochbaum};
use crate::error::{invalid, Result};
use crate::nonconvex::solve_nonconvex;
use crate::pwl::PwlFunc;
use crate::quad_chain::{solve_quad_chain_into, QuadChainOptions, QuadChainScratch};
use crate::tree::{ConvexWeights, Tree, TruncatedWeights};

pub const DEFAULT_SEED: u64 = 42;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One period of a sine on `[0, 1)` plus Gaussian noise.
pub fn noisy_sine(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n)
        .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin() + noise.sample(&mut r))
        .collect()
}

/// Piecewise-constant signal with four levels plus Gaussian noise.
pub fn noisy_steps(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let levels = [0.0, 1.0, 0.3, 0.8];
    (0..n).map(|k| levels[4 * k / n.max(1)] + noise.sample(&mut r)).collect()
}

/// Random convex unary with up to `max_breaks` breakpoints on a quarter grid
/// in `[-5, 5]` and outer slopes of magnitude above `outer`. Anchored at 0.
pub fn random_convex_pwl<R: Rng>(r: &mut R, max_breaks: usize, outer: f64) -> PwlFunc {
    let t = r.gen_range(0..=max_breaks);
    if t == 0 {
        // Linear unaries cannot be coercive; use a kink instead.
        return random_kink(r, outer);
    }
    let mut breaks: Vec<f64> = (0..t).map(|_| r.gen_range(-20..=20) as f64 * 0.25).collect();
    breaks.sort_by(f64::total_cmp);
    let mut slopes = vec![-outer - r.gen_range(0.0..2.0)];
    for _ in 1..t {
        let s = *slopes.last().unwrap() + r.gen_range(0.0..2.0 * outer);
        slopes.push(s);
    }
    let last = slopes.last().unwrap().max(0.0);
    slopes.push(last + outer + r.gen_range(0.0..2.0));
    PwlFunc::new(slopes, breaks).expect("valid unary").with_anchor(0.0, 0.0)
}

fn random_kink<R: Rng>(r: &mut R, outer: f64) -> PwlFunc {
    let c = r.gen_range(-20..=20) as f64 * 0.25;
    PwlFunc::new(vec![-outer - r.gen_range(0.0..2.0), outer + r.gen_range(0.0..2.0)], vec![c])
        .expect("valid unary")
        .with_anchor(0.0, 0.0)
}

/// Random asymmetric weights with `|w| ≤ 1` and `w⁻ ≤ w⁺`; some edges are
/// tilts (`w⁻ = w⁺`), some symmetric.
pub fn random_convex_weights<R: Rng>(r: &mut R, len: usize) -> ConvexWeights {
    let mut lo = Vec::with_capacity(len);
    let mut hi = Vec::with_capacity(len);
    for _ in 0..len {
        let (a, b) = match r.gen_range(0..4) {
            0 => {
                let w = r.gen_range(-1.0..1.0);
                (w, w)
            }
            1 => {
                let w = r.gen_range(0.0..1.0);
                (-w, w)
            }
            _ => {
                let a: f64 = r.gen_range(-1.0..1.0);
                let b: f64 = r.gen_range(-1.0..1.0);
                (a.min(b), a.max(b))
            }
        };
        lo.push(a);
        hi.push(b);
    }
    ConvexWeights::new(lo, hi).expect("valid weights")
}

/// Coercive convex chain instance with chain-style weights (length `n - 1`).
pub fn random_convex_chain(seed: u64, n: usize, max_breaks: usize) -> (Vec<PwlFunc>, ConvexWeights) {
    let mut r = rng(seed);
    let unaries = (0..n).map(|_| random_convex_pwl(&mut r, max_breaks, 2.5)).collect();
    let weights = random_convex_weights(&mut r, n.saturating_sub(1));
    (unaries, weights)
}

/// Random tree with node 0 as root and parents drawn among earlier nodes.
pub fn random_tree<R: Rng>(r: &mut R, n: usize) -> Tree {
    let parent = (0..n).map(|i| if i == 0 { None } else { Some(r.gen_range(0..i)) }).collect();
    Tree::from_parents(parent).expect("valid tree")
}

/// Random truncated-TV tree instance: unaries are sums of 1 to 3 weighted
/// absolute values on a half grid in `[-3, 3]`; caps are finite or infinite.
pub fn random_truncated_tree(seed: u64, n: usize) -> (Tree, Vec<PwlFunc>, TruncatedWeights) {
    let mut r = rng(seed);
    let tree = random_tree(&mut r, n);
    let unaries = (0..n)
        .map(|_| {
            let k = r.gen_range(1..=3);
            let parts: Vec<PwlFunc> = (0..k)
                .map(|_| PwlFunc::abs(r.gen_range(-6..=6) as f64 * 0.5, r.gen_range(0.2..2.0)))
                .collect();
            let refs: Vec<&PwlFunc> = parts.iter().collect();
            PwlFunc::sum_many(&refs)
        })
        .collect();
    let w = (0..n).map(|_| r.gen_range(0.0..2.0)).collect();
    let cap = (0..n)
        .map(|_| if r.gen_bool(0.3) { f64::INFINITY } else { r.gen_range(0.2..3.0) })
        .collect();
    (tree, unaries, TruncatedWeights::new(w, cap).expect("valid weights"))
}

/// Two-level image with a brighter square, plus Gaussian noise.
pub fn noisy_step_image(rows: usize, cols: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut v = if j < cols / 2 { 0.2 } else { 0.7 };
            if (rows / 4..rows / 2).contains(&i) && (cols / 4..3 * cols / 4).contains(&j) {
                v = 1.0;
            }
            out.push(v + noise.sample(&mut r));
        }
    }
    out
}

/// Replaces a fraction of the pixels by 0 or 1.
pub fn salt_and_pepper(image: &[f64], fraction: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    image
        .iter()
        .map(|&v| if r.gen_bool(fraction) { if r.gen_bool(0.5) { 1.0 } else { 0.0 } } else { v })
        .collect()
}

/// Synthetic stereo matching costs on disparities `0..labels`: a background
/// plane and two fronto-parallel boxes, truncated linear costs with noise
/// and 10% outlier pixels. Returns the row-major unaries and the true
/// disparities.
pub fn stereo_fixture(rows: usize, cols: usize, labels: usize, seed: u64) -> (Vec<PwlFunc>, Vec<f64>) {
    let mut r = rng(seed);
    let top = (labels - 1) as f64;
    let knots: Vec<f64> = (0..labels).map(|d| d as f64).collect();
    let mut unaries = Vec::with_capacity(rows * cols);
    let mut truth = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut d = (0.15 * top + 0.2 * top * j as f64 / cols as f64).round();
            if (rows / 5..3 * rows / 5).contains(&i) && (cols / 6..cols / 2).contains(&j) {
                d = (0.7 * top).round();
            }
            if (rows / 2..9 * rows / 10).contains(&i) && (3 * cols / 5..9 * cols / 10).contains(&j) {
                d = (0.45 * top).round();
            }
            let outlier = r.gen_bool(0.1);
            let ys: Vec<f64> = knots
                .iter()
                .map(|&k| {
                    if outlier {
                        r.gen_range(0.0..3.0)
                    } else {
                        (k - d).abs().min(3.0) + r.gen_range(0.0..0.5)
                    }
                })
                .collect();
            unaries.push(PwlFunc::interpolate(&knots, &ys, -5.0, 5.0).expect("increasing knots"));
            truth.push(d);
        }
    }
    (unaries, truth)
}

/// FNV-1a over the bit patterns of the given values.
pub fn instance_hash<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchSolver {
    /// Quadratic unaries, `w = n/500`.
    Quad,
    /// `|x - f_i|` unaries solved by the median-pivot recursion, `w = 200/n`.
    Pwl,
    /// Same instances solved by the contraction algorithm.
    PwlFast,
    /// Same instances through the breakpoint DP with `C = ∞`.
    Nonconvex,
}

impl std::str::FromStr for BenchSolver {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quad" => Ok(Self::Quad),
            "pwl" => Ok(Self::Pwl),
            "pwl-fast" => Ok(Self::PwlFast),
            "nonconvex" => Ok(Self::Nonconvex),
            _ => Err(format!("unknown solver '{s}' (expected quad, pwl, pwl-fast or nonconvex)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub median_seconds: f64,
    pub instance_hash: u64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Times `reps` solves per size on the noisy sine instance seeded by `seed`.
pub fn run_scaling_bench(solver: BenchSolver, sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return invalid("need at least one repetition");
    }
    if sizes.iter().any(|&n| n < 2) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("sizes must be ascending and at least 2");
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let f = noisy_sine(n, 0.1, seed);
        let hash = instance_hash(&f);
        let mut times = Vec::with_capacity(reps);
        match solver {
            BenchSolver::Quad => {
                let w = n as f64 / 500.0;
                let (a, lo, hi) = (vec![1.0; n], vec![-w; n - 1], vec![w; n - 1]);
                let mut scratch = QuadChainScratch::new();
                let mut x = vec![0.0; n];
                for _ in 0..reps {
                    let t = Instant::now();
                    solve_quad_chain_into(&a, &f, &lo, &hi, &mut scratch, QuadChainOptions::default(), &mut x)?;
                    times.push(t.elapsed().as_secs_f64());
                }
            }
            BenchSolver::Pwl | BenchSolver::PwlFast | BenchSolver::Nonconvex => {
                let w = 200.0 / n as f64;
                let unaries: Vec<PwlFunc> = f.iter().map(|&c| PwlFunc::abs(c, 1.0)).collect();
                for _ in 0..reps {
                    let t = Instant::now();
                    match solver {
                        BenchSolver::Pwl => {
                            solve_hochbaum(&unaries, &ConvexWeights::uniform(n - 1, w)?)?;
                        }
                        BenchSolver::PwlFast => {
                            solve_fast(&unaries, &ConvexWeights::uniform(n - 1, w)?, None)?;
                        }
                        _ => {
                            let tw = TruncatedWeights::uniform(n - 1, w, f64::INFINITY)?;
                            solve_nonconvex(&Tree::chain(n), &unaries, &tw)?;
                        }
                    }
                    times.push(t.elapsed().as_secs_f64());
                }
            }
        }
        rows.push(BenchRow { n, median_seconds: median(times), instance_hash: hash });
    }
    Ok(rows)
}

/// Least-squares slope of `log t` against `log n`.
pub fn loglog_slope(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), r.median_seconds.max(1e-12).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,median_seconds,instance_hash\n");
    for r in rows {
        s.push_str(&format!("{},{:.12e},{:016x}\n", r.n, r.median_seconds, r.instance_hash));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_row_positive_time() {
        let rows = run_scaling_bench(BenchSolver::Quad, &[1000], 1, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].median_seconds > 0.0);
    }

    #[test]
    fn instances_are_seeded() {
        assert_eq!(noisy_sine(100, 0.1, 3), noisy_sine(100, 0.1, 3));
        assert_ne!(noisy_sine(100, 0.1, 3), noisy_sine(100, 0.1, 4));
        let (u1, w1) = random_convex_chain(9, 20, 3);
        let (u2, w2) = random_convex_chain(9, 20, 3);
        assert_eq!(u1, u2);
        assert_eq!(w1, w2);
    }

    #[test]
    fn slope_of_linear_times() {
        let rows: Vec<BenchRow> =
            (10..14).map(|k| BenchRow { n: 1 << k, median_seconds: (1 << k) as f64 * 1e-9, instance_hash: 0 }).collect();
        assert!((loglog_slope(&rows) - 1.0).abs() < 1e-12);
    }
}
