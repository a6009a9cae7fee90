//! 2D total-variation models solved by splitting into row and column chains.
//!
//! Rows and columns are independent 1D problems handed to the chain solvers
//! in parallel; a primal-dual loop couples them.

use std::time::Instant;

use rayon::prelude::*;

use crate::convex_tree::solve_convex_tree;
use crate::error::{invalid, Result, SolveError};
use crate::nonconvex::solve_nonconvex;
use crate::pwl::PwlFunc;
use crate::pwq::PwqFunc;
use crate::quad_chain::{solve_quad_chain_into, QuadChainOptions, QuadChainScratch};
use crate::tree::{ConvexWeights, Tree, TruncatedWeights};

/// Row-major `rows × cols` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("grid dimensions must be at least 1");
        }
        if data.len() != rows * cols {
            return invalid(format!("expected {} values for a {rows}×{cols} grid, got {}", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        assert!(rows > 0 && cols > 0);
        Self { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Grid2D {
        Grid2D { rows: self.cols, cols: self.rows, data: transpose(&self.data, self.rows, self.cols) }
    }

    fn zip_map(&self, other: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Grid2D {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Grid2D { rows: self.rows, cols: self.cols, data }
    }

    fn same_shape(&self, other: &Grid2D) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return invalid(format!(
                "grid shapes differ: {}×{} vs {}×{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        Ok(())
    }
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

/// Non-negative weights on horizontal edges (`rows × (cols-1)`) and vertical
/// edges (`(rows-1) × cols`), both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWeights {
    rows: usize,
    cols: usize,
    h: Vec<f64>,
    v: Vec<f64>,
}

impl GridWeights {
    pub fn new(rows: usize, cols: usize, h: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("grid dimensions must be at least 1");
        }
        if h.len() != rows * (cols - 1) || v.len() != (rows - 1) * cols {
            return invalid("edge weight arrays do not match the grid");
        }
        if h.iter().chain(&v).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return invalid("edge weights must be finite and non-negative");
        }
        Ok(Self { rows, cols, h, v })
    }

    pub fn uniform(rows: usize, cols: usize, w: f64) -> Result<Self> {
        Self::new(rows, cols, vec![w; rows * (cols - 1)], vec![w; (rows - 1) * cols])
    }

    /// Uniform horizontal weight `wh` and vertical weight `wv`.
    pub fn split(rows: usize, cols: usize, wh: f64, wv: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid("grid dimensions must be at least 1");
        }
        Self::new(rows, cols, vec![wh; rows * (cols - 1)], vec![wv; (rows - 1) * cols])
    }

    fn check(&self, g: &Grid2D) -> Result<()> {
        if (self.rows, self.cols) != (g.rows, g.cols) {
            return invalid("weights were built for a different grid size");
        }
        Ok(())
    }

    fn horizontal(&self) -> Lines {
        Lines::new(self.rows, self.cols, self.h.clone())
    }

    fn vertical(&self) -> Lines {
        Lines::new(self.cols, self.rows, transpose(&self.v, self.rows - 1, self.cols))
    }
}

/// A family of equal-length chains stored back to back.
#[derive(Debug, Clone)]
struct Lines {
    count: usize,
    len: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Lines {
    fn new(count: usize, len: usize, w: Vec<f64>) -> Self {
        Self { count, len, lo: w.iter().map(|v| -v).collect(), hi: w }
    }

    fn edges(&self, k: usize) -> (&[f64], &[f64]) {
        let m = self.len - 1;
        (&self.lo[k * m..(k + 1) * m], &self.hi[k * m..(k + 1) * m])
    }

    fn tv(&self, x: &[f64], cap: f64) -> f64 {
        x.par_chunks(self.len)
            .enumerate()
            .map(|(k, row)| {
                let (_, w) = self.edges(k);
                (0..self.len - 1).map(|i| (w[i] * (row[i + 1] - row[i]).abs()).min(w[i] * cap)).sum::<f64>()
            })
            .sum()
    }

    /// Row-wise `argmin TV(x) + ½a‖x‖² - ⟨b, x⟩`.
    fn quad(&self, a: f64, b: &[f64], out: &mut [f64]) {
        let av = vec![a; self.len];
        out.par_chunks_mut(self.len)
            .zip(b.par_chunks(self.len))
            .enumerate()
            .for_each_init(QuadChainScratch::new, |scratch, (k, (o, bb))| {
                let (lo, hi) = self.edges(k);
                solve_quad_chain_into(&av, bb, lo, hi, scratch, QuadChainOptions::default(), o)
                    .expect("quadratic line problem is well posed");
            });
    }

    fn convex_weights(&self) -> Vec<ConvexWeights> {
        (0..self.count)
            .map(|k| {
                let (lo, hi) = self.edges(k);
                ConvexWeights { lo: lo.to_vec(), hi: hi.to_vec() }
            })
            .collect()
    }
}

/// Horizontal plus vertical weighted TV (each difference capped at `w·cap`).
fn tv2d(x: &Grid2D, weights: &GridWeights, cap: f64) -> f64 {
    let h = weights.horizontal();
    let v = weights.vertical();
    let xt = transpose(&x.data, x.rows, x.cols);
    h.tv(&x.data, cap) + v.tv(&xt, cap)
}

/// `prox_{τ(TV_h + ½‖·-f‖²)}(ξ)`: every row is a quadratic chain with
/// curvature `1 + 1/τ` and target `(f + ξ/τ)/(1 + 1/τ)`.
pub fn prox_tv_quadratic_rows(xi: &Grid2D, f: &Grid2D, tau: f64, weights: &GridWeights) -> Result<Grid2D> {
    if !(tau > 0.0) {
        return invalid("τ must be positive");
    }
    xi.same_shape(f)?;
    weights.check(f)?;
    let b = f.zip_map(xi, |fv, xv| fv + xv / tau);
    let mut out = vec![0.0; b.data.len()];
    weights.horizontal().quad(1.0 + 1.0 / tau, &b.data, &mut out);
    Ok(Grid2D { rows: f.rows, cols: f.cols, data: out })
}

/// Column-wise `prox_{s⁻¹TV_v}(u) = argmin TV_v(x) + (s/2)‖x - u‖²`.
pub fn prox_tv_cols(u: &Grid2D, s: f64, weights: &GridWeights) -> Result<Grid2D> {
    if !(s > 0.0) {
        return invalid("scale must be positive");
    }
    weights.check(u)?;
    let b: Vec<f64> = transpose(&u.data, u.rows, u.cols).iter().map(|v| s * v).collect();
    let mut out = vec![0.0; b.len()];
    weights.vertical().quad(s, &b, &mut out);
    Ok(Grid2D { rows: u.rows, cols: u.cols, data: transpose(&out, u.cols, u.rows) })
}

/// `prox_{σTV_v*}(η) = η - σ·prox_{σ⁻¹TV_v}(η/σ)`.
pub fn prox_tv_conjugate_cols(eta: &Grid2D, sigma: f64, weights: &GridWeights) -> Result<Grid2D> {
    if !(sigma > 0.0) {
        return invalid("σ must be positive");
    }
    let scaled = Grid2D { rows: eta.rows, cols: eta.cols, data: eta.data.iter().map(|v| v / sigma).collect() };
    let p = prox_tv_cols(&scaled, sigma, weights)?;
    Ok(eta.zip_map(&p, |e, x| e - sigma * x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub k: usize,
    pub energy: f64,
    /// Lower bound on the optimal energy, `-∞` when unavailable.
    pub bound: f64,
    pub gap: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    entries: Vec<LogEntry>,
}

impl ConvergenceLog {
    pub fn push(&mut self, e: LogEntry) {
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    /// Running minimum of the energy.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.entries
            .iter()
            .map(|e| {
                best = best.min(e.energy);
                best
            })
            .collect()
    }

    /// CSV with header `k,energy,gap,seconds`. Times are left out when
    /// `with_times` is false so that repeated runs compare byte for byte.
    pub fn to_csv(&self, with_times: bool) -> String {
        let mut s = String::from("k,energy,gap,seconds\n");
        for e in &self.entries {
            let secs = if with_times { format!("{:.6e}", e.seconds) } else { "0".into() };
            s.push_str(&format!("{},{:.12e},{:.12e},{}\n", e.k, e.energy, e.gap, secs));
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PdOptions {
    pub iters: usize,
    pub accel: bool,
    /// Initial primal step; the dual step is `1/τ`.
    pub tau0: f64,
}

impl Default for PdOptions {
    fn default() -> Self {
        Self { iters: 100, accel: true, tau0: 1.0 }
    }
}

fn check_pd(opts: &PdOptions) -> Result<()> {
    if opts.iters == 0 {
        return invalid("need at least one iteration");
    }
    if !(opts.tau0 > 0.0) {
        return invalid("τ0 must be positive");
    }
    Ok(())
}

pub fn tvl2_energy(x: &Grid2D, f: &Grid2D, weights: &GridWeights) -> f64 {
    let fit: f64 = x.data.iter().zip(&f.data).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    tv2d(x, weights, f64::INFINITY) + fit
}

pub fn tvl1_energy(x: &Grid2D, f: &Grid2D, weights: &GridWeights) -> f64 {
    let fit: f64 = x.data.iter().zip(&f.data).map(|(a, b)| (a - b).abs()).sum();
    tv2d(x, weights, f64::INFINITY) + fit
}

/// Dual value of the TV-ℓ2 saddle problem at a feasible `y`: one row solve.
fn tvl2_dual(y: &Grid2D, f: &Grid2D, h: &Lines) -> f64 {
    let b: Vec<f64> = f.data.iter().zip(&y.data).map(|(a, b)| a - b).collect();
    let mut x = vec![0.0; b.len()];
    h.quad(1.0, &b, &mut x);
    let fit: f64 = x.iter().zip(&f.data).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let lin: f64 = x.iter().zip(&y.data).map(|(a, b)| a * b).sum();
    h.tv(&x, f64::INFINITY) + fit + lin
}

/// Primal-dual TV-ℓ2 denoising; with `accel` the steps follow the schedule
/// for a 1-strongly convex primal.
pub fn solve_tvl2(f: &Grid2D, weights: &GridWeights, opts: PdOptions) -> Result<(Grid2D, ConvergenceLog)> {
    check_pd(&opts)?;
    weights.check(f)?;
    let h = weights.horizontal();
    let start = Instant::now();
    let mut log = ConvergenceLog::default();
    let mut x = f.clone();
    let mut x_bar = x.clone();
    let mut y = Grid2D::filled(f.rows, f.cols, 0.0);
    let (mut tau, mut sigma) = (opts.tau0, 1.0 / opts.tau0);
    for k in 1..=opts.iters {
        let eta = y.zip_map(&x_bar, |a, b| a + sigma * b);
        y = prox_tv_conjugate_cols(&eta, sigma, weights)?;
        let xi = x.zip_map(&y, |a, b| a - tau * b);
        let x_new = prox_tv_quadratic_rows(&xi, f, tau, weights)?;
        let theta = if opts.accel { 1.0 / (1.0 + 2.0 * tau).sqrt() } else { 1.0 };
        if opts.accel {
            tau *= theta;
            sigma /= theta;
        }
        x_bar = x_new.zip_map(&x, |a, b| a + theta * (a - b));
        x = x_new;
        let energy = tvl2_energy(&x, f, weights);
        let bound = tvl2_dual(&y, f, &h);
        log.push(LogEntry { k, energy, bound, gap: energy - bound, seconds: start.elapsed().as_secs_f64() });
    }
    Ok((x, log))
}

fn line_tree(len: usize) -> Tree {
    Tree::chain(len)
}

/// Row-wise `argmin TV_h(x) + ‖x - f‖₁ + ‖x - ξ‖²/(2τ)`.
fn prox_tvl1_rows(xi: &Grid2D, f: &Grid2D, tau: f64, tree: &Tree, rows: &[ConvexWeights]) -> Result<Grid2D> {
    let n = f.cols;
    let out: Result<Vec<Vec<f64>>> = (0..f.rows)
        .into_par_iter()
        .map(|r| {
            let unaries: Result<Vec<PwqFunc>> = (0..n)
                .map(|j| PwqFunc::abs_plus_tether(f.get(r, j), xi.get(r, j), tau))
                .collect();
            Ok(solve_convex_tree(tree, &unaries?, &rows[r])?.x)
        })
        .collect();
    Ok(Grid2D { rows: f.rows, cols: n, data: out?.concat() })
}

/// Dual value of the TV-ℓ1 saddle problem; `-∞` if some row is unbounded.
fn tvl1_dual(y: &Grid2D, f: &Grid2D, tree: &Tree, rows: &[ConvexWeights], h: &Lines) -> f64 {
    let n = f.cols;
    let parts: Vec<f64> = (0..f.rows)
        .into_par_iter()
        .map(|r| {
            let unaries: Vec<PwlFunc> = (0..n).map(|j| PwlFunc::abs(f.get(r, j), 1.0).add_linear(y.get(r, j))).collect();
            let q: Vec<PwqFunc> = unaries.iter().map(|u| PwqFunc::from_pwl(u).expect("convex")).collect();
            match solve_convex_tree(tree, &q, &rows[r]) {
                Ok(sol) if sol.x.iter().all(|v| v.is_finite()) => {
                    let fit: f64 = unaries.iter().zip(&sol.x).map(|(u, &v)| u.eval(v)).sum();
                    let (_, w) = h.edges(r);
                    let tv: f64 = (0..n - 1).map(|i| w[i] * (sol.x[i + 1] - sol.x[i]).abs()).sum();
                    fit + tv
                }
                _ => f64::NEG_INFINITY,
            }
        })
        .collect();
    parts.iter().sum()
}

/// Primal-dual TV-ℓ1 denoising with chain-wise proximal steps. `accel`
/// shrinks the primal step as in the strongly convex schedule, which is a
/// heuristic here.
pub fn solve_tvl1(f: &Grid2D, weights: &GridWeights, opts: PdOptions) -> Result<(Grid2D, ConvergenceLog)> {
    check_pd(&opts)?;
    weights.check(f)?;
    let h = weights.horizontal();
    let rows = h.convex_weights();
    let tree = line_tree(f.cols);
    let start = Instant::now();
    let mut log = ConvergenceLog::default();
    let mut x = f.clone();
    let mut x_bar = x.clone();
    let mut y = Grid2D::filled(f.rows, f.cols, 0.0);
    let (mut tau, mut sigma) = (opts.tau0, 1.0 / opts.tau0);
    for k in 1..=opts.iters {
        let eta = y.zip_map(&x_bar, |a, b| a + sigma * b);
        y = prox_tv_conjugate_cols(&eta, sigma, weights)?;
        let xi = x.zip_map(&y, |a, b| a - tau * b);
        let x_new = prox_tvl1_rows(&xi, f, tau, &tree, &rows)?;
        let theta = if opts.accel { 1.0 / (1.0 + 2.0 * tau).sqrt() } else { 1.0 };
        if opts.accel {
            tau *= theta;
            sigma /= theta;
        }
        x_bar = x_new.zip_map(&x, |a, b| a + theta * (a - b));
        x = x_new;
        let energy = tvl1_energy(&x, f, weights);
        let bound = tvl1_dual(&y, f, &tree, &rows, &h);
        log.push(LogEntry { k, energy, bound, gap: energy - bound, seconds: start.elapsed().as_secs_f64() });
    }
    Ok((x, log))
}

/// Per-pixel primal-dual baseline for TV-ℓ1 with one dual variable per edge.
pub fn solve_tvl1_points(f: &Grid2D, weights: &GridWeights, iters: usize) -> Result<(Grid2D, ConvergenceLog)> {
    if iters == 0 {
        return invalid("need at least one iteration");
    }
    weights.check(f)?;
    let (m, n) = (f.rows, f.cols);
    let step = 1.0 / 8f64.sqrt();
    let start = Instant::now();
    let mut log = ConvergenceLog::default();
    let mut x = f.data.clone();
    let mut x_bar = x.clone();
    let mut ph = vec![0.0; m * (n - 1)];
    let mut pv = vec![0.0; (m - 1) * n];
    let mut grad_t = vec![0.0; m * n];
    for k in 1..=iters {
        for i in 0..m {
            for j in 0..n - 1 {
                let e = i * (n - 1) + j;
                let w = weights.h[e];
                ph[e] = (ph[e] + step * (x_bar[i * n + j + 1] - x_bar[i * n + j])).clamp(-w, w);
            }
        }
        for i in 0..m - 1 {
            for j in 0..n {
                let e = i * n + j;
                let w = weights.v[e];
                pv[e] = (pv[e] + step * (x_bar[(i + 1) * n + j] - x_bar[i * n + j])).clamp(-w, w);
            }
        }
        grad_t.fill(0.0);
        for i in 0..m {
            for j in 0..n - 1 {
                let p = ph[i * (n - 1) + j];
                grad_t[i * n + j] -= p;
                grad_t[i * n + j + 1] += p;
            }
        }
        for i in 0..m - 1 {
            for j in 0..n {
                let p = pv[i * n + j];
                grad_t[i * n + j] -= p;
                grad_t[(i + 1) * n + j] += p;
            }
        }
        for p in 0..m * n {
            // x ← prox_{τ|·-f|}(x - τ∇ᵀp)
            let v = x[p] - step * grad_t[p] - f.data[p];
            let new = f.data[p] + v.signum() * (v.abs() - step).max(0.0);
            x_bar[p] = 2.0 * new - x[p];
            x[p] = new;
        }
        let g = Grid2D { rows: m, cols: n, data: x.clone() };
        let energy = tvl1_energy(&g, f, weights);
        log.push(LogEntry {
            k,
            energy,
            bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((Grid2D { rows: m, cols: n, data: x }, log))
}

#[derive(Debug, Clone, Copy)]
pub struct TtvOptions {
    pub iters: usize,
    pub tau0: f64,
    /// Truncation `C` of `w·min(C, |z|)`.
    pub cap: f64,
    /// Range of admissible values; its end points join the tether's knots.
    pub window: (f64, f64),
}

impl Default for TtvOptions {
    fn default() -> Self {
        Self { iters: 100, tau0: 300.0, cap: 10.0, window: (0.0, 15.0) }
    }
}

#[derive(Debug, Clone)]
pub struct TtvResult {
    pub x_h: Grid2D,
    pub x_v: Grid2D,
    pub y: Grid2D,
    pub log: ConvergenceLog,
    /// Energy of the uncoupled row/column solutions used as the start point.
    pub initial_energy: f64,
    /// Lowest-energy grid seen, start point included.
    pub best: Grid2D,
    pub best_energy: f64,
    /// Set when a line solve failed and the iteration stopped early.
    pub aborted: Option<SolveError>,
}

impl TtvResult {
    /// Average of the two copies.
    pub fn average(&self) -> Grid2D {
        self.x_h.zip_map(&self.x_v, |a, b| 0.5 * (a + b))
    }
}

/// `Σ f_i(x_i) + Σ w_ij·min(C, |x_j - x_i|)` over both edge directions.
pub fn ttv_energy(x: &Grid2D, unaries: &[PwlFunc], weights: &GridWeights, cap: f64) -> f64 {
    let data: f64 = unaries.iter().zip(&x.data).map(|(u, &v)| u.eval(v)).sum();
    data + tv2d(x, weights, cap)
}

/// Piecewise-linear interpolant of `(z - c)²/(2τ)` at `knots`, continued by
/// its tangents.
fn tether(knots: &[f64], c: f64, tau: f64) -> PwlFunc {
    let ys: Vec<f64> = knots.iter().map(|&k| (k - c) * (k - c) / (2.0 * tau)).collect();
    let first = knots[0];
    let last = knots[knots.len() - 1];
    PwlFunc::interpolate(knots, &ys, (first - c) / tau, (last - c) / tau).expect("strictly increasing knots")
}

struct TtvLines {
    lines: Lines,
    /// Unaries of the lines, already halved.
    halves: Vec<PwlFunc>,
    knots: Vec<Vec<f64>>,
    weights: Vec<TruncatedWeights>,
    tree: Tree,
}

impl TtvLines {
    fn new(lines: Lines, unaries: Vec<PwlFunc>, cap: f64, window: (f64, f64)) -> Result<Self> {
        let count = lines.count;
        let knots = unaries
            .iter()
            .map(|u| {
                let mut k: Vec<f64> = u.breaks().to_vec();
                k.push(window.0);
                k.push(window.1);
                k.sort_by(f64::total_cmp);
                k.dedup();
                k
            })
            .collect();
        let weights: Result<Vec<TruncatedWeights>> = (0..count)
            .map(|r| {
                let (_, w) = lines.edges(r);
                TruncatedWeights::new(w.to_vec(), w.iter().map(|v| if *v > 0.0 { v * cap } else { f64::INFINITY }).collect())
            })
            .collect();
        Ok(Self {
            halves: unaries.iter().map(|u| u.scale(0.5)).collect(),
            knots,
            weights: weights?,
            tree: Tree::chain(lines.len),
            lines,
        })
    }

    fn count(&self) -> usize {
        self.lines.count
    }

    /// Line-wise `argmin TV^C(x) + ½Σf_i(x_i) + ⟨lin, x⟩ (+ tether to ξ)`.
    /// Returns the solution and the sum of the line minima.
    fn solve(&self, lin: Option<&[f64]>, tether_to: Option<(&[f64], f64)>) -> Result<(Vec<f64>, f64)> {
        let len = self.lines.len;
        let parts: Result<Vec<(Vec<f64>, f64)>> = (0..self.count())
            .into_par_iter()
            .map(|r| {
                let unaries: Vec<PwlFunc> = (r * len..(r + 1) * len)
                    .map(|p| {
                        let mut u = self.halves[p].clone();
                        if let Some(l) = lin {
                            u = u.add_linear(l[p]);
                        }
                        if let Some((xi, tau)) = tether_to {
                            u = PwlFunc::sum_many(&[&u, &tether(&self.knots[p], xi[p], tau)]);
                        }
                        u
                    })
                    .collect();
                let sol = solve_nonconvex(&self.tree, &unaries, &self.weights[r])?;
                Ok((sol.x, sol.root_min))
            })
            .collect();
        let parts = parts?;
        let total = parts.iter().map(|p| p.1).sum();
        Ok((parts.into_iter().flat_map(|p| p.0).collect(), total))
    }
}

/// Lagrangian decomposition of the truncated-TV model with non-convex
/// piecewise-linear unaries (row-major, one per pixel). Each copy `x_h`,
/// `x_v` carries half of the data term; step sizes `τ_k = τ0/k`,
/// `σ_k = 1/(2τ_k)`, `θ = 1`.
pub fn solve_ttv_nonconvex(
    rows: usize,
    cols: usize,
    unaries: &[PwlFunc],
    weights: &GridWeights,
    opts: TtvOptions,
) -> Result<TtvResult> {
    if opts.iters == 0 {
        return invalid("need at least one iteration");
    }
    if !(opts.tau0 > 0.0) || !(opts.cap > 0.0) {
        return invalid("τ0 and C must be positive");
    }
    if !(opts.window.0 < opts.window.1) {
        return invalid("empty value window");
    }
    let probe = Grid2D::filled(rows, cols, 0.0);
    weights.check(&probe)?;
    if unaries.len() != rows * cols {
        return invalid(format!("expected {} unaries, got {}", rows * cols, unaries.len()));
    }
    if unaries.iter().any(|u| u.anchor().is_none()) {
        return invalid("every unary needs an anchor");
    }
    let start = Instant::now();
    let hl = TtvLines::new(weights.horizontal(), unaries.to_vec(), opts.cap, opts.window)?;
    let vu: Vec<PwlFunc> = (0..cols).flat_map(|j| (0..rows).map(move |i| (i, j))).map(|(i, j)| unaries[i * cols + j].clone()).collect();
    let vl = TtvLines::new(weights.vertical(), vu, opts.cap, opts.window)?;
    let grid = |data: Vec<f64>| Grid2D { rows, cols, data };
    let to_cols = |g: &[f64]| transpose(g, rows, cols);
    let from_cols = |g: &[f64]| transpose(g, cols, rows);
    let energy_of = |xh: &Grid2D, xv: &Grid2D| {
        let avg = xh.zip_map(xv, |a, b| 0.5 * (a + b));
        [xh.clone(), xv.clone(), avg]
            .into_iter()
            .map(|g| (ttv_energy(&g, unaries, weights, opts.cap), g))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("three candidates")
    };

    let (xh0, _) = hl.solve(None, None)?;
    let (xv0, _) = vl.solve(None, None)?;
    let mut x_h = grid(xh0);
    let mut x_v = grid(from_cols(&xv0));
    let (initial_energy, mut best) = energy_of(&x_h, &x_v);
    let mut best_energy = initial_energy;
    let mut y = vec![0.0; rows * cols];
    let mut y_bar = y.clone();
    let mut log = ConvergenceLog::default();
    let mut aborted = None;
    for k in 1..=opts.iters {
        let tau = opts.tau0 / k as f64;
        let sigma = 1.0 / (2.0 * tau);
        let xi_h: Vec<f64> = x_h.data.iter().zip(&y_bar).map(|(a, b)| a - tau * b).collect();
        let xi_v: Vec<f64> = x_v.data.iter().zip(&y_bar).map(|(a, b)| a + tau * b).collect();
        let step = hl.solve(None, Some((&xi_h, tau))).and_then(|h| {
            let v = vl.solve(None, Some((&to_cols(&xi_v), tau)))?;
            Ok((h, v))
        });
        let ((nh, _), (nv, _)) = match step {
            Ok(s) => s,
            Err(e) => {
                aborted = Some(e);
                break;
            }
        };
        x_h = grid(nh);
        x_v = grid(from_cols(&nv));
        let y_old = y.clone();
        for p in 0..y.len() {
            y[p] += sigma * (x_h.data[p] - x_v.data[p]);
            y_bar[p] = 2.0 * y[p] - y_old[p];
        }
        let (energy, g) = energy_of(&x_h, &x_v);
        if energy < best_energy {
            best_energy = energy;
            best = g;
        }
        let bound = lagrangian_bound(&hl, &vl, &y, rows, cols);
        log.push(LogEntry { k, energy, bound, gap: energy - bound, seconds: start.elapsed().as_secs_f64() });
    }
    Ok(TtvResult { x_h, x_v, y: grid(y), log, initial_energy, best, best_energy, aborted })
}

/// `min Ψ_h(x) + ⟨y, x⟩ + min Ψ_v(x) - ⟨y, x⟩`, a lower bound on the energy
/// (`-∞` when a line is unbounded).
fn lagrangian_bound(hl: &TtvLines, vl: &TtvLines, y: &[f64], rows: usize, cols: usize) -> f64 {
    let neg: Vec<f64> = transpose(y, rows, cols).iter().map(|v| -v).collect();
    match (hl.solve(Some(y), None), vl.solve(Some(&neg), None)) {
        (Ok((_, a)), Ok((_, b))) => a + b,
        _ => f64::NEG_INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_closed_form() {
        let f = Grid2D::new(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let xi = Grid2D::new(2, 3, vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        let w = GridWeights::uniform(2, 3, 0.0).unwrap();
        let tau = 0.5;
        let x = prox_tv_quadratic_rows(&xi, &f, tau, &w).unwrap();
        for p in 0..6 {
            let want = (f.data[p] + xi.data[p] / tau) / (1.0 + 1.0 / tau);
            assert!((x.data[p] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let f = Grid2D::filled(4, 5, 0.3);
        let w = GridWeights::uniform(4, 5, 0.2).unwrap();
        let x = prox_tv_quadratic_rows(&f, &f, 0.7, &w).unwrap();
        assert!(x.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let (x, log) = solve_tvl2(&f, &w, PdOptions { iters: 1, ..Default::default() }).unwrap();
        assert!(x.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert!(log.last().unwrap().gap.abs() < 1e-12);
    }

    #[test]
    fn transpose_round_trip() {
        let g = Grid2D::new(2, 3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(g.transpose().get(2, 1), g.get(1, 2));
        assert_eq!(g.transpose().transpose(), g);
    }

    #[test]
    fn tether_is_convex_and_exact_at_knots() {
        let t = tether(&[0.0, 1.0, 3.0], 1.5, 2.0);
        assert!(t.slopes().windows(2).all(|w| w[0] <= w[1]));
        for k in [0.0, 1.0, 3.0] {
            assert!((t.eval(k) - (k - 1.5) * (k - 1.5) / 4.0).abs() < 1e-12);
        }
    }
}
