//! `tvtree`: total-variation solvers on chains, trees and images.

mod io;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use tvtree::bench::{
    noisy_sine, noisy_step_image, noisy_steps, random_truncated_tree, rows_to_csv, run_scaling_bench, salt_and_pepper,
    stereo_fixture, BenchSolver,
};
use tvtree::convex_tree::{convex_energy, solve_convex_tree};
use tvtree::dnc::solve_fast;
use tvtree::nonconvex::{nonconvex_energy, solve_nonconvex};
use tvtree::oracle::{breakpoint_set, discrete_viterbi, refined_grid, EdgeTerms, SortFixture};
use tvtree::prox2d::{
    solve_tvl1, solve_tvl2, solve_ttv_nonconvex, ConvergenceLog, Grid2D, GridWeights, PdOptions, TtvOptions,
};
use tvtree::pwq::PwqFunc;
use tvtree::quad_chain::{quad_chain_energy, solve_quad_chain_into, QuadChainOptions, QuadChainScratch};
use tvtree::{ConvexWeights, SolveError, Tree, TruncatedWeights};

use crate::io::{num, Pgm, UnaryVolume};

#[derive(Parser, Debug)]
#[command(name = "tvtree", version, about = "Exact total-variation solvers on chains, trees and grids")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads for row and column solves (TVTREE_THREADS overrides)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for generated instances
    #[arg(long, global = true, default_value_t = tvtree::bench::DEFAULT_SEED)]
    seed: u64,
    /// JSON object of flag values; flags given on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve a 1D or tree problem
    Tv1d(Tv1dArgs),
    /// TV-ℓ2 image denoising
    DenoiseL2(DenoiseArgs),
    /// TV-ℓ1 image denoising
    DenoiseL1(DenoiseArgs),
    /// Truncated TV on a grid with non-convex unaries
    StereoTtv(StereoArgs),
    /// Scaling benchmark
    Bench(BenchArgs),
    /// Brute-force checks
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Write seeded test inputs
    #[command(subcommand)]
    Fixture(FixtureCmd),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Tv1dSolver {
    Quad,
    Pwl,
    Pwq,
    PwlFast,
    Nonconvex,
}

#[derive(Args, Debug)]
struct Tv1dArgs {
    solver: Tv1dSolver,
    /// Signal CSV (quad) or unary lines (other solvers)
    #[arg(long = "in", visible_alias = "unaries")]
    input: PathBuf,
    /// Tree file `n` then `child parent w- w+ [C]`; a chain when absent
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Chain weight: a number or a CSV with `w` or `w-,w+` columns
    #[arg(long)]
    w: Option<String>,
    /// Truncation for `nonconvex` on a chain
    #[arg(long = "C")]
    cap: Option<f64>,
    /// Subsampling stride for `pwl-fast`
    #[arg(long)]
    stride: Option<usize>,
    /// Keep clip intervals inside the output array (`quad`)
    #[arg(long)]
    compact_memory: bool,
    /// Solution CSV; printed to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    /// Binary PGM image
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    w: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Shrinking step schedule
    #[arg(long)]
    accel: bool,
    #[arg(long, default_value_t = 1.0)]
    tau0: f64,
    /// Output PGM
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence log CSV
    #[arg(long)]
    log: Option<PathBuf>,
    /// Record wall times in the log (otherwise written as 0)
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct StereoArgs {
    /// Unary volume file
    #[arg(long)]
    unaries: PathBuf,
    #[arg(long = "C", default_value_t = 10.0)]
    cap: f64,
    #[arg(long, default_value_t = 300.0)]
    tau0: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    /// Solution grid CSV
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    solver: String,
    /// Comma-separated ascending sizes
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum OracleCmd {
    /// Compare the breakpoint DP with a label-grid Viterbi pass
    Viterbi {
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long = "in", visible_alias = "unaries")]
        input: PathBuf,
        #[arg(long)]
        w: Option<String>,
        #[arg(long = "C")]
        cap: Option<f64>,
        /// Grid refinement step
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Sort positive values with the lower-bound chain construction
    Sort {
        /// One-column CSV of positive values
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum FixtureCmd {
    /// Noisy 1D signal as a one-column CSV
    Signal {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Steps instead of a sine
        #[arg(long)]
        steps: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Noisy step image as PGM
    Image {
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 32)]
        cols: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Fraction of salt-and-pepper pixels
        #[arg(long, default_value_t = 0.0)]
        salt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random truncated-TV tree with non-convex unaries
    Tree {
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Tree file
        #[arg(long)]
        tree: PathBuf,
        /// Unary lines
        #[arg(long)]
        unaries: PathBuf,
    },
    /// Synthetic stereo unary volume
    Stereo {
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 48)]
        cols: usize,
        #[arg(long, default_value_t = 16)]
        labels: usize,
        #[arg(long)]
        out: PathBuf,
        /// True disparities as CSV
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

const SUBCOMMANDS: [&str; 7] = ["tv1d", "denoise-l2", "denoise-l1", "stereo-ttv", "bench", "oracle", "fixture"];

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().filter_map(|a| a.to_str());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config values in as flags right after the subcommand words, so
/// that later command-line flags override them.
fn merge_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = find_config(&args) else { return Ok(args) };
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let json: Value = serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let Value::Object(map) = json else { bail!("{}: config must be a JSON object", path.display()) };
    let mut extra: Vec<OsString> = Vec::new();
    for (key, v) in map {
        let flag = format!("--{key}");
        match v {
            Value::Bool(true) => extra.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Number(x) => extra.extend([flag.into(), x.to_string().into()]),
            Value::String(s) => extra.extend([flag.into(), s.into()]),
            Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|i| match i {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                extra.extend([flag.into(), parts.join(",").into()]);
            }
            Value::Object(_) => bail!("{}: nested object for '{key}'", path.display()),
        }
    }
    let Some(mut at) = args.iter().position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s))) else {
        return Ok(args);
    };
    at += 1;
    while at < args.len() && args[at].to_str().is_some_and(|s| !s.starts_with('-')) {
        at += 1;
    }
    args.splice(at..at, extra);
    Ok(args)
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match std::env::var("TVTREE_THREADS") {
        Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| anyhow!("TVTREE_THREADS must be a positive integer"))?),
        Err(_) => flag,
    };
    if let Some(n) = threads {
        if n == 0 {
            bail!("thread count must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_log(path: Option<&Path>, log: &ConvergenceLog, timings: bool) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, log.to_csv(timings)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn check_weight(w: f64) -> Result<()> {
    if !(w >= 0.0 && w.is_finite()) {
        bail!("--w must be finite and non-negative");
    }
    Ok(())
}

fn check_iters(iters: usize) -> Result<()> {
    if iters == 0 {
        bail!("--iters must be at least 1");
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        bail!("{name} must be positive");
    }
    Ok(())
}

/// Chain edge slopes `(w⁻, w⁺)` for `len` edges from `--w`.
fn chain_weights(spec: Option<&str>, len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = spec.ok_or_else(|| anyhow!("a chain needs --w (or pass --tree)"))?;
    if let Ok(w) = spec.parse::<f64>() {
        check_weight(w)?;
        return Ok((vec![-w; len], vec![w; len]));
    }
    let rows = io::read_csv(Path::new(spec))?;
    if rows.len() != len {
        bail!("{spec}: expected {len} edge rows, found {}", rows.len());
    }
    match rows[0].len() {
        1 => {
            let w: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            w.iter().try_for_each(|&v| check_weight(v))?;
            Ok((w.iter().map(|v| -v).collect(), w))
        }
        2 => Ok((rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| r[1]).collect())),
        k => bail!("{spec}: expected 1 or 2 weight columns, found {k}"),
    }
}

/// Tree and convex weights indexed by child, either from a tree file or as
/// a chain of `n` nodes.
fn convex_setup(args: &Tv1dArgs, n: usize) -> Result<(Tree, ConvexWeights)> {
    match &args.tree {
        Some(p) => {
            let tf = io::read_tree(p)?;
            if tf.tree.len() != n {
                bail!("{}: tree has {} nodes but there are {n} unaries", p.display(), tf.tree.len());
            }
            Ok((tf.tree.clone(), tf.convex()?))
        }
        None => {
            let (mut lo, mut hi) = chain_weights(args.w.as_deref(), n - 1)?;
            lo.push(0.0);
            hi.push(0.0);
            Ok((Tree::chain(n), ConvexWeights::new(lo, hi).map_err(|e| anyhow!("--w: {e}"))?))
        }
    }
}

fn truncated_setup(tree: Option<&Path>, w: Option<&str>, cap: Option<f64>, n: usize) -> Result<(Tree, TruncatedWeights)> {
    if let Some(c) = cap {
        check_positive("--C", c)?;
    }
    match tree {
        Some(p) => {
            let tf = io::read_tree(p)?;
            if tf.tree.len() != n {
                bail!("{}: tree has {} nodes but there are {n} unaries", p.display(), tf.tree.len());
            }
            Ok((tf.tree.clone(), tf.truncated()?))
        }
        None => {
            let (lo, mut hi) = chain_weights(w, n - 1)?;
            if lo.iter().zip(&hi).any(|(l, h)| *l != -h) {
                bail!("truncated weights must be symmetric");
            }
            hi.push(0.0);
            let c = cap.unwrap_or(f64::INFINITY);
            Ok((Tree::chain(n), TruncatedWeights::new(hi, vec![c; n]).map_err(|e| anyhow!("--w: {e}"))?))
        }
    }
}

fn column(values: &[f64]) -> String {
    values.iter().map(|&v| num(v) + "\n").collect()
}

fn report(args: &Tv1dArgs, x: &[f64], energy: f64) -> Result<()> {
    match &args.out {
        Some(p) => fs::write(p, column(x)).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{}", column(x)),
    }
    println!("energy {}", num(energy));
    Ok(())
}

fn run_tv1d(args: &Tv1dArgs) -> Result<()> {
    if let Some(c) = args.cap {
        check_positive("--C", c)?;
    }
    if args.stride == Some(0) {
        bail!("--stride must be at least 1");
    }
    match args.solver {
        Tv1dSolver::Quad => {
            let rows = io::read_csv(&args.input)?;
            let (a, b): (Vec<f64>, Vec<f64>) = match rows[0].len() {
                1 => (vec![1.0; rows.len()], rows.iter().map(|r| r[0]).collect()),
                2 => rows.iter().map(|r| (r[0], r[1])).unzip(),
                k => bail!("{}: expected columns 'c' or 'a,b', found {k}", args.input.display()),
            };
            let n = a.len();
            let (lo, hi) = if n > 1 { chain_weights(args.w.as_deref(), n - 1)? } else { (vec![], vec![]) };
            let mut x = vec![0.0; n];
            let opts = QuadChainOptions { compact: args.compact_memory };
            solve_quad_chain_into(&a, &b, &lo, &hi, &mut QuadChainScratch::new(), opts, &mut x)?;
            report(args, &x, quad_chain_energy(&a, &b, &lo, &hi, &x))
        }
        Tv1dSolver::Pwl | Tv1dSolver::Pwq => {
            let unaries: Vec<PwqFunc> = if args.solver == Tv1dSolver::Pwl {
                io::read_pwl_lines(&args.input)?
                    .iter()
                    .enumerate()
                    .map(|(k, f)| PwqFunc::from_pwl(f).map_err(|e| anyhow!("unary {k}: {e}")))
                    .collect::<Result<_>>()?
            } else {
                io::read_pwq_lines(&args.input)?
            };
            let (tree, weights) = convex_setup(args, unaries.len())?;
            let x = solve_convex_tree(&tree, &unaries, &weights)?.x;
            report(args, &x, convex_energy(&tree, &unaries, &weights, &x))
        }
        Tv1dSolver::PwlFast => {
            let unaries = io::read_pwl_lines(&args.input)?;
            let n = unaries.len();
            let (tree, weights) = convex_setup(args, n)?;
            if (0..n).any(|i| tree.parent(i) != (i + 1 < n).then_some(i + 1)) {
                bail!("pwl-fast needs a chain with parent(i) = i + 1");
            }
            let x = solve_fast(&unaries, &weights, args.stride)?;
            let q: Vec<PwqFunc> = unaries.iter().map(PwqFunc::from_pwl).collect::<tvtree::Result<_>>()?;
            report(args, &x, convex_energy(&tree, &q, &weights, &x))
        }
        Tv1dSolver::Nonconvex => {
            let unaries = io::read_pwl_lines(&args.input)?;
            let (tree, weights) = truncated_setup(args.tree.as_deref(), args.w.as_deref(), args.cap, unaries.len())?;
            let sol = solve_nonconvex(&tree, &unaries, &weights)?;
            report(args, &sol.x, nonconvex_energy(&tree, &unaries, &weights, &sol.x))
        }
    }
}

fn read_image(path: &Path) -> Result<(Pgm, Grid2D)> {
    let img = io::read_pgm(path)?;
    let g = Grid2D::new(img.rows, img.cols, img.to_unit())?;
    Ok((img, g))
}

fn run_denoise(args: &DenoiseArgs, l1: bool) -> Result<()> {
    check_weight(args.w)?;
    check_iters(args.iters)?;
    check_positive("--tau0", args.tau0)?;
    let (img, f) = read_image(&args.input)?;
    let weights = GridWeights::uniform(img.rows, img.cols, args.w)?;
    let opts = PdOptions { iters: args.iters, accel: args.accel, tau0: args.tau0 };
    let (x, log) = if l1 { solve_tvl1(&f, &weights, opts)? } else { solve_tvl2(&f, &weights, opts)? };
    if let Some(p) = &args.out {
        let out = Pgm::from_unit(img.rows, img.cols, x.data());
        fs::write(p, out.to_bytes()).with_context(|| format!("cannot write {}", p.display()))?;
    }
    write_log(args.log.as_deref(), &log, args.timings)?;
    let last = log.last().expect("at least one iteration");
    println!("energy {}", num(last.energy));
    println!("gap {}", num(last.gap));
    Ok(())
}

fn run_stereo(args: &StereoArgs) -> Result<()> {
    check_weight(args.w)?;
    check_iters(args.iters)?;
    check_positive("--C", args.cap)?;
    check_positive("--tau0", args.tau0)?;
    let vol = io::read_volume(&args.unaries)?;
    let lo = vol.unaries.iter().map(|u| u.breaks()[0]).fold(f64::INFINITY, f64::min);
    let hi = vol.unaries.iter().map(|u| u.breaks()[u.num_breaks() - 1]).fold(f64::NEG_INFINITY, f64::max);
    let window = if lo < hi { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let weights = GridWeights::uniform(vol.rows, vol.cols, args.w)?;
    let opts = TtvOptions { iters: args.iters, tau0: args.tau0, cap: args.cap, window };
    let res = solve_ttv_nonconvex(vol.rows, vol.cols, &vol.unaries, &weights, opts)?;
    let grid: Vec<Vec<f64>> = res.best.data().chunks(vol.cols).map(<[f64]>::to_vec).collect();
    emit(args.out.as_deref(), &io::csv_string(&grid))?;
    write_log(args.log.as_deref(), &res.log, args.timings)?;
    if let Some(e) = &res.aborted {
        eprintln!("warning: stopped after {} iterations: {e}", res.log.entries().len());
    }
    println!("initial_energy {}", num(res.initial_energy));
    println!("energy {}", num(res.best_energy));
    if let Some(last) = res.log.last() {
        println!("bound {}", num(last.bound));
    }
    Ok(())
}

fn run_bench(args: &BenchArgs, seed: u64) -> Result<()> {
    let solver: BenchSolver = args.solver.parse().map_err(|e: String| anyhow!(e))?;
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    if args.sizes.iter().any(|&n| n < 2) || args.sizes.windows(2).any(|w| w[0] >= w[1]) {
        bail!("--sizes must be ascending and at least 2");
    }
    let rows = run_scaling_bench(solver, &args.sizes, args.reps, seed)?;
    emit(args.out.as_deref(), &rows_to_csv(&rows))
}

fn run_oracle(cmd: &OracleCmd) -> Result<()> {
    match cmd {
        OracleCmd::Viterbi { tree, input, w, cap, step } => {
            check_positive("--step", *step)?;
            let unaries = io::read_pwl_lines(input)?;
            if unaries.iter().any(|u| u.anchor().is_none()) {
                bail!("{}: every unary needs an anchor", input.display());
            }
            let (tree, weights) = truncated_setup(tree.as_deref(), w.as_deref(), *cap, unaries.len())?;
            let labels = refined_grid(&breakpoint_set(&unaries), *step)?;
            let (_, grid_energy) = discrete_viterbi(&tree, &unaries, EdgeTerms::Truncated(&weights), &labels)?;
            let sol = solve_nonconvex(&tree, &unaries, &weights)?;
            let exact = nonconvex_energy(&tree, &unaries, &weights, &sol.x);
            println!("labels {}", labels.len());
            println!("grid_energy {}", num(grid_energy));
            println!("exact_energy {}", num(exact));
            println!("root_min {}", num(sol.root_min));
            let ok = exact <= grid_energy + 1e-6 && (exact - sol.root_min).abs() <= 1e-9 * (1.0 + exact.abs());
            println!("{}", if ok { "consistent" } else { "MISMATCH" });
            if !ok {
                return Err(SolveError::InvalidInput("solver disagrees with the grid oracle".into()).into());
            }
            Ok(())
        }
        OracleCmd::Sort { input } => {
            let values = io::read_column(input)?;
            let fixture = SortFixture::new(&values).map_err(|e| anyhow!("{}: {e}", input.display()))?;
            print!("{}", column(&fixture.extract()));
            Ok(())
        }
    }
}

fn run_fixture(cmd: &FixtureCmd, seed: u64) -> Result<()> {
    match cmd {
        FixtureCmd::Signal { n, sigma, steps, out } => {
            if *n == 0 {
                bail!("--n must be positive");
            }
            let f = if *steps { noisy_steps(*n, *sigma, seed) } else { noisy_sine(*n, *sigma, seed) };
            emit(out.as_deref(), &column(&f))
        }
        FixtureCmd::Image { rows, cols, sigma, salt, out } => {
            if *rows == 0 || *cols == 0 {
                bail!("image dimensions must be positive");
            }
            if !(0.0..=1.0).contains(salt) {
                bail!("--salt must lie in [0, 1]");
            }
            let mut v = noisy_step_image(*rows, *cols, *sigma, seed);
            if *salt > 0.0 {
                v = salt_and_pepper(&v, *salt, seed.wrapping_add(1));
            }
            let img = Pgm::from_unit(*rows, *cols, &v);
            fs::write(out, img.to_bytes()).with_context(|| format!("cannot write {}", out.display()))
        }
        FixtureCmd::Tree { n, tree, unaries } => {
            if *n == 0 {
                bail!("--n must be positive");
            }
            let (t, u, w) = random_truncated_tree(seed, *n);
            let lo: Vec<f64> = w.w.iter().map(|v| -v).collect();
            fs::write(tree, io::tree_string(&t, &lo, &w.w, &w.cap))
                .with_context(|| format!("cannot write {}", tree.display()))?;
            let lines: String = u.iter().map(|f| io::pwl_line(f) + "\n").collect();
            fs::write(unaries, lines).with_context(|| format!("cannot write {}", unaries.display()))
        }
        FixtureCmd::Stereo { rows, cols, labels, out, truth } => {
            if *rows == 0 || *cols == 0 || *labels < 2 {
                bail!("need positive dimensions and at least 2 labels");
            }
            let (unaries, d) = stereo_fixture(*rows, *cols, *labels, seed);
            let vol = UnaryVolume { rows: *rows, cols: *cols, unaries };
            fs::write(out, vol.to_bytes()?).with_context(|| format!("cannot write {}", out.display()))?;
            if let Some(p) = truth {
                let grid: Vec<Vec<f64>> = d.chunks(*cols).map(<[f64]>::to_vec).collect();
                fs::write(p, io::csv_string(&grid)).with_context(|| format!("cannot write {}", p.display()))?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match &cli.cmd {
        Cmd::Tv1d(a) => run_tv1d(a),
        Cmd::DenoiseL2(a) => run_denoise(a, false),
        Cmd::DenoiseL1(a) => run_denoise(a, true),
        Cmd::StereoTtv(a) => run_stereo(a),
        Cmd::Bench(a) => run_bench(a, cli.seed),
        Cmd::Oracle(c) => run_oracle(c),
        Cmd::Fixture(c) => run_fixture(c, cli.seed),
    }
}

fn main() -> ExitCode {
    let args = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<SolveError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
