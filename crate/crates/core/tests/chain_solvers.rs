use tvtree::bench::random_convex_chain;
use tvtree::convex_tree::solve_convex_tree;
use tvtree::dnc::{solve_fast, solve_hochbaum};
use tvtree::oracle::{breakpoint_set, label_energy, EdgeTerms};
use tvtree::pwq::PwqFunc;
use tvtree::{PwlFunc, Tree};

fn tree_solve(u: &[PwlFunc], w: &tvtree::ConvexWeights) -> Vec<f64> {
    let q: Vec<PwqFunc> = u.iter().map(|f| PwqFunc::from_pwl(f).unwrap()).collect();
    solve_convex_tree(&Tree::chain(u.len()), &q, w).unwrap().x
}

#[test]
fn three_solvers_agree() {
    for seed in 0..60u64 {
        let n = [10, 100, 1000][seed as usize % 3];
        let (u, w) = random_convex_chain(seed, n, 3);
        let t = Tree::chain(n);
        let lam = breakpoint_set(&u);
        let xh = solve_hochbaum(&u, &w).unwrap();
        let xf = solve_fast(&u, &w, None).unwrap();
        let xt = tree_solve(&u, &w);
        let e = |x: &[f64]| label_energy(&t, &u, EdgeTerms::Convex(&w), x);
        let (eh, ef, et) = (e(&xh), e(&xf), e(&xt));
        assert!((eh - et).abs() <= 1e-9 && (ef - et).abs() <= 1e-9, "seed {seed}: {eh} {ef} {et}");
        assert_eq!(xh, xf, "seed {seed}");
        for v in &xh {
            assert!(lam.binary_search_by(|p| p.total_cmp(v)).is_ok(), "seed {seed}: {v} not a breakpoint");
        }
        if xh != xt {
            eprintln!("seed {seed}: tree solver returned another optimal vertex");
        }
    }
}

#[test]
fn stride_extremes_match() {
    for seed in 0..20u64 {
        let n = 2 + seed as usize * 7;
        let (u, w) = random_convex_chain(100 + seed, n, 3);
        let xh = solve_hochbaum(&u, &w).unwrap();
        for m in [1, 2, 3, n] {
            assert_eq!(solve_fast(&u, &w, Some(m)).unwrap(), xh, "seed {seed} m {m}");
        }
    }
}
