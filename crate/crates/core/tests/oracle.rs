use ndarray::Array2;
use otconf::oracle::{cost_matrix, empirical_wasserstein, solve_discrete_ot, solve_discrete_ot_capped};
use otconf::{CostExponent, Error, FeatureTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimal value of the transportation LP by enumerating every basis:
/// each spanning tree of the bipartite row/column graph fixes a unique flow,
/// and the feasible ones are exactly the vertices of the polytope.
fn vertex_enumeration(costs: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = costs.dim();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn rec(
        start: usize,
        k: usize,
        cells: &[(usize, usize)],
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for c in start..cells.len() {
            chosen.push(cells[c]);
            rec(c + 1, k, cells, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |basis: &[(usize, usize)]| {
        if let Some(flow) = tree_flow(basis, n, m, a, b) {
            if flow.iter().all(|&f| f >= -1e-12) {
                let cost: f64 = basis.iter().zip(&flow).map(|(&(i, j), f)| f * costs[[i, j]]).sum();
                best = best.min(cost);
            }
        }
    };
    rec(0, k, &cells, &mut chosen, &mut visit);
    best
}

/// Solves the flow on a spanning tree by peeling leaves; `None` if the
/// cells do not form a spanning tree.
fn tree_flow(basis: &[(usize, usize)], n: usize, m: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut alive = vec![true; basis.len()];
    let mut flow = vec![0.0; basis.len()];
    let ends = |e: usize| (basis[e].0, n + basis[e].1);
    for _ in 0..basis.len() {
        let mut degree = vec![0usize; n + m];
        for e in (0..basis.len()).filter(|&e| alive[e]) {
            let (u, v) = ends(e);
            degree[u] += 1;
            degree[v] += 1;
        }
        let e = (0..basis.len()).find(|&e| {
            let (u, v) = ends(e);
            alive[e] && (degree[u] == 1 || degree[v] == 1)
        })?;
        let (u, v) = ends(e);
        let (leaf, other) = if degree[u] == 1 { (u, v) } else { (v, u) };
        flow[e] = supply[leaf];
        supply[other] -= supply[leaf];
        supply[leaf] = 0.0;
        alive[e] = false;
    }
    // a cycle leaves some node unbalanced
    if supply.iter().any(|s| s.abs() > 1e-9) {
        return None;
    }
    Some(flow)
}

fn best_permutation(costs: &Array2<f64>) -> f64 {
    let n = costs.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    fn heap(k: usize, perm: &mut Vec<usize>, costs: &Array2<f64>, best: &mut f64) {
        if k == 1 {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| costs[[i, j]]).sum();
            *best = best.min(c);
            return;
        }
        for i in 0..k {
            heap(k - 1, perm, costs, best);
            let swap = if k % 2 == 0 { i } else { 0 };
            perm.swap(swap, k - 1);
        }
    }
    heap(n, &mut perm, costs, &mut best);
    best / n as f64
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn check_plan_invariants(costs: &Array2<f64>, a: &[f64], b: &[f64]) {
    let plan = solve_discrete_ot(costs, a, b).unwrap();
    let c = plan.coupling();
    for (i, row) in c.outer_iter().enumerate() {
        assert!((row.sum() - a[i]).abs() < 1e-9);
        assert!(row.iter().all(|&v| v >= 0.0));
    }
    for (j, col) in c.columns().into_iter().enumerate() {
        assert!((col.sum() - b[j]).abs() < 1e-9);
    }
    let recomputed: f64 = c.iter().zip(costs.iter()).map(|(p, c)| p * c).sum();
    assert!((recomputed - plan.cost()).abs() < 1e-9);
}

#[test]
fn matches_vertex_enumeration_on_3x4() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..40 {
        let costs = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.0..10.0));
        let a = random_simplex(&mut rng, 3);
        let b = random_simplex(&mut rng, 4);
        let exact = vertex_enumeration(&costs, &a, &b);
        let plan = solve_discrete_ot(&costs, &a, &b).unwrap();
        assert!((plan.cost() - exact).abs() < 1e-9, "{} vs {exact}", plan.cost());
        check_plan_invariants(&costs, &a, &b);
    }
}

#[test]
fn matches_permutation_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=8 {
        for _ in 0..3 {
            let costs = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..5.0));
            let u = vec![1.0 / n as f64; n];
            let plan = solve_discrete_ot(&costs, &u, &u).unwrap();
            let best = best_permutation(&costs);
            assert!((plan.cost() - best).abs() < 1e-9, "n={n}: {} vs {best}", plan.cost());
        }
    }
}

#[test]
fn degenerate_integer_instances() {
    // integral masses and repeated costs produce many degenerate pivots
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let n = rng.random_range(2..9);
        let m = rng.random_range(2..9);
        let costs = Array2::from_shape_fn((n, m), |_| rng.random_range(0..4) as f64);
        let total = n * m;
        let a = vec![1.0 / n as f64; n];
        let b = vec![1.0 / m as f64; m];
        check_plan_invariants(&costs, &a, &b);
        if total <= 12 {
            let plan = solve_discrete_ot(&costs, &a, &b).unwrap();
            assert!((plan.cost() - vertex_enumeration(&costs, &a, &b)).abs() < 1e-9);
        }
    }
}

#[test]
fn spec_examples() {
    let t = |v: &[f64]| FeatureTable::from_rows(&v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
    let p = CostExponent::One;
    assert_eq!(empirical_wasserstein(&t(&[0.0, 1.0]), &t(&[0.0, 1.0]), p).unwrap(), 0.0);
    assert_eq!(empirical_wasserstein(&t(&[0.0]), &t(&[3.0]), p).unwrap(), 3.0);
    let w = empirical_wasserstein(&t(&[0.0, 0.0, 1.0]), &t(&[1.0, 1.0, 1.0]), p).unwrap();
    assert!((w - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn size_cap_and_mass_checks() {
    let costs = Array2::zeros((3, 3));
    let u = vec![1.0 / 3.0; 3];
    assert!(matches!(
        solve_discrete_ot_capped(&costs, &u, &u, 8),
        Err(Error::TooLarge { cells: 9, cap: 8 })
    ));
    let short = [0.5, 0.5 - 1e-6, 0.0];
    assert!(matches!(solve_discrete_ot(&costs, &u, &short), Err(Error::Infeasible { .. })));
}

fn table_strategy(max_n: usize, d: usize) -> impl Strategy<Value = FeatureTable> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), 1..=max_n)
        .prop_map(|rows| FeatureTable::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_symmetric_and_reflexive(x in table_strategy(12, 3), y in table_strategy(12, 3), two in any::<bool>()) {
        let p = if two { CostExponent::Two } else { CostExponent::One };
        let xy = empirical_wasserstein(&x, &y, p).unwrap();
        let yx = empirical_wasserstein(&y, &x, p).unwrap();
        prop_assert!((xy - yx).abs() < 1e-9 * (1.0 + xy));
        prop_assert!(empirical_wasserstein(&x, &x, p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn plans_are_feasible(x in table_strategy(10, 2), y in table_strategy(10, 2)) {
        let costs = cost_matrix(&x, y.features(), CostExponent::One).unwrap();
        let a = vec![1.0 / x.n_samples() as f64; x.n_samples()];
        let b = vec![1.0 / y.n_samples() as f64; y.n_samples()];
        check_plan_invariants(&costs, &a, &b);
    }
}
