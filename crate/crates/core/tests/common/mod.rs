//! Property checks shared by the property tests and the acceptance run.

#![allow(dead_code)]

use ndarray::Array2;
use otconf::score::{misclassification_bound, postcheck_binary, ClassPrototypes, OtScorer};
use otconf::sdot::{
    dual_objective, hard_assign, marginal_residual, smoothed_assignment, solve, transport_cost,
};
use otconf::{CostExponent, DiscreteMeasure, FeatureTable, SolverConfig, StepSchedule};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

#[derive(Debug, Clone)]
pub struct Instance {
    pub targets: FeatureTable,
    pub labels: Vec<usize>,
    pub protos: DiscreteMeasure,
    pub w: Vec<f64>,
    pub epsilon: f64,
    pub p: CostExponent,
}

fn matrix(rows: usize, d: usize, span: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-span..span, rows * d).prop_map(move |v| Array2::from_shape_vec((rows, d), v).unwrap())
}

pub fn instance(min_eps: f64) -> impl Strategy<Value = Instance> {
    (2usize..=5, 1usize..=4, 2usize..=24)
        .prop_flat_map(move |(m, d, n)| {
            (
                matrix(n, d, 5.0),
                prop::collection::vec(0usize..m, n),
                matrix(m, d, 5.0),
                prop::collection::vec(0.05..1.0f64, m),
                prop::collection::vec(-2.0..2.0f64, m),
                min_eps.log10()..0.0f64,
                any::<bool>(),
            )
        })
        .prop_map(|(x, labels, z, a, w, log_eps, two)| Instance {
            targets: FeatureTable::new(x).unwrap(),
            labels,
            protos: DiscreteMeasure::normalized(z, a).unwrap(),
            w,
            epsilon: 10f64.powf(log_eps),
            p: if two { CostExponent::Two } else { CostExponent::One },
        })
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn scorer(inst: &Instance, w: Vec<f64>, protos: DiscreteMeasure) -> OtScorer {
    let m = protos.len();
    OtScorer::new(ClassPrototypes::one_per_class(protos).unwrap(), w, inst.p).unwrap_or_else(|_| panic!("{m} prototypes"))
}

/// `w → w + c·1` leaves assignments, costs, residuals, objectives and scores unchanged.
pub fn shift_invariance(cases: u32) -> Result<(), String> {
    run(cases, (instance(1e-3), -5.0..5.0f64), |(inst, c)| {
        let shifted: Vec<f64> = inst.w.iter().map(|w| w + c).collect();
        let (p, eps) = (inst.p, inst.epsilon);
        for x in inst.targets.rows() {
            let a = smoothed_assignment(x, &inst.protos, &inst.w, eps, p).unwrap();
            let b = smoothed_assignment(x, &inst.protos, &shifted, eps, p).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9, "{a:?} vs {b:?}");
            }
            prop_assert_eq!(hard_assign(x, &inst.protos, &inst.w, p), hard_assign(x, &inst.protos, &shifted, p));
        }
        let t = &inst.targets;
        prop_assert_eq!(
            transport_cost(t, &inst.protos, &inst.w, p).unwrap(),
            transport_cost(t, &inst.protos, &shifted, p).unwrap()
        );
        let r0 = marginal_residual(t, &inst.protos, &inst.w, eps, p).unwrap();
        let r1 = marginal_residual(t, &inst.protos, &shifted, eps, p).unwrap();
        prop_assert!((r0 - r1).abs() < 1e-9);
        let l0 = dual_objective(t, &inst.protos, &inst.w, eps, p).unwrap();
        let l1 = dual_objective(t, &inst.protos, &shifted, eps, p).unwrap();
        prop_assert!(close(l0, l1, 1e-9), "{l0} vs {l1}");
        let s0 = scorer(&inst, inst.w.clone(), inst.protos.clone());
        let s1 = scorer(&inst, shifted.clone(), inst.protos.clone());
        for (x, &label) in t.rows().zip(&inst.labels) {
            prop_assert!(close(s0.score(x, label).unwrap(), s1.score(x, label).unwrap(), 1e-9));
        }
        Ok(())
    })
}

/// Translating every point by one vector changes no geometric quantity.
pub fn translation_invariance(cases: u32) -> Result<(), String> {
    run(cases, (instance(1e-3), prop::collection::vec(-50.0..50.0f64, 4)), |(inst, shift)| {
        let d = inst.targets.dim();
        let moved = |a: &Array2<f64>| {
            let mut b = a.clone();
            for mut row in b.rows_mut() {
                for (v, s) in row.iter_mut().zip(&shift) {
                    *v += s;
                }
            }
            b
        };
        let t2 = FeatureTable::new(moved(inst.targets.features())).unwrap();
        let p2 = DiscreteMeasure::new(moved(inst.protos.points()), inst.protos.weights().to_vec()).unwrap();
        let (p, eps) = (inst.p, inst.epsilon);
        // squared costs lose more digits under large translations
        let tol = if p == CostExponent::Two { 1e-7 } else { 1e-9 };
        for (x, y) in inst.targets.rows().zip(t2.rows()) {
            let a = smoothed_assignment(x, &inst.protos, &inst.w, eps, p).unwrap();
            let b = smoothed_assignment(y, &p2, &inst.w, eps, p).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-5, "{a:?} vs {b:?}");
            }
        }
        let c0 = transport_cost(&inst.targets, &inst.protos, &inst.w, p).unwrap();
        let c1 = transport_cost(&t2, &p2, &inst.w, p).unwrap();
        prop_assert!(close(c0, c1, tol), "{c0} vs {c1}");
        let s0 = scorer(&inst, inst.w.clone(), inst.protos.clone());
        let s1 = scorer(&inst, inst.w.clone(), p2.clone());
        for ((x, y), &label) in inst.targets.rows().zip(t2.rows()).zip(&inst.labels) {
            prop_assert!(close(s0.score(x, label).unwrap(), s1.score(y, label).unwrap(), tol));
        }
        let has = |c: usize| inst.labels.contains(&c);
        if has(0) && has(1) {
            let g0 = s0.g_gap(&inst.targets, &inst.labels, 0, 1).unwrap();
            let g1 = s1.g_gap(&t2, &inst.labels, 0, 1).unwrap();
            prop_assert!(close(g0, g1, tol));
            // post-check with prototype 0 as class 1 and the rest as class 2
            let split = |t: &FeatureTable, protos: &DiscreteMeasure| {
                let idx0: Vec<usize> = (0..inst.labels.len()).filter(|&i| inst.labels[i] == 0).collect();
                let idx1: Vec<usize> = (0..inst.labels.len()).filter(|&i| inst.labels[i] != 0).collect();
                let z = protos.points();
                let head = DiscreteMeasure::uniform(z.slice(ndarray::s![0..1, ..]).to_owned()).unwrap();
                let tail = DiscreteMeasure::uniform(z.slice(ndarray::s![1.., ..]).to_owned()).unwrap();
                postcheck_binary(&t.select(&idx0).unwrap(), &t.select(&idx1).unwrap(), &head, &tail, &inst.w, p).unwrap()
            };
            let a = split(&inst.targets, &inst.protos);
            let b = split(&t2, &p2);
            prop_assert_eq!(a.holds, b.holds);
            prop_assert!(close(a.left_margin, b.left_margin, tol) && close(a.right_margin, b.right_margin, tol));
        }
        let row = |m: &Array2<f64>, i: usize| m.row(i).to_vec();
        let (z, z2) = (inst.protos.points(), p2.points());
        let (f1, f2) = (row(z, 0), row(z, 1));
        let s = 0.3 * (inst.w[0] - inst.w[1]).tanh() * otconf::cost::euclidean(&f1, &f2);
        if let Ok(b0) = misclassification_bound(&f1, &f2, s, 0.0, &f1, &f2, 1.5) {
            let b1 = misclassification_bound(&row(z2, 0), &row(z2, 1), s, 0.0, &row(z2, 0), &row(z2, 1), 1.5).unwrap();
            prop_assert!((b0.distances[0] - b1.distances[0]).abs() < 1e-6 * (1.0 + b0.distances[0]));
            prop_assert!((b0.bound - b1.bound).abs() < 1e-6);
        }
        let _ = d;
        Ok(())
    })
}

/// Every soft assignment sums to one within 1e-12, down to ε = 1e-8.
pub fn normalization(cases: u32) -> Result<(), String> {
    run(cases, instance(1e-8), |inst| {
        for x in inst.targets.rows() {
            let chi = smoothed_assignment(x, &inst.protos, &inst.w, inst.epsilon, inst.p).unwrap();
            let total: f64 = chi.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "sum {total}");
            prop_assert!(chi.iter().all(|&c| (0.0..=1.0).contains(&c)));
        }
        Ok(())
    })
}

/// Identical configuration and seed give bit-identical traces.
pub fn determinism(cases: u32) -> Result<(), String> {
    run(cases, (instance(1e-4), any::<u64>(), 1usize..8), |(inst, seed, batch)| {
        let config = SolverConfig {
            epsilon: inst.epsilon,
            exponent: inst.p,
            learning_rate: 0.05,
            schedule: StepSchedule::InverseSqrt,
            max_iter: 60,
            batch_size: Some(batch),
            seed,
            warm_start: Some(inst.w.clone()),
            ..Default::default()
        };
        let a = solve(&inst.targets, &inst.protos, &config).unwrap();
        let b = solve(&inst.targets, &inst.protos, &config).unwrap();
        prop_assert_eq!(a.trace.len(), b.trace.len());
        for (x, y) in a.trace.iter().zip(&b.trace) {
            prop_assert_eq!(x.residual.to_bits(), y.residual.to_bits());
            prop_assert_eq!(x.update_norm.to_bits(), y.update_norm.to_bits());
            prop_assert_eq!(x.objective.to_bits(), y.objective.to_bits());
        }
        prop_assert_eq!(a.weights, b.weights);
        Ok(())
    })
}
