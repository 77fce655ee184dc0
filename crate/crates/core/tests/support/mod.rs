//! Generators and invariant checks shared by the property tests and the
//! acceptance runner.
#![allow(dead_code)]

use msbtree::measures::{DiscreteMeasure, MeasureCollection};
use msbtree::mst::{
    build_weight_matrix, edge_weight, minimum_spanning_tree, CostSpec, EdgeWeightMatrix,
    MstAlgorithm, SolverConfig,
};
use msbtree::sinkhorn::{build_cost, sinkhorn_solve, tv_distance, CostKind, PairwiseCost, SinkhornConfig};
use msbtree::trees::{prufer_decode, prufer_encode, tree_cost_additive, tree_cost_decomposed, PruferCode};
use msbtree::Matrix;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = Result<(), TestCaseError>;

pub fn measure(max_n: usize, half_width: f64) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_n)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(prop::collection::vec(-half_width..half_width, 2), n),
                prop::collection::vec(0.05f64..1.0, n),
            )
        })
        .prop_map(|(support, w)| DiscreteMeasure::from_unnormalized(support, &w).unwrap())
}

/// Two measures, a squared-Euclidean cost between them and `eta`.
pub fn pair() -> impl Strategy<Value = (DiscreteMeasure, DiscreteMeasure, f64)> {
    (measure(6, 3.0), measure(6, 3.0), 0.5f64..5.0)
}

pub fn collection(s: std::ops::RangeInclusive<usize>, max_n: usize) -> impl Strategy<Value = MeasureCollection> {
    prop::collection::vec(measure(max_n, 3.0), s).prop_map(|ms| MeasureCollection::new(ms).unwrap())
}

/// Symmetric weights on `s` vertices whose off-diagonal entries are pairwise
/// at least `1e-6` apart.
pub fn distinct_weights(s: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Matrix> {
    s.prop_flat_map(|s| prop::collection::vec(0.0f64..10.0, s * (s - 1) / 2).prop_map(move |v| (s, v)))
        .prop_filter("weights must be distinct", |(_, v)| {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.windows(2).all(|w| w[1] - w[0] > 1e-6)
        })
        .prop_map(|(s, v)| symmetric(s, &v))
}

pub fn symmetric(s: usize, upper: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(s, s);
    let mut k = 0;
    for a in 0..s {
        for b in a + 1..s {
            m.set(a, b, upper[k]);
            m.set(b, a, upper[k]);
            k += 1;
        }
    }
    m
}

pub fn prufer(s: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = PruferCode> {
    s.prop_flat_map(|s| prop::collection::vec(0..s, s - 2).prop_map(move |c| PruferCode::new(s, c).unwrap()))
}

fn sqeuclid(m1: &DiscreteMeasure, m2: &DiscreteMeasure) -> PairwiseCost {
    build_cost(m1, m2, CostKind::SqEuclidean).unwrap()
}

/// A converged plan meets both marginals to within `tol` in TV.
pub fn check_residual(m1: &DiscreteMeasure, m2: &DiscreteMeasure, eta: f64) -> Check {
    let cfg = SinkhornConfig::default();
    let plan = sinkhorn_solve(m1, m2, &sqeuclid(m1, m2), eta, &cfg).unwrap();
    prop_assume!(plan.converged());
    let r = tv_distance(&plan.plan.row_sums(), m1.weights())
        .max(tv_distance(&plan.plan.col_sums(), m2.weights()));
    prop_assert!(r <= cfg.tol * (1.0 + 1e-6), "residual {r:e}");
    prop_assert!(plan.report.residual <= cfg.tol);
    Ok(())
}

/// Scaling cost and `eta` together leaves the plan unchanged.
pub fn check_scaling(m1: &DiscreteMeasure, m2: &DiscreteMeasure, eta: f64, a: f64) -> Check {
    let cfg = SinkhornConfig::default();
    let c = sqeuclid(m1, m2);
    let p = sinkhorn_solve(m1, m2, &c, eta, &cfg).unwrap();
    let q = sinkhorn_solve(m1, m2, &c.scaled(a), a * eta, &cfg).unwrap();
    let d = p.plan.max_abs_diff(&q.plan).unwrap();
    prop_assert!(d <= 1e-8, "plans differ by {d:e}");
    Ok(())
}

pub fn check_g_nonnegative(m1: &DiscreteMeasure, m2: &DiscreteMeasure, eta: f64) -> Check {
    let (g, _) = edge_weight(m1, m2, &sqeuclid(m1, m2), &SolverConfig::new(eta)).unwrap();
    prop_assert!(g >= -1e-10, "g = {g:e}");
    Ok(())
}

pub fn check_g_zero_cost(m1: &DiscreteMeasure, m2: &DiscreteMeasure, eta: f64) -> Check {
    let zero = PairwiseCost::custom(Matrix::zeros(m1.len(), m2.len())).unwrap();
    let (g, _) = edge_weight(m1, m2, &zero, &SolverConfig::new(eta)).unwrap();
    prop_assert!(g.abs() <= 1e-10, "g = {g:e}");
    Ok(())
}

pub fn check_prufer_roundtrip(code: &PruferCode) -> Check {
    let tree = prufer_decode(code);
    prop_assert_eq!(tree.edges().len(), code.vertex_count() - 1);
    prop_assert_eq!(&prufer_encode(&tree), code);
    Ok(())
}

pub fn check_prim_boruvka(w: &Matrix) -> Check {
    let w = EdgeWeightMatrix::from_matrix(w.clone()).unwrap();
    let p = minimum_spanning_tree(&w, MstAlgorithm::Prim).unwrap();
    let b = minimum_spanning_tree(&w, MstAlgorithm::Boruvka).unwrap();
    prop_assert_eq!(p, b);
    Ok(())
}

pub fn check_shift(w: &Matrix, c: f64) -> Check {
    let w = EdgeWeightMatrix::from_matrix(w.clone()).unwrap();
    let t = minimum_spanning_tree(&w, MstAlgorithm::Prim).unwrap();
    let shifted = minimum_spanning_tree(&w.shifted(c), MstAlgorithm::Prim).unwrap();
    prop_assert_eq!(t, shifted);
    Ok(())
}

/// Both tree-cost routes agree on a random tree over solved weights.
pub fn check_cost_routes(measures: &MeasureCollection, eta: f64, code_seed: &[usize]) -> Check {
    let s = measures.len();
    let w = build_weight_matrix(measures, &CostSpec::Points(CostKind::SqEuclidean), &SolverConfig::new(eta))
        .unwrap();
    let code: Vec<usize> = code_seed.iter().take(s - 2).map(|c| c % s).collect();
    let tree = prufer_decode(&PruferCode::new(s, code).unwrap());
    let add = tree_cost_additive(&tree, w.matrix(), w.entropies()).unwrap();
    let dec = tree_cost_decomposed(&tree, &w.sb_values(), w.entropies()).unwrap();
    prop_assert!((add - dec).abs() <= 1e-12, "additive {add} vs decomposed {dec}");
    Ok(())
}
