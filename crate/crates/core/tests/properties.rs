mod support;

use msbtree::measures::{entropy, normalize, DiscreteMeasure};
use msbtree::mst::{build_weight_matrix, minimum_spanning_tree, rank_all_trees, CostSpec, MstAlgorithm, SolverConfig};
use msbtree::oracle::{cost_tensor, mm_sinkhorn, msb_objective, project, DEFAULT_TENSOR_CAP};
use msbtree::sinkhorn::{build_cost, sinkhorn_solve, tv_distance, CostKind, SinkhornConfig};
use msbtree::trees::{compose_tree_coupling, enumerate_trees, prufer_decode, tree_cost_decomposed};
use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn residual_within_tol((m1, m2, eta) in pair()) {
        check_residual(&m1, &m2, eta)?;
    }

    #[test]
    fn plan_invariant_under_joint_scaling((m1, m2, eta) in pair(), a in 0.1f64..10.0) {
        check_scaling(&m1, &m2, eta, a)?;
    }

    #[test]
    fn zero_cost_edge_weight_vanishes((m1, m2, eta) in pair()) {
        check_g_zero_cost(&m1, &m2, eta)?;
    }

    #[test]
    fn transpose_symmetry((m1, m2, eta) in pair()) {
        let cfg = SinkhornConfig::default();
        let c = build_cost(&m1, &m2, CostKind::SqEuclidean).unwrap();
        let p = sinkhorn_solve(&m1, &m2, &c, eta, &cfg).unwrap();
        let q = sinkhorn_solve(&m2, &m1, &c.transpose(), eta, &cfg).unwrap();
        let d = p.plan.transpose().max_abs_diff(&q.plan).unwrap();
        prop_assert!(d <= 2.0 * cfg.tol, "{d:e}");
    }

    #[test]
    fn residual_non_increasing((m1, m2, eta) in pair()) {
        let cfg = SinkhornConfig { record_history: true, ..SinkhornConfig::default() };
        let c = build_cost(&m1, &m2, CostKind::SqEuclidean).unwrap();
        let p = sinkhorn_solve(&m1, &m2, &c, eta, &cfg).unwrap();
        for w in p.report.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn entropy_bounds_and_scale(w in prop::collection::vec(0.0f64..1.0, 1..10), k in 0.01f64..100.0) {
        prop_assume!(w.iter().sum::<f64>() > 1e-6);
        let p = normalize(&w).unwrap();
        let h = entropy(&p);
        prop_assert!(h >= 0.0 && h <= (p.len() as f64).ln() + 1e-12);
        let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
        prop_assert!((entropy(&normalize(&scaled).unwrap()) - h).abs() < 1e-12);
        let mut rev = p.clone();
        rev.reverse();
        prop_assert!((entropy(&rev) - h).abs() < 1e-12);
    }

    #[test]
    fn tree_cost_routes_agree(ms in collection(2..=6, 4), eta in 0.5f64..5.0, seed in prop::collection::vec(0usize..100, 4)) {
        check_cost_routes(&ms, eta, &seed)?;
    }

    #[test]
    fn degree_bookkeeping(code in prufer(2..=8)) {
        let t = prufer_decode(&code);
        let excess: isize = t.degrees().iter().map(|&d| d as isize - 1).sum();
        prop_assert_eq!(excess, code.vertex_count() as isize - 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn edge_weight_nonnegative((m1, m2, eta) in pair()) {
        check_g_nonnegative(&m1, &m2, eta)?;
    }

    #[test]
    fn mst_shift_invariance(w in distinct_weights(2..=12), c in -10.0f64..10.0) {
        check_shift(&w, c)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn prufer_roundtrip(code in prufer(2..=8)) {
        check_prufer_roundtrip(&code)?;
    }

    #[test]
    fn prim_boruvka_agree(w in distinct_weights(2..=20)) {
        check_prim_boruvka(&w)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn bimarginal_oracle_matches_sinkhorn(ms in collection(2..=2, 5), eta in 0.5f64..5.0) {
        let cfg = SinkhornConfig { tol: 1e-12, ..SinkhornConfig::default() };
        let costs = CostSpec::Points(CostKind::SqEuclidean).all_pairs(&ms).unwrap();
        let graph = msbtree::oracle::GraphStructure::path(2);
        let mm = mm_sinkhorn(&ms, &graph, &costs, eta, &cfg, DEFAULT_TENSOR_CAP).unwrap();
        let bi = sinkhorn_solve(ms.get(0), ms.get(1), &costs[&(0, 1)], eta, &cfg).unwrap();
        prop_assert!(mm.report.converged && bi.converged());
        let d = mm.coupling.tensor().data().iter().zip(bi.plan.as_slice())
            .map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-10, "{d:e}");
    }

    #[test]
    fn composition_matches_dense_oracle(ms in collection(3..=4, 4), eta in 0.5f64..5.0, seed in prop::collection::vec(0usize..100, 2)) {
        let cfg = SolverConfig::new(eta);
        let spec = CostSpec::Points(CostKind::SqEuclidean);
        let w = build_weight_matrix(&ms, &spec, &cfg).unwrap();
        let s = ms.len();
        let code = msbtree::trees::PruferCode::new(s, seed.iter().take(s - 2).map(|c| c % s).collect()).unwrap();
        let tree = prufer_decode(&code);
        let costs = spec.all_pairs(&ms).unwrap();
        let graph = tree.to_graph();
        let dense = mm_sinkhorn(&ms, &graph, &costs, eta, &cfg.sinkhorn, DEFAULT_TENSOR_CAP).unwrap();
        prop_assert!(dense.report.converged);
        for sigma in 0..s {
            let marginal = project(dense.coupling.tensor(), sigma).unwrap();
            prop_assert!(tv_distance(&marginal, ms.get(sigma).weights()) <= cfg.sinkhorn.tol * (1.0 + 1e-6));
        }
        let composed = compose_tree_coupling(&tree, &w.plans(), &ms, DEFAULT_TENSOR_CAP).unwrap();
        let gap = composed.tensor().sup_distance(dense.coupling.tensor()).unwrap();
        prop_assert!(gap <= 1e-6, "tensor gap {gap:e}");

        let c = cost_tensor(&graph, &costs, &ms.shape(), DEFAULT_TENSOR_CAP).unwrap();
        let objective = msb_objective(composed.tensor(), &c, eta).unwrap();
        let decomposed = tree_cost_decomposed(&tree, &w.sb_values(), w.entropies()).unwrap();
        prop_assert!((decomposed - objective / eta).abs() <= 1e-6);

        // the same objective in KL form
        let log_k: Vec<f64> = c.data().iter().map(|x| (-x / eta).exp()).collect();
        let kl = msbtree::sinkhorn::kl_divergence(composed.tensor().data(), &log_k).unwrap();
        prop_assert!((objective - eta * kl).abs() <= 1e-9 * objective.abs().max(1.0));
    }

    #[test]
    fn mst_equals_exhaustive_argmin(ms in collection(5..=5, 3), eta in 0.5f64..5.0) {
        let w = build_weight_matrix(&ms, &CostSpec::Points(CostKind::SqEuclidean), &SolverConfig::new(eta)).unwrap();
        let ranked = rank_all_trees(&w, 8).unwrap();
        prop_assert_eq!(ranked.len(), 125);
        prop_assume!(ranked[1].additive_cost - ranked[0].additive_cost > 1e-6);
        prop_assert_eq!(&minimum_spanning_tree(&w, MstAlgorithm::Prim).unwrap(), &ranked[0].tree);
    }

    #[test]
    fn mst_permutation_equivariance(w in distinct_weights(3..=10), shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let s = w.rows();
        let mut order: Vec<usize> = (0..s).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let wm = msbtree::mst::EdgeWeightMatrix::from_matrix(w).unwrap();
        let t = minimum_spanning_tree(&wm, MstAlgorithm::Prim).unwrap();
        let tp = minimum_spanning_tree(&wm.permuted(&order), MstAlgorithm::Prim).unwrap();
        // vertex k of the permuted problem is vertex order[k] of the original
        let mapped: std::collections::BTreeSet<(usize, usize)> = tp.edges().iter()
            .map(|&(a, b)| { let (x, y) = (order[a], order[b]); (x.min(y), x.max(y)) }).collect();
        let original: std::collections::BTreeSet<(usize, usize)> = t.edges().iter().copied().collect();
        prop_assert_eq!(mapped, original);
    }
}

#[test]
fn enumeration_yields_distinct_trees() {
    for s in 2..=7 {
        let trees: std::collections::HashSet<_> = enumerate_trees(s, 8).unwrap().map(|(_, t)| t).collect();
        assert_eq!(trees.len(), s.pow(s as u32 - 2));
    }
}

#[test]
fn dirac_measure_has_zero_entropy() {
    assert_eq!(DiscreteMeasure::dirac(vec![1.0, 2.0]).unwrap().entropy(), 0.0);
}
