//! Checks the tree-composed coupling against dense multimarginal Sinkhorn on
//! the full tensor, for the optimal tree and for a worse one.

use msbtree::measures::{sample_gmm_seeded, GmmComponent, MeasureCollection};
use msbtree::mst::{build_weight_matrix, minimum_spanning_tree, CostSpec, MstAlgorithm, SolverConfig};
use msbtree::oracle::{cost_tensor, mm_sinkhorn, msb_objective, DEFAULT_TENSOR_CAP};
use msbtree::sinkhorn::CostKind;
use msbtree::trees::{compose_tree_coupling, prufer_decode, tree_cost_additive, PruferCode};

fn main() -> msbtree::Result<()> {
    let eta = 1.0;
    let centers = [-4.0, -1.0, 0.5, 3.0];
    let ms = MeasureCollection::new(
        centers
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let mix = [GmmComponent { mean: m, std: 1.0, weight: 1.0 }];
                sample_gmm_seeded(&mix, 6, (-8.0, 8.0), k as u64)
            })
            .collect::<Result<_, _>>()?,
    )?;
    let spec = CostSpec::Points(CostKind::SqEuclidean);
    let cfg = SolverConfig::new(eta);
    let w = build_weight_matrix(&ms, &spec, &cfg)?;
    let costs = spec.all_pairs(&ms)?;
    let mst = minimum_spanning_tree(&w, MstAlgorithm::Prim)?;
    let star = prufer_decode(&PruferCode::parse("1 1", 4)?);

    for (name, tree) in [("mst", mst), ("star at 1", star)] {
        let graph = tree.to_graph();
        let dense = mm_sinkhorn(&ms, &graph, &costs, eta, &cfg.sinkhorn, DEFAULT_TENSOR_CAP)?;
        let composed = compose_tree_coupling(&tree, &w.plans(), &ms, DEFAULT_TENSOR_CAP)?;
        let c = cost_tensor(&graph, &costs, &ms.shape(), DEFAULT_TENSOR_CAP)?;
        let objective = msb_objective(dense.coupling.tensor(), &c, eta)? / eta;
        let additive = tree_cost_additive(&tree, w.matrix(), w.entropies())?;
        println!(
            "{name:<10} edges {:?}  dense {objective:.9}  additive {additive:.9}  tensor gap {:.1e}  sweeps {}",
            tree.edges_one_based(),
            composed.tensor().sup_distance(dense.coupling.tensor())?,
            dense.report.iterations,
        );
    }
    Ok(())
}
