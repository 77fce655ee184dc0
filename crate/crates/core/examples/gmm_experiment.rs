//! Five Gaussian mixtures on [-10, 10], 25 samples each: rank all 125 trees
//! by their additive cost and compare with the MST.

use msbtree::cli::GmmSpec;
use msbtree::measures::{sample_gmm, MeasureCollection};
use msbtree::mst::{optimal_msb, rank_all_trees, CostSpec, SolverConfig};
use msbtree::sinkhorn::CostKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/gmm5.json");
    let spec: GmmSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ms = MeasureCollection::new(
        spec.mixtures
            .iter()
            .map(|mix| sample_gmm(mix, 25, (spec.interval[0], spec.interval[1]), &mut rng))
            .collect::<Result<_, _>>()?,
    )?;

    let mut cfg = SolverConfig::new(1.0);
    cfg.compose = false;
    let r = optimal_msb(&ms, &CostSpec::Points(CostKind::SqEuclidean), &cfg)?;
    println!("optimal tree {:?}, prufer {:?}", r.tree.edges_one_based(), r.prufer().one_based());
    println!("cost {:.9} (decomposed {:.9})", r.total_cost, r.decomposed_cost);
    println!("weights {:.3}s, mst {:.6}s", r.timings.weights_seconds, r.timings.mst_seconds);

    let ranked = rank_all_trees(&r.weights, 8)?;
    println!("rank  prufer     cost");
    for (k, row) in ranked.iter().take(5).chain(ranked.last()).enumerate() {
        let rank = if k < 5 { k + 1 } else { ranked.len() };
        println!("{rank:>4}  {:<9}  {:.9}", format!("{:?}", row.code.one_based()), row.additive_cost);
    }
    assert_eq!(ranked[0].tree, r.tree);
    Ok(())
}
