//! Dirac masses have zero entropy, so every edge weight is a scaled distance
//! and the optimal structure is the Euclidean MST of the points.

use msbtree::measures::{DiscreteMeasure, MeasureCollection};
use msbtree::mst::{optimal_msb, CostSpec, SolverConfig};
use msbtree::sinkhorn::CostKind;

fn main() -> msbtree::Result<()> {
    let points = [[1.0, 0.0], [0.0, 1.5], [0.0, 0.0], [-2.0, 0.0], [0.0, -2.5]];
    let ms = MeasureCollection::new(
        points.iter().map(|p| DiscreteMeasure::dirac(p.to_vec())).collect::<Result<_, _>>()?,
    )?;
    let eta = 2.0;
    let r = optimal_msb(&ms, &CostSpec::Points(CostKind::Euclidean), &SolverConfig::new(eta))?;

    println!("edges {:?}", r.tree.edges_one_based());
    println!("prufer {:?}", r.prufer().one_based());
    println!("cost {} (sum of distances / eta = {})", r.total_cost, (1.0 + 1.5 + 2.0 + 2.5) / eta);
    Ok(())
}
