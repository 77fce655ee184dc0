//! Grayscale images as measures on pixel coordinates. Three small blobs are
//! read from PGM and CSV files and joined by the optimal tree.

use msbtree::measures::{image_to_measure, read_image, MeasureCollection};
use msbtree::mst::{optimal_msb, CostSpec, SolverConfig};
use msbtree::sinkhorn::CostKind;

fn main() -> msbtree::Result<()> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let mut measures = Vec::new();
    for name in ["blob_a.pgm", "blob_b.pgm", "blob_c.csv"] {
        let grid = read_image(format!("{dir}/{name}"))?;
        let m = image_to_measure(&grid)?;
        println!("{name}: {} pixels, entropy {:.4}", m.len(), m.entropy());
        measures.push(m);
    }
    let ms = MeasureCollection::new(measures)?;
    let r = optimal_msb(&ms, &CostSpec::Points(CostKind::SqEuclidean), &SolverConfig::new(2.0))?;
    println!("edges {:?}, cost {:.6}", r.tree.edges_one_based(), r.total_cost);
    for e in &r.edges {
        println!("  ({}, {}) g = {:.6}, {} sweeps", e.a + 1, e.b + 1, e.g, e.iterations);
    }
    Ok(())
}
