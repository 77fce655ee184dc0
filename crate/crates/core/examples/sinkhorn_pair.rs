//! Entropic coupling between two small point clouds, its SB value and the
//! edge weight it contributes to the MST.

use msbtree::measures::DiscreteMeasure;
use msbtree::mst::{edge_weight, SolverConfig};
use msbtree::sinkhorn::{build_cost, gibbs_kernel, sb_value, sinkhorn_solve, transport_cost, CostKind, SinkhornConfig};

fn main() -> msbtree::Result<()> {
    let mu = DiscreteMeasure::from_unnormalized(vec![vec![0.0], vec![1.0], vec![2.0]], &[1.0, 2.0, 1.0])?;
    let nu = DiscreteMeasure::uniform(vec![vec![0.5], vec![2.5]])?;
    let cost = build_cost(&mu, &nu, CostKind::SqEuclidean)?;

    for eta in [0.1, 1.0, 10.0] {
        let p = sinkhorn_solve(&mu, &nu, &cost, eta, &SinkhornConfig::default())?;
        let kernel = gibbs_kernel(&cost, eta)?;
        println!(
            "eta = {eta:<5} sweeps = {:<5} residual = {:.2e}  <C,M> = {:.6}  SB = {:.6}",
            p.report.iterations,
            p.report.residual,
            transport_cost(&p, &cost),
            sb_value(&p, &kernel),
        );
        for row in p.plan.to_rows() {
            println!("    {:?}", row.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>());
        }
    }

    // g = SB + H(mu) + H(nu); never negative.
    let (g, att) = edge_weight(&mu, &nu, &cost, &SolverConfig::new(1.0))?;
    println!("g = {g:.9} (SB {:.9}, H(mu) {:.6}, H(nu) {:.6})", att.sb_value, mu.entropy(), nu.entropy());
    Ok(())
}
