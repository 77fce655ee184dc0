//! The optimal multimarginal bridge as a minimum spanning tree.
//!
//! Each pair of measures gets the additive weight
//! `g = SB(mu_a, mu_b) + H(mu_a) + H(mu_b)`, after which the cost of the
//! optimal coupling on any tree `T` is `sum_{e in T} g_e - sum_v H(mu_v)`.
//! The best graph is therefore the minimum spanning tree of the complete
//! graph weighted by `g`.
//!
//! Both MST routines order edges by `(weight, min index, max index)`, which
//! makes the minimum unique even when weights tie.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::{DiscreteMeasure, MeasureCollection};
use crate::oracle::{checked_len, EdgeMap, CouplingTensor, DEFAULT_TENSOR_CAP};
use crate::sinkhorn::{
    build_cost, gibbs_kernel, sb_value, solve_weights, transport_cost, BimarginalCoupling,
    CostKind, PairwiseCost, SinkhornConfig,
};
use crate::trees::{
    compose_tree_coupling, enumerate_trees, tree_cost_additive, tree_cost_decomposed, PruferCode,
    SpanningTree,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NonConvergencePolicy {
    /// Abort on the first edge that misses the tolerance.
    #[default]
    Fail,
    /// Keep the last iterate and record a warning.
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MstAlgorithm {
    #[default]
    Prim,
    Boruvka,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub sinkhorn: SinkhornConfig,
    pub on_nonconvergence: NonConvergencePolicy,
    /// Worker threads for the edge loop; `None` uses the global pool.
    pub threads: Option<usize>,
    pub tensor_cap: usize,
    /// Also assemble the dense optimal coupling when it fits under the cap.
    pub compose: bool,
    pub algorithm: MstAlgorithm,
}

impl SolverConfig {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            sinkhorn: SinkhornConfig::default(),
            on_nonconvergence: NonConvergencePolicy::Fail,
            threads: None,
            tensor_cap: DEFAULT_TENSOR_CAP,
            compose: false,
            algorithm: MstAlgorithm::Prim,
        }
    }
}

/// Where pairwise ground costs come from.
#[derive(Debug, Clone)]
pub enum CostSpec {
    /// Evaluate a metric on the support points.
    Points(CostKind),
    /// Explicit matrices for every pair `(a, b)`, `a < b`, rows indexed by `a`.
    Matrices(EdgeMap<PairwiseCost>),
}

impl CostSpec {
    pub fn cost_for(&self, measures: &MeasureCollection, a: usize, b: usize) -> Result<PairwiseCost> {
        match self {
            CostSpec::Points(kind) => build_cost(measures.get(a), measures.get(b), *kind),
            CostSpec::Matrices(map) => {
                let c = map.get(&(a, b)).ok_or_else(|| {
                    Error::validation(format!("no cost matrix for pair ({}, {})", a + 1, b + 1))
                })?;
                if c.shape() != (measures.get(a).len(), measures.get(b).len()) {
                    return Err(Error::validation(format!(
                        "cost matrix for pair ({}, {}) has shape {:?}",
                        a + 1,
                        b + 1,
                        c.shape()
                    )));
                }
                Ok(c.clone())
            }
        }
    }

    /// Costs for every pair of vertices.
    pub fn all_pairs(&self, measures: &MeasureCollection) -> Result<EdgeMap<PairwiseCost>> {
        let s = measures.len();
        let mut out = EdgeMap::new();
        for a in 0..s {
            for b in a + 1..s {
                out.insert((a, b), self.cost_for(measures, a, b)?);
            }
        }
        Ok(out)
    }
}

/// Solver output kept for one edge of the complete graph.
#[derive(Debug, Clone)]
pub struct EdgeAttachment {
    pub sb_value: f64,
    pub plan: BimarginalCoupling,
    /// `<C, M>` of the entropic plan.
    pub transport_cost: f64,
}

impl EdgeAttachment {
    pub fn iterations(&self) -> usize {
        self.plan.report.iterations
    }

    pub fn residual(&self) -> f64 {
        self.plan.report.residual
    }

    pub fn converged(&self) -> bool {
        self.plan.report.converged
    }
}

/// `g = SB(mu_1, mu_2) + H(mu_1) + H(mu_2)` from one Sinkhorn solve.
pub fn edge_weight(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    cost: &PairwiseCost,
    config: &SolverConfig,
) -> Result<(f64, EdgeAttachment)> {
    let kernel = gibbs_kernel(cost, config.eta)?;
    let plan = solve_weights(m1.weights(), m2.weights(), &kernel, &config.sinkhorn)?;
    if !plan.converged() && config.on_nonconvergence == NonConvergencePolicy::Fail {
        return Err(Error::NonConvergence {
            edge: None,
            iterations: plan.report.iterations,
            residual: plan.report.residual,
        });
    }
    let sb = sb_value(&plan, &kernel);
    let g = sb + m1.entropy() + m2.entropy();
    if !g.is_finite() {
        return Err(Error::NonFinite("edge weight".into()));
    }
    let tc = transport_cost(&plan, cost);
    Ok((
        g,
        EdgeAttachment {
            sb_value: sb,
            plan,
            transport_cost: tc,
        },
    ))
}

/// Symmetric weights `g` of the complete graph on the measures.
#[derive(Debug, Clone)]
pub struct EdgeWeightMatrix {
    weights: Matrix,
    entropies: Vec<f64>,
    attachments: EdgeMap<EdgeAttachment>,
    warnings: Vec<String>,
}

impl EdgeWeightMatrix {
    /// Bare weights without solver attachments; the diagonal is ignored.
    /// Entropies default to zero.
    pub fn from_matrix(weights: Matrix) -> Result<Self> {
        let s = weights.rows();
        if weights.cols() != s || s < 2 {
            return Err(Error::validation("weight matrix must be square with s >= 2"));
        }
        for a in 0..s {
            for b in a + 1..s {
                let (x, y) = (weights.get(a, b), weights.get(b, a));
                if x != y && !(x.is_nan() && y.is_nan()) {
                    return Err(Error::validation(format!(
                        "weights are not symmetric at ({}, {})",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(Self {
            weights,
            entropies: vec![0.0; s],
            attachments: EdgeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights.get(a, b)
    }

    /// Full symmetric matrix with zero diagonal.
    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn entropies(&self) -> &[f64] {
        &self.entropies
    }

    pub fn attachment(&self, a: usize, b: usize) -> Option<&EdgeAttachment> {
        self.attachments.get(&crate::oracle::edge_key(a, b))
    }

    pub fn attachments(&self) -> &EdgeMap<EdgeAttachment> {
        &self.attachments
    }

    /// Edges whose Sinkhorn solve missed the tolerance under [`NonConvergencePolicy::Warn`].
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn sb_values(&self) -> EdgeMap<f64> {
        self.attachments.iter().map(|(&k, a)| (k, a.sb_value)).collect()
    }

    pub fn plans(&self) -> EdgeMap<BimarginalCoupling> {
        self.attachments.iter().map(|(&k, a)| (k, a.plan.clone())).collect()
    }

    /// Same weights with `c` added off the diagonal.
    pub fn shifted(&self, c: f64) -> Self {
        let s = self.vertex_count();
        let mut out = self.clone();
        out.weights = Matrix::from_fn(s, s, |a, b| if a == b { 0.0 } else { self.get(a, b) + c });
        out
    }

    /// Vertex relabeling: new vertex `k` is old vertex `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let s = self.vertex_count();
        Self {
            weights: Matrix::from_fn(s, s, |a, b| self.get(order[a], order[b])),
            entropies: order.iter().map(|&o| self.entropies[o]).collect(),
            attachments: EdgeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// CSV with a header row of 1-based vertex labels; the diagonal is blank.
    pub fn to_csv(&self, fmt: impl Fn(f64) -> String) -> String {
        let s = self.vertex_count();
        let mut out = String::new();
        for v in 1..=s {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
        for a in 0..s {
            out.push_str(&(a + 1).to_string());
            for b in 0..s {
                out.push(',');
                if a != b {
                    out.push_str(&fmt(self.get(a, b)));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn run_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

/// Solves the `s(s-1)/2` pairwise problems, possibly in parallel. Results
/// are placed by edge index, so the output does not depend on scheduling.
pub fn build_weight_matrix(
    measures: &MeasureCollection,
    costs: &CostSpec,
    config: &SolverConfig,
) -> Result<EdgeWeightMatrix> {
    let s = measures.len();
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|a| (a + 1..s).map(move |b| (a, b))).collect();
    let solve = |&(a, b): &(usize, usize)| -> Result<(f64, EdgeAttachment)> {
        let cost = costs.cost_for(measures, a, b)?;
        edge_weight(measures.get(a), measures.get(b), &cost, config).map_err(|e| match e {
            Error::NonConvergence {
                iterations,
                residual,
                ..
            } => Error::NonConvergence {
                edge: Some((a, b)),
                iterations,
                residual,
            },
            other => Error::Validation(format!("edge ({}, {}): {other}", a + 1, b + 1)),
        })
    };
    let results: Vec<Result<(f64, EdgeAttachment)>> =
        run_pool(config.threads, || pairs.par_iter().map(solve).collect())?;

    let mut weights = Matrix::zeros(s, s);
    let mut attachments = EdgeMap::new();
    let mut warnings = Vec::new();
    for (&(a, b), r) in pairs.iter().zip(results) {
        let (g, att) = r?;
        if !att.converged() {
            warnings.push(format!(
                "edge ({}, {}) did not converge: residual {:.3e} after {} iterations",
                a + 1,
                b + 1,
                att.residual(),
                att.iterations()
            ));
        }
        weights.set(a, b, g);
        weights.set(b, a, g);
        attachments.insert((a, b), att);
    }
    Ok(EdgeWeightMatrix {
        weights,
        entropies: measures.entropies(),
        attachments,
        warnings,
    })
}

/// Total order on edges: weight, then smaller endpoint, then larger endpoint.
#[inline]
fn edge_cmp(w: &EdgeWeightMatrix, e: (usize, usize), f: (usize, usize)) -> Ordering {
    w.get(e.0, e.1)
        .total_cmp(&w.get(f.0, f.1))
        .then(e.0.cmp(&f.0))
        .then(e.1.cmp(&f.1))
}

fn check_finite(w: &EdgeWeightMatrix) -> Result<()> {
    let s = w.vertex_count();
    if s < 2 {
        return Err(Error::validation("need at least 2 vertices"));
    }
    for a in 0..s {
        for b in a + 1..s {
            if !w.get(a, b).is_finite() {
                return Err(Error::NonFinite(format!("weight ({}, {})", a + 1, b + 1)));
            }
        }
    }
    Ok(())
}

/// Dense Prim: `O(s^2)` on the complete graph.
pub fn mst_prim_dense(w: &EdgeWeightMatrix) -> Result<SpanningTree> {
    check_finite(w)?;
    let s = w.vertex_count();
    let mut in_tree = vec![false; s];
    // cheapest known edge from the tree to each outside vertex
    let mut best: Vec<Option<(usize, usize)>> = vec![None; s];
    let mut edges = Vec::with_capacity(s - 1);
    let mut v = 0;
    in_tree[0] = true;
    for _ in 1..s {
        for u in 0..s {
            if in_tree[u] {
                continue;
            }
            let cand = crate::oracle::edge_key(v, u);
            match best[u] {
                Some(cur) if edge_cmp(w, cur, cand) != Ordering::Greater => {}
                _ => best[u] = Some(cand),
            }
        }
        let next = (0..s)
            .filter(|&u| !in_tree[u])
            .min_by(|&x, &y| edge_cmp(w, best[x].unwrap(), best[y].unwrap()))
            .expect("an outside vertex remains");
        edges.push(best[next].unwrap());
        in_tree[next] = true;
        v = next;
    }
    SpanningTree::new(s, edges)
}

/// Borůvka: every component repeatedly grabs its cheapest outgoing edge.
pub fn mst_boruvka(w: &EdgeWeightMatrix) -> Result<SpanningTree> {
    check_finite(w)?;
    let s = w.vertex_count();
    let mut comp: Vec<usize> = (0..s).collect();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(s - 1);
    while edges.len() < s - 1 {
        let mut cheapest: Vec<Option<(usize, usize)>> = vec![None; s];
        for a in 0..s {
            for b in a + 1..s {
                let (ca, cb) = (comp[a], comp[b]);
                if ca == cb {
                    continue;
                }
                for c in [ca, cb] {
                    match cheapest[c] {
                        Some(cur) if edge_cmp(w, cur, (a, b)) != Ordering::Greater => {}
                        _ => cheapest[c] = Some((a, b)),
                    }
                }
            }
        }
        let mut chosen: Vec<(usize, usize)> = cheapest.into_iter().flatten().collect();
        chosen.sort_unstable();
        chosen.dedup();
        for (a, b) in chosen {
            let (ca, cb) = (comp[a], comp[b]);
            if ca == cb {
                continue;
            }
            let (keep, drop) = (ca.min(cb), ca.max(cb));
            for c in comp.iter_mut() {
                if *c == drop {
                    *c = keep;
                }
            }
            edges.push((a, b));
        }
    }
    SpanningTree::new(s, edges)
}

pub fn minimum_spanning_tree(w: &EdgeWeightMatrix, algorithm: MstAlgorithm) -> Result<SpanningTree> {
    match algorithm {
        MstAlgorithm::Prim => mst_prim_dense(w),
        MstAlgorithm::Boruvka => mst_boruvka(w),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeBreakdown {
    /// 0-based endpoints, `a < b`.
    pub a: usize,
    pub b: usize,
    pub g: f64,
    pub sb_value: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timings {
    pub weights_seconds: f64,
    pub mst_seconds: f64,
    pub compose_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct OptimalMsbResult {
    pub tree: SpanningTree,
    /// `sum_{e in T} g_e - sum_v H(mu_v)`: the optimal `D_KL(M || K)`.
    pub total_cost: f64,
    /// Same value through `sum SB + sum (deg - 1) H`.
    pub decomposed_cost: f64,
    pub edges: Vec<EdgeBreakdown>,
    pub weights: EdgeWeightMatrix,
    pub coupling: Option<CouplingTensor>,
    pub notes: Vec<String>,
    pub timings: Timings,
}

impl OptimalMsbResult {
    pub fn prufer(&self) -> PruferCode {
        self.tree.prufer()
    }

    pub fn entropies(&self) -> &[f64] {
        self.weights.entropies()
    }
}

/// Builds all edge weights, extracts the MST and reports its cost.
pub fn optimal_msb(
    measures: &MeasureCollection,
    costs: &CostSpec,
    config: &SolverConfig,
) -> Result<OptimalMsbResult> {
    let t0 = Instant::now();
    let weights = build_weight_matrix(measures, costs, config)?;
    let t1 = Instant::now();
    let tree = minimum_spanning_tree(&weights, config.algorithm)?;
    let t2 = Instant::now();

    let total_cost = tree_cost_additive(&tree, weights.matrix(), weights.entropies())?;
    let decomposed_cost = tree_cost_decomposed(&tree, &weights.sb_values(), weights.entropies())?;
    let edges = tree
        .edges()
        .iter()
        .map(|&(a, b)| {
            let att = weights.attachment(a, b).expect("every pair was solved");
            EdgeBreakdown {
                a,
                b,
                g: weights.get(a, b),
                sb_value: att.sb_value,
                iterations: att.iterations(),
                residual: att.residual(),
            }
        })
        .collect();

    let mut notes: Vec<String> = weights.warnings().to_vec();
    let mut coupling = None;
    if config.compose {
        match checked_len(&measures.shape(), config.tensor_cap) {
            Ok(_) => {
                let plans = weights.plans();
                coupling = Some(compose_tree_coupling(&tree, &plans, measures, config.tensor_cap)?);
            }
            Err(e) => notes.push(format!("coupling not composed: {e}; pairwise plans are attached")),
        }
    }
    let t3 = Instant::now();
    Ok(OptimalMsbResult {
        tree,
        total_cost,
        decomposed_cost,
        edges,
        weights,
        coupling,
        notes,
        timings: Timings {
            weights_seconds: (t1 - t0).as_secs_f64(),
            mst_seconds: (t2 - t1).as_secs_f64(),
            compose_seconds: (t3 - t2).as_secs_f64(),
        },
    })
}

/// One row of an exhaustive ranking.
#[derive(Debug, Clone)]
pub struct RankedTree {
    pub code: PruferCode,
    pub tree: SpanningTree,
    pub additive_cost: f64,
}

/// Every spanning tree scored by its additive cost, ascending; ties keep
/// lexicographic Prüfer order.
pub fn rank_all_trees(w: &EdgeWeightMatrix, enumeration_cap: usize) -> Result<Vec<RankedTree>> {
    let mut rows = enumerate_trees(w.vertex_count(), enumeration_cap)?
        .map(|(code, tree)| {
            let additive_cost = tree_cost_additive(&tree, w.matrix(), w.entropies())?;
            Ok(RankedTree {
                code,
                tree,
                additive_cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|x, y| x.additive_cost.total_cmp(&y.additive_cost));
    Ok(rows)
}
