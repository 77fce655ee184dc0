//! Labeled spanning trees and tree-structured couplings.
//!
//! Vertices are `0..s` in the API. Prüfer codes and every serialized form
//! (edge lists, DOT) use 1-based labels, so the code `3 3 5` names the tree
//! with edges `1-3, 2-3, 3-5, 4-5`.
//!
//! On a tree, the optimal multimarginal coupling factors through its edges:
//!
//! ```text
//! M[i_1..i_s] = prod_{(a,b) in E} M_ab[i_a, i_b] / prod_v mu_v[i_v]^(deg v - 1)
//! ```
//!
//! and its KL value against the Gibbs kernel is the sum of the edge SB values
//! plus `(deg v - 1) H(mu_v)` per vertex. [`compose_tree_coupling`] and
//! [`tree_cost_decomposed`] implement those two identities.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::MeasureCollection;
use crate::oracle::{checked_len, edge_key, CouplingTensor, EdgeMap, GraphStructure, Tensor};
use crate::sinkhorn::{tv_distance, BimarginalCoupling, PairwiseCost};

/// Largest `s` accepted by [`enumerate_trees`] unless overridden (8^6 trees).
pub const DEFAULT_ENUMERATION_CAP: usize = 8;

/// Tolerance on plan marginals accepted by [`compose_tree_coupling`].
pub const COMPOSE_MARGINAL_TOLERANCE: f64 = 1e-6;

/// A spanning tree on `s` labeled vertices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpanningTree {
    s: usize,
    /// Sorted, each as `(min, max)`.
    edges: Vec<(usize, usize)>,
}

impl SpanningTree {
    /// Validates `s - 1` edges forming an acyclic (hence connected) graph.
    pub fn new(s: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if s < 2 {
            return Err(Error::validation(format!("a spanning tree needs s >= 2, got {s}")));
        }
        let mut list: Vec<(usize, usize)> = Vec::with_capacity(s - 1);
        let mut uf = UnionFind::new(s);
        for (a, b) in edges {
            if a >= s || b >= s || a == b {
                return Err(Error::validation(format!(
                    "invalid edge ({}, {}) for {s} vertices",
                    a + 1,
                    b + 1
                )));
            }
            if !uf.union(a, b) {
                return Err(Error::validation(format!(
                    "edge ({}, {}) closes a cycle",
                    a + 1,
                    b + 1
                )));
            }
            list.push(edge_key(a, b));
        }
        if list.len() != s - 1 {
            return Err(Error::validation(format!(
                "a spanning tree on {s} vertices has {} edges, got {}",
                s - 1,
                list.len()
            )));
        }
        list.sort_unstable();
        Ok(Self { s, edges: list })
    }

    pub fn vertex_count(&self) -> usize {
        self.s
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.s];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&edge_key(a, b)).is_ok()
    }

    pub fn to_graph(&self) -> GraphStructure {
        GraphStructure::new(self.s, self.edges.iter().copied()).expect("tree edges are simple")
    }

    /// Edges as 1-based pairs.
    pub fn edges_one_based(&self) -> Vec<[usize; 2]> {
        self.edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect()
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph tree {\n");
        for v in 1..=self.s {
            out.push_str(&format!("  {v};\n"));
        }
        for &(a, b) in &self.edges {
            out.push_str(&format!("  {} -- {};\n", a + 1, b + 1));
        }
        out.push_str("}\n");
        out
    }

    pub fn prufer(&self) -> PruferCode {
        prufer_encode(self)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Prüfer sequence of length `s - 2`, stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PruferCode {
    s: usize,
    code: Vec<usize>,
}

impl PruferCode {
    /// `code` holds 0-based vertex labels.
    pub fn new(s: usize, code: Vec<usize>) -> Result<Self> {
        if s < 2 {
            return Err(Error::validation(format!("Prüfer codes need s >= 2, got {s}")));
        }
        if code.len() != s - 2 {
            return Err(Error::validation(format!(
                "a Prüfer code for s = {s} has length {}, got {}",
                s - 2,
                code.len()
            )));
        }
        if let Some(&bad) = code.iter().find(|&&v| v >= s) {
            return Err(Error::validation(format!(
                "Prüfer entry {} out of range 1..={s}",
                bad + 1
            )));
        }
        Ok(Self { s, code })
    }

    /// Parses space-separated 1-based labels, e.g. `"3 3 5"`.
    pub fn parse(text: &str, s: usize) -> Result<Self> {
        let code = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| match t.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::validation(format!("bad Prüfer entry {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(s, code)
    }

    pub fn vertex_count(&self) -> usize {
        self.s
    }

    /// 0-based labels.
    pub fn as_slice(&self) -> &[usize] {
        &self.code
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.code.iter().map(|v| v + 1).collect()
    }
}

impl fmt::Display for PruferCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.code.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", v + 1)?;
        }
        Ok(())
    }
}

pub fn prufer_decode(code: &PruferCode) -> SpanningTree {
    let s = code.s;
    let mut degree = vec![1usize; s];
    for &v in &code.code {
        degree[v] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..s).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(s - 1);
    for &v in &code.code {
        let leaf = leaves.pop_first().expect("a tree always has a leaf");
        edges.push(edge_key(leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.insert(v);
        }
    }
    let a = leaves.pop_first().expect("two vertices remain");
    let b = leaves.pop_first().expect("two vertices remain");
    edges.push((a, b));
    SpanningTree::new(s, edges).expect("decoding yields a tree")
}

pub fn prufer_encode(tree: &SpanningTree) -> PruferCode {
    let s = tree.s;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); s];
    for &(a, b) in &tree.edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    let mut leaves: BTreeSet<usize> = (0..s).filter(|&v| adj[v].len() == 1).collect();
    let mut code = Vec::with_capacity(s.saturating_sub(2));
    for _ in 0..s.saturating_sub(2) {
        let leaf = leaves.pop_first().expect("a tree always has a leaf");
        let parent = *adj[leaf].first().expect("leaf has a neighbor");
        adj[parent].remove(&leaf);
        adj[leaf].clear();
        code.push(parent);
        if adj[parent].len() == 1 {
            leaves.insert(parent);
        }
    }
    PruferCode { s, code }
}

/// Every labeled tree on `s` vertices, in lexicographic order of Prüfer code.
pub fn enumerate_trees(s: usize, cap: usize) -> Result<TreeEnumerator> {
    if s < 2 {
        return Err(Error::validation(format!("need s >= 2, got {s}")));
    }
    if s > cap {
        return Err(Error::validation(format!(
            "refusing to enumerate {s}^{} trees: s = {s} exceeds the enumeration cap of {cap}",
            s - 2
        )));
    }
    Ok(TreeEnumerator {
        s,
        next: Some(vec![0; s - 2]),
    })
}

/// Number of labeled trees on `s` vertices, `s^(s-2)`.
pub fn tree_count(s: usize) -> u64 {
    if s < 2 {
        0
    } else {
        (s as u64).pow(s as u32 - 2)
    }
}

#[derive(Debug, Clone)]
pub struct TreeEnumerator {
    s: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for TreeEnumerator {
    type Item = (PruferCode, SpanningTree);

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut more = false;
        for slot in succ.iter_mut().rev() {
            *slot += 1;
            if *slot < self.s {
                more = true;
                break;
            }
            *slot = 0;
        }
        if more {
            self.next = Some(succ);
        }
        let code = PruferCode {
            s: self.s,
            code: current,
        };
        let tree = prufer_decode(&code);
        Some((code, tree))
    }
}

/// Edges incident to vertex `k` from lower-numbered vertices, per vertex.
fn back_edges(tree: &SpanningTree) -> Vec<Vec<(usize, usize)>> {
    let mut back = vec![Vec::new(); tree.s];
    for &(a, b) in &tree.edges {
        back[b].push((a, b));
    }
    back
}

fn tree_plans<'a>(
    tree: &SpanningTree,
    plans: &'a EdgeMap<BimarginalCoupling>,
    marginals: &MeasureCollection,
) -> Result<Vec<&'a Matrix>> {
    if marginals.len() != tree.s {
        return Err(Error::DimensionMismatch {
            expected: tree.s,
            got: marginals.len(),
        });
    }
    tree.edges
        .iter()
        .map(|&(a, b)| {
            let plan = &plans
                .get(&(a, b))
                .ok_or_else(|| {
                    Error::validation(format!("missing plan for edge ({}, {})", a + 1, b + 1))
                })?
                .plan;
            let (ma, mb) = (marginals.get(a), marginals.get(b));
            if plan.rows() != ma.len() || plan.cols() != mb.len() {
                return Err(Error::validation(format!(
                    "plan for edge ({}, {}) has the wrong shape",
                    a + 1,
                    b + 1
                )));
            }
            let gap = tv_distance(&plan.row_sums(), ma.weights())
                .max(tv_distance(&plan.col_sums(), mb.weights()));
            if gap > COMPOSE_MARGINAL_TOLERANCE {
                return Err(Error::validation(format!(
                    "plan for edge ({}, {}) misses its marginals by {gap:.3e}",
                    a + 1,
                    b + 1
                )));
            }
            Ok(plan)
        })
        .collect()
}

/// Assembles the dense tree-structured coupling from its edge plans.
///
/// Plans are keyed `(a, b)` with `a < b` and rows indexed by `a`. Entries at
/// which any marginal weight vanishes are 0.
pub fn compose_tree_coupling(
    tree: &SpanningTree,
    plans: &EdgeMap<BimarginalCoupling>,
    marginals: &MeasureCollection,
    cap: usize,
) -> Result<CouplingTensor> {
    let shape = marginals.shape();
    checked_len(&shape, cap)?;
    let mats = tree_plans(tree, plans, marginals)?;
    let by_edge: EdgeMap<&Matrix> = tree.edges.iter().copied().zip(mats).collect();
    let back = back_edges(tree);
    let deg = tree.degrees();

    // factor[k][j] = product of back-edge plan entries times mu_k^(1 - deg k),
    // evaluated at i_k = j given the prefix; computed on the fly per prefix.
    let mut out = Tensor::zeros(&shape, cap)?;
    let data = out.data_mut();
    let s = tree.s;
    let mut index = vec![0usize; s];
    let mut partial = vec![1.0f64; s + 1];
    let mut pos = 0usize;
    let mut depth = 0usize;
    let inv_pow: Vec<Vec<f64>> = (0..s)
        .map(|v| {
            marginals
                .get(v)
                .weights()
                .iter()
                .map(|&w| if w > 0.0 { w.powi(1 - deg[v] as i32) } else { 0.0 })
                .collect()
        })
        .collect();

    // Iterative depth-first walk in row-major order.
    loop {
        if depth == s {
            data[pos] = partial[s];
            pos += 1;
            depth -= 1;
            index[depth] += 1;
            continue;
        }
        if index[depth] == shape[depth] {
            if depth == 0 {
                break;
            }
            index[depth] = 0;
            depth -= 1;
            index[depth] += 1;
            continue;
        }
        let j = index[depth];
        let mut f = partial[depth] * inv_pow[depth][j];
        for &(a, b) in &back[depth] {
            f *= by_edge[&(a, b)].get(index[a], j);
        }
        partial[depth + 1] = f;
        depth += 1;
    }
    CouplingTensor::new(out)
}

/// `<C + eta log M, M>` of the tree-composed coupling, streamed without
/// materializing the tensor. `costs` must cover every tree edge.
pub fn composed_objective(
    tree: &SpanningTree,
    plans: &EdgeMap<BimarginalCoupling>,
    marginals: &MeasureCollection,
    costs: &EdgeMap<PairwiseCost>,
    eta: f64,
) -> Result<f64> {
    crate::sinkhorn::check_eta(eta)?;
    let mats = tree_plans(tree, plans, marginals)?;
    let s = tree.s;
    let shape = marginals.shape();
    let deg = tree.degrees();
    let mut log_plan: Vec<Matrix> = Vec::with_capacity(s - 1);
    let mut cost_of: Vec<&Matrix> = Vec::with_capacity(s - 1);
    for (&(a, b), m) in tree.edges.iter().zip(mats) {
        log_plan.push(m.map(f64::ln));
        let c = costs.get(&(a, b)).ok_or_else(|| {
            Error::validation(format!("missing cost for edge ({}, {})", a + 1, b + 1))
        })?;
        if c.shape() != (shape[a], shape[b]) {
            return Err(Error::validation(format!(
                "cost for edge ({}, {}) has the wrong shape",
                a + 1,
                b + 1
            )));
        }
        cost_of.push(c.matrix());
    }
    // per vertex: (lower endpoint, edge slot) of each edge to a lower vertex
    let mut back: Vec<Vec<(usize, usize)>> = vec![Vec::new(); s];
    for (k, &(a, b)) in tree.edges.iter().enumerate() {
        back[b].push((a, k));
    }
    // (1 - deg v) log mu_v, or -inf where mu_v vanishes
    let vertex_log: Vec<Vec<f64>> = (0..s)
        .map(|v| {
            marginals
                .get(v)
                .weights()
                .iter()
                .map(|&w| if w > 0.0 { (1.0 - deg[v] as f64) * w.ln() } else { f64::NEG_INFINITY })
                .collect()
        })
        .collect();

    let last = s - 1;
    let mut index = vec![0usize; s];
    let mut log_m = vec![0.0f64; s];
    let mut cost = vec![0.0f64; s];
    let mut total = 0.0;
    let mut depth = 0usize;
    loop {
        if depth == last {
            for j in 0..shape[last] {
                let mut lm = log_m[last] + vertex_log[last][j];
                let mut c = cost[last];
                for &(a, k) in &back[last] {
                    lm += log_plan[k].get(index[a], j);
                    c += cost_of[k].get(index[a], j);
                }
                if lm > f64::NEG_INFINITY {
                    total += lm.exp() * (c + eta * lm);
                }
            }
            if depth == 0 {
                break;
            }
            depth -= 1;
            index[depth] += 1;
            continue;
        }
        if index[depth] == shape[depth] {
            if depth == 0 {
                break;
            }
            index[depth] = 0;
            depth -= 1;
            index[depth] += 1;
            continue;
        }
        let j = index[depth];
        let mut lm = log_m[depth] + vertex_log[depth][j];
        let mut c = cost[depth];
        for &(a, k) in &back[depth] {
            lm += log_plan[k].get(index[a], j);
            c += cost_of[k].get(index[a], j);
        }
        if lm == f64::NEG_INFINITY {
            // zero mass below this prefix
            index[depth] += 1;
            continue;
        }
        log_m[depth + 1] = lm;
        cost[depth + 1] = c;
        depth += 1;
    }
    Ok(total)
}

/// Tree cost from edge SB values: `sum_E SB + sum_v (deg v - 1) H(mu_v)`.
pub fn tree_cost_decomposed(
    tree: &SpanningTree,
    sb_values: &EdgeMap<f64>,
    entropies: &[f64],
) -> Result<f64> {
    if entropies.len() != tree.s {
        return Err(Error::DimensionMismatch {
            expected: tree.s,
            got: entropies.len(),
        });
    }
    let mut total = 0.0;
    for &(a, b) in &tree.edges {
        total += sb_values.get(&(a, b)).ok_or_else(|| {
            Error::validation(format!("missing SB value for edge ({}, {})", a + 1, b + 1))
        })?;
    }
    for (d, h) in tree.degrees().into_iter().zip(entropies) {
        total += (d as f64 - 1.0) * h;
    }
    Ok(total)
}

/// Tree cost from additive edge weights: `sum_E g - sum_v H(mu_v)`.
pub fn tree_cost_additive(tree: &SpanningTree, weights: &Matrix, entropies: &[f64]) -> Result<f64> {
    if weights.rows() != tree.s || weights.cols() != tree.s {
        return Err(Error::DimensionMismatch {
            expected: tree.s,
            got: weights.rows(),
        });
    }
    if entropies.len() != tree.s {
        return Err(Error::DimensionMismatch {
            expected: tree.s,
            got: entropies.len(),
        });
    }
    let edge_sum: f64 = tree.edges.iter().map(|&(a, b)| weights.get(a, b)).sum();
    Ok(edge_sum - entropies.iter().sum::<f64>())
}
