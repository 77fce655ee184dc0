//! Dense multimarginal reference solver.
//!
//! Everything here materializes the full `n_1 x ... x n_s` tensor and reduces
//! over it by direct summation. It is exponential in `s` on purpose: it is the
//! independent check for the tree decomposition and the spanning-tree solver,
//! and is only meant for desk-sized instances.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::MeasureCollection;
use crate::sinkhorn::{check_eta, tv_distance, PairwiseCost, SinkhornConfig, SinkhornReport};

/// Default bound on the number of entries of any dense tensor.
pub const DEFAULT_TENSOR_CAP: usize = 10_000_000;

/// Per-edge data keyed by `(a, b)` with `a < b`; matrices are oriented with
/// rows indexed by vertex `a`.
pub type EdgeMap<T> = BTreeMap<(usize, usize), T>;

/// Orders an unordered vertex pair as `(min, max)`.
#[inline]
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Number of entries of a tensor with this shape, failing past `cap`.
pub fn checked_len(shape: &[usize], cap: usize) -> Result<usize> {
    let entries = shape.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128));
    if entries > cap as u128 {
        return Err(Error::CapExceeded { entries, cap });
    }
    Ok(entries as usize)
}

/// Undirected simple graph on vertices `0..s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStructure {
    s: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl GraphStructure {
    pub fn new(s: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= s || b >= s {
                return Err(Error::validation(format!(
                    "edge ({}, {}) out of range for {s} vertices",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::validation(format!("self-loop at vertex {}", a + 1)));
            }
            if !set.insert(edge_key(a, b)) {
                return Err(Error::validation(format!("duplicate edge ({}, {})", a + 1, b + 1)));
            }
        }
        Ok(Self { s, edges: set })
    }

    pub fn path(s: usize) -> Self {
        Self {
            s,
            edges: (1..s).map(|k| (k - 1, k)).collect(),
        }
    }

    pub fn star(center: usize, s: usize) -> Self {
        Self {
            s,
            edges: (0..s).filter(|&k| k != center).map(|k| edge_key(center, k)).collect(),
        }
    }

    pub fn complete(s: usize) -> Self {
        Self {
            s,
            edges: (0..s).flat_map(|a| (a + 1..s).map(move |b| (a, b))).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.s
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_connected(&self) -> bool {
        if self.s == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.s];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.s];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !std::mem::replace(&mut seen[w], true) {
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|x| x)
    }
}

/// Dense row-major tensor; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize], cap: usize) -> Result<Self> {
        let len = checked_len(shape, cap)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Entry at a multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        let flat = index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i);
        self.data[flat]
    }

    pub fn sup_distance(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::validation("tensor shapes differ"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Advances a row-major multi-index; returns false after the last entry.
#[inline]
pub(crate) fn advance(index: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..index.len()).rev() {
        index[axis] += 1;
        if index[axis] < shape[axis] {
            return true;
        }
        index[axis] = 0;
    }
    false
}

/// A nonnegative tensor of unit mass: a multimarginal coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTensor(Tensor);

impl CouplingTensor {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if let Some(k) = tensor.data.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("coupling entry {k} is negative or not finite")));
        }
        let mass = tensor.sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("coupling has total mass {mass}, not 1")));
        }
        Ok(Self(tensor))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }
}

/// Graph-structured ground cost: the entry at `(i_1, ..., i_s)` is the sum
/// over edges `(a, b)` of `C_ab[i_a, i_b]`.
pub fn cost_tensor(
    graph: &GraphStructure,
    costs: &EdgeMap<PairwiseCost>,
    shape: &[usize],
    cap: usize,
) -> Result<Tensor> {
    if shape.len() != graph.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.vertex_count(),
            got: shape.len(),
        });
    }
    let mut edge_costs = Vec::with_capacity(graph.edge_count());
    for (a, b) in graph.edges() {
        let c = costs.get(&(a, b)).ok_or_else(|| {
            Error::validation(format!("missing cost for edge ({}, {})", a + 1, b + 1))
        })?;
        if c.shape() != (shape[a], shape[b]) {
            return Err(Error::validation(format!(
                "cost for edge ({}, {}) has shape {:?}, expected {:?}",
                a + 1,
                b + 1,
                c.shape(),
                (shape[a], shape[b])
            )));
        }
        edge_costs.push((a, b, c.matrix()));
    }
    let mut out = Tensor::zeros(shape, cap)?;
    let mut index = vec![0; shape.len()];
    for entry in out.data.iter_mut() {
        *entry = edge_costs
            .iter()
            .map(|(a, b, m)| m.get(index[*a], index[*b]))
            .sum();
        advance(&mut index, shape);
    }
    Ok(out)
}

/// Marginal along axis `sigma`: the sum over all other axes.
pub fn project(tensor: &Tensor, sigma: usize) -> Result<Vec<f64>> {
    let s = tensor.shape.len();
    if sigma >= s {
        return Err(Error::validation(format!(
            "axis {} out of range for an order-{s} tensor",
            sigma + 1
        )));
    }
    let stride: usize = tensor.shape[sigma + 1..].iter().product();
    let n = tensor.shape[sigma];
    let mut out = vec![0.0; n];
    for (k, &x) in tensor.data.iter().enumerate() {
        out[(k / stride) % n] += x;
    }
    Ok(out)
}

/// `<C + eta log M, M>` with `0 log 0 = 0`.
pub fn msb_objective(coupling: &Tensor, cost: &Tensor, eta: f64) -> Result<f64> {
    if coupling.shape != cost.shape {
        return Err(Error::validation("coupling and cost shapes differ"));
    }
    let mut total = 0.0;
    for (&m, &c) in coupling.data.iter().zip(&cost.data) {
        if m > 0.0 {
            total += m * (c + eta * m.ln());
        }
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct MmSinkhornResult {
    pub coupling: CouplingTensor,
    /// `log u_sigma` per vertex; `-inf` at zero-weight entries.
    pub log_potentials: Vec<Vec<f64>>,
    /// Residual is the max TV residual over all `s` marginals.
    pub report: SinkhornReport,
}

/// Multimarginal Sinkhorn on a dense tensor with cyclic updates
/// `u_sigma <- u_sigma * mu_sigma / proj_sigma(K * U)`, in log domain.
pub fn mm_sinkhorn(
    marginals: &MeasureCollection,
    graph: &GraphStructure,
    costs: &EdgeMap<PairwiseCost>,
    eta: f64,
    config: &SinkhornConfig,
    cap: usize,
) -> Result<MmSinkhornResult> {
    check_eta(eta)?;
    config.validate()?;
    if graph.vertex_count() != marginals.len() {
        return Err(Error::DimensionMismatch {
            expected: marginals.len(),
            got: graph.vertex_count(),
        });
    }
    if !graph.is_connected() {
        return Err(Error::validation("graph is not connected"));
    }
    let shape = marginals.shape();
    let mut log_k = cost_tensor(graph, costs, &shape, cap)?;
    for x in log_k.data.iter_mut() {
        *x = -*x / eta;
    }

    let s = shape.len();
    let weights: Vec<&[f64]> = marginals.measures().iter().map(|m| m.weights()).collect();
    let mut pots: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut newton_tried = false;
    let mut newton_steps = 0;
    let newton_dim: usize = weights
        .iter()
        .map(|w| w.iter().filter(|&&x| x > 0.0).count() - 1)
        .sum();

    while iterations < config.max_iter {
        for sigma in 0..s {
            let lse = log_marginal(&log_k, &pots, sigma);
            for (i, p) in pots[sigma].iter_mut().enumerate() {
                let w = weights[sigma][i];
                *p = if w > 0.0 { w.ln() - lse[i] } else { f64::NEG_INFINITY };
            }
        }
        iterations += 1;
        residual = plan_residual(&log_k, &pots, &weights);
        if config.record_history {
            history.push(residual);
        }
        if residual <= config.tol {
            break;
        }
        if iterations % MM_STALL_WINDOW == 0 {
            if residual > 0.5 * checkpoint && !newton_tried && newton_dim <= MM_NEWTON_MAX_DIM {
                newton_tried = true;
                if let Some((p, steps, r)) = mm_newton(&log_k, &pots, &weights, config.tol) {
                    pots = p;
                    newton_steps = steps;
                    residual = r;
                    break;
                }
            }
            checkpoint = residual;
        }
    }

    let mut plan = log_k;
    let mut index = vec![0; s];
    for entry in plan.data.iter_mut() {
        let v = *entry + (0..s).map(|t| pots[t][index[t]]).sum::<f64>();
        *entry = v.exp();
        advance(&mut index, &shape);
    }
    Ok(MmSinkhornResult {
        coupling: CouplingTensor::new(plan)?,
        log_potentials: pots,
        report: SinkhornReport {
            iterations,
            residual,
            converged: residual <= config.tol,
            newton_steps,
            residual_history: history,
        },
    })
}

/// Sweeps between stall checks in [`mm_sinkhorn`].
const MM_STALL_WINDOW: usize = 100;
/// Largest number of free potential entries for the Newton finish.
pub const MM_NEWTON_MAX_DIM: usize = 300;
const MM_NEWTON_MAX_STEPS: usize = 200;

/// Visits the tensor one contiguous run along the last axis at a time:
/// `f(index, base, run)` with `base = sum_{t < s-1, t != skip} pots_t[index_t]`.
fn for_each_run(
    log_k: &Tensor,
    pots: &[Vec<f64>],
    skip: Option<usize>,
    mut f: impl FnMut(&[usize], f64, &[f64]),
) {
    let shape = &log_k.shape;
    let last = shape.len() - 1;
    let mut index = vec![0; last];
    for run in log_k.data.chunks(shape[last]) {
        let mut base = 0.0;
        for (t, &i) in index.iter().enumerate() {
            if Some(t) != skip {
                base += pots[t][i];
            }
        }
        if base > f64::NEG_INFINITY {
            f(&index, base, run);
        }
        advance(&mut index, &shape[..last]);
    }
}

/// `log proj_sigma(exp(log_k + sum_{t != sigma} f_t))`, streamed with a
/// per-bucket running maximum.
fn log_marginal(log_k: &Tensor, pots: &[Vec<f64>], sigma: usize) -> Vec<f64> {
    let shape = &log_k.shape;
    let last = shape.len() - 1;
    let mut max = vec![f64::NEG_INFINITY; shape[sigma]];
    let mut acc = vec![0.0; shape[sigma]];
    let mut push = |b: usize, v: f64| {
        if v > max[b] {
            acc[b] = acc[b] * (max[b] - v).exp() + 1.0;
            max[b] = v;
        } else if v > f64::NEG_INFINITY {
            acc[b] += (v - max[b]).exp();
        }
    };
    let tail = &pots[last];
    for_each_run(log_k, pots, Some(sigma), |index, base, run| {
        if sigma == last {
            for (j, &lk) in run.iter().enumerate() {
                push(j, lk + base);
            }
        } else {
            let b = index[sigma];
            // one log-sum-exp per run, then merged into the bucket
            let mut m = f64::NEG_INFINITY;
            for (&lk, &g) in run.iter().zip(tail) {
                m = m.max(lk + g);
            }
            if m > f64::NEG_INFINITY {
                let sum: f64 = run.iter().zip(tail).map(|(&lk, &g)| (lk + g - m).exp()).sum();
                push(b, base + m + sum.ln());
            }
        }
    });
    max.iter().zip(&acc).map(|(&m, &a)| m + a.ln()).collect()
}

/// Marginals of `exp(log_k + sum_t f_t)`, unnormalized.
fn plan_marginals(log_k: &Tensor, pots: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let shape = &log_k.shape;
    let last = shape.len() - 1;
    let mut margs: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    let tail = pots[last].clone();
    for_each_run(log_k, pots, None, |index, base, run| {
        let mut total = 0.0;
        for (j, (&lk, &g)) in run.iter().zip(&tail).enumerate() {
            let v = (lk + base + g).exp();
            margs[last][j] += v;
            total += v;
        }
        for (t, &i) in index.iter().enumerate() {
            margs[t][i] += total;
        }
    });
    margs
}

fn plan_residual(log_k: &Tensor, pots: &[Vec<f64>], weights: &[&[f64]]) -> f64 {
    plan_marginals(log_k, pots)
        .iter()
        .zip(weights)
        .map(|(m, w)| tv_distance(m, w))
        .fold(0.0, f64::max)
}

/// `log sum exp(log_k + sum_t f_t)`, with single and pairwise marginals of the
/// normalized plan when `pairs` is set (`pair[s][t]`, `s < t`, rows index `s`).
struct PlanStats {
    log_z: f64,
    margs: Vec<Vec<f64>>,
    pairs: Vec<Vec<Option<Matrix>>>,
}

fn plan_stats(log_k: &Tensor, pots: &[Vec<f64>], pairs: bool) -> PlanStats {
    let shape = &log_k.shape;
    let s = shape.len();
    let last = s - 1;
    let mut max = f64::NEG_INFINITY;
    for_each_run(log_k, pots, None, |_, base, run| {
        for (&lk, &g) in run.iter().zip(&pots[last]) {
            max = max.max(lk + base + g);
        }
    });
    let mut margs: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
    let mut pair: Vec<Vec<Option<Matrix>>> = (0..s)
        .map(|a| {
            (0..s)
                .map(|b| (pairs && a < b).then(|| Matrix::zeros(shape[a], shape[b])))
                .collect()
        })
        .collect();
    let mut z = 0.0;
    for_each_run(log_k, pots, None, |index, base, run| {
        let mut total = 0.0;
        for (j, (&lk, &g)) in run.iter().zip(&pots[last]).enumerate() {
            let v = (lk + base + g - max).exp();
            margs[last][j] += v;
            total += v;
            if pairs {
                for (a, &i) in index.iter().enumerate() {
                    let m = pair[a][last].as_mut().expect("a < last");
                    m.set(i, j, m.get(i, j) + v);
                }
            }
        }
        z += total;
        for (t, &i) in index.iter().enumerate() {
            margs[t][i] += total;
        }
        if pairs {
            for a in 0..last {
                for b in a + 1..last {
                    let m = pair[a][b].as_mut().expect("a < b");
                    m.set(index[a], index[b], m.get(index[a], index[b]) + total);
                }
            }
        }
    });
    for m in margs.iter_mut() {
        m.iter_mut().for_each(|x| *x /= z);
    }
    for row in pair.iter_mut() {
        for m in row.iter_mut().flatten() {
            *m = m.map(|x| x / z);
        }
    }
    PlanStats {
        log_z: max + z.ln(),
        margs,
        pairs: pair,
    }
}

/// Finishes a stalled multimarginal solve with damped Newton steps on the dual
/// `sum_t <mu_t, f_t> - log sum exp(log_k + sum_t f_t)`. The last positive
/// entry of each `f_t` is held fixed. Covariances are assembled from sums of
/// positive terms so that very weak couplings keep their curvature.
fn mm_newton(
    log_k: &Tensor,
    start: &[Vec<f64>],
    weights: &[&[f64]],
    tol: f64,
) -> Option<(Vec<Vec<f64>>, usize, f64)> {
    use nalgebra::{DMatrix, DVector};

    let mut vars: Vec<(usize, usize)> = Vec::new();
    for (t, w) in weights.iter().enumerate() {
        let positive: Vec<usize> = (0..w.len()).filter(|&a| w[a] > 0.0).collect();
        vars.extend(positive[..positive.len() - 1].iter().map(|&a| (t, a)));
    }
    let m = vars.len();
    let dual = |pots: &[Vec<f64>], log_z: f64| -> f64 {
        let mut lin = 0.0;
        for (w, p) in weights.iter().zip(pots) {
            for (&x, &f) in w.iter().zip(p) {
                if x > 0.0 {
                    lin += x * f;
                }
            }
        }
        lin - log_z
    };
    let residual_of = |margs: &[Vec<f64>]| -> f64 {
        margs.iter().zip(weights).map(|(m, w)| tv_distance(m, w)).fold(0.0, f64::max)
    };
    // puts the normalization into the first potential
    let normalized = |mut pots: Vec<Vec<f64>>, log_z: f64| {
        pots[0].iter_mut().for_each(|f| *f -= log_z);
        pots
    };

    let mut pots = start.to_vec();
    let mut st = plan_stats(log_k, &pots, true);
    let mut residual = residual_of(&st.margs);
    let mut value = dual(&pots, st.log_z);
    let mut lambda = residual;
    for step in 0..MM_NEWTON_MAX_STEPS {
        if !residual.is_finite() {
            return None;
        }
        if residual <= tol {
            return Some((normalized(pots, st.log_z), step, residual));
        }
        if m == 0 {
            return None;
        }
        let grad: Vec<f64> = vars.iter().map(|&(t, a)| weights[t][a] - st.margs[t][a]).collect();
        let mut cov = DMatrix::<f64>::zeros(m, m);
        for x in 0..m {
            let (t, a) = vars[x];
            for y in x..m {
                let (u, b) = vars[y];
                let c = if t == u {
                    let p = &st.margs[t];
                    if a == b {
                        let others: f64 = p.iter().enumerate().filter(|&(k, _)| k != a).map(|(_, v)| v).sum();
                        p[a] * others
                    } else {
                        -p[a] * p[b]
                    }
                } else {
                    let pm = st.pairs[t][u].as_ref().expect("t < u");
                    pair_covariance(pm, a, b)
                };
                cov[(x, y)] = c;
                cov[(y, x)] = c;
            }
        }
        let rhs = DVector::from_vec(grad);
        loop {
            let mut damped = cov.clone();
            for j in 0..m {
                damped[(j, j)] += lambda;
            }
            let dir = match damped.clone().cholesky() {
                Some(ch) => Some(ch.solve(&rhs)),
                None => damped.lu().solve(&rhs),
            };
            if let Some(dir) = dir {
                let mut trial = pots.clone();
                for (x, &(t, a)) in vars.iter().enumerate() {
                    trial[t][a] += dir[x];
                }
                let tst = plan_stats(log_k, &trial, true);
                let tr = residual_of(&tst.margs);
                let tv = dual(&trial, tst.log_z);
                if tv > value || tr < residual {
                    pots = trial;
                    st = tst;
                    residual = tr;
                    value = tv;
                    lambda = (lambda / 4.0).max(f64::MIN_POSITIVE);
                    break;
                }
            }
            lambda *= 4.0;
            if !(lambda < 1e300) {
                return None;
            }
        }
    }
    None
}

/// `P(a, b) - P(a, .) P(., b)` of a joint table, written as
/// `P(a, b) P(!a, !b) - P(a, !b) P(!a, b)` so no large terms cancel.
fn pair_covariance(p: &Matrix, a: usize, b: usize) -> f64 {
    let (mut a_nb, mut na_b, mut na_nb) = (0.0, 0.0, 0.0);
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let v = p.get(i, j);
            match (i == a, j == b) {
                (true, false) => a_nb += v,
                (false, true) => na_b += v,
                (false, false) => na_nb += v,
                (true, true) => {}
            }
        }
    }
    p.get(a, b) * na_nb - a_nb * na_b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::measures::DiscreteMeasure;

    fn cost(rows: &[Vec<f64>]) -> PairwiseCost {
        PairwiseCost::custom(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn uniform(n: usize) -> DiscreteMeasure {
        DiscreteMeasure::uniform((0..n).map(|i| vec![i as f64]).collect()).unwrap()
    }

    #[test]
    fn graph_validation() {
        assert!(GraphStructure::new(3, [(0, 0)]).is_err());
        assert!(GraphStructure::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(GraphStructure::new(3, [(0, 3)]).is_err());
        let g = GraphStructure::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!g.is_connected());
        assert!(GraphStructure::path(4).is_connected());
        assert_eq!(GraphStructure::complete(5).edge_count(), 10);
        assert_eq!(GraphStructure::star(2, 4).edges().collect::<Vec<_>>(), vec![(0, 2), (1, 2), (2, 3)]);
    }

    #[test]
    fn single_edge_cost_tensor_is_the_matrix() {
        let c = cost(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let costs = EdgeMap::from([((0, 1), c)]);
        let t = cost_tensor(&GraphStructure::path(2), &costs, &[2, 2], DEFAULT_TENSOR_CAP).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn path_cost_tensor_entries() {
        let zero = EdgeMap::from([
            ((0, 1), cost(&[vec![0.0; 2], vec![0.0; 2]])),
            ((1, 2), cost(&[vec![0.0; 2], vec![0.0; 2]])),
        ]);
        let t = cost_tensor(&GraphStructure::path(3), &zero, &[2, 2, 2], 100).unwrap();
        assert!(t.data().iter().all(|&x| x == 0.0));

        let costs = EdgeMap::from([
            ((0, 1), cost(&[vec![0.0, 1.0], vec![1.0, 0.0]])),
            ((1, 2), cost(&[vec![0.0, 2.0], vec![2.0, 0.0]])),
        ]);
        let t = cost_tensor(&GraphStructure::path(3), &costs, &[2, 2, 2], 100).unwrap();
        // 1-based (1, 2, 1): C12[1,2] + C23[2,1] = 1 + 2
        assert_eq!(t.get(&[0, 1, 0]), 3.0);
    }

    #[test]
    fn cost_tensor_errors() {
        let costs = EdgeMap::from([((0, 1), cost(&[vec![0.0, 1.0], vec![1.0, 0.0]]))]);
        assert!(cost_tensor(&GraphStructure::path(3), &costs, &[2, 2, 2], 100).is_err());
        assert!(matches!(
            cost_tensor(&GraphStructure::path(2), &costs, &[2, 2], 3),
            Err(Error::CapExceeded { entries: 4, cap: 3 })
        ));
        assert!(cost_tensor(&GraphStructure::path(2), &costs, &[2, 3], 100).is_err());
    }

    #[test]
    fn projections() {
        let mu1 = [0.2, 0.8];
        let mu2 = [0.1, 0.6, 0.3];
        let data: Vec<f64> = mu1.iter().flat_map(|a| mu2.iter().map(move |b| a * b)).collect();
        let t = Tensor::from_vec(&[2, 3], data).unwrap();
        let p1 = project(&t, 0).unwrap();
        let p2 = project(&t, 1).unwrap();
        for (a, b) in p1.iter().zip(mu1) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in p2.iter().zip(mu2) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(project(&t, 2).is_err());

        let q = Tensor::from_vec(&[2, 2], vec![0.25; 4]).unwrap();
        assert_eq!(project(&q, 1).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn dirac_marginals_give_dirac_coupling() {
        let ms = MeasureCollection::new(
            (0..3).map(|k| DiscreteMeasure::dirac(vec![k as f64]).unwrap()).collect(),
        )
        .unwrap();
        let costs = EdgeMap::from([((0, 1), cost(&[vec![1.0]])), ((1, 2), cost(&[vec![4.0]]))]);
        let r = mm_sinkhorn(&ms, &GraphStructure::path(3), &costs, 1.0, &SinkhornConfig::default(), 100)
            .unwrap();
        assert!(r.report.converged);
        assert!((r.coupling.tensor().data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_cost_path_gives_product() {
        let ms = MeasureCollection::new(vec![
            DiscreteMeasure::from_unnormalized(vec![vec![0.0], vec![1.0]], &[1.0, 3.0]).unwrap(),
            uniform(3),
            DiscreteMeasure::from_unnormalized(vec![vec![0.0], vec![1.0]], &[2.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let costs = EdgeMap::from([
            ((0, 1), PairwiseCost::custom(Matrix::zeros(2, 3)).unwrap()),
            ((1, 2), PairwiseCost::custom(Matrix::zeros(3, 2)).unwrap()),
        ]);
        let r = mm_sinkhorn(&ms, &GraphStructure::path(3), &costs, 0.5, &SinkhornConfig::default(), 100)
            .unwrap();
        let t = r.coupling.tensor();
        let mut index = vec![0; 3];
        loop {
            let expected: f64 = (0..3).map(|k| ms.get(k).weights()[index[k]]).product();
            assert!((t.get(&index) - expected).abs() < 1e-12);
            if !advance(&mut index, t.shape()) {
                break;
            }
        }
    }

    #[test]
    fn mm_sinkhorn_handles_zero_weights() {
        let ms = MeasureCollection::new(vec![
            DiscreteMeasure::from_unnormalized(vec![vec![0.0], vec![1.0], vec![2.0]], &[1.0, 0.0, 1.0])
                .unwrap(),
            uniform(2),
            uniform(2),
        ])
        .unwrap();
        let costs = EdgeMap::from([
            ((0, 1), cost(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![4.0, 1.0]])),
            ((0, 2), cost(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 4.0]])),
        ]);
        let r = mm_sinkhorn(&ms, &GraphStructure::star(0, 3), &costs, 1.0, &SinkhornConfig::default(), 100)
            .unwrap();
        assert!(r.report.converged);
        let p = project(r.coupling.tensor(), 0).unwrap();
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn mm_sinkhorn_rejects_disconnected_graphs() {
        let ms = MeasureCollection::new(vec![uniform(2), uniform(2), uniform(2)]).unwrap();
        let g = GraphStructure::new(3, [(0, 1)]).unwrap();
        let costs = EdgeMap::from([((0, 1), cost(&[vec![0.0, 1.0], vec![1.0, 0.0]]))]);
        assert!(mm_sinkhorn(&ms, &g, &costs, 1.0, &SinkhornConfig::default(), 100).is_err());
    }

    #[test]
    fn objective_of_product_of_uniforms() {
        let m = Tensor::from_vec(&[2, 2], vec![0.25; 4]).unwrap();
        let c = Tensor::from_vec(&[2, 2], vec![0.0; 4]).unwrap();
        let eta = 0.8;
        assert!((msb_objective(&m, &c, eta).unwrap() + eta * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_of_dirac_is_its_cost() {
        let m = Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        let c = Tensor::from_vec(&[1, 1, 1], vec![7.5]).unwrap();
        assert_eq!(msb_objective(&m, &c, 3.0).unwrap(), 7.5);
    }

    #[test]
    fn coupling_validation() {
        assert!(CouplingTensor::new(Tensor::from_vec(&[2], vec![0.5, 0.4]).unwrap()).is_err());
        assert!(CouplingTensor::new(Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap()).is_err());
        assert!(CouplingTensor::new(Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap()).is_ok());
    }
}
