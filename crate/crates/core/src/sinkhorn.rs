//! Bimarginal entropic optimal transport (the Schrödinger bridge between two
//! discrete measures).
//!
//! The solver runs the cyclic Sinkhorn recursion on log-potentials, so the
//! Gibbs kernel `exp(-C/eta)` is never formed explicitly and small `eta` does
//! not underflow. Convergence is measured by the total-variation distance
//! (half the L1 deviation) between the plan's marginals and the targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::DiscreteMeasure;

/// Ground cost between support points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `|x - y|^2`
    SqEuclidean,
    /// `|x - y|`
    Euclidean,
    /// A user-supplied matrix.
    Custom,
}

impl CostKind {
    pub fn eval(self, x: &[f64], y: &[f64]) -> Option<f64> {
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match self {
            CostKind::SqEuclidean => Some(sq),
            CostKind::Euclidean => Some(sq.sqrt()),
            CostKind::Custom => None,
        }
    }
}

/// Nonnegative `n1 x n2` cost matrix between two supports.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCost {
    matrix: Matrix,
    kind: CostKind,
}

impl PairwiseCost {
    /// Wraps a user-supplied cost matrix; entries must be finite and `>= 0`.
    pub fn custom(matrix: Matrix) -> Result<Self> {
        for i in 0..matrix.rows() {
            for (j, &c) in matrix.row(i).iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::validation(format!(
                        "cost entry ({i}, {j}) is invalid ({c})"
                    )));
                }
            }
        }
        Ok(Self {
            matrix,
            kind: CostKind::Custom,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.matrix.rows(), self.matrix.cols())
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            kind: self.kind,
        }
    }

    /// The cost multiplied by `a > 0`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            matrix: self.matrix.map(|c| a * c),
            kind: self.kind,
        }
    }
}

/// Evaluates the ground cost on every pair of support points.
pub fn build_cost(m1: &DiscreteMeasure, m2: &DiscreteMeasure, kind: CostKind) -> Result<PairwiseCost> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch {
            expected: m1.dim(),
            got: m2.dim(),
        });
    }
    if kind == CostKind::Custom {
        return Err(Error::validation(
            "custom costs must be supplied as matrices, not built from supports",
        ));
    }
    let (s1, s2) = (m1.support(), m2.support());
    let matrix = Matrix::from_fn(s1.len(), s2.len(), |i, j| {
        kind.eval(&s1[i], &s2[j]).unwrap_or(f64::NAN)
    });
    Ok(PairwiseCost { matrix, kind })
}

/// Gibbs kernel `K = exp(-C/eta)`, stored as `log K = -C/eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    log_kernel: Matrix,
    eta: f64,
}

impl KernelMatrix {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn log_kernel(&self) -> &Matrix {
        &self.log_kernel
    }

    /// Materializes `K`; entries may underflow to zero when `C/eta` is large.
    pub fn kernel(&self) -> Matrix {
        self.log_kernel.map(f64::exp)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.log_kernel.rows(), self.log_kernel.cols())
    }
}

pub fn gibbs_kernel(cost: &PairwiseCost, eta: f64) -> Result<KernelMatrix> {
    check_eta(eta)?;
    Ok(KernelMatrix {
        log_kernel: cost.matrix.map(|c| -c / eta),
        eta,
    })
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("eta must be positive and finite, got {eta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Stop once both marginal TV residuals are at most this.
    pub tol: f64,
    /// Maximum number of full (row then column) sweeps.
    pub max_iter: usize,
    /// Keep the per-sweep residual in the report.
    pub record_history: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            record_history: false,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::validation(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornReport {
    pub iterations: usize,
    /// Max of the two marginal TV residuals of the returned plan.
    pub residual: f64,
    pub converged: bool,
    /// Newton steps taken after Sinkhorn stalled; 0 for a plain solve.
    #[serde(default)]
    pub newton_steps: usize,
    /// Residual at the start of each sweep, when requested.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub residual_history: Vec<f64>,
}

/// Entropic optimal coupling between two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct BimarginalCoupling {
    /// `M = diag(u) K diag(v)`.
    pub plan: Matrix,
    /// `log u`; `-inf` at zero-weight entries of the first marginal.
    pub log_u: Vec<f64>,
    /// `log v`; `-inf` at zero-weight entries of the second marginal.
    pub log_v: Vec<f64>,
    pub report: SinkhornReport,
}

impl BimarginalCoupling {
    pub fn converged(&self) -> bool {
        self.report.converged
    }

    /// The same coupling seen from the other endpoint.
    pub fn transposed(&self) -> Self {
        Self {
            plan: self.plan.transpose(),
            log_u: self.log_v.clone(),
            log_v: self.log_u.clone(),
            report: self.report.clone(),
        }
    }
}

/// Solves the entropic OT problem between `m1` and `m2`.
///
/// Zero-weight points are pruned before iterating and reappear as zero rows or
/// columns of the plan. Failing to converge within `max_iter` is not an error:
/// the last iterate is returned with `converged == false`.
pub fn sinkhorn_solve(
    m1: &DiscreteMeasure,
    m2: &DiscreteMeasure,
    cost: &PairwiseCost,
    eta: f64,
    config: &SinkhornConfig,
) -> Result<BimarginalCoupling> {
    let kernel = gibbs_kernel(cost, eta)?;
    solve_weights(m1.weights(), m2.weights(), &kernel, config)
}

/// Like [`sinkhorn_solve`] but on raw probability vectors and a prepared kernel.
pub fn solve_weights(
    mu: &[f64],
    nu: &[f64],
    kernel: &KernelMatrix,
    config: &SinkhornConfig,
) -> Result<BimarginalCoupling> {
    config.validate()?;
    let (n1, n2) = kernel.shape();
    if mu.len() != n1 {
        return Err(Error::DimensionMismatch { expected: n1, got: mu.len() });
    }
    if nu.len() != n2 {
        return Err(Error::DimensionMismatch { expected: n2, got: nu.len() });
    }
    for (name, w) in [("first", mu), ("second", nu)] {
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || !w.iter().any(|&x| x > 0.0) {
            return Err(Error::validation(format!("{name} marginal is not a probability vector")));
        }
    }

    let rows: Vec<usize> = (0..n1).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n2).filter(|&j| nu[j] > 0.0).collect();
    let log_k = Matrix::from_fn(rows.len(), cols.len(), |a, b| {
        kernel.log_kernel.get(rows[a], cols[b])
    });
    let log_mu: Vec<f64> = rows.iter().map(|&i| mu[i].ln()).collect();
    let log_nu: Vec<f64> = cols.iter().map(|&j| nu[j].ln()).collect();

    let solved = iterate(&log_k, &log_mu, &log_nu, config);

    let mut log_u = vec![f64::NEG_INFINITY; n1];
    let mut log_v = vec![f64::NEG_INFINITY; n2];
    for (a, &i) in rows.iter().enumerate() {
        log_u[i] = solved.f[a];
    }
    for (b, &j) in cols.iter().enumerate() {
        log_v[j] = solved.g[b];
    }
    let mut plan = Matrix::zeros(n1, n2);
    for &i in &rows {
        for &j in &cols {
            plan.set(i, j, (log_u[i] + log_v[j] + kernel.log_kernel.get(i, j)).exp());
        }
    }
    let residual = tv_distance(&plan.row_sums(), mu).max(tv_distance(&plan.col_sums(), nu));
    Ok(BimarginalCoupling {
        plan,
        log_u,
        log_v,
        report: SinkhornReport {
            iterations: solved.iterations,
            residual,
            converged: residual <= config.tol,
            newton_steps: solved.newton_steps,
            residual_history: solved.history,
        },
    })
}

struct Potentials {
    f: Vec<f64>,
    g: Vec<f64>,
    iterations: usize,
    newton_steps: usize,
    history: Vec<f64>,
}

/// Sweeps between stall checks.
const STALL_WINDOW: usize = 250;
/// A window that fails to shrink the residual by this factor counts as a stall.
const STALL_RATIO: f64 = 0.5;
/// Largest side on which a stalled solve is finished by Newton's method.
pub const NEWTON_MAX_DIM: usize = 512;
const NEWTON_MAX_STEPS: usize = 200;

/// Cyclic log-domain Sinkhorn on strictly positive marginals.
fn iterate(log_k: &Matrix, log_mu: &[f64], log_nu: &[f64], config: &SinkhornConfig) -> Potentials {
    let (n1, n2) = (log_k.rows(), log_k.cols());
    let log_kt = log_k.transpose();
    let mut f = vec![0.0; n1];
    let mut g = vec![0.0; n2];
    // lse_j(log K_ij + g_j) for the current g
    let mut row_lse = vec![0.0; n1];
    let mut col_residual = f64::INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut checkpoint = f64::INFINITY;
    let mut newton_tried = false;

    while iterations < config.max_iter {
        for (i, out) in row_lse.iter_mut().enumerate() {
            *out = shifted_lse(log_k.row(i), &g);
        }
        let row_residual = 0.5
            * (0..n1)
                .map(|i| ((f[i] + row_lse[i]).exp() - log_mu[i].exp()).abs())
                .sum::<f64>();
        let residual = row_residual.max(col_residual);
        if config.record_history && residual.is_finite() {
            history.push(residual);
        }
        if residual <= config.tol {
            break;
        }
        if iterations > 0 && iterations % STALL_WINDOW == 0 {
            if residual > STALL_RATIO * checkpoint && !newton_tried && n1.min(n2) <= NEWTON_MAX_DIM {
                newton_tried = true;
                if let Some((f2, g2, steps)) = newton_finish(log_k, &log_kt, log_mu, log_nu, &f, &g, config.tol) {
                    return Potentials { f: f2, g: g2, iterations, newton_steps: steps, history };
                }
            }
            checkpoint = residual;
        }

        for i in 0..n1 {
            f[i] = log_mu[i] - row_lse[i];
        }
        let mut col_mass_err = 0.0;
        for j in 0..n2 {
            let lse = shifted_lse(log_kt.row(j), &f);
            g[j] = log_nu[j] - lse;
            col_mass_err += ((g[j] + lse).exp() - log_nu[j].exp()).abs();
        }
        col_residual = 0.5 * col_mass_err;
        iterations += 1;
    }
    Potentials {
        f,
        g,
        iterations,
        newton_steps: 0,
        history,
    }
}

/// Finishes a stalled solve by Newton's method on the semi-dual of the smaller
/// side. Returns `None` unless the residual reaches `tol`.
fn newton_finish(
    log_k: &Matrix,
    log_kt: &Matrix,
    log_mu: &[f64],
    log_nu: &[f64],
    f: &[f64],
    g: &[f64],
    tol: f64,
) -> Option<(Vec<f64>, Vec<f64>, usize)> {
    if log_k.cols() <= log_k.rows() {
        let (g, steps) = newton_semi_dual(log_k, log_mu, log_nu, g, tol)?;
        let f = (0..log_k.rows()).map(|i| log_mu[i] - shifted_lse(log_k.row(i), &g)).collect();
        Some((f, g, steps))
    } else {
        let (f, steps) = newton_semi_dual(log_kt, log_nu, log_mu, f, tol)?;
        let g = (0..log_k.cols()).map(|j| log_nu[j] - shifted_lse(log_kt.row(j), &f)).collect();
        Some((f, g, steps))
    }
}

/// Maximizes `sum_j b_j g_j - sum_i a_i lse_j(log K_ij + g_j)` over the column
/// potential `g`, with rows eliminated exactly. Steps solve `(L + lambda I) d = grad`
/// where `L` is the (positive semidefinite) negative Hessian; `lambda` shrinks after
/// a successful step and grows after a rejected one.
fn newton_semi_dual(
    log_k: &Matrix,
    log_a: &[f64],
    log_b: &[f64],
    g0: &[f64],
    tol: f64,
) -> Option<(Vec<f64>, usize)> {
    use nalgebra::{DMatrix, DVector};

    let (n1, n2) = (log_k.rows(), log_k.cols());
    let a: Vec<f64> = log_a.iter().map(|x| x.exp()).collect();
    let b: Vec<f64> = log_b.iter().map(|x| x.exp()).collect();
    let dual = |g: &[f64]| -> f64 {
        let lin: f64 = b.iter().zip(g).map(|(x, y)| x * y).sum();
        lin - (0..n1).map(|i| a[i] * shifted_lse(log_k.row(i), g)).sum::<f64>()
    };
    // plan with exact rows, and the column residual of it
    let state = |g: &[f64]| -> (Matrix, Vec<f64>, f64) {
        let mut plan = Matrix::zeros(n1, n2);
        for i in 0..n1 {
            let f = log_a[i] - shifted_lse(log_k.row(i), g);
            for j in 0..n2 {
                plan.set(i, j, (f + log_k.get(i, j) + g[j]).exp());
            }
        }
        let grad: Vec<f64> = b.iter().zip(plan.col_sums()).map(|(x, c)| x - c).collect();
        let residual = 0.5 * grad.iter().map(|x| x.abs()).sum::<f64>();
        (plan, grad, residual)
    };

    let mut g = g0.to_vec();
    // g is determined up to a constant; the last entry stays fixed
    let m = n2 - 1;
    let (mut plan, mut grad, mut residual) = state(&g);
    let mut value = dual(&g);
    let mut lambda = residual;
    for step in 0..NEWTON_MAX_STEPS {
        if !residual.is_finite() {
            return None;
        }
        if residual <= tol {
            return Some((g, step));
        }
        if m == 0 {
            return None;
        }
        // Laplacian with weights w_jk = sum_i P_ij P_ik / r_i; assembled from
        // off-diagonal terms so tiny couplings survive
        let rows = plan.row_sums();
        let mut lap = DMatrix::<f64>::zeros(m, m);
        for j in 0..n2 {
            for k in j + 1..n2 {
                let w: f64 = (0..n1).map(|i| plan.get(i, j) * plan.get(i, k) / rows[i]).sum();
                if j < m {
                    lap[(j, j)] += w;
                }
                if k < m {
                    lap[(k, k)] += w;
                }
                if k < m {
                    lap[(j, k)] -= w;
                    lap[(k, j)] -= w;
                }
            }
        }
        let rhs = DVector::from_iterator(m, grad[..m].iter().copied());
        loop {
            let mut damped = lap.clone();
            for j in 0..m {
                damped[(j, j)] += lambda;
            }
            let dir = match damped.clone().cholesky() {
                Some(ch) => Some(ch.solve(&rhs)),
                None => damped.lu().solve(&rhs),
            };
            if let Some(dir) = dir {
                let trial: Vec<f64> = (0..n2).map(|j| if j < m { g[j] + dir[j] } else { g[j] }).collect();
                let trial_value = dual(&trial);
                let (tp, tg, tr) = state(&trial);
                if trial_value > value || tr < residual {
                    g = trial;
                    value = trial_value;
                    (plan, grad, residual) = (tp, tg, tr);
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

/// `log sum_k exp(a_k + b_k)`.
#[inline]
fn shifted_lse(a: &[f64], b: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        max = max.max(x + y);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x + y - max).exp()).sum();
    max + sum.ln()
}

/// Numerically stable `log sum exp`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Total-variation distance `0.5 * |p - q|_1`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Optimal SB value `D_KL(M || K) = sum M log(M / K)`.
///
/// Uses `log K` directly, so it stays finite where `K` itself underflows.
/// Can be negative because `K` is not normalized.
pub fn sb_value(coupling: &BimarginalCoupling, kernel: &KernelMatrix) -> f64 {
    let plan = &coupling.plan;
    let mut total = 0.0;
    for i in 0..plan.rows() {
        for (j, &m) in plan.row(i).iter().enumerate() {
            if m > 0.0 {
                total += m * (m.ln() - kernel.log_kernel.get(i, j));
            }
        }
    }
    total
}

/// Transport cost `<C, M>` of a plan. A feasible plan is epsilon-accurate when
/// this exceeds the unregularized optimum by at most epsilon.
pub fn transport_cost(coupling: &BimarginalCoupling, cost: &PairwiseCost) -> f64 {
    coupling
        .plan
        .as_slice()
        .iter()
        .zip(cost.matrix.as_slice())
        .map(|(m, c)| m * c)
        .sum()
}

/// `D_KL(P || Q) = sum P log(P / Q)` over arrays of equal length, `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut total = 0.0;
    for (i, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::InfiniteDivergence(i));
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total)
}
