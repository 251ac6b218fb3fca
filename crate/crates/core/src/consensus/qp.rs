//! Variance-minimizing fusion weights.
//!
//! Given the current estimates `x`, choose a row-stochastic `A` supported on
//! the communication graph, with `a_ii >= floor` and all entries in `[0, 1]`,
//! that minimizes the spread of the fused estimates
//!
//! ```text
//! J(A) = (1/N) * sum_i || (A x)_i - mean(A x) ||^2      (both axes)
//! ```
//!
//! The problem is a convex QP with one capped simplex per row. It is solved
//! by projected gradient descent with a separate step `1 / L_i` per row,
//! where `L_i` bounds the curvature of `J` along row `i`. The curvature bound
//! is separable across rows, so all rows can step at once.
//!
//! In distributed mode a node never sees `mean(A x)`; it substitutes the value
//! reached by `K` rounds of max-degree averaging of `A x` over the symmetrized
//! graph.

use nalgebra::{DMatrix, Matrix2};

use super::{max_degree_weights, ConsensusMatrix};
use crate::filter::CommonError;
use crate::network::ConnectionMatrix;
use crate::{Error, NodeId, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpMode {
    Central,
    /// `rounds: None` uses twice the diameter of the symmetrized graph.
    Distributed { rounds: Option<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpConfig {
    /// Lower bound on every self-weight `a_ii`.
    pub floor: f64,
    pub max_iters: usize,
    /// Stop once an iteration improves the objective by less than this.
    pub tol: f64,
    pub mode: QpMode,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            floor: 0.05,
            max_iters: 5000,
            tol: 1e-10,
            mode: QpMode::Central,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub matrix: ConsensusMatrix,
    pub objective: f64,
    /// Objective at the (projected) max-degree starting point.
    pub initial_objective: f64,
    pub iterations: usize,
}

/// `(1/N) sum_i ||(A x)_i - mean(A x)||^2`.
pub fn variance_objective(a: &ConsensusMatrix, x: &[CommonError]) -> f64 {
    spread(&a.apply(x).iter().map(|e| e.offset).collect::<Vec<_>>())
}

fn spread(y: &[Vec2]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let n = y.len() as f64;
    let mean = y.iter().fold(Vec2::zeros(), |acc, v| acc + v) / n;
    y.iter().map(|v| (v - mean).norm_squared()).sum::<f64>() / n
}

struct Row {
    sources: Vec<NodeId>,
    weights: Vec<f64>,
    lower: Vec<f64>,
    /// Inverse curvature bound, zero when the row cannot move the objective.
    step: f64,
}

impl Row {
    fn output(&self, x: &[Vec2]) -> Vec2 {
        self.sources
            .iter()
            .zip(&self.weights)
            .fold(Vec2::zeros(), |acc, (&j, &w)| acc + x[j] * w)
    }
}

/// Solves the variance-minimization QP for the given estimates and support.
pub fn variance_min_weights(
    estimates: &[CommonError],
    support: &ConnectionMatrix,
    cfg: &QpConfig,
) -> Result<QpSolution> {
    let n = support.len();
    if estimates.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} estimates for {n} nodes",
            estimates.len()
        )));
    }
    if estimates.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidInput("non-finite estimate".into()));
    }
    if !(0.0..1.0).contains(&cfg.floor) {
        return Err(Error::InvalidInput(format!("floor {} outside [0, 1)", cfg.floor)));
    }
    let x: Vec<Vec2> = estimates.iter().map(|e| e.offset).collect();

    let init = max_degree_weights(support);
    let mut rows: Vec<Row> = (0..n)
        .map(|i| {
            let sources: Vec<NodeId> = support.sources(i).collect();
            let lower = sources
                .iter()
                .map(|&j| if j == i { cfg.floor } else { 0.0 })
                .collect::<Vec<_>>();
            let start: Vec<f64> = sources.iter().map(|&j| init.get(i, j)).collect();
            let weights = project_capped_simplex(&start, &lower);
            Row {
                step: inverse_curvature(&sources, &x),
                sources,
                weights,
                lower,
            }
        })
        .collect();

    let averaging = match cfg.mode {
        QpMode::Central => None,
        QpMode::Distributed { rounds } => {
            let sym = symmetrized(support);
            let k = rounds.unwrap_or_else(|| 2 * undirected_diameter(&sym));
            Some((max_degree_weights(&sym), k))
        }
    };

    let mut y: Vec<Vec2> = rows.iter().map(|r| r.output(&x)).collect();
    let initial_objective = spread(&y);
    let mut objective = initial_objective;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let reference = match &averaging {
            None => {
                let mean = y.iter().fold(Vec2::zeros(), |acc, v| acc + v) / n as f64;
                vec![mean; n]
            }
            Some((w, k)) => repeated_average(w, &y, *k),
        };
        for (i, row) in rows.iter_mut().enumerate() {
            if row.step == 0.0 {
                continue;
            }
            let d = y[i] - reference[i];
            let moved: Vec<f64> = row
                .sources
                .iter()
                .zip(&row.weights)
                .map(|(&j, &w)| w - row.step * d.dot(&x[j]))
                .collect();
            row.weights = project_capped_simplex(&moved, &row.lower);
        }
        iterations += 1;
        y = rows.iter().map(|r| r.output(&x)).collect();
        let next = spread(&y);
        let improvement = objective - next;
        objective = next;
        if improvement.abs() < cfg.tol {
            break;
        }
    }

    let mut a = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (&j, &w) in row.sources.iter().zip(&row.weights) {
            a[(i, j)] = w;
        }
    }
    Ok(QpSolution {
        matrix: ConsensusMatrix::from_raw(a),
        objective,
        initial_objective,
        iterations,
    })
}

/// `1 / lambda_max(sum_j (x_j - c)(x_j - c)^T)` over the row's sources, with
/// `c` their mean. Row moves preserve the row sum, so the local centering is
/// exact. The `1/N` of the objective cancels between gradient and curvature.
fn inverse_curvature(sources: &[NodeId], x: &[Vec2]) -> f64 {
    let c = sources.iter().fold(Vec2::zeros(), |acc, &j| acc + x[j]) / sources.len() as f64;
    let g: Matrix2<f64> = sources.iter().fold(Matrix2::zeros(), |acc, &j| {
        let v = x[j] - c;
        acc + v * v.transpose()
    });
    let half_trace = 0.5 * (g[(0, 0)] + g[(1, 1)]);
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    let lambda = half_trace + (half_trace * half_trace - det).max(0.0).sqrt();
    if lambda > 1e-300 {
        1.0 / lambda
    } else {
        0.0
    }
}

fn repeated_average(w: &ConsensusMatrix, y: &[Vec2], rounds: usize) -> Vec<Vec2> {
    let mut cur = y.to_vec();
    for _ in 0..rounds {
        cur = w
            .apply(&cur.iter().map(|&v| CommonError::from(v)).collect::<Vec<_>>())
            .into_iter()
            .map(|e| e.offset)
            .collect();
    }
    cur
}

fn symmetrized(support: &ConnectionMatrix) -> ConnectionMatrix {
    let n = support.len();
    let rows = (0..n)
        .map(|i| (0..n).map(|j| support.get(i, j) || support.get(j, i)).collect())
        .collect();
    ConnectionMatrix::from_rows(rows).expect("diagonal preserved")
}

/// Largest finite hop distance in the symmetric support (per component).
fn undirected_diameter(sym: &ConnectionMatrix) -> usize {
    let n = sym.len();
    let mut best = 0;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in sym.received_from(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    best = best.max(dist[v]);
                    queue.push_back(v);
                }
            }
        }
    }
    best.max(1)
}

/// Euclidean projection onto `{a : sum a = 1, lower <= a <= 1}`.
///
/// The sum of the clamped shift `clamp(v - tau, lower, 1)` is piecewise linear
/// and non-increasing in `tau`; the breakpoints are searched by bisection and
/// the crossing interpolated exactly.
pub(crate) fn project_capped_simplex(v: &[f64], lower: &[f64]) -> Vec<f64> {
    debug_assert_eq!(v.len(), lower.len());
    let clamped_sum = |tau: f64| -> f64 {
        v.iter()
            .zip(lower)
            .map(|(&vj, &lo)| (vj - tau).clamp(lo, 1.0))
            .sum()
    };
    let mut bps: Vec<f64> = v
        .iter()
        .zip(lower)
        .flat_map(|(&vj, &lo)| [vj - 1.0, vj - lo])
        .collect();
    bps.sort_by(f64::total_cmp);

    // Invariant: clamped_sum(bps[lo_k]) >= 1 > clamped_sum(bps[hi_k]).
    let (mut lo_k, mut hi_k) = (0, bps.len() - 1);
    let tau = if clamped_sum(bps[hi_k]) >= 1.0 {
        bps[hi_k]
    } else {
        while hi_k - lo_k > 1 {
            let mid = (lo_k + hi_k) / 2;
            if clamped_sum(bps[mid]) >= 1.0 {
                lo_k = mid;
            } else {
                hi_k = mid;
            }
        }
        let (t0, t1) = (bps[lo_k], bps[hi_k]);
        let (s0, s1) = (clamped_sum(t0), clamped_sum(t1));
        if s0 > s1 {
            t0 + (s0 - 1.0) / (s0 - s1) * (t1 - t0)
        } else {
            t0
        }
    };
    v.iter()
        .zip(lower)
        .map(|(&vj, &lo)| (vj - tau).clamp(lo, 1.0))
        .collect()
}
