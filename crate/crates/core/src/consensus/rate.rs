//! Asymptotic convergence rate of `X(t+1) = A X(t)`.
//!
//! For a row-stochastic `A` whose support is connected, the deviation from
//! the fixed point evolves under `A - 1 pi^T` (`pi` the left Perron vector),
//! whose spectrum is that of `A` with the eigenvalue 1 removed. The
//! worst-case per-step decay factor is therefore the second-largest
//! eigenvalue modulus.

use nalgebra::{DMatrix, DVector};

use super::ConsensusMatrix;

/// Dense eigensolve up to this many nodes, power iteration beyond.
const DENSE_LIMIT: usize = 64;
/// Moduli below this are reported as exactly zero.
const ZERO_SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRate {
    pub rate: f64,
    /// The support splits into several components; there is no global
    /// consensus and `rate` is 1.
    pub disconnected: bool,
}

pub fn asymptotic_convergence_rate(a: &ConsensusMatrix) -> ConvergenceRate {
    let m = a.matrix();
    let n = m.nrows();
    if n <= 1 {
        return ConvergenceRate {
            rate: 0.0,
            disconnected: false,
        };
    }
    if !support_connected(m) {
        return ConvergenceRate {
            rate: 1.0,
            disconnected: true,
        };
    }
    let rate = if n <= DENSE_LIMIT {
        dense_rate(m)
    } else {
        power_iteration_rate(m, 1e-9, 100_000)
    };
    ConvergenceRate {
        rate: if rate < ZERO_SNAP { 0.0 } else { rate.min(1.0) },
        disconnected: false,
    }
}

fn support_connected(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if !seen[v] && (m[(u, v)] != 0.0 || m[(v, u)] != 0.0) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn dense_rate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().complex_eigenvalues();
    let mut values: Vec<_> = eig.iter().copied().collect();
    // Drop the eigenvalue closest to 1 (the consensus mode).
    let k = values
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (*a - nalgebra::Complex::new(1.0, 0.0)).norm();
            let db = (*b - nalgebra::Complex::new(1.0, 0.0)).norm();
            da.total_cmp(&db)
        })
        .map(|(k, _)| k)
        .unwrap_or(0);
    values.swap_remove(k);
    values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral radius of `A - 1 pi^T` by power iteration, without a dense
/// eigensolve. Uses the growth of `||B^k v||` over doubling horizons so that
/// complex dominant pairs are handled.
pub fn power_iteration_rate(m: &DMatrix<f64>, tol: f64, max_iters: usize) -> f64 {
    let n = m.nrows();
    // Left Perron vector: pi^T A = pi^T.
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    let mt = m.transpose();
    for _ in 0..max_iters {
        let next = &mt * &pi;
        let s = next.sum();
        let next = next / s;
        let done = (&next - &pi).amax() < 1e-15;
        pi = next;
        if done {
            break;
        }
    }
    let ones = DVector::from_element(n, 1.0);
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let av = m * v;
        let shift = pi.dot(v);
        av - &ones * shift
    };

    // Deterministic start with components in every direction.
    let mut v = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.754_877_666).sin());
    let mut log_norm = 0.0;
    let mut history: Vec<f64> = vec![0.0];
    let mut estimate = f64::NAN;
    let mut k = 0;
    let mut horizon = 16;
    while k < max_iters {
        v = apply(&v);
        let nv = v.norm();
        if nv == 0.0 {
            return 0.0;
        }
        log_norm += nv.ln();
        v /= nv;
        k += 1;
        history.push(log_norm);
        if k == horizon {
            let half = horizon / 2;
            let next = ((history[k] - history[half]) / half as f64).exp();
            if (next - estimate).abs() < tol {
                return next;
            }
            estimate = next;
            horizon *= 2;
        }
    }
    estimate
}
