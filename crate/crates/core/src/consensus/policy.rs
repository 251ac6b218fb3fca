//! Fixed weight rules: max-degree, constant self-weight, random and identity.

use nalgebra::DMatrix;
use rand::Rng;

use super::ConsensusMatrix;
use crate::network::ConnectionMatrix;
use crate::{seed, Error, Result};

/// `a_ij = 1 / max(d_i, d_j)` for every source `j` of row `i`, with the rest
/// of the row on the diagonal. Degrees are those of the undirected graph
/// underlying the support, so a directed ring of four still gets 1/2.
pub fn max_degree_weights(support: &ConnectionMatrix) -> ConsensusMatrix {
    let n = support.len();
    let deg = support.undirected_degrees();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in support.received_from(i) {
            let w = 1.0 / deg[i].max(deg[j]) as f64;
            a[(i, j)] = w;
            off += w;
        }
        a[(i, i)] = 1.0 - off;
    }
    ConsensusMatrix::from_raw(a)
}

/// Self-weight `alpha`, remainder split equally over the row's other sources.
/// Rows without other sources keep everything.
pub fn constant_alpha_weights(support: &ConnectionMatrix, alpha: f64) -> Result<ConsensusMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    let n = support.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let others: Vec<_> = support.received_from(i).collect();
        if others.is_empty() {
            a[(i, i)] = 1.0;
            continue;
        }
        a[(i, i)] = alpha;
        let share = (1.0 - alpha) / others.len() as f64;
        for j in others {
            a[(i, j)] = share;
        }
    }
    Ok(ConsensusMatrix::from_raw(a))
}

/// Per row, i.i.d. uniform draws over the row's sources, normalized.
pub fn random_weights(support: &ConnectionMatrix, seed: u64) -> ConsensusMatrix {
    let n = support.len();
    let mut rng = seed::rng_from(seed);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let sources: Vec<_> = support.sources(i).collect();
        let draws: Vec<f64> = sources.iter().map(|_| rng.random::<f64>()).collect();
        let total: f64 = draws.iter().sum();
        if !(total > 0.0) {
            a[(i, i)] = 1.0;
            continue;
        }
        for (&j, w) in sources.iter().zip(draws) {
            a[(i, j)] = w / total;
        }
    }
    ConsensusMatrix::from_raw(a)
}

pub fn identity_weights(n: usize) -> ConsensusMatrix {
    ConsensusMatrix::identity(n)
}
