//! Consensus matrices: the fusion weights `a_ij`, the rules that choose them
//! and their convergence analysis.
//!
//! A [`ConsensusMatrix`] is row-stochastic with entries in `[0, 1]` and is
//! zero outside the communication support. Row `i` says which fraction of node
//! `i`'s particles come from each node it receives from.

mod policy;
mod qp;
mod rate;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::filter::CommonError;
use crate::network::ConnectionMatrix;
use crate::{Error, NodeId, Result, Vec2};

pub use policy::{constant_alpha_weights, identity_weights, max_degree_weights, random_weights};
pub use qp::{variance_min_weights, variance_objective, QpConfig, QpMode, QpSolution};
pub use rate::{asymptotic_convergence_rate, power_iteration_rate, ConvergenceRate};

/// Row sums must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusMatrix {
    a: DMatrix<f64>,
}

impl ConsensusMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
        }
    }

    /// Wraps `a` after checking the row-stochastic and box invariants.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidInput("consensus matrix must be square".into()));
        }
        let m = Self { a };
        m.check_box_and_rows()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("consensus matrix must be square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub(crate) fn from_raw(a: DMatrix<f64>) -> Self {
        Self { a }
    }

    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.a[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Nonzero entries of row `i` as `(source, weight)`, ascending by source.
    pub fn row(&self, i: NodeId) -> Vec<(NodeId, f64)> {
        (0..self.len())
            .filter_map(|j| {
                let w = self.a[(i, j)];
                (w != 0.0).then_some((j, w))
            })
            .collect()
    }

    fn check_box_and_rows(&self) -> Result<()> {
        for i in 0..self.len() {
            let mut sum = 0.0;
            for j in 0..self.len() {
                let v = self.a[(i, j)];
                if !(v.is_finite() && (-1e-12..=1.0 + 1e-12).contains(&v)) {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Checks every invariant, including support on `support`.
    pub fn validate(&self, support: &ConnectionMatrix) -> Result<()> {
        if support.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, support has {} nodes",
                self.len(),
                self.len(),
                support.len()
            )));
        }
        self.check_box_and_rows()?;
        for i in 0..self.len() {
            for j in 0..self.len() {
                if self.a[(i, j)] != 0.0 && !support.get(i, j) {
                    return Err(Error::InvalidInput(format!(
                        "weight on ({i}, {j}) outside the communication support"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.len()).all(|i| (0..i).all(|j| (self.a[(i, j)] - self.a[(j, i)]).abs() <= tol))
    }

    /// `x_i <- sum_j a_ij x_j` on both axes.
    pub fn apply(&self, estimates: &[CommonError]) -> Vec<CommonError> {
        (0..self.len())
            .map(|i| {
                let mut acc = Vec2::zeros();
                for (j, e) in estimates.iter().enumerate() {
                    acc += e.offset * self.a[(i, j)];
                }
                CommonError::from(acc)
            })
            .collect()
    }
}

/// How a run chooses its fusion weights.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightPolicy {
    /// Re-solves the variance-minimization QP every step.
    VarianceMin,
    MaxDegree,
    ConstantAlpha(f64),
    /// Row-normalized uniform weights, drawn once per run from this seed.
    Random(u64),
    Identity,
}

impl WeightPolicy {
    /// True when the weights depend on the current estimates.
    pub fn is_adaptive(&self) -> bool {
        matches!(self, WeightPolicy::VarianceMin)
    }

    /// Weights for the given support. `estimates` are only read by
    /// [`WeightPolicy::VarianceMin`]; `seed_salt` decorrelates random draws
    /// across trials.
    pub fn weights(
        &self,
        support: &ConnectionMatrix,
        estimates: &[CommonError],
        qp: &QpConfig,
        seed_salt: u64,
    ) -> Result<ConsensusMatrix> {
        match *self {
            WeightPolicy::VarianceMin => {
                variance_min_weights(estimates, support, qp).map(|s| s.matrix)
            }
            WeightPolicy::MaxDegree => Ok(max_degree_weights(support)),
            WeightPolicy::ConstantAlpha(alpha) => constant_alpha_weights(support, alpha),
            WeightPolicy::Random(seed) => Ok(random_weights(
                support,
                crate::seed::derive(&[seed, seed_salt]),
            )),
            WeightPolicy::Identity => Ok(identity_weights(support.len())),
        }
    }
}

impl fmt::Display for WeightPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightPolicy::VarianceMin => write!(f, "variance_min"),
            WeightPolicy::MaxDegree => write!(f, "max_degree"),
            WeightPolicy::ConstantAlpha(a) => write!(f, "constant:{a}"),
            WeightPolicy::Random(s) => write!(f, "random:{s}"),
            WeightPolicy::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for WeightPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown policy `{s}`"));
        match s.split_once(':') {
            None => match s {
                "variance_min" => Ok(WeightPolicy::VarianceMin),
                "max_degree" => Ok(WeightPolicy::MaxDegree),
                "identity" => Ok(WeightPolicy::Identity),
                "random" => Ok(WeightPolicy::Random(0)),
                _ => Err(bad()),
            },
            Some(("constant", a)) => {
                let alpha: f64 = a.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
                }
                Ok(WeightPolicy::ConstantAlpha(alpha))
            }
            Some(("random", seed)) => Ok(WeightPolicy::Random(seed.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_policies() {
        assert_eq!("variance_min".parse::<WeightPolicy>().unwrap(), WeightPolicy::VarianceMin);
        assert_eq!("constant:0.4".parse::<WeightPolicy>().unwrap(), WeightPolicy::ConstantAlpha(0.4));
        assert_eq!("random:17".parse::<WeightPolicy>().unwrap(), WeightPolicy::Random(17));
        assert!("constant:1.5".parse::<WeightPolicy>().is_err());
        assert!("fastest".parse::<WeightPolicy>().is_err());
        for p in ["max_degree", "identity", "constant:0.05", "random:3"] {
            assert_eq!(p.parse::<WeightPolicy>().unwrap().to_string(), p);
        }
    }

    #[test]
    fn validation_catches_support_violations() {
        let support = ConnectionMatrix::from_rows(vec![vec![true, false], vec![true, true]]).unwrap();
        let ok = ConsensusMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        ok.validate(&support).unwrap();
        let bad = ConsensusMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(bad.validate(&support).is_err());
        assert!(ConsensusMatrix::from_rows(&[vec![0.7, 0.7], vec![0.5, 0.5]]).is_err());
        assert!(ConsensusMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn apply_matches_hand_product() {
        let a = ConsensusMatrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let x = [CommonError::new(2.0, 0.0), CommonError::new(0.0, 4.0)];
        let y = a.apply(&x);
        assert_eq!(y[0], CommonError::new(1.0, 2.0));
        assert_eq!(y[1], CommonError::new(0.5, 3.0));
    }
}
