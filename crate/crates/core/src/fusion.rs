//! Particle-level fusion between neighboring filters.
//!
//! A node turns its weight row into particle counts, takes that many particles
//! from each source's snapshot (its own included), stacks them, weights the
//! stack by map matching against its local measurements and resamples back to
//! its original size. With a flat likelihood the fused estimate is, up to
//! resampling noise, the weighted average of the sources' estimates, which is
//! what [`linear_surrogate_step`] models.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::consensus::ConsensusMatrix;
use crate::filter::{systematic_indices, CommonError, GnssMeasurement, Particle, ParticleSet};
use crate::network::ConnectionMatrix;
use crate::roadmap::RoadMap;
use crate::{Error, NodeId, Result, Vec2};

/// Remainders closer than this are treated as ties.
const REMAINDER_TIE: f64 = 1e-9;

/// Sparse view of a [`ConsensusMatrix`]: `rows[i]` lists `(source, a_ij)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights {
    rows: Vec<Vec<(NodeId, f64)>>,
}

impl FusionWeights {
    pub fn from_matrix(a: &ConsensusMatrix, support: &ConnectionMatrix) -> Result<Self> {
        a.validate(support)?;
        Ok(Self {
            rows: (0..a.len()).map(|i| a.row(i)).collect(),
        })
    }

    pub fn row(&self, i: NodeId) -> &[(NodeId, f64)] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Largest-remainder apportionment of `capacity` particles over a row.
/// Ties go to the smaller node id. The output lists every row entry, in the
/// row's order, including zero counts.
pub fn counts_from_weights(row: &[(NodeId, f64)], capacity: usize) -> Vec<(NodeId, usize)> {
    let mut counts: Vec<(NodeId, usize, f64)> = row
        .iter()
        .map(|&(j, w)| {
            let exact = w.max(0.0) * capacity as f64;
            let base = exact.floor();
            (j, base as usize, exact - base)
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();

    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (counts[a].2, counts[b].2);
        if (ra - rb).abs() <= REMAINDER_TIE {
            counts[a].0.cmp(&counts[b].0)
        } else {
            rb.total_cmp(&ra)
        }
    });
    if assigned < capacity {
        for k in order.iter().cycle().take(capacity - assigned) {
            counts[*k].1 += 1;
        }
    } else {
        // Only reachable when the row sums to slightly more than one.
        let mut excess = assigned - capacity;
        for &k in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[k].1 > 0 {
                counts[k].1 -= 1;
                excess -= 1;
            }
        }
    }
    counts.into_iter().map(|(j, c, _)| (j, c)).collect()
}

/// Result of one node's fusion.
#[derive(Clone, Debug)]
pub struct FusionOutcome {
    pub set: ParticleSet,
    /// Particles taken per source.
    pub counts: Vec<(NodeId, usize)>,
    /// Sources listed in the row whose snapshot was unavailable.
    pub shortfall: Vec<NodeId>,
    /// The map-matching update collapsed every weight; the stack was
    /// resampled with uniform weights instead.
    pub degenerate: bool,
}

/// Fuses node `node`'s set with its neighbors' snapshots.
///
/// `neighbors` holds snapshots keyed by node id; the node's own entry in
/// `row` is served from `own`. A row source without a snapshot is dropped and
/// the remaining weights renormalized.
#[allow(clippy::too_many_arguments)]
pub fn fuse(
    node: NodeId,
    own: &ParticleSet,
    neighbors: &BTreeMap<NodeId, &ParticleSet>,
    row: &[(NodeId, f64)],
    map: &RoadMap,
    measurements: &[GnssMeasurement],
    softness: f64,
    rng: &mut impl Rng,
) -> Result<FusionOutcome> {
    let capacity = own.capacity();
    let mut shortfall = Vec::new();
    let mut available: Vec<(NodeId, f64, &ParticleSet)> = Vec::with_capacity(row.len());
    for &(j, w) in row {
        let source = if j == node { Some(own) } else { neighbors.get(&j).copied() };
        match source {
            Some(s) => available.push((j, w, s)),
            None => shortfall.push(j),
        }
    }
    let total: f64 = available.iter().map(|a| a.1).sum();
    if available.is_empty() || !(total > 0.0) {
        available = vec![(node, 1.0, own)];
    } else if !shortfall.is_empty() {
        for a in &mut available {
            a.1 /= total;
        }
    }

    let counts = counts_from_weights(
        &available.iter().map(|&(j, w, _)| (j, w)).collect::<Vec<_>>(),
        capacity,
    );
    let mut stacked = Vec::with_capacity(capacity);
    for (&(_, _, source), &(_, count)) in available.iter().zip(&counts) {
        if count == 0 {
            continue;
        }
        let weights = source.normalized_weights();
        let uniform = weights.iter().all(|&w| (w - weights[0]).abs() < 1e-15);
        if uniform && count == source.len() {
            stacked.extend(source.particles().iter().map(|p| p.hypothesis));
        } else {
            stacked.extend(
                systematic_indices(&weights, count, rng.random())
                    .into_iter()
                    .map(|k| source.particles()[k].hypothesis),
            );
        }
    }
    let w = 1.0 / stacked.len() as f64;
    let mut set = ParticleSet::from_particles(
        stacked
            .into_iter()
            .map(|hypothesis| Particle { hypothesis, weight: w })
            .collect(),
        capacity,
    )?;

    let mut degenerate = false;
    match set.update(measurements, map, softness) {
        Ok(()) => {}
        Err(Error::DegenerateWeights) => {
            set.reset_uniform();
            degenerate = true;
        }
        Err(e) => return Err(e),
    }
    set.resample(rng)?;
    Ok(FusionOutcome {
        set,
        counts,
        shortfall,
        degenerate,
    })
}

/// One step of the reduced linear model: `x_i <- sum_j a_ij x_j + w_i`, with
/// `w_i` i.i.d. Gaussian per axis.
pub fn linear_surrogate_step(
    estimates: &[CommonError],
    weights: &ConsensusMatrix,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> Vec<CommonError> {
    let mut out = weights.apply(estimates);
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for e in &mut out {
            e.offset += Vec2::new(normal.sample(rng), normal.sample(rng));
        }
    }
    out
}
