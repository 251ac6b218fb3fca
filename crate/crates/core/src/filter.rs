//! Particle filter over the 2-D GNSS common error.
//!
//! Each particle is a hypothesis of the atmospheric (correlated) error shared
//! by all receivers in a neighborhood. A hypothesis is scored by subtracting
//! it from every available GNSS measurement and asking how well the corrected
//! positions fit the road map.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::network::VehiclePose;
use crate::roadmap::RoadMap;
use crate::{Error, NodeId, Result, Vec2};

/// Likelihood below `exp(-800)` underflows to zero, so corridors farther than
/// this many softness units from every corrected position can be skipped.
const LIKELIHOOD_CUTOFF_SIGMAS: f64 = 40.0;

/// Estimated or true common error, meters east/north.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CommonError {
    pub offset: Vec2,
}

impl CommonError {
    pub fn new(east: f64, north: f64) -> Self {
        Self {
            offset: Vec2::new(east, north),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.offset.iter().all(|v| v.is_finite())
    }
}

impl From<Vec2> for CommonError {
    fn from(offset: Vec2) -> Self {
        Self { offset }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub hypothesis: Vec2,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnssMeasurement {
    pub measured_position: Vec2,
    pub owner: NodeId,
}

/// Filter constants. None of these come with canonical values; the defaults
/// are a desk-scale configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    /// Per-axis std of the prediction noise, meters.
    pub diffusion_sigma: f64,
    /// Per-axis std of the non-correlated receiver noise, meters.
    pub noise_sigma: f64,
    /// Falloff of the map-matching likelihood outside a corridor, meters.
    pub softness: f64,
    /// Std of the initial particle cloud around zero, meters.
    pub init_sigma: f64,
    /// Diffusion multiplier for the step after a weight collapse.
    pub recovery_inflation: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            diffusion_sigma: 0.2,
            noise_sigma: 1.0,
            softness: crate::roadmap::DEFAULT_SOFTNESS,
            init_sigma: 5.0,
            recovery_inflation: 3.0,
        }
    }
}

impl FilterConfig {
    /// Receiver noise is folded into the map-matching falloff.
    pub fn effective_softness(&self) -> f64 {
        self.softness.hypot(self.noise_sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.particles < 10 {
            return Err(Error::InvalidInput(format!(
                "need at least 10 particles, got {}",
                self.particles
            )));
        }
        for (name, v) in [
            ("diffusion_sigma", self.diffusion_sigma),
            ("noise_sigma", self.noise_sigma),
            ("softness", self.softness),
            ("init_sigma", self.init_sigma),
            ("recovery_inflation", self.recovery_inflation),
        ] {
            if !finite_nonneg(v) {
                return Err(Error::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    capacity: usize,
}

impl ParticleSet {
    /// Equal-weight set whose capacity is the number of hypotheses.
    pub fn from_hypotheses(hypotheses: impl IntoIterator<Item = Vec2>) -> Self {
        let mut particles: Vec<Particle> = hypotheses
            .into_iter()
            .map(|hypothesis| Particle {
                hypothesis,
                weight: 1.0,
            })
            .collect();
        let m = particles.len();
        for p in &mut particles {
            p.weight = 1.0 / m as f64;
        }
        Self {
            particles,
            capacity: m,
        }
    }

    pub fn from_particles(particles: Vec<Particle>, capacity: usize) -> Result<Self> {
        if particles.is_empty() || capacity == 0 {
            return Err(Error::InvalidInput("empty particle set".into()));
        }
        if particles
            .iter()
            .any(|p| !(p.weight >= 0.0 && p.weight.is_finite()))
        {
            return Err(Error::InvalidInput("particle weights must be finite and >= 0".into()));
        }
        Ok(Self {
            particles,
            capacity,
        })
    }

    /// `m` hypotheses drawn i.i.d. from an isotropic Gaussian.
    pub fn gaussian(center: Vec2, sigma: f64, m: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
        Self::from_hypotheses((0..m).map(|_| {
            center + Vec2::new(normal.sample(rng), normal.sample(rng))
        }))
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let total = self.total_weight();
        self.particles.iter().map(|p| p.weight / total).collect()
    }

    pub fn reset_uniform(&mut self) {
        let w = 1.0 / self.particles.len() as f64;
        for p in &mut self.particles {
            p.weight = w;
        }
    }

    /// Perturbs every hypothesis with i.i.d. zero-mean Gaussian noise.
    pub fn predict(&mut self, diffusion_sigma: f64, rng: &mut impl Rng) {
        if diffusion_sigma <= 0.0 {
            return;
        }
        let normal = Normal::new(0.0, diffusion_sigma).expect("finite sigma");
        for p in &mut self.particles {
            p.hypothesis += Vec2::new(normal.sample(rng), normal.sample(rng));
        }
    }

    /// Multiplies each weight by the map-matching likelihood of every
    /// measurement corrected by the particle's hypothesis, then renormalizes.
    ///
    /// Returns [`Error::DegenerateWeights`] when every weight vanishes; the
    /// weights are then all zero and the caller decides how to recover.
    pub fn update(
        &mut self,
        measurements: &[GnssMeasurement],
        map: &RoadMap,
        softness: f64,
    ) -> Result<()> {
        if measurements.is_empty() {
            return Err(Error::InvalidInput("update needs at least one measurement".into()));
        }
        let reach = self
            .particles
            .iter()
            .map(|p| p.hypothesis.norm())
            .fold(0.0, f64::max)
            + LIKELIHOOD_CUTOFF_SIGMAS * softness.max(0.0);
        for z in measurements {
            let roads = map.local(z.measured_position, reach);
            if roads.is_empty() {
                for p in &mut self.particles {
                    p.weight = 0.0;
                }
                break;
            }
            for p in &mut self.particles {
                if p.weight > 0.0 {
                    p.weight *= roads.constraint_likelihood(z.measured_position - p.hypothesis, softness);
                }
            }
        }
        let total = self.total_weight();
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        Ok(())
    }

    /// Systematic resampling back to `capacity` equally weighted particles.
    pub fn resample(&mut self, rng: &mut impl Rng) -> Result<()> {
        let weights = self.normalized_weights();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::DegenerateWeights);
        }
        let picks = systematic_indices(&weights, self.capacity, rng.random());
        let w = 1.0 / self.capacity as f64;
        self.particles = picks
            .into_iter()
            .map(|k| Particle {
                hypothesis: self.particles[k].hypothesis,
                weight: w,
            })
            .collect();
        Ok(())
    }

    /// Weighted mean hypothesis.
    pub fn estimate(&self) -> CommonError {
        let total = self.total_weight();
        let sum = self
            .particles
            .iter()
            .fold(Vec2::zeros(), |acc, p| acc + p.hypothesis * p.weight);
        CommonError::from(sum / total)
    }

    /// Debug rows `node t hyp_x hyp_y weight`.
    pub fn dump(&self, node: NodeId, t: usize) -> String {
        let mut out = String::new();
        for p in &self.particles {
            let _ = writeln!(
                out,
                "{node} {t} {} {} {}",
                p.hypothesis.x, p.hypothesis.y, p.weight
            );
        }
        out
    }
}

/// Systematic selection of `count` indices from normalized `weights` using one
/// uniform draw `u` in `[0, 1)`. Index `k` appears `floor` or `ceil` of
/// `count * weights[k]` times.
pub fn systematic_indices(weights: &[f64], count: usize, u: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    if weights.is_empty() || count == 0 {
        return out;
    }
    let step = 1.0 / count as f64;
    let mut cumulative = weights[0];
    let mut k = 0;
    for i in 0..count {
        let target = (u + i as f64) * step;
        while target >= cumulative && k + 1 < weights.len() {
            k += 1;
            cumulative += weights[k];
        }
        out.push(k);
    }
    out
}

/// True position plus the common error plus i.i.d. receiver noise.
pub fn simulate_gnss(
    owner: NodeId,
    pose: &VehiclePose,
    common_error: CommonError,
    noise_sigma: f64,
    rng: &mut impl Rng,
) -> GnssMeasurement {
    let mut noise = Vec2::zeros();
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        noise = Vec2::new(normal.sample(rng), normal.sample(rng));
    }
    GnssMeasurement {
        measured_position: pose.position + common_error.offset + noise,
        owner,
    }
}

/// One vehicle's filter with its recovery state.
#[derive(Clone, Debug)]
pub struct NodeFilter {
    pub set: ParticleSet,
    inflate_next: bool,
}

/// What happened during one local filter step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub degenerate: bool,
}

impl NodeFilter {
    pub fn new(set: ParticleSet) -> Self {
        Self {
            set,
            inflate_next: false,
        }
    }

    pub fn initial(cfg: &FilterConfig, rng: &mut impl Rng) -> Self {
        Self::new(ParticleSet::gaussian(
            Vec2::zeros(),
            cfg.init_sigma,
            cfg.particles,
            rng,
        ))
    }

    /// Predict with (possibly inflated) diffusion.
    pub fn predict(&mut self, cfg: &FilterConfig, rng: &mut impl Rng) {
        let mut sigma = cfg.diffusion_sigma;
        if std::mem::take(&mut self.inflate_next) {
            sigma *= cfg.recovery_inflation;
        }
        self.set.predict(sigma, rng);
    }

    /// Map-matching update followed by resampling. A weight collapse resets
    /// the weights to uniform and inflates the next prediction.
    pub fn update_resample(
        &mut self,
        measurements: &[GnssMeasurement],
        map: &RoadMap,
        cfg: &FilterConfig,
        rng: &mut impl Rng,
    ) -> Result<StepEvents> {
        let mut events = StepEvents::default();
        match self.set.update(measurements, map, cfg.effective_softness()) {
            Ok(()) => {}
            Err(Error::DegenerateWeights) => {
                self.set.reset_uniform();
                self.inflate_next = true;
                events.degenerate = true;
            }
            Err(e) => return Err(e),
        }
        self.set.resample(rng)?;
        Ok(events)
    }

    pub fn mark_degenerate(&mut self) {
        self.inflate_next = true;
    }

    pub fn estimate(&self) -> CommonError {
        self.set.estimate()
    }
}
