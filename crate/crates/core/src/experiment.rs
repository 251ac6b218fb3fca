//! Centralized and decentralized CMM simulations and the comparison suites.
//!
//! Every trial follows the same synchronous round structure:
//!
//! 1. the true common error takes a small random-walk step;
//! 2. every vehicle receives a GNSS fix (position + common error + noise);
//! 3. every node predicts, map-matches against the fixes it receives
//!    (its own and its sources'), and resamples;
//! 4. nodes publish immutable snapshots, the fusion weights are chosen, and
//!    each node fuses from the snapshots of its sources;
//! 5. the post-fusion estimates are scored against the truth.
//!
//! The centralized mechanism is a single filter that receives every fix and
//! runs the same steps with nothing to fuse.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::consensus::{QpConfig, WeightPolicy};
use crate::filter::{simulate_gnss, CommonError, FilterConfig, GnssMeasurement, NodeFilter, ParticleSet};
use crate::fusion::{fuse, FusionWeights};
use crate::metrics::{decompose_error, pearson, steady_state_rmse, steady_state_variance, MetricsRecord};
use crate::scenario::Scenario;
use crate::seed::{self, rng_for, Stream};
use crate::{Error, NodeId, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Centralized,
    Decentralized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Decentralized => "decentralized",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "decentralized" => Ok(Mode::Decentralized),
            _ => Err(Error::InvalidInput(format!("unknown mode `{s}`"))),
        }
    }
}

/// Ground-truth common error: a slow random walk.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthConfig {
    /// Per-axis std of the initial common error, meters.
    pub initial_sigma: f64,
    /// Per-axis std of the per-step change, meters.
    pub walk_sigma: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            initial_sigma: 3.0,
            walk_sigma: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub policy: WeightPolicy,
    pub mode: Mode,
    pub steps: usize,
    pub trials: usize,
    pub global_seed: u64,
    pub filter: FilterConfig,
    pub qp: QpConfig,
    pub truth: TruthConfig,
    /// Node errors above this many meters are reported as divergence.
    pub divergence_cap: f64,
    pub record_fusion_log: bool,
    /// Keep every node's estimate and the truth for each step.
    pub record_estimates: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy: WeightPolicy::VarianceMin,
            mode: Mode::Decentralized,
            steps: 300,
            trials: 3,
            global_seed: 1,
            filter: FilterConfig::default(),
            qp: QpConfig::default(),
            truth: TruthConfig::default(),
            divergence_cap: 50.0,
            record_fusion_log: false,
            record_estimates: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.trials == 0 {
            return Err(Error::InvalidInput("steps and trials must be at least 1".into()));
        }
        self.filter.validate()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        seed::derive(&[self.global_seed, trial as u64])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    /// A node's error first exceeded the divergence cap.
    Diverged { t: usize, node: NodeId, error: f64 },
    /// Every particle weight vanished during map matching.
    DegenerateWeights { t: usize, node: NodeId },
    /// A row source had no snapshot available.
    FusionShortfall { t: usize, node: NodeId, source: NodeId },
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Diverged { t, node, error } => write!(f, "{t} diverged node={node} error={error}"),
            Event::DegenerateWeights { t, node } => write!(f, "{t} degenerate_weights node={node}"),
            Event::FusionShortfall { t, node, source } => {
                write!(f, "{t} fusion_shortfall node={node} source={source}")
            }
        }
    }
}

/// Who took how many particles from whom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusionLogRow {
    pub t: usize,
    pub node: NodeId,
    pub source: NodeId,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub records: Vec<MetricsRecord>,
    pub events: Vec<Event>,
    pub fusion_log: Vec<FusionLogRow>,
    /// Per step: the true common error and every node's estimate. Empty
    /// unless `record_estimates` is set.
    pub trajectory: Vec<(CommonError, Vec<CommonError>)>,
}

impl TrialResult {
    pub fn steady_rmse(&self) -> f64 {
        steady_state_rmse(&self.records)
    }

    pub fn steady_variance(&self) -> f64 {
        steady_state_variance(&self.records)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub scenario: String,
    pub nodes: usize,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
}

impl RunResult {
    /// Mean over trials of the steady-state RMSE.
    pub fn rmse(&self) -> f64 {
        mean(self.trials.iter().map(TrialResult::steady_rmse))
    }

    /// Mean over trials of the square root of the steady-state variance.
    pub fn sqrt_variance(&self) -> f64 {
        mean(self.trials.iter().map(|t| t.steady_variance().sqrt()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Runs every trial of `cfg` on `scenario`; trials run in parallel.
pub fn run(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<RunResult> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|k| match cfg.mode {
            Mode::Centralized => run_centralized(cfg, scenario, k),
            Mode::Decentralized => run_decentralized(cfg, scenario, k),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        scenario: scenario.name.clone(),
        nodes: scenario.len(),
        config: cfg.clone(),
        trials,
    })
}

struct World<'a> {
    cfg: &'a ExperimentConfig,
    scenario: &'a Scenario,
    seed: u64,
    truth: CommonError,
}

impl<'a> World<'a> {
    fn new(cfg: &'a ExperimentConfig, scenario: &'a Scenario, trial: usize) -> Self {
        let seed = cfg.trial_seed(trial);
        let mut rng = rng_for(seed, Stream::Truth, 0, 0);
        let truth = gaussian2(cfg.truth.initial_sigma, &mut rng);
        Self {
            cfg,
            scenario,
            seed,
            truth: CommonError::from(truth),
        }
    }

    fn advance_truth(&mut self, t: usize) {
        if t > 0 {
            let mut rng = rng_for(self.seed, Stream::Truth, 0, t as u64);
            self.truth.offset += gaussian2(self.cfg.truth.walk_sigma, &mut rng);
        }
    }

    fn measurements(&self, t: usize) -> Vec<GnssMeasurement> {
        self.scenario
            .poses()
            .iter()
            .enumerate()
            .map(|(i, pose)| {
                let mut rng = rng_for(self.seed, Stream::Measurement, i as u64, t as u64);
                simulate_gnss(i, pose, self.truth, self.cfg.filter.noise_sigma, &mut rng)
            })
            .collect()
    }

    fn initial_filter(&self, node: NodeId) -> NodeFilter {
        NodeFilter::initial(&self.cfg.filter, &mut rng_for(self.seed, Stream::Init, node as u64, 0))
    }

    /// Predict, map-match and resample one node's filter.
    fn local_step(
        &self,
        filter: &mut NodeFilter,
        node: NodeId,
        t: usize,
        group: &[GnssMeasurement],
    ) -> Result<bool> {
        let (node, t64) = (node as u64, t as u64);
        filter.predict(&self.cfg.filter, &mut rng_for(self.seed, Stream::Predict, node, t64));
        let ev = filter.update_resample(
            group,
            &self.scenario.map,
            &self.cfg.filter,
            &mut rng_for(self.seed, Stream::Resample, node, t64),
        )?;
        Ok(ev.degenerate)
    }
}

fn gaussian2(sigma: f64, rng: &mut impl rand::Rng) -> Vec2 {
    if sigma <= 0.0 {
        return Vec2::zeros();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    Vec2::new(normal.sample(rng), normal.sample(rng))
}

struct DivergenceTracker {
    cap: f64,
    flagged: Vec<bool>,
}

impl DivergenceTracker {
    fn new(cap: f64, n: usize) -> Self {
        Self {
            cap,
            flagged: vec![false; n],
        }
    }

    fn check(&mut self, record: &MetricsRecord, events: &mut Vec<Event>) {
        for (node, &error) in record.per_node_error.iter().enumerate() {
            if error > self.cap && !self.flagged[node] {
                self.flagged[node] = true;
                log::warn!("t={} node {node} diverged: error {error:.2} m", record.t);
                events.push(Event::Diverged {
                    t: record.t,
                    node,
                    error,
                });
            } else if error <= self.cap {
                self.flagged[node] = false;
            }
        }
    }
}

/// One filter receiving every vehicle's fix.
pub fn run_centralized(cfg: &ExperimentConfig, scenario: &Scenario, trial: usize) -> Result<TrialResult> {
    cfg.validate()?;
    let n = scenario.len();
    let mut world = World::new(cfg, scenario, trial);
    let mut filter = world.initial_filter(0);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut events = Vec::new();
    let mut tracker = DivergenceTracker::new(cfg.divergence_cap, n);
    let mut trajectory = Vec::new();
    let softness = cfg.filter.effective_softness();
    for t in 0..cfg.steps {
        world.advance_truth(t);
        let z = world.measurements(t);
        if world.local_step(&mut filter, 0, t, &z)? {
            events.push(Event::DegenerateWeights { t, node: 0 });
        }
        let snapshot = filter.set.clone();
        let out = fuse(
            0,
            &snapshot,
            &BTreeMap::new(),
            &[(0, 1.0)],
            &scenario.map,
            &z,
            softness,
            &mut rng_for(world.seed, Stream::Fusion, 0, t as u64),
        )?;
        if out.degenerate {
            filter.mark_degenerate();
            events.push(Event::DegenerateWeights { t, node: 0 });
        }
        filter.set = out.set;
        let estimates = vec![filter.estimate(); n];
        let record = decompose_error(t, &estimates, world.truth)?;
        record.check_identity()?;
        tracker.check(&record, &mut events);
        records.push(record);
        if cfg.record_estimates {
            trajectory.push((world.truth, estimates));
        }
    }
    Ok(TrialResult {
        trial,
        records,
        events,
        fusion_log: Vec::new(),
        trajectory,
    })
}

/// One filter per vehicle, fused every step with the configured policy.
pub fn run_decentralized(cfg: &ExperimentConfig, scenario: &Scenario, trial: usize) -> Result<TrialResult> {
    cfg.validate()?;
    let n = scenario.len();
    let support = &scenario.support;
    let mut world = World::new(cfg, scenario, trial);
    let mut filters: Vec<NodeFilter> = (0..n).map(|i| world.initial_filter(i)).collect();
    let sources: Vec<Vec<NodeId>> = (0..n).map(|i| support.sources(i).collect()).collect();
    let softness = cfg.filter.effective_softness();

    let fixed_weights = if cfg.policy.is_adaptive() {
        None
    } else {
        let a = cfg.policy.weights(support, &[], &cfg.qp, world.seed)?;
        Some(FusionWeights::from_matrix(&a, support)?)
    };

    let mut records = Vec::with_capacity(cfg.steps);
    let mut events = Vec::new();
    let mut fusion_log = Vec::new();
    let mut tracker = DivergenceTracker::new(cfg.divergence_cap, n);
    let mut trajectory = Vec::new();
    for t in 0..cfg.steps {
        world.advance_truth(t);
        let z = world.measurements(t);
        let groups: Vec<Vec<GnssMeasurement>> = sources
            .iter()
            .map(|src| src.iter().map(|&j| z[j]).collect())
            .collect();

        let degenerate = filters
            .par_iter_mut()
            .enumerate()
            .map(|(i, f)| world.local_step(f, i, t, &groups[i]))
            .collect::<Result<Vec<bool>>>()?;
        events.extend(
            degenerate
                .iter()
                .enumerate()
                .filter(|(_, &d)| d)
                .map(|(node, _)| Event::DegenerateWeights { t, node }),
        );

        let snapshots: Vec<ParticleSet> = filters.iter().map(|f| f.set.clone()).collect();
        let adaptive;
        let weights = match &fixed_weights {
            Some(w) => w,
            None => {
                let estimates: Vec<CommonError> = snapshots.iter().map(ParticleSet::estimate).collect();
                let a = cfg.policy.weights(support, &estimates, &cfg.qp, world.seed)?;
                adaptive = FusionWeights::from_matrix(&a, support)?;
                &adaptive
            }
        };

        let outcomes = (0..n)
            .into_par_iter()
            .map(|i| {
                let neighbors: BTreeMap<NodeId, &ParticleSet> = sources[i]
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (j, &snapshots[j]))
                    .collect();
                fuse(
                    i,
                    &snapshots[i],
                    &neighbors,
                    weights.row(i),
                    &scenario.map,
                    &groups[i],
                    softness,
                    &mut rng_for(world.seed, Stream::Fusion, i as u64, t as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        for (i, out) in outcomes.into_iter().enumerate() {
            if out.degenerate {
                filters[i].mark_degenerate();
                events.push(Event::DegenerateWeights { t, node: i });
            }
            events.extend(
                out.shortfall
                    .iter()
                    .map(|&source| Event::FusionShortfall { t, node: i, source }),
            );
            if cfg.record_fusion_log {
                fusion_log.extend(out.counts.iter().filter(|c| c.1 > 0).map(|&(source, count)| {
                    FusionLogRow {
                        t,
                        node: i,
                        source,
                        count,
                    }
                }));
            }
            filters[i].set = out.set;
        }

        let estimates: Vec<CommonError> = filters.iter().map(NodeFilter::estimate).collect();
        let record = decompose_error(t, &estimates, world.truth)?;
        record.check_identity()?;
        tracker.check(&record, &mut events);
        records.push(record);
        if cfg.record_estimates {
            trajectory.push((world.truth, estimates));
        }
    }
    Ok(TrialResult {
        trial,
        records,
        events,
        fusion_log,
        trajectory,
    })
}

/// Steady-state summary of one policy in the four-vehicle sweep.
#[derive(Clone, Debug)]
pub struct PolicySummary {
    pub policy: WeightPolicy,
    pub rmse: f64,
    pub sqrt_variance: f64,
}

/// Alpha values of the constant-weight sweep.
pub const TABLE1_ALPHAS: [f64; 9] = [0.05, 0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.95];

/// Variance minimization and the constant-alpha sweep on one scenario,
/// all with the same seeds.
pub fn run_table1_suite(base: &ExperimentConfig, scenario: &Scenario) -> Result<Vec<PolicySummary>> {
    let policies: Vec<WeightPolicy> = std::iter::once(WeightPolicy::VarianceMin)
        .chain(TABLE1_ALPHAS.iter().map(|&a| WeightPolicy::ConstantAlpha(a)))
        .collect();
    policies
        .into_par_iter()
        .map(|policy| {
            let cfg = ExperimentConfig {
                policy: policy.clone(),
                mode: Mode::Decentralized,
                ..base.clone()
            };
            let r = run(&cfg, scenario)?;
            Ok(PolicySummary {
                policy,
                rmse: r.rmse(),
                sqrt_variance: r.sqrt_variance(),
            })
        })
        .collect()
}

/// The three mechanisms compared on each network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mechanism {
    Centralized,
    Optimized,
    Random,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Centralized, Mechanism::Optimized, Mechanism::Random];

    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::Centralized => "centralized",
            Mechanism::Optimized => "decentralized_optimized",
            Mechanism::Random => "decentralized_random",
        }
    }

    fn configure(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let (mode, policy) = match self {
            Mechanism::Centralized => (Mode::Centralized, WeightPolicy::Identity),
            Mechanism::Optimized => (Mode::Decentralized, WeightPolicy::VarianceMin),
            Mechanism::Random => (Mode::Decentralized, WeightPolicy::Random(base.global_seed)),
        };
        ExperimentConfig {
            mode,
            policy,
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetworkInfo {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub connected: bool,
    pub components: usize,
}

#[derive(Clone, Debug)]
pub struct Table2Cell {
    pub mechanism: Mechanism,
    pub network: usize,
    /// Steady-state RMSE of each trial.
    pub per_trial: Vec<f64>,
    pub run: RunResult,
}

impl Table2Cell {
    pub fn rmse(&self) -> f64 {
        mean(self.per_trial.iter().copied())
    }
}

#[derive(Clone, Debug)]
pub struct Table2 {
    pub networks: Vec<NetworkInfo>,
    pub cells: Vec<Table2Cell>,
}

impl Table2 {
    pub fn cell(&self, mechanism: Mechanism, network: usize) -> &Table2Cell {
        self.cells
            .iter()
            .find(|c| c.mechanism == mechanism && c.network == network)
            .expect("every mechanism runs on every network")
    }
}

/// Runs all three mechanisms on each scenario (dense to sparse).
pub fn run_table2_suite(base: &ExperimentConfig, scenarios: &[Scenario]) -> Result<Table2> {
    let networks = scenarios
        .iter()
        .map(|s| NetworkInfo {
            name: s.name.clone(),
            nodes: s.len(),
            edges: s.network.edges().len(),
            connected: s.network.is_connected(),
            components: s.network.components().len(),
        })
        .collect();
    let jobs: Vec<(Mechanism, usize)> = (0..scenarios.len())
        .flat_map(|k| Mechanism::ALL.into_iter().map(move |m| (m, k)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(mechanism, network)| {
            let run = run(&mechanism.configure(base), &scenarios[network])?;
            Ok(Table2Cell {
                mechanism,
                network,
                per_trial: run.trials.iter().map(TrialResult::steady_rmse).collect(),
                run,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table2 { networks, cells })
}

/// Pearson correlation of per-step `rmse^2` and variance.
pub fn mse_variance_correlation(records: &[MetricsRecord]) -> f64 {
    let mse: Vec<f64> = records.iter().map(MetricsRecord::mse).collect();
    let var: Vec<f64> = records.iter().map(|r| r.variance).collect();
    pearson(&mse, &var)
}
