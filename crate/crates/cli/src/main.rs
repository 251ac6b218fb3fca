use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cmm_core::consensus::{asymptotic_convergence_rate, QpConfig, QpMode, WeightPolicy};
use cmm_core::experiment::{self, ExperimentConfig, Mechanism, Mode};
use cmm_core::output;
use cmm_core::roadmap::RoadMap;
use cmm_core::scenario::{self, Scenario};

#[derive(Parser)]
#[command(name = "cmm-sim", version, about = "Cooperative map matching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario with one fusion policy.
    Run(RunArgs),
    /// Four-vehicle comparison of variance minimization against constant weights.
    Table1(SuiteArgs),
    /// Centralized vs optimized vs random fusion on the three city networks.
    Table2(SuiteArgs),
    /// Print the convergence rate, diameter and degree histogram of a network.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Particles per filter.
    #[arg(long, default_value_t = 500)]
    particles: usize,
    /// Per-step random-walk std of the particle prediction, meters.
    #[arg(long, default_value_t = 0.2)]
    diffusion: f64,
    /// GNSS noise std per axis, meters.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Road-corridor edge softness, meters.
    #[arg(long, default_value_t = 0.5)]
    softness: f64,
    /// Lower bound on each node's self weight.
    #[arg(long, default_value_t = 0.05)]
    qp_floor: f64,
    #[arg(long, default_value_t = 5000)]
    qp_iters: usize,
    /// Solve the weights per node with the network mean from K consensus
    /// rounds (default twice the diameter).
    #[arg(long, value_name = "K", num_args = 0..=1)]
    qp_distributed: Option<Option<usize>>,
}

impl Common {
    fn config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            steps: self.steps,
            trials: self.trials,
            global_seed: self.seed,
            ..ExperimentConfig::default()
        };
        cfg.filter.particles = self.particles;
        cfg.filter.diffusion_sigma = self.diffusion;
        cfg.filter.noise_sigma = self.noise;
        cfg.filter.softness = self.softness;
        cfg.qp = QpConfig {
            floor: self.qp_floor,
            max_iters: self.qp_iters,
            mode: match self.qp_distributed {
                None => QpMode::Central,
                Some(rounds) => QpMode::Distributed { rounds },
            },
            ..QpConfig::default()
        };
        cfg
    }
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name or scenario file.
    #[arg(long)]
    scenario: String,
    /// Replace the scenario's road map.
    #[arg(long)]
    map: Option<PathBuf>,
    /// variance_min | max_degree | constant:<alpha> | random:<seed> | identity
    #[arg(long, default_value = "variance_min")]
    policy: WeightPolicy,
    /// centralized | decentralized
    #[arg(long, default_value = "decentralized")]
    mode: Mode,
    /// Also write who-took-how-many-particles-from-whom.
    #[arg(long)]
    fusion_log: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, default_value = "max_degree")]
    weights: WeightPolicy,
    /// Built-in scenario name or scenario file.
    #[arg(long)]
    net: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Table1(args) => table1(args),
        Command::Table2(args) => table2(args),
        Command::Analyze(args) => analyze(args),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut scenario = Scenario::resolve(&args.scenario).context("loading scenario")?;
    if let Some(path) = &args.map {
        scenario.map = RoadMap::load(path).context("loading map")?;
    }
    let mut cfg = args.common.config();
    cfg.policy = args.policy;
    cfg.mode = args.mode;
    cfg.record_fusion_log = args.fusion_log;
    let result = experiment::run(&cfg, &scenario)?;
    output::write_run(&args.out, &result)?;
    println!(
        "{} {} {}: steady rmse {:.4}, sqrt variance {:.4}",
        scenario.name,
        cfg.mode,
        cfg.policy,
        result.rmse(),
        result.sqrt_variance()
    );
    Ok(())
}

fn table1(args: SuiteArgs) -> anyhow::Result<()> {
    let cfg = args.common.config();
    let rows = experiment::run_table1_suite(&cfg, &scenario::four_vehicle())?;
    let mut text = String::from("policy,rmse,sqrt_variance\n");
    for r in &rows {
        text.push_str(&format!("{},{},{}\n", r.policy, r.rmse, r.sqrt_variance));
        println!("{:<16} rmse {:.4}  sqrt variance {:.4}", r.policy.to_string(), r.rmse, r.sqrt_variance);
    }
    output::write(&args.out.join("table1.csv"), &text)?;
    Ok(())
}

fn table2(args: SuiteArgs) -> anyhow::Result<()> {
    let cfg = args.common.config();
    let scenarios = ["grid_city", "grid_city_75", "grid_city_50"]
        .iter()
        .map(|n| Scenario::builtin(n))
        .collect::<Result<Vec<_>, _>>()?;
    let table = experiment::run_table2_suite(&cfg, &scenarios)?;
    output::write(&args.out.join("table2.csv"), &output::table2_to_csv(&table))?;
    for (k, net) in table.networks.iter().enumerate() {
        println!(
            "{} ({} nodes, {} edges, {} component(s))",
            net.name, net.nodes, net.edges, net.components
        );
        for m in Mechanism::ALL {
            let cell = table.cell(m, k);
            println!("  {:<24} rmse {:.4}", m.label(), cell.rmse());
            output::write_run(&args.out.join(&net.name).join(m.label()), &cell.run)?;
        }
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let scenario = Scenario::resolve(&args.net).context("loading network")?;
    if args.weights.is_adaptive() {
        bail!("`{}` depends on live estimates; pick a fixed policy", args.weights);
    }
    let a = args
        .weights
        .weights(&scenario.support, &[], &QpConfig::default(), args.seed)?;
    let rate = asymptotic_convergence_rate(&a);
    println!("nodes {}", scenario.len());
    println!("edges {}", scenario.network.edges().len());
    if rate.disconnected {
        println!("convergence_rate 1 (disconnected)");
    } else {
        println!("convergence_rate {}", rate.rate);
    }
    match scenario.network.diameter() {
        Some(d) => println!("diameter {d}"),
        None => println!("diameter inf ({} components)", scenario.network.components().len()),
    }
    let hist = scenario.network.degree_histogram();
    let cells: Vec<String> = hist
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(d, c)| format!("{d}:{c}"))
        .collect();
    println!("degree_histogram {}", cells.join(" "));
    Ok(())
}
