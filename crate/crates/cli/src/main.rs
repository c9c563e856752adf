//! `fogq`: train, evaluate and sweep offloading policies from the command line.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fogq_core::config::OUTPUT_DIR_ENV;
use fogq_core::harness::{
    self, compare_policies, derive_seed, oracle_check, run_episode_with, MetricsReport, Stream, SummaryDocument,
};
use fogq_core::solvers::{train_with, QTable};
use fogq_core::{LearningConfig, Policy, PolicyKind, RunConfig, Scenario, SweepPlan, SweepVariable};

#[derive(Debug, Parser)]
#[command(
    name = "fogq",
    version,
    about = "Fog-network task offloading with tabular Q-learning"
)]
struct Cli {
    /// TOML run configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory. Overrides $FOGQ_OUTPUT_DIR and the config file.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train Q-learning on one scenario and export the table.
    Train(TrainArgs),
    /// Run policies on one scenario and report their metrics.
    Evaluate(EvaluateArgs),
    /// Sweep the arrival or service rate over every policy and seed.
    Sweep(SweepArgs),
    /// Compare Q-learning against value iteration on a tiny instance.
    Oracle(OracleArgs),
    /// Print the fully resolved configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Root seed (placement and training streams derive from it).
    #[arg(long)]
    seed: Option<u64>,
    /// Training iterations; defaults to learning.max_iterations.
    #[arg(long)]
    iterations: Option<u64>,
    /// Also write the per-iteration trace as trace.csv.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Use this exported table instead of training a fresh one.
    #[arg(long, value_name = "PATH")]
    qtable: Option<PathBuf>,
    /// `all` or a comma-separated list of policy names.
    #[arg(long)]
    policies: Option<String>,
    /// Evaluation slots per policy.
    #[arg(long)]
    iterations: Option<u64>,
    /// Training iterations for Q-learning.
    #[arg(long)]
    train_iterations: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    variable: Option<SweepVariable>,
    /// `a..b` (inclusive, step 1) or a comma-separated list.
    #[arg(long)]
    values: Option<String>,
    #[arg(long)]
    policies: Option<String>,
    /// `a..b` or a comma-separated list of root seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    train_iterations: Option<u64>,
    #[arg(long)]
    eval_iterations: Option<u64>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    nodes: usize,
    /// Queue capacity of every node.
    #[arg(long, default_value_t = 2)]
    qmax: u32,
    /// Largest batch size.
    #[arg(long, default_value_t = 2)]
    wmax: u32,
    /// Q-learning iterations per seed.
    #[arg(long, default_value_t = 1_000_000)]
    iterations: u64,
    #[arg(long, default_value = "1..5")]
    seeds: String,
    /// Only states visited at least this often are compared.
    #[arg(long, default_value_t = 1000)]
    min_visits: u64,
    /// Value-iteration stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref()).with_context(|| {
        format!(
            "loading {}",
            cli.config.as_deref().unwrap_or(Path::new("<defaults>")).display()
        )
    })?;
    let out = output_dir(cli.output_dir, &cfg);
    match cli.command {
        Command::Train(args) => train(&cfg, &out, args),
        Command::Evaluate(args) => evaluate(&cfg, &out, args),
        Command::Sweep(args) => sweep(&cfg, &out, args),
        Command::Oracle(args) => oracle(&cfg, &out, args),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
    }
}

/// Flag, then environment, then config file.
fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| {
        std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
    .unwrap_or_else(|| PathBuf::from(&cfg.experiment.output_dir))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn root_seed(flag: Option<u64>, cfg: &RunConfig) -> u64 {
    flag.unwrap_or(cfg.experiment.seeds[0])
}

fn learning_with(cfg: &RunConfig, iterations: Option<u64>) -> Result<LearningConfig> {
    let learning = LearningConfig {
        max_iterations: iterations.unwrap_or(cfg.learning.max_iterations),
        ..cfg.learning.clone()
    };
    learning.validate()?;
    Ok(learning)
}

fn scenario_for(cfg: &RunConfig, seed: u64) -> Result<Scenario> {
    Ok(Scenario::generate(
        &cfg.scenario,
        cfg.reward,
        derive_seed(seed, Stream::Placement),
    )?)
}

fn train(cfg: &RunConfig, out: &Path, args: TrainArgs) -> Result<()> {
    let seed = root_seed(args.seed, cfg);
    let scenario = scenario_for(cfg, seed)?;
    let mdp = scenario.mdp()?;
    let learning = LearningConfig {
        seed: derive_seed(seed, Stream::Training),
        ..learning_with(cfg, args.iterations)?
    };
    let mut trace = if args.trace {
        Some(csv::Writer::from_writer(create(out, "trace.csv")?))
    } else {
        None
    };
    let mut trace_err = None;
    let table = train_with(&mdp, &learning, |r| {
        if let Some(w) = trace.as_mut() {
            if let Err(e) = w.serialize(r) {
                trace_err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = trace_err {
        return Err(e).context("writing trace.csv");
    }
    if let Some(mut w) = trace {
        w.flush()?;
    }
    let mut w = create(out, "qtable.tsv")?;
    table.write_tsv(&mdp, &mut w)?;
    w.flush()?;
    println!(
        "trained {} iterations (seed {seed}): {} states, {} entries -> {}",
        learning.max_iterations,
        table.state_count(),
        table.len(),
        out.join("qtable.tsv").display()
    );
    Ok(())
}

fn parse_policies(spec: Option<&str>, cfg: &RunConfig) -> Result<Vec<PolicyKind>> {
    match spec {
        None => Ok(cfg.experiment.policies.clone()),
        Some("all") => Ok(PolicyKind::STANDARD.to_vec()),
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse().map_err(anyhow::Error::msg))
            .collect(),
    }
}

/// `a..b` expands to every integer in `[a, b]`; otherwise a comma list.
fn parse_values(spec: &str) -> Result<Vec<f64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (i64, i64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range `{spec}`");
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad value `{s}`")))
        .collect()
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range `{spec}`");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

fn write_reports(out: &Path, stem: &str, reports: Vec<MetricsReport>) -> Result<SummaryDocument> {
    let mut w = create(out, &format!("{stem}.csv"))?;
    harness::write_csv(&reports, &mut w)?;
    w.flush()?;
    let doc = SummaryDocument::new(reports);
    let mut w = create(out, &format!("{stem}_summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.flush()?;
    Ok(doc)
}

fn evaluate(cfg: &RunConfig, out: &Path, args: EvaluateArgs) -> Result<()> {
    let seed = root_seed(args.seed, cfg);
    let scenario = scenario_for(cfg, seed)?;
    let mdp = scenario.mdp()?;
    let learning = learning_with(cfg, args.train_iterations)?;
    let policies = parse_policies(args.policies.as_deref(), cfg)?;
    let iterations = args.iterations.unwrap_or(cfg.experiment.eval_iterations);
    let variable = cfg.experiment.sweep_variable;
    let value = match variable {
        SweepVariable::Arrival => cfg.scenario.arrival_rate,
        SweepVariable::Service => cfg.scenario.service_rate,
    };
    let mut reports = Vec::with_capacity(policies.len());
    for kind in policies {
        let policy = match (&args.qtable, kind) {
            (Some(path), PolicyKind::Qlearning) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let table = QTable::read_tsv(&mdp, BufReader::new(file))
                    .with_context(|| format!("reading {}", path.display()))?;
                Policy::QLearning(table)
            }
            _ => harness::build_policy(kind, &mdp, &learning, seed)?,
        };
        let mut report = run_episode_with(&mdp, &policy, iterations, seed, |_| {});
        report.sweep_variable = variable.name().to_string();
        report.sweep_value = value;
        println!(
            "{:<16} reward {:>10.4}  delay {:>10.4}  overload {:>8.5}  dropped {}",
            kind.name(),
            report.avg_reward,
            report.avg_delay,
            report.avg_overload,
            report.drop_count
        );
        reports.push(report);
    }
    write_reports(out, "evaluate", reports)?;
    println!("wrote {}", out.join("evaluate.csv").display());
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &Path, args: SweepArgs) -> Result<()> {
    let mut plan = SweepPlan::from_config(cfg);
    if let Some(v) = args.variable {
        plan.variable = v;
    }
    if let Some(spec) = &args.values {
        plan.values = parse_values(spec)?;
    }
    if let Some(spec) = &args.seeds {
        plan.seeds = parse_seeds(spec)?;
    }
    if let Some(n) = args.eval_iterations {
        plan.eval_iterations = n;
    }
    plan.policies = parse_policies(args.policies.as_deref(), cfg)?;
    plan.learning = learning_with(cfg, args.train_iterations)?;
    eprintln!(
        "sweeping {} over {:?}: {} policies x {} seeds",
        plan.variable,
        plan.values,
        plan.policies.len(),
        plan.seeds.len()
    );
    let reports = harness::sweep(&plan)?;
    let comparisons = compare_policies(&reports).unwrap_or_default();
    let stem = format!("sweep_{}", plan.variable.name());
    let doc = write_reports(out, &stem, reports)?;
    println!(
        "{:>7} {:<16} {:>12} {:>12} {:>10}",
        plan.variable.name(),
        "policy",
        "reward",
        "delay",
        "overload"
    );
    for p in &doc.points {
        println!(
            "{:>7} {:<16} {:>12.4} {:>12.4} {:>10.5}",
            p.sweep_value,
            p.policy.name(),
            p.reward.median,
            p.delay.median,
            p.overload.median
        );
    }
    if !comparisons.is_empty() {
        println!("\nqlearning minus baseline (medians)");
        for c in &comparisons {
            println!(
                "{:>7} vs {:<12} reward {:>+10.4}  delay {:>+10.4}  overload {:>+8.3} pp",
                c.sweep_value,
                c.baseline.name(),
                c.reward_delta,
                c.delay_delta,
                c.overload_delta_pp
            );
        }
    }
    println!("wrote {}", out.join(format!("{stem}.csv")).display());
    Ok(())
}

fn oracle(cfg: &RunConfig, out: &Path, args: OracleArgs) -> Result<()> {
    let mut scenario_cfg = cfg.scenario.clone();
    scenario_cfg.nodes = args.nodes;
    scenario_cfg.queue_capacity = args.qmax;
    scenario_cfg.max_batch = args.wmax;
    if scenario_cfg.arrival_rates.is_some() || scenario_cfg.service_rates.is_some() {
        bail!("oracle uses homogeneous rates; remove scenario.arrival_rates/service_rates");
    }
    let learning = learning_with(cfg, Some(args.iterations))?;
    let mut results = Vec::new();
    for seed in parse_seeds(&args.seeds)? {
        let scenario = Scenario::generate(&scenario_cfg, cfg.reward, derive_seed(seed, Stream::Placement))?;
        let r = oracle_check(&scenario, &learning, seed, args.tolerance, args.min_visits)?;
        println!(
            "seed {:>3}: {} states, {} sweeps, residual {:.3e}, agreement {:.2}% on {} states",
            r.seed,
            r.states,
            r.sweeps,
            r.bellman_residual,
            100.0 * r.agreement,
            r.checked_states
        );
        results.push(r);
    }
    let max_residual = results.iter().map(|r| r.bellman_residual).fold(0.0, f64::max);
    let agreement = harness::median(&results.iter().map(|r| r.agreement).collect::<Vec<_>>());
    println!("max Bellman residual: {max_residual:.3e}");
    println!("policy agreement (median over seeds): {:.2}%", 100.0 * agreement);
    let mut w = create(out, "oracle.json")?;
    serde_json::to_writer_pretty(&mut w, &results)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_values("1..4").unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(parse_values("1.5, 3").unwrap(), vec![1.5, 3.0]);
        assert!(parse_values("4..1").is_err());
        assert_eq!(parse_seeds("3..5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("9,2").unwrap(), vec![9, 2]);
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn policy_lists() {
        let cfg = RunConfig::default();
        assert_eq!(
            parse_policies(Some("all"), &cfg).unwrap(),
            PolicyKind::STANDARD.to_vec()
        );
        assert_eq!(
            parse_policies(Some("nearest,value-iteration"), &cfg).unwrap(),
            vec![PolicyKind::Nearest, PolicyKind::ValueIteration]
        );
        assert!(parse_policies(Some("greedy"), &cfg).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
