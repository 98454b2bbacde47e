use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridcascade_core::acpf::{self, PfError};
use gridcascade_core::agent::{AgentConfig, AgentError, Checkpoint, Ddpg};
use gridcascade_core::case::{self, fixtures, CaseError, Network, ServiceMask};
use gridcascade_core::env::{EnvConfig, EnvError};
use gridcascade_core::harness::{
    self, write_summary, Baseline, HarnessError, RunReport, SeedStreams, SummaryRow,
};
use gridcascade_core::topology::detect_islands;

#[derive(Parser)]
#[command(
    name = "gridcascade",
    version,
    about = "Cascading failure experiments on AC grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a DDPG agent and write its checkpoint and training report.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Run a fixed dispatch baseline.
    Baseline(BaselineArgs),
    /// Train, evaluate and run all baselines under one seed.
    Compare(CompareArgs),
    /// Solve the base-case power flow of a case.
    Powerflow(PowerflowArgs),
    /// Show the islands left after taking lines out of service.
    Islands(IslandsArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Case file; defaults to the bundled case of the preset.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Environment preset.
    #[arg(long, default_value = "ieee14", value_parser = ["ieee14", "ieee118"])]
    env_preset: String,
    /// Environment config file (`key = value` lines), replaces the preset.
    #[arg(long)]
    env_config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 300)]
    episodes: usize,
    /// Print one line per episode.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Keep training during evaluation.
    #[arg(long)]
    online: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = ["random", "max", "half"])]
    policy: String,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 300)]
    train_episodes: usize,
    #[arg(long, default_value_t = 1000)]
    eval_episodes: usize,
}

#[derive(Args)]
struct PowerflowArgs {
    /// Case file, or `ieee14` / `ieee118` for a bundled case.
    case: String,
    /// Start from 1∠0 instead of the case voltages.
    #[arg(long)]
    flat_start: bool,
    /// Mismatch tolerance, p.u.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    /// Do not convert PV buses at reactive limits.
    #[arg(long)]
    no_q_limits: bool,
}

#[derive(Args)]
struct IslandsArgs {
    /// Case file, or `ieee14` / `ieee118` for a bundled case.
    case: String,
    /// Lines to remove as `from-to` bus id pairs, comma separated.
    #[arg(long, value_delimiter = ',')]
    out_lines: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for configuration problems, 3 for numerical aborts, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return e.exit_code() as u8;
        }
        if let Some(e) = cause.downcast_ref::<EnvError>() {
            return match e {
                EnvError::Config(_) | EnvError::ActionLength { .. } => 2,
                EnvError::BaseCaseDiverged | EnvError::PowerFlow(_) => 3,
                EnvError::EpisodeFinished => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<AgentError>() {
            return match e {
                AgentError::NonFinite { .. } => 3,
                AgentError::Checkpoint(_)
                | AgentError::Config(_)
                | AgentError::Dimension { .. } => 2,
            };
        }
        if cause.downcast_ref::<CaseError>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<PfError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
    }
    1
}

/// Bad command-line input that clap cannot catch.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
        Command::Compare(a) => compare(a),
        Command::Powerflow(a) => powerflow(a),
        Command::Islands(a) => islands(a),
    }
}

fn load_network(spec: &str) -> Result<Network> {
    match spec {
        "ieee14" => Ok(fixtures::ieee14()),
        "ieee118" => Ok(fixtures::ieee118()),
        path => case::load_case(path).with_context(|| format!("loading case {path}")),
    }
}

fn load_grid(g: &GridArgs) -> Result<(Arc<Network>, EnvConfig, String)> {
    let net = match &g.case {
        Some(path) => load_network(&path.to_string_lossy())?,
        None => load_network(&g.env_preset)?,
    };
    let cfg = match &g.env_config {
        Some(path) => EnvConfig::load(path)?,
        None => EnvConfig::preset(&g.env_preset)?,
    };
    let name = if net.name().is_empty() {
        g.env_preset.clone()
    } else {
        net.name().to_string()
    };
    Ok((Arc::new(net), cfg, name))
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_report_files(dir: &Path, report: &RunReport) -> Result<()> {
    report.write_report(BufWriter::new(File::create(dir.join("report.csv"))?))?;
    report.write_moving_average(BufWriter::new(File::create(dir.join("ma_reward.csv"))?))?;
    Ok(())
}

fn write_summary_file(dir: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_summary(BufWriter::new(File::create(dir.join("summary.csv"))?), rows)?;
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<8} {:<6} {:>8} {:>6} {:>9} {:>12}",
        "policy", "phase", "episodes", "wins", "win_rate", "mean_reward"
    );
    for r in rows {
        println!(
            "{:<8} {:<6} {:>8} {:>6} {:>8.1}% {:>12.1}",
            r.policy,
            r.phase,
            r.episodes,
            r.wins,
            100.0 * r.win_rate,
            r.mean_reward
        );
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let (net, env_cfg, name) = load_grid(&a.run.grid)?;
    let agent_cfg = AgentConfig::for_grid(net.n_buses());
    let seeds = SeedStreams::from_master(a.run.seed);
    create_out(&a.run.out)?;
    let verbose = a.verbose;
    let mut outcome = harness::train(&env_cfg, &agent_cfg, &net, a.episodes, &seeds, |row| {
        if verbose {
            println!(
                "episode {:>4}  {:<5} reward {:>10.1}  stages {}",
                row.episode,
                row.verdict.to_string(),
                row.total_reward,
                row.stages
            );
        }
    })?;
    outcome.report.case = name;
    outcome
        .agent
        .checkpoint()
        .save(a.run.out.join("checkpoint.json"))?;
    write_report_files(&a.run.out, &outcome.report)?;
    let rows = [SummaryRow::of(&outcome.report)];
    write_summary_file(&a.run.out, &rows)?;
    print_summary(&rows);
    println!(
        "{} transitions, outputs in {}",
        outcome.transitions,
        a.run.out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (net, env_cfg, name) = load_grid(&a.run.grid)?;
    let agent = Ddpg::from_checkpoint(Checkpoint::load(&a.checkpoint)?)?;
    let seeds = SeedStreams::from_master(a.run.seed);
    create_out(&a.run.out)?;
    let mut report = if a.online {
        let (report, agent) = harness::evaluate_online(agent, &env_cfg, &net, a.episodes, &seeds)?;
        agent
            .checkpoint()
            .save(a.run.out.join("checkpoint_online.json"))?;
        report
    } else {
        harness::evaluate(&agent, &env_cfg, &net, a.episodes, &seeds)?
    };
    report.case = name;
    write_report_files(&a.run.out, &report)?;
    let rows = [SummaryRow::of(&report)];
    write_summary_file(&a.run.out, &rows)?;
    print_summary(&rows);
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let policy = Baseline::parse(&a.policy)
        .ok_or_else(|| ConfigError(format!("unknown policy `{}`", a.policy)))?;
    let (net, env_cfg, name) = load_grid(&a.run.grid)?;
    let seeds = SeedStreams::from_master(a.run.seed);
    create_out(&a.run.out)?;
    let mut report = harness::run_baseline(policy, &env_cfg, &net, a.episodes, &seeds)?;
    report.case = name;
    write_report_files(&a.run.out, &report)?;
    let rows = [SummaryRow::of(&report)];
    write_summary_file(&a.run.out, &rows)?;
    print_summary(&rows);
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let (net, env_cfg, name) = load_grid(&a.run.grid)?;
    let agent_cfg = AgentConfig::for_grid(net.n_buses());
    let seeds = SeedStreams::from_master(a.run.seed);
    create_out(&a.run.out)?;
    let mut c = harness::compare(
        &env_cfg,
        &agent_cfg,
        &net,
        a.train_episodes,
        a.eval_episodes,
        &seeds,
    )?;
    c.training.case.clone_from(&name);
    c.ddpg.case.clone_from(&name);
    for r in &mut c.baselines {
        r.case.clone_from(&name);
    }
    let save = |sub: &str, report: &RunReport| -> Result<()> {
        let dir = a.run.out.join(sub);
        create_out(&dir)?;
        write_report_files(&dir, report)
    };
    save("train", &c.training)?;
    save("ddpg", &c.ddpg)?;
    for r in &c.baselines {
        save(&r.policy, r)?;
    }
    let rows = c.summary();
    write_summary_file(&a.run.out, &rows)?;
    print_summary(&rows);
    Ok(())
}

fn powerflow(a: PowerflowArgs) -> Result<()> {
    let net = load_network(&a.case)?;
    if !(a.tol > 0.0) {
        bail!(ConfigError(format!(
            "--tol must be positive, got {}",
            a.tol
        )));
    }
    let opts = acpf::PfOptions {
        tol_mismatch: a.tol,
        max_iter: a.max_iter,
        flat_start: a.flat_start,
        enforce_q_limits: !a.no_q_limits,
    };
    let sol = acpf::solve_base_case(&net, &opts)?;
    if !sol.converged {
        bail!(PfError::NotConverged);
    }
    println!("converged in {} iterations", sol.iterations);
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>10}",
        "bus", "vm_pu", "va_deg", "p_mw", "q_mvar"
    );
    for (l, &b) in sol.buses.iter().enumerate() {
        println!(
            "{:>5} {:>10.6} {:>10.4} {:>10.3} {:>10.3}",
            net.buses()[b].id,
            sol.v_mag[l],
            sol.v_ang[l].to_degrees(),
            sol.p_inj[l],
            sol.q_inj[l]
        );
    }
    println!(
        "slack output {:.3} MW, max branch flow {:.3} MVA",
        sol.slack_p,
        sol.max_flow()
    );
    Ok(())
}

fn islands(a: IslandsArgs) -> Result<()> {
    let net = load_network(&a.case)?;
    let mut mask = ServiceMask::from_network(&net);
    for spec in &a.out_lines {
        let parse = || -> Option<(u32, u32)> {
            let (f, t) = spec.trim().split_once('-')?;
            Some((f.trim().parse().ok()?, t.trim().parse().ok()?))
        };
        let (f, t) = parse()
            .ok_or_else(|| ConfigError(format!("line `{spec}` is not of the form FROM-TO")))?;
        let k = net
            .find_branch(f, t)
            .ok_or_else(|| ConfigError(format!("no line between buses {f} and {t}")))?;
        mask.branches[k] = false;
    }
    let part = detect_islands(&net, &mask);
    println!("{} island(s)", part.islands.len());
    for (i, island) in part.islands.iter().enumerate() {
        let ids: Vec<String> = island
            .iter()
            .map(|&b| net.buses()[b].id.to_string())
            .collect();
        println!("island {i}: {}", ids.join(" "));
    }
    Ok(())
}
