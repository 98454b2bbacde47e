//! Experiment driver: baselines, DDPG training and evaluation.

mod report;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError, Ddpg, ReplayBuffer, Transition};
use crate::case::Network;
use crate::env::{Action, CascadeEnv, EnvConfig, EnvError};

pub use report::{
    read_summary, write_summary, EpisodeRow, RunReport, SummaryRow, DEFAULT_MA_WINDOW,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report: {0}")]
    Parse(String),
}

impl HarnessError {
    /// 2 for configuration problems, 3 for numerical aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Env(EnvError::Config(_))
            | HarnessError::Env(EnvError::ActionLength { .. })
            | HarnessError::Agent(AgentError::Config(_))
            | HarnessError::Agent(AgentError::Dimension { .. })
            | HarnessError::Agent(AgentError::Checkpoint(_)) => 2,
            HarnessError::Env(EnvError::BaseCaseDiverged)
            | HarnessError::Env(EnvError::PowerFlow(_))
            | HarnessError::Agent(AgentError::NonFinite { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        })
    }
}

/// Evaluation episodes draw their outages from a block of the attack stream
/// that training never touches.
const EVAL_SEED_OFFSET: u64 = 1 << 40;

impl Phase {
    pub fn episode_seed(self, episode: usize) -> u64 {
        match self {
            Phase::Train => episode as u64,
            Phase::Eval => EVAL_SEED_OFFSET + episode as u64,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The three named seeds every run draws from, derived from one master.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub master: u64,
    /// Line outage draws; replaces the environment config's `attack_seed`.
    pub attack: u64,
    /// Network initialization.
    pub init: u64,
    /// Exploration noise, replay sampling and random-dispatch actions.
    pub explore: u64,
}

impl SeedStreams {
    pub fn from_master(master: u64) -> Self {
        SeedStreams {
            master,
            attack: splitmix64(master ^ 0xa77a_c4),
            init: splitmix64(master ^ 0x1417),
            explore: splitmix64(master ^ 0xe4b1_04e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Each coefficient uniform in `[0, 1]`, redrawn every stage.
    Random,
    /// Every coefficient 1.
    Max,
    /// Every coefficient 0.5.
    Half,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Random, Baseline::Max, Baseline::Half];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Max => "max",
            Baseline::Half => "half",
        }
    }

    pub fn parse(s: &str) -> Option<Baseline> {
        Baseline::ALL.into_iter().find(|b| b.name() == s)
    }

    fn action(self, m: usize, rng: &mut ChaCha8Rng) -> Action {
        match self {
            Baseline::Random => Action::new((0..m).map(|_| rng.random::<f64>()).collect()),
            Baseline::Max => Action::uniform(m, 1.0),
            Baseline::Half => Action::uniform(m, 0.5),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    Baseline(Baseline),
    /// Noise-free actor of a trained agent.
    Ddpg(Arc<Ddpg>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Baseline(b) => b.name(),
            Policy::Ddpg(_) => "ddpg",
        }
    }
}

/// Environment prepared for a run: the attack stream comes from `seeds`.
pub fn make_env(
    net: &Arc<Network>,
    env_cfg: &EnvConfig,
    seeds: &SeedStreams,
) -> Result<CascadeEnv, HarnessError> {
    let cfg = EnvConfig {
        attack_seed: seeds.attack,
        ..env_cfg.clone()
    };
    Ok(CascadeEnv::new(Arc::clone(net), cfg)?)
}

fn policy_rng(seeds: &SeedStreams, episode_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.explore ^ 0xba5e_11e);
    rng.set_stream(episode_seed);
    rng
}

/// Plays one episode with a fixed policy.
pub fn run_episode(
    env: &mut CascadeEnv,
    policy: &Policy,
    episode: usize,
    phase: Phase,
    seeds: &SeedStreams,
) -> Result<EpisodeRow, HarnessError> {
    let seed = phase.episode_seed(episode);
    let mut obs = env.reset(seed)?;
    let mut rng = policy_rng(seeds, seed);
    let m = env.action_len();
    let mut total = 0.0;
    let mut stages = 0;
    loop {
        let action = match policy {
            Policy::Baseline(b) => b.action(m, &mut rng),
            Policy::Ddpg(agent) => agent.greedy(obs.as_slice())?,
        };
        let out = env.step(&action)?;
        total += out.reward;
        stages += 1;
        obs = out.observation;
        if out.done {
            return Ok(EpisodeRow {
                episode,
                seed,
                verdict: out.verdict,
                total_reward: total,
                stages,
            });
        }
    }
}

/// Runs `episodes` independent episodes in parallel; rows come back in
/// episode order.
pub fn run_policy(
    policy: &Policy,
    env_cfg: &EnvConfig,
    net: &Arc<Network>,
    episodes: usize,
    seeds: &SeedStreams,
    phase: Phase,
) -> Result<RunReport, HarnessError> {
    let env = make_env(net, env_cfg, seeds)?;
    let rows = (0..episodes)
        .into_par_iter()
        .map_init(
            || env.clone(),
            |env, i| run_episode(env, policy, i, phase, seeds),
        )
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = RunReport::new(policy.name(), net.name(), phase, *seeds);
    report.rows = rows;
    Ok(report)
}

/// Baseline over the evaluation block of the attack stream.
pub fn run_baseline(
    baseline: Baseline,
    env_cfg: &EnvConfig,
    net: &Arc<Network>,
    episodes: usize,
    seeds: &SeedStreams,
) -> Result<RunReport, HarnessError> {
    run_policy(
        &Policy::Baseline(baseline),
        env_cfg,
        net,
        episodes,
        seeds,
        Phase::Eval,
    )
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Ddpg,
    pub report: RunReport,
    pub transitions: usize,
}

/// Interacts with the environment, feeding every transition into the replay
/// buffer and taking `updates_per_step` gradient steps after each stage once
/// the warmup episodes are over.
fn interact(
    agent: &mut Ddpg,
    env: &mut CascadeEnv,
    buffer: &mut ReplayBuffer,
    episode: usize,
    phase: Phase,
    explore: Option<f64>,
    learn: bool,
) -> Result<EpisodeRow, HarnessError> {
    let seed = phase.episode_seed(episode);
    let mut obs = env.reset(seed)?.into_vec();
    if learn {
        agent.observe(&obs)?;
    }
    let warmup = learn && phase == Phase::Train && episode < agent.config().warmup_episodes;
    let mut total = 0.0;
    let mut stages = 0;
    loop {
        let action = if warmup {
            agent.random_action()
        } else {
            agent.act(&obs, explore.unwrap_or(0.0))?
        };
        let out = env.step(&action)?;
        total += out.reward;
        stages += 1;
        let next = out.observation.into_vec();
        if learn {
            agent.observe(&next)?;
            buffer.push(Transition {
                s: obs,
                a: action.coeffs().to_vec(),
                r: out.reward,
                s_next: next.clone(),
                done: out.done,
            });
            if !warmup {
                for _ in 0..agent.config().updates_per_step {
                    agent.train_step(buffer)?;
                }
            }
        }
        obs = next;
        if out.done {
            return Ok(EpisodeRow {
                episode,
                seed,
                verdict: out.verdict,
                total_reward: total,
                stages,
            });
        }
    }
}

/// Trains a fresh agent for `episodes` episodes. `progress` sees each row as
/// it completes.
pub fn train(
    env_cfg: &EnvConfig,
    agent_cfg: &AgentConfig,
    net: &Arc<Network>,
    episodes: usize,
    seeds: &SeedStreams,
    mut progress: impl FnMut(&EpisodeRow),
) -> Result<TrainOutcome, HarnessError> {
    let mut env = make_env(net, env_cfg, seeds)?;
    let mut agent = Ddpg::new(
        agent_cfg.clone(),
        env.observation_len(),
        env.action_len(),
        seeds.init,
        seeds.explore,
    )?;
    let mut buffer = ReplayBuffer::new(
        agent_cfg.replay_capacity,
        env.observation_len(),
        env.action_len(),
    );
    let mut report = RunReport::new("ddpg", net.name(), Phase::Train, *seeds);
    let mut transitions = 0;
    for ep in 0..episodes {
        let sigma = agent_cfg.noise_scale(ep, episodes);
        let row = interact(
            &mut agent,
            &mut env,
            &mut buffer,
            ep,
            Phase::Train,
            Some(sigma),
            true,
        )?;
        transitions += row.stages;
        progress(&row);
        report.rows.push(row);
    }
    Ok(TrainOutcome {
        agent,
        report,
        transitions,
    })
}

/// Frozen-policy evaluation over the evaluation block of the attack stream.
pub fn evaluate(
    agent: &Ddpg,
    env_cfg: &EnvConfig,
    net: &Arc<Network>,
    episodes: usize,
    seeds: &SeedStreams,
) -> Result<RunReport, HarnessError> {
    check_agent_fits(agent, net)?;
    run_policy(
        &Policy::Ddpg(Arc::new(agent.clone())),
        env_cfg,
        net,
        episodes,
        seeds,
        Phase::Eval,
    )
}

/// Evaluation that keeps learning: the agent acts with the final exploration
/// noise and trains after every stage. Sequential.
pub fn evaluate_online(
    mut agent: Ddpg,
    env_cfg: &EnvConfig,
    net: &Arc<Network>,
    episodes: usize,
    seeds: &SeedStreams,
) -> Result<(RunReport, Ddpg), HarnessError> {
    check_agent_fits(&agent, net)?;
    let mut env = make_env(net, env_cfg, seeds)?;
    let mut buffer = ReplayBuffer::new(
        agent.config().replay_capacity,
        env.observation_len(),
        env.action_len(),
    );
    let sigma = agent.config().noise_end;
    let mut report = RunReport::new("ddpg-online", net.name(), Phase::Eval, *seeds);
    for ep in 0..episodes {
        let row = interact(
            &mut agent,
            &mut env,
            &mut buffer,
            ep,
            Phase::Eval,
            Some(sigma),
            true,
        )?;
        report.rows.push(row);
    }
    Ok((report, agent))
}

fn check_agent_fits(agent: &Ddpg, net: &Network) -> Result<(), HarnessError> {
    let obs_len = net.n_branches() + 4 * net.n_buses();
    if agent.obs_len() != obs_len {
        return Err(AgentError::Dimension {
            what: "checkpoint observation",
            got: agent.obs_len(),
            expected: obs_len,
        }
        .into());
    }
    if agent.act_len() != net.n_generators() {
        return Err(AgentError::Dimension {
            what: "checkpoint action",
            got: agent.act_len(),
            expected: net.n_generators(),
        }
        .into());
    }
    Ok(())
}

/// Win rates of the trained agent and the three baselines on one seed.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub training: RunReport,
    pub ddpg: RunReport,
    pub baselines: Vec<RunReport>,
}

impl Comparison {
    pub fn baseline(&self, b: Baseline) -> &RunReport {
        self.baselines
            .iter()
            .find(|r| r.policy == b.name())
            .expect("every baseline is run")
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = vec![SummaryRow::of(&self.training), SummaryRow::of(&self.ddpg)];
        rows.extend(self.baselines.iter().map(SummaryRow::of));
        rows
    }
}

/// Train, evaluate frozen, and run every baseline on the same evaluation
/// attack stream.
pub fn compare(
    env_cfg: &EnvConfig,
    agent_cfg: &AgentConfig,
    net: &Arc<Network>,
    train_episodes: usize,
    eval_episodes: usize,
    seeds: &SeedStreams,
) -> Result<Comparison, HarnessError> {
    let trained = train(env_cfg, agent_cfg, net, train_episodes, seeds, |_| {})?;
    let ddpg = evaluate(&trained.agent, env_cfg, net, eval_episodes, seeds)?;
    let baselines = Baseline::ALL
        .into_iter()
        .map(|b| run_baseline(b, env_cfg, net, eval_episodes, seeds))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison {
        training: trained.report,
        ddpg,
        baselines,
    })
}

#[cfg(test)]
mod tests;
