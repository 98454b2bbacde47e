//! The multi-stage cascading failure environment.
//!
//! One episode is a run of up to `stage_max` stages. Each stage the agent
//! sets dispatch coefficients, one in-service line is knocked out, and the
//! grid cascades: islands are re-solved and every overloaded line trips
//! until the flows settle. Islands that fail the availability assessment
//! are de-energized for the rest of the episode.

mod config;
mod reward;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acpf::{self, PfError, PfProblem, PfSolution};
use crate::case::{Network, ServiceMask};
use crate::topology::{self, IslandAssessment, IslandPartition};

pub use config::{AttackOrder, EnvConfig, IEEE118_PRESET, IEEE14_PRESET};
pub use reward::{compute_reward, RewardBreakdown, RewardInputs};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("episode is finished; call reset")]
    EpisodeFinished,
    #[error("action has {got} coefficients, grid has {expected} generators")]
    ActionLength { got: usize, expected: usize },
    #[error("base case power flow did not converge")]
    BaseCaseDiverged,
    #[error(transparent)]
    PowerFlow(#[from] PfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ongoing,
    Win,
    Lose,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Ongoing => "ongoing",
            Verdict::Win => "win",
            Verdict::Lose => "lose",
        })
    }
}

/// `[line_status..., (P, Q, V, θ) per bus...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
    n_branches: usize,
}

impl Observation {
    pub fn zeros(n_branches: usize, n_buses: usize) -> Self {
        Observation {
            values: vec![0.0; n_branches + 4 * n_buses],
            n_branches,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn line_status(&self) -> &[f64] {
        &self.values[..self.n_branches]
    }

    /// (P MW, Q MVAr, |V| p.u., θ rad) of bus position `b`.
    pub fn bus(&self, b: usize) -> [f64; 4] {
        let o = self.n_branches + 4 * b;
        [
            self.values[o],
            self.values[o + 1],
            self.values[o + 2],
            self.values[o + 3],
        ]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Generation coefficients, one per generator, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action(Vec<f64>);

impl Action {
    /// Clamps every coefficient into `[0, 1]`; NaN maps to 0.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Action(
            coeffs
                .into_iter()
                .map(|a| if a.is_nan() { 0.0 } else { a.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn uniform(m: usize, value: f64) -> Self {
        Action::new(vec![value; m])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub stage: usize,
    pub attacked: Option<usize>,
    /// Branches tripped on overload during this stage's cascade.
    pub tripped: Vec<usize>,
    /// Energized islands this stage, before unavailable ones are dropped.
    pub islands: usize,
    pub available_islands: usize,
    pub converged_islands: usize,
    pub p_loss: f64,
    pub p_available: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub verdict: Verdict,
    pub info: StepInfo,
}

/// Final solve state of one stage, kept for observation.
#[derive(Debug, Clone)]
struct Snapshot {
    partition: IslandPartition,
    solutions: Vec<Option<PfSolution>>,
    available: Vec<bool>,
}

#[derive(Clone)]
pub struct CascadeEnv {
    net: Arc<Network>,
    cfg: EnvConfig,
    mask: ServiceMask,
    energized: Vec<bool>,
    dispatch: Vec<f64>,
    stage: usize,
    done: bool,
    p_total: f64,
    rng: ChaCha8Rng,
    pending_attack: Option<usize>,
    snapshot: Option<Snapshot>,
}

impl CascadeEnv {
    pub fn new(net: Arc<Network>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let mask = ServiceMask::from_network(&net);
        let n = net.n_buses();
        let dispatch = net.generators().iter().map(|g| g.p_gen).collect();
        let p_total = net.total_load();
        if !(p_total > 0.0) {
            return Err(EnvError::Config("grid carries no load".into()));
        }
        Ok(CascadeEnv {
            rng: ChaCha8Rng::seed_from_u64(cfg.attack_seed),
            net,
            cfg,
            mask,
            energized: vec![true; n],
            dispatch,
            stage: 0,
            done: true,
            p_total,
            pending_attack: None,
            snapshot: None,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn observation_len(&self) -> usize {
        self.net.n_branches() + 4 * self.net.n_buses()
    }

    pub fn action_len(&self) -> usize {
        self.net.n_generators()
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Original total load of the grid, MW.
    pub fn p_total(&self) -> f64 {
        self.p_total
    }

    pub fn mask(&self) -> &ServiceMask {
        &self.mask
    }

    /// MW set-points currently applied (slack entries hold the solved output
    /// after a stage).
    pub fn dispatch(&self) -> &[f64] {
        &self.dispatch
    }

    /// Restores the full grid, solves the base case and starts a new episode
    /// whose outage sequence is drawn from `episode_seed`.
    pub fn reset(&mut self, episode_seed: u64) -> Result<Observation, EnvError> {
        self.mask = ServiceMask::from_network(&self.net);
        self.energized.fill(true);
        self.dispatch = self.net.generators().iter().map(|g| g.p_gen).collect();
        self.stage = 0;
        self.done = false;
        self.pending_attack = None;
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.attack_seed);
        self.rng.set_stream(episode_seed);

        let snap = self.solve_all()?;
        if snap
            .solutions
            .iter()
            .any(|s| !s.as_ref().is_some_and(|s| s.converged))
        {
            return Err(EnvError::BaseCaseDiverged);
        }
        self.snapshot = Some(snap);
        if self.cfg.attack_order == AttackOrder::AttackThenAct {
            self.pre_attack()?;
        }
        Ok(self.observe())
    }

    /// Runs one stage.
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let m = self.net.n_generators();
        if action.len() != m {
            return Err(EnvError::ActionLength {
                got: action.len(),
                expected: m,
            });
        }
        for (g, gen) in self.net.generators().iter().enumerate() {
            self.dispatch[g] = action.coeffs()[g] * gen.p_max;
        }

        let attacked = match self.cfg.attack_order {
            AttackOrder::ActThenAttack => {
                let a = self.draw_attack();
                if let Some(k) = a {
                    self.mask.branches[k] = false;
                }
                a
            }
            AttackOrder::AttackThenAct => self.pending_attack.take(),
        };

        // Overload cascade. Each pass trips at least one line or exits.
        let mut tripped = Vec::new();
        let snap = loop {
            let snap = self.solve_all()?;
            let mut over = Vec::new();
            for sol in snap.solutions.iter().flatten().filter(|s| s.converged) {
                for f in &sol.branch_flows {
                    if f.apparent() > self.cfg.line_limit {
                        over.push(f.branch);
                    }
                }
            }
            if over.is_empty() {
                break snap;
            }
            over.sort_unstable();
            for &k in &over {
                self.mask.branches[k] = false;
            }
            tripped.extend(over);
        };

        let live: Vec<usize> = (0..snap.partition.len())
            .filter(|&i| self.island_energized(&snap.partition, i))
            .collect();
        let assessments = self.assess(&snap);
        let mut available = vec![false; snap.partition.len()];
        for a in &assessments {
            available[a.island] = a.available;
        }

        // Slack machines report their solved output.
        for sol in snap.solutions.iter().flatten().filter(|s| s.converged) {
            self.dispatch[sol.slack_gen] = sol.slack_p;
        }
        let mut gen_available = vec![false; m];
        for g in 0..m {
            if self.mask.generators[g] {
                let island = snap.partition.island_of[self.net.generator_position(g)];
                gen_available[g] = available[island];
            }
        }
        let cost = acpf::generation_cost(&self.net, &self.dispatch, &gen_available);

        let p_available: f64 = assessments
            .iter()
            .filter(|a| a.available)
            .map(|a| a.load_total)
            .sum();
        let p_loss: f64 = self
            .net
            .buses()
            .iter()
            .enumerate()
            .filter(|&(b, _)| !available[snap.partition.island_of[b]])
            .map(|(_, bus)| bus.p_load)
            .sum();
        let converged_islands = live
            .iter()
            .filter(|&&i| snap.solutions[i].as_ref().is_some_and(|s| s.converged))
            .count();
        let available_islands = assessments.iter().filter(|a| a.available).count();

        self.stage += 1;
        let verdict = if available_islands == 0 {
            Verdict::Lose
        } else if self.stage >= self.cfg.stage_max {
            Verdict::Win
        } else {
            Verdict::Ongoing
        };
        self.done = verdict != Verdict::Ongoing;

        let breakdown = compute_reward(
            &RewardInputs {
                generation_cost: cost,
                p_loss,
                p_available,
                p_total: self.p_total,
                converged_islands,
                remaining_islands: live.len(),
                verdict,
            },
            &self.cfg,
        );

        // Drop unavailable islands for the rest of the episode.
        for a in assessments.iter().filter(|a| !a.available) {
            self.deenergize(&snap.partition.islands[a.island]);
        }
        self.snapshot = Some(Snapshot {
            partition: snap.partition,
            solutions: snap.solutions,
            available,
        });

        if !self.done && self.cfg.attack_order == AttackOrder::AttackThenAct {
            self.pre_attack()?;
        }

        Ok(StepOutcome {
            observation: self.observe(),
            reward: breakdown.total(),
            breakdown,
            done: self.done,
            verdict,
            info: StepInfo {
                stage: self.stage,
                attacked,
                tripped,
                islands: live.len(),
                available_islands,
                converged_islands,
                p_loss,
                p_available,
            },
        })
    }

    /// Observation of the most recent solve; zeros on de-energized buses and
    /// lines.
    pub fn observe(&self) -> Observation {
        let nb = self.net.n_branches();
        let mut obs = Observation::zeros(nb, self.net.n_buses());
        let Some(snap) = &self.snapshot else {
            return obs;
        };
        for (i, sol) in snap.solutions.iter().enumerate() {
            let Some(sol) = sol else { continue };
            if !snap.available[i] || !sol.converged {
                continue;
            }
            for f in &sol.branch_flows {
                if self.mask.branches[f.branch] {
                    obs.values[f.branch] = f.apparent() / self.cfg.line_limit;
                }
            }
            for (l, &b) in sol.buses.iter().enumerate() {
                let o = nb + 4 * b;
                obs.values[o] = sol.p_inj[l];
                obs.values[o + 1] = sol.q_inj[l];
                obs.values[o + 2] = sol.v_mag[l];
                obs.values[o + 3] = sol.v_ang[l];
            }
        }
        obs
    }

    fn island_energized(&self, part: &IslandPartition, i: usize) -> bool {
        part.islands[i].iter().any(|&b| self.energized[b])
    }

    fn deenergize(&mut self, buses: &[usize]) {
        for &b in buses {
            self.energized[b] = false;
        }
        for k in 0..self.net.n_branches() {
            let (f, t) = self.net.branch_ends(k);
            if !self.energized[f] || !self.energized[t] {
                self.mask.branches[k] = false;
            }
        }
        for g in 0..self.net.n_generators() {
            if !self.energized[self.net.generator_position(g)] {
                self.mask.generators[g] = false;
            }
        }
    }

    fn solve_all(&self) -> Result<Snapshot, EnvError> {
        let partition = topology::detect_islands(&self.net, &self.mask);
        let mut solutions = Vec::with_capacity(partition.len());
        for (i, island) in partition.islands.iter().enumerate() {
            if !self.island_energized(&partition, i) {
                solutions.push(None);
                continue;
            }
            let prob = PfProblem::for_island(&self.net, &self.mask, island, &self.dispatch)?;
            solutions.push(prob.map(|p| acpf::solve_island(&p, &self.cfg.pf)));
        }
        let available = vec![true; partition.len()];
        Ok(Snapshot {
            partition,
            solutions,
            available,
        })
    }

    fn assess(&self, snap: &Snapshot) -> Vec<IslandAssessment> {
        let all = topology::assess_islands(
            &snap.partition,
            &self.net,
            &self.mask,
            &self.dispatch,
            &snap.solutions,
            &self.cfg.availability,
        );
        all.into_iter()
            .filter(|a| self.island_energized(&snap.partition, a.island))
            .collect()
    }

    fn draw_attack(&mut self) -> Option<usize> {
        if let Some(script) = &self.cfg.attack_script {
            return script
                .get(self.stage)
                .copied()
                .filter(|&k| k < self.mask.branches.len() && self.mask.branches[k]);
        }
        let candidates: Vec<usize> = (0..self.net.n_branches())
            .filter(|&k| self.mask.branches[k])
            .collect();
        if candidates.is_empty() {
            return None;
        }
        Some(candidates[self.rng.random_range(0..candidates.len())])
    }

    /// Applies the next stage's outage ahead of the agent's decision and
    /// re-solves (without tripping) so the observation reflects it.
    fn pre_attack(&mut self) -> Result<(), EnvError> {
        let k = self.draw_attack();
        if let Some(k) = k {
            self.mask.branches[k] = false;
            let mut snap = self.solve_all()?;
            snap.available = (0..snap.partition.len())
                .map(|i| self.island_energized(&snap.partition, i))
                .collect();
            self.snapshot = Some(snap);
        }
        self.pending_attack = k;
        Ok(())
    }
}

/// One CSV row of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub stage: usize,
    pub attacked: String,
    pub tripped: String,
    pub islands: usize,
    pub available_islands: usize,
    pub p_loss: f64,
    pub p_available: f64,
    pub cost_term: f64,
    pub loss_term: f64,
    pub convergence_term: f64,
    pub win_term: f64,
    pub reward: f64,
    pub verdict: Verdict,
}

impl TraceRow {
    pub fn from_outcome(episode: usize, out: &StepOutcome) -> Self {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        TraceRow {
            episode,
            stage: out.info.stage,
            attacked: out.info.attacked.map(|k| k.to_string()).unwrap_or_default(),
            tripped: join(&out.info.tripped),
            islands: out.info.islands,
            available_islands: out.info.available_islands,
            p_loss: out.info.p_loss,
            p_available: out.info.p_available,
            cost_term: out.breakdown.cost_term,
            loss_term: out.breakdown.loss_term,
            convergence_term: out.breakdown.convergence_term,
            win_term: out.breakdown.win_term,
            reward: out.reward,
            verdict: out.verdict,
        }
    }
}

pub fn write_trace<W: std::io::Write>(w: W, rows: &[TraceRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
