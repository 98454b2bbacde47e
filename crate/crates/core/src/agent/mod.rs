//! DDPG dispatch agent: actor and critic MLPs with target copies, Adam,
//! uniform replay and Gaussian exploration.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod mlp;
mod normalizer;
mod replay;

use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{Activation, ForwardCache, Mlp, MlpGrads};
pub use normalizer::RunningNorm;
pub use replay::{ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite {what} at update {update}")]
    NonFinite { what: &'static str, update: u64 },
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Actor step size.
    pub learning_rate: f64,
    pub critic_learning_rate: f64,
    /// Critic-only updates before the actor starts learning.
    pub actor_delay: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub replay_capacity: usize,
    /// Episodes played with uniform random actions before the actor acts.
    pub warmup_episodes: usize,
    pub noise_start: f64,
    pub noise_end: f64,
    pub hidden: Vec<usize>,
    /// Rewards are multiplied by this before they reach the critic.
    pub reward_scale: f64,
    /// Gradient steps per environment step.
    pub updates_per_step: usize,
    /// Half-width of the uniform init of both output layers.
    pub final_init: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::ieee14()
    }
}

impl AgentConfig {
    pub fn ieee14() -> Self {
        AgentConfig {
            learning_rate: 1e-5,
            critic_learning_rate: 1e-3,
            actor_delay: 500,
            batch_size: 128,
            gamma: 0.99,
            tau: 0.001,
            replay_capacity: 100_000,
            warmup_episodes: 10,
            noise_start: 0.2,
            noise_end: 0.02,
            hidden: vec![128, 128],
            reward_scale: 1e-3,
            updates_per_step: 4,
            final_init: 3e-3,
        }
    }

    pub fn ieee118() -> Self {
        AgentConfig {
            hidden: vec![256, 256],
            ..AgentConfig::ieee14()
        }
    }

    /// Picks the 118-bus sizing for grids with more than 30 buses.
    pub fn for_grid(n_buses: usize) -> Self {
        if n_buses > 30 {
            AgentConfig::ieee118()
        } else {
            AgentConfig::ieee14()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.critic_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }

    /// Exploration σ for a 0-based training episode: linear from
    /// `noise_start` to `noise_end` over `total` episodes.
    pub fn noise_scale(&self, episode: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.noise_start;
        }
        let f = (episode.min(total - 1)) as f64 / (total - 1) as f64;
        self.noise_start + (self.noise_end - self.noise_start) * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub critic_loss: f64,
    /// Mean Q(s, μ(s)) before the actor step.
    pub actor_objective: f64,
}

/// Normalized minibatch, one sample per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s_next: Array2<f64>,
    pub done: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Ddpg {
    cfg: AgentConfig,
    obs_len: usize,
    act_len: usize,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    norm: RunningNorm,
    noise_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    updates: u64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn hcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).expect("row counts agree")
}

/// Elementwise `target ← τ·online + (1 − τ)·target`.
pub fn soft_update(online: &Mlp, target: &mut Mlp, tau: f64) -> Result<(), AgentError> {
    if !target.same_shape(online) {
        return Err(AgentError::Dimension {
            what: "target network",
            got: target.n_params(),
            expected: online.n_params(),
        });
    }
    target.blend_from(online, tau);
    Ok(())
}

impl Ddpg {
    /// Networks are drawn from `init_seed`; exploration noise and replay
    /// sampling use separate streams of `explore_seed`.
    pub fn new(
        cfg: AgentConfig,
        obs_len: usize,
        act_len: usize,
        init_seed: u64,
        explore_seed: u64,
    ) -> Result<Ddpg, AgentError> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(init_seed);
        let mut actor_sizes = vec![obs_len];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(act_len);
        let mut critic_sizes = vec![obs_len + act_len];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(
            &actor_sizes,
            Activation::UnitTanh,
            cfg.final_init,
            &mut init,
        );
        let critic = Mlp::new(&critic_sizes, Activation::Linear, cfg.final_init, &mut init);
        Ok(Ddpg {
            actor_opt: Adam::new(&actor, cfg.learning_rate),
            critic_opt: Adam::new(&critic, cfg.critic_learning_rate),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            norm: RunningNorm::new(obs_len),
            noise_rng: stream_rng(explore_seed, 0),
            replay_rng: stream_rng(explore_seed, 1),
            updates: 0,
            cfg,
            obs_len,
            act_len,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn act_len(&self) -> usize {
        self.act_len
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn normalizer(&self) -> &RunningNorm {
        &self.norm
    }

    /// Feeds one observation into the running statistics.
    pub fn observe(&mut self, obs: &[f64]) -> Result<(), AgentError> {
        self.check_obs(obs)?;
        self.norm.update(obs);
        Ok(())
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), AgentError> {
        if obs.len() != self.obs_len {
            return Err(AgentError::Dimension {
                what: "observation",
                got: obs.len(),
                expected: self.obs_len,
            });
        }
        Ok(())
    }

    /// Noise-free actor output. Read-only, so a frozen agent can be shared
    /// across threads.
    pub fn greedy(&self, obs: &[f64]) -> Result<Action, AgentError> {
        self.check_obs(obs)?;
        let x = Array2::from_shape_vec((1, self.obs_len), self.norm.normalize(obs))
            .expect("shape matches");
        let y = self.actor.forward(&x);
        Ok(Action::new(y.into_raw_vec_and_offset().0))
    }

    /// Actor output plus N(0, σ²) per coordinate, clamped into `[0, 1]`.
    /// No random numbers are drawn when `noise_scale` is 0.
    pub fn act(&mut self, obs: &[f64], noise_scale: f64) -> Result<Action, AgentError> {
        let a = self.greedy(obs)?;
        if noise_scale <= 0.0 {
            return Ok(a);
        }
        let normal =
            Normal::new(0.0, noise_scale).map_err(|e| AgentError::Config(e.to_string()))?;
        let noisy = a
            .coeffs()
            .iter()
            .map(|&v| v + normal.sample(&mut self.noise_rng))
            .collect();
        Ok(Action::new(noisy))
    }

    /// Uniform random action from the exploration stream.
    pub fn random_action(&mut self) -> Action {
        use rand::Rng;
        Action::new(
            (0..self.act_len)
                .map(|_| self.noise_rng.random::<f64>())
                .collect(),
        )
    }

    pub fn make_batch(&self, items: &[&Transition]) -> Batch {
        let n = items.len();
        let mut s = Array2::zeros((n, self.obs_len));
        let mut s_next = Array2::zeros((n, self.obs_len));
        let mut a = Array2::zeros((n, self.act_len));
        let mut r = Array1::zeros(n);
        let mut done = Array1::zeros(n);
        for (i, t) in items.iter().enumerate() {
            self.norm.normalize_into(
                &t.s,
                s.row_mut(i).as_slice_mut().expect("row is contiguous"),
            );
            self.norm.normalize_into(
                &t.s_next,
                s_next.row_mut(i).as_slice_mut().expect("row is contiguous"),
            );
            a.row_mut(i).iter_mut().zip(&t.a).for_each(|(d, &v)| *d = v);
            r[i] = t.r * self.cfg.reward_scale;
            done[i] = if t.done { 1.0 } else { 0.0 };
        }
        Batch {
            s,
            a,
            r,
            s_next,
            done,
        }
    }

    /// `y = r + γ(1 − done)·Q'(s', μ'(s'))`.
    pub fn targets(&self, b: &Batch) -> Array1<f64> {
        let a_next = self.actor_target.forward(&b.s_next);
        let q_next = self.critic_target.forward(&hcat(&b.s_next, &a_next));
        let q_next = q_next.column(0);
        let mut y = b.r.clone();
        for i in 0..y.len() {
            y[i] += self.cfg.gamma * (1.0 - b.done[i]) * q_next[i];
        }
        y
    }

    /// Mean squared TD error against fixed targets and its critic gradient.
    pub fn critic_loss_grads(&self, b: &Batch, y: &Array1<f64>) -> (f64, MlpGrads) {
        let n = y.len() as f64;
        let cache = self.critic.forward_cached(&hcat(&b.s, &b.a));
        let diff = &cache.output().column(0) - y;
        let loss = diff.mapv(|d| d * d).sum() / n;
        let d_out = (diff.mapv(|d| 2.0 * d / n)).insert_axis(ndarray::Axis(1));
        let (g, _) = self.critic.backward(&cache, &d_out);
        (loss, g)
    }

    pub fn critic_loss(&self, b: &Batch, y: &Array1<f64>) -> f64 {
        let q = self.critic.forward(&hcat(&b.s, &b.a));
        let diff = &q.column(0) - y;
        diff.mapv(|d| d * d).sum() / y.len() as f64
    }

    /// `J = mean Q(s, μ(s))` and the actor gradient of `−J`.
    pub fn actor_objective_grads(&self, b: &Batch) -> (f64, MlpGrads) {
        let n = b.s.nrows() as f64;
        let a_cache = self.actor.forward_cached(&b.s);
        let c_cache = self.critic.forward_cached(&hcat(&b.s, a_cache.output()));
        let j = c_cache.output().sum() / n;
        let d_q = Array2::from_elem((b.s.nrows(), 1), -1.0 / n);
        let (_, d_in) = self.critic.backward(&c_cache, &d_q);
        let d_a = d_in.slice(s![.., self.obs_len..]).to_owned();
        let (g, _) = self.actor.backward(&a_cache, &d_a);
        (j, g)
    }

    pub fn actor_objective(&self, b: &Batch) -> f64 {
        let a = self.actor.forward(&b.s);
        self.critic.forward(&hcat(&b.s, &a)).sum() / b.s.nrows() as f64
    }

    /// One critic step, one actor step, then soft target updates. `None`
    /// while the buffer holds fewer than `batch_size` transitions.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<Option<TrainStats>, AgentError> {
        let Some(items) = buffer.sample(self.cfg.batch_size, &mut self.replay_rng) else {
            return Ok(None);
        };
        let batch = self.make_batch(&items);
        Ok(Some(self.train_on(&batch)?))
    }

    pub fn train_on(&mut self, batch: &Batch) -> Result<TrainStats, AgentError> {
        self.updates += 1;
        let y = self.targets(batch);
        let (critic_loss, gc) = self.critic_loss_grads(batch, &y);
        if !critic_loss.is_finite() {
            return Err(AgentError::NonFinite {
                what: "critic loss",
                update: self.updates,
            });
        }
        self.critic_opt.step(&mut self.critic, &gc);
        let (actor_objective, ga) = self.actor_objective_grads(batch);
        if !actor_objective.is_finite() {
            return Err(AgentError::NonFinite {
                what: "actor objective",
                update: self.updates,
            });
        }
        if self.updates > self.cfg.actor_delay {
            self.actor_opt.step(&mut self.actor, &ga);
        }
        if !self.actor.is_finite() || !self.critic.is_finite() {
            return Err(AgentError::NonFinite {
                what: "network parameters",
                update: self.updates,
            });
        }
        soft_update(&self.actor, &mut self.actor_target, self.cfg.tau)?;
        soft_update(&self.critic, &mut self.critic_target, self.cfg.tau)?;
        Ok(TrainStats {
            critic_loss,
            actor_objective,
        })
    }
}
