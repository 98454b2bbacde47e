//! JSON checkpoint of a [`Ddpg`] agent.
//!
//! Layout (one JSON object):
//!
//! | key | content |
//! |-----|---------|
//! | `format`, `version` | `"gridcascade-ddpg"`, `1` |
//! | `config` | [`AgentConfig`] |
//! | `obs_len`, `act_len` | network input/output widths |
//! | `actor`, `critic`, `actor_target`, `critic_target` | [`Mlp`]: `weights` as ndarray `{v, dim, data}` row-major, `biases`, `activations` |
//! | `actor_opt`, `critic_opt` | [`Adam`] step count and moments |
//! | `normalizer` | running count, mean and sum of squared deviations |
//! | `noise_rng`, `replay_rng` | ChaCha8 seed (hex), stream and word position |
//! | `updates` | gradient steps taken |
//!
//! Floats are written in shortest round-trip form, so saving, loading and
//! saving again gives identical bytes.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AgentConfig, AgentError, Ddpg, Mlp, RunningNorm};

pub const CHECKPOINT_FORMAT: &str = "gridcascade-ddpg";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal, since the position is 128-bit.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        RngState {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, AgentError> {
        use rand::SeedableRng;
        let bad = || AgentError::Checkpoint(format!("bad rng state {self:?}"));
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse::<u128>().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: AgentConfig,
    pub obs_len: usize,
    pub act_len: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub normalizer: RunningNorm,
    pub noise_rng: RngState,
    pub replay_rng: RngState,
    pub updates: u64,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(AgentError::Checkpoint(format!(
                "unknown format `{}`",
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AgentError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
        Checkpoint::from_json(&text)
    }
}

impl Ddpg {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            obs_len: self.obs_len,
            act_len: self.act_len,
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_target: self.actor_target.clone(),
            critic_target: self.critic_target.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            normalizer: self.norm.clone(),
            noise_rng: RngState::capture(&self.noise_rng),
            replay_rng: RngState::capture(&self.replay_rng),
            updates: self.updates,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Ddpg, AgentError> {
        ck.config.validate()?;
        let shape_err = |what: &'static str, got: usize, expected: usize| AgentError::Dimension {
            what,
            got,
            expected,
        };
        if ck.actor.input_len() != ck.obs_len || ck.actor.output_len() != ck.act_len {
            return Err(shape_err("actor input", ck.actor.input_len(), ck.obs_len));
        }
        if ck.critic.input_len() != ck.obs_len + ck.act_len || ck.critic.output_len() != 1 {
            return Err(shape_err(
                "critic input",
                ck.critic.input_len(),
                ck.obs_len + ck.act_len,
            ));
        }
        if !ck.actor.same_shape(&ck.actor_target) || !ck.critic.same_shape(&ck.critic_target) {
            return Err(AgentError::Checkpoint(
                "target networks differ in shape".into(),
            ));
        }
        if !ck.actor_opt.fits(&ck.actor) || !ck.critic_opt.fits(&ck.critic) {
            return Err(AgentError::Checkpoint(
                "optimizer state differs in shape".into(),
            ));
        }
        if ck.normalizer.len() != ck.obs_len {
            return Err(shape_err("normalizer", ck.normalizer.len(), ck.obs_len));
        }
        Ok(Ddpg {
            noise_rng: ck.noise_rng.restore()?,
            replay_rng: ck.replay_rng.restore()?,
            cfg: ck.config,
            obs_len: ck.obs_len,
            act_len: ck.act_len,
            actor: ck.actor,
            critic: ck.critic,
            actor_target: ck.actor_target,
            critic_target: ck.critic_target,
            actor_opt: ck.actor_opt,
            critic_opt: ck.critic_opt,
            norm: ck.normalizer,
            updates: ck.updates,
        })
    }
}
