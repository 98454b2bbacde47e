use serde::{Deserialize, Serialize};

use super::{EnvConfig, Verdict};

/// Stage quantities the reward is computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    /// $/h over generators on available islands.
    pub generation_cost: f64,
    /// Load on unavailable (or already dropped) islands, MW.
    pub p_loss: f64,
    /// Load on available islands, MW.
    pub p_available: f64,
    /// Original total load of the grid, MW.
    pub p_total: f64,
    pub converged_islands: usize,
    pub remaining_islands: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub cost_term: f64,
    pub loss_term: f64,
    pub convergence_term: f64,
    pub win_term: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.cost_term + self.loss_term + self.convergence_term + self.win_term
    }
}

pub fn compute_reward(inp: &RewardInputs, cfg: &EnvConfig) -> RewardBreakdown {
    let cost_term = -cfg.c1 * inp.generation_cost;
    let loss_term = -cfg.base_reward_1 * (inp.p_loss / inp.p_total);
    // "Half or more" of the remaining islands: converged ≥ ⌈remaining / 2⌉.
    let convergence_term =
        if inp.remaining_islands > 0 && 2 * inp.converged_islands >= inp.remaining_islands {
            cfg.base_reward_2
        } else {
            0.0
        };
    let win_term = if inp.verdict == Verdict::Win {
        cfg.base_reward_3 * (inp.p_available / inp.p_total).powf(cfg.c2)
    } else {
        0.0
    };
    RewardBreakdown {
        cost_term,
        loss_term,
        convergence_term,
        win_term,
    }
}
