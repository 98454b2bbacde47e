use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acpf::PfOptions;
use crate::topology::AvailabilityCriteria;

use super::EnvError;

pub const IEEE14_PRESET: &str = include_str!("../../presets/ieee14.env");
pub const IEEE118_PRESET: &str = include_str!("../../presets/ieee118.env");

/// When the stage's line outage lands relative to the agent's decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackOrder {
    /// Dispatch is applied, then the outage hits, then the cascade runs.
    ActThenAttack,
    /// The outage for the next stage is applied before the agent observes,
    /// so the observation already shows the missing line.
    AttackThenAct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub stage_max: usize,
    /// MVA, applied to every branch.
    pub line_limit: f64,
    pub c1: f64,
    pub c2: f64,
    pub base_reward_1: f64,
    pub base_reward_2: f64,
    pub base_reward_3: f64,
    pub attack_seed: u64,
    pub attack_order: AttackOrder,
    /// Branch index to remove at each stage instead of a random draw.
    pub attack_script: Option<Vec<usize>>,
    pub availability: AvailabilityCriteria,
    pub pf: PfOptions,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::ieee14()
    }
}

impl EnvConfig {
    pub fn ieee14() -> Self {
        EnvConfig {
            stage_max: 3,
            line_limit: 200.0,
            c1: 0.03,
            c2: 1.7,
            base_reward_1: 2000.0,
            base_reward_2: 1000.0,
            base_reward_3: 2000.0,
            attack_seed: 0,
            attack_order: AttackOrder::ActThenAttack,
            attack_script: None,
            availability: AvailabilityCriteria::dispatch_based(),
            pf: PfOptions::default(),
        }
    }

    pub fn ieee118() -> Self {
        EnvConfig {
            line_limit: 450.0,
            c1: 0.005,
            ..EnvConfig::ieee14()
        }
    }

    /// Shipped preset by name (`ieee14`, `ieee118`).
    pub fn preset(name: &str) -> Result<Self, EnvError> {
        match name {
            "ieee14" => EnvConfig::from_text(IEEE14_PRESET),
            "ieee118" => EnvConfig::from_text(IEEE118_PRESET),
            other => Err(EnvError::Config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EnvError::Config(format!("{}: {e}", path.as_ref().display())))?;
        EnvConfig::from_text(&text)
    }

    /// Parses `key = value` lines (`#` comments) on top of the 14-bus
    /// defaults; `preset = ieee118` as the first key switches the base.
    pub fn from_text(text: &str) -> Result<Self, EnvError> {
        let mut cfg = EnvConfig::ieee14();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| EnvError::Config(format!("line {}: {m}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("`{key}` expects a number, found `{value}`")))
            };
            let int = || {
                value
                    .parse::<u64>()
                    .map_err(|_| err(format!("`{key}` expects an integer, found `{value}`")))
            };
            let flag = || match value {
                "true" | "on" | "1" => Ok(true),
                "false" | "off" | "0" => Ok(false),
                _ => Err(err(format!("`{key}` expects true/false, found `{value}`"))),
            };
            match key {
                "preset" => {
                    cfg = match value {
                        "ieee14" => EnvConfig::ieee14(),
                        "ieee118" => EnvConfig::ieee118(),
                        _ => return Err(err(format!("unknown preset `{value}`"))),
                    }
                }
                "stage_max" => cfg.stage_max = int()? as usize,
                "line_limit" => cfg.line_limit = float()?,
                "c1" => cfg.c1 = float()?,
                "c2" => cfg.c2 = float()?,
                "base_reward_1" => cfg.base_reward_1 = float()?,
                "base_reward_2" => cfg.base_reward_2 = float()?,
                "base_reward_3" => cfg.base_reward_3 = float()?,
                "attack_seed" => cfg.attack_seed = int()?,
                "attack_order" => {
                    cfg.attack_order = match value {
                        "act_then_attack" => AttackOrder::ActThenAttack,
                        "attack_then_act" => AttackOrder::AttackThenAct,
                        _ => return Err(err(format!("unknown attack_order `{value}`"))),
                    }
                }
                "attack_script" => {
                    cfg.attack_script = if value.is_empty() || value == "none" {
                        None
                    } else {
                        let list = value
                            .split(',')
                            .map(|s| s.trim().parse::<usize>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|_| err(format!("bad attack_script `{value}`")))?;
                        Some(list)
                    }
                }
                "availability.generator" => cfg.availability.require_generator = flag()?,
                "availability.capacity" => cfg.availability.capacity = flag()?,
                "availability.convergence" => cfg.availability.convergence = flag()?,
                "availability.slack_bounds" => cfg.availability.slack_bounds = flag()?,
                "availability.dispatch_adequacy" => cfg.availability.dispatch_adequacy = flag()?,
                "pf.tol" => cfg.pf.tol_mismatch = float()?,
                "pf.max_iter" => cfg.pf.max_iter = int()? as usize,
                "pf.enforce_q_limits" => cfg.pf.enforce_q_limits = flag()?,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stage_max = {}", self.stage_max);
        let _ = writeln!(s, "line_limit = {}", self.line_limit);
        let _ = writeln!(s, "c1 = {}", self.c1);
        let _ = writeln!(s, "c2 = {}", self.c2);
        let _ = writeln!(s, "base_reward_1 = {}", self.base_reward_1);
        let _ = writeln!(s, "base_reward_2 = {}", self.base_reward_2);
        let _ = writeln!(s, "base_reward_3 = {}", self.base_reward_3);
        let _ = writeln!(s, "attack_seed = {}", self.attack_seed);
        let order = match self.attack_order {
            AttackOrder::ActThenAttack => "act_then_attack",
            AttackOrder::AttackThenAct => "attack_then_act",
        };
        let _ = writeln!(s, "attack_order = {order}");
        match &self.attack_script {
            Some(list) => {
                let items: Vec<String> = list.iter().map(usize::to_string).collect();
                let _ = writeln!(s, "attack_script = {}", items.join(","));
            }
            None => {
                let _ = writeln!(s, "attack_script = none");
            }
        }
        let a = &self.availability;
        let _ = writeln!(s, "availability.generator = {}", a.require_generator);
        let _ = writeln!(s, "availability.capacity = {}", a.capacity);
        let _ = writeln!(s, "availability.convergence = {}", a.convergence);
        let _ = writeln!(s, "availability.slack_bounds = {}", a.slack_bounds);
        let _ = writeln!(
            s,
            "availability.dispatch_adequacy = {}",
            a.dispatch_adequacy
        );
        let _ = writeln!(s, "pf.tol = {}", self.pf.tol_mismatch);
        let _ = writeln!(s, "pf.max_iter = {}", self.pf.max_iter);
        let _ = writeln!(s, "pf.enforce_q_limits = {}", self.pf.enforce_q_limits);
        s
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.stage_max < 1 {
            return bad("stage_max must be at least 1");
        }
        if !(self.line_limit > 0.0) {
            return bad("line_limit must be positive");
        }
        if !(self.c2 > 0.0) {
            return bad("c2 must be positive");
        }
        if !(self.pf.tol_mismatch > 0.0) {
            return bad("pf.tol must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let a = EnvConfig::ieee14();
        assert_eq!(
            (a.stage_max, a.line_limit, a.c1, a.c2),
            (3, 200.0, 0.03, 1.7)
        );
        assert_eq!(
            (a.base_reward_1, a.base_reward_2, a.base_reward_3),
            (2000.0, 1000.0, 2000.0)
        );
        let b = EnvConfig::ieee118();
        assert_eq!(
            (b.stage_max, b.line_limit, b.c1, b.c2),
            (3, 450.0, 0.005, 1.7)
        );
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = EnvConfig::ieee118();
        cfg.attack_script = Some(vec![4, 0, 17]);
        cfg.attack_order = AttackOrder::AttackThenAct;
        cfg.availability.dispatch_adequacy = true;
        assert_eq!(EnvConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(EnvConfig::from_text("stage_max = 0").is_err());
        assert!(EnvConfig::from_text("line_limit = -5").is_err());
        assert!(EnvConfig::from_text("c2 = 0").is_err());
        assert!(EnvConfig::from_text("bogus = 1").is_err());
        assert!(EnvConfig::from_text("c1 0.3").is_err());
    }

    #[test]
    fn presets_parse() {
        let p14 = EnvConfig::preset("ieee14").unwrap();
        let p118 = EnvConfig::preset("ieee118").unwrap();
        assert_eq!(p14.line_limit, 200.0);
        assert_eq!(p118.line_limit, 450.0);
        assert_eq!(p118.c1, 0.005);
        assert_eq!(p14.availability, AvailabilityCriteria::dispatch_based());
        assert_eq!(p118.availability, p14.availability);
        assert!(EnvConfig::preset("ieee30").is_err());
    }
}
