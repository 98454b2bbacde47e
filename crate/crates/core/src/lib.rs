//! Multi-stage cascading failure simulation for AC power grids, with a
//! DDPG agent that learns generator dispatch coefficients.

pub mod acpf;
pub mod agent;
pub mod case;
pub mod env;
pub mod harness;
pub mod topology;

pub use acpf::{solve_base_case, PfError, PfOptions, PfSolution};
pub use agent::{AgentConfig, AgentError, Checkpoint, Ddpg};
pub use case::{load_case, parse_case, Bus, BusKind, CaseError, Network, ServiceMask};
pub use env::{Action, CascadeEnv, EnvConfig, EnvError, Observation, StepOutcome, Verdict};
pub use harness::{Baseline, HarnessError, Phase, RunReport, SeedStreams, SummaryRow};
pub use topology::{detect_islands, AvailabilityCriteria, IslandPartition};
