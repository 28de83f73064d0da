pub mod attacker;
pub mod environment;
pub mod error;
pub mod features;
pub mod gp;
pub mod harness;
pub mod numerics;
pub mod perturber;
pub mod selector;
pub mod surrogate;
pub mod victims;

pub use attacker::{Attacker, AttackerConfig, Outcome, Proposal, Strategy};
pub use environment::{ContextRound, EnvConfig, Environment, HiddenReward, RewardFamily};
pub use error::{Error, Result};
pub use features::{ContextualState, FeatureVector, GradientStats};
pub use harness::{RoundLog, RunConfig, SummaryMetrics};
pub use gp::{AttackParams, GpConfig, GpState};
pub use perturber::{AttackObjective, PerturbConfig, PerturbPlan};
pub use selector::{AttackHistory, BudgetState, SelectorConfig};
pub use surrogate::{ObservationWindow, SurrogateConfig, SurrogateModel};
pub use victims::{Victim, VictimConfig, VictimKind};
