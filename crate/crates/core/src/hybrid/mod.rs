//! Gated hybrid policies: an expert rule and a neural Beta policy joined by a
//! switch gate, trained with sequential clipped policy-gradient updates.

pub mod dist;
pub mod nn;
pub mod normalize;
pub mod policy;
pub mod rollout;
pub mod toy;
pub mod train;

pub use dist::{beta_log_density, sample_beta_action};
pub use nn::{Activation, Mlp, Shape};
pub use normalize::RunningNormalizer;
pub use policy::{blend, gated_act, policy_rule, Act, ActMode, Expert, GateMode, GatedPolicy, NeuralPolicy};
pub use rollout::{collect_rollout, compute_gae, AgentTrace, Critic, MultiAgentEnv, Observation, RolloutBuffer, Transition};
pub use toy::{MatrixGame, ToyMarket};
pub use train::{evaluate, happo_update, ppo_update, surrogate_grad, surrogate_loss, train, Learner, Sgd, TrainConfig, UpdateReport};
