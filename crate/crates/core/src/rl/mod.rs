//! Learned gait controller: environment adapter, Gaussian policy networks and
//! proximal policy optimization.

pub mod env;
pub mod net;
pub mod normalize;
pub mod policy;
pub mod ppo;
pub mod train;

pub use env::{
    combined_reward, decode_action, observation_dim, observe, power_reward, velocity_reward, RewardParams,
    SnakeEnv, SpeedSignal, Transition, ACTION_LIMIT,
};
pub use net::{Adam, Mlp, PolicyNet};
pub use normalize::RunningMeanStd;
pub use policy::{Policy, CHECKPOINT_MAGIC};
pub use ppo::{
    compute_gae, gaussian_log_prob, normalize_advantages, ppo_loss, ppo_update, sample_action, LossCoefficients,
    LossStats, Minibatch, RolloutBatch, SampledAction, UpdateConfig, UpdateStats,
};
pub use train::{
    evaluate_policy, evaluate_target, evaluation_targets, train, EpisodeRecord, TrainConfig, TrainOutcome,
    TrainProgress, VELOCITY_CYCLE,
};
