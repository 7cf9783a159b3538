//! Policy learning: networks, clipped-surrogate updates, rollouts and
//! student distillation.

pub mod gae;
pub mod nn;
pub mod policy;
pub mod ppo;

pub use gae::{compute_gae, normalize_advantages};
pub use nn::{Adam, Mlp};
pub use policy::{
    encode_privileged, gaussian_entropy, gaussian_log_prob, policy_forward, NetworkConfig, PolicyDims, PolicyParams,
};
pub use ppo::{loss_and_grad, ppo_update, LossParts, LossWeights, Minibatch, RolloutBatch, TrainHyper, UpdateStats};
pub mod train;
pub use train::{
    evaluate_policy, init_policy, pretrain_shared, sample_lengths, train_policy, train_policy_with, EvalStep,
    EvalSummary, IterationStats, TrainOutcome, Trainer,
};
pub mod gru;
pub mod student;
pub use student::{
    distill_student, evaluate_student, gru_encode_history, init_student, DistillOutcome, DistillStats, StudentEval,
    StudentHyper, StudentParams,
};
