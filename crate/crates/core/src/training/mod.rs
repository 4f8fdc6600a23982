//! Forward/backward passes, optimizer, training loop and checkpoints.

mod checkpoint;
mod forward;
mod gradcheck;
mod model;
mod optim;
mod trainer;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TensorRecord, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use forward::{argmax, backward, batch_loss, forward, sample_gradient, Forward, PROB_FLOOR};
pub use gradcheck::{
    analytic_gradient, gradcheck, tiny_instance, GradcheckConfig, GroupReport, GRADCHECK_STEP,
    GRADCHECK_TOLERANCE, GROUPS,
};
pub use model::{
    AblationMode, ClassifierParams, ModelConfig, ModelGrads, SolverModel, ABLATION_ROWS,
};
pub use optim::{adam_step, lr_schedule, AdamConfig};
pub(crate) use trainer::with_pool;
pub use trainer::{
    batch_gradient, evaluate, train, train_from, write_metrics_log, EpochMetrics, Evaluation,
    TrainConfig, TrainOutcome, THREADS_ENV,
};
