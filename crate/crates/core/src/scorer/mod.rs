//! Temporal anomaly scorer: input projection, global and local
//! self-attention, abnormal/normal memory banks and a sigmoid head, trained
//! with hand-derived gradients.

mod forward;
mod gradcheck;
mod loss;
mod model;
mod train;

pub use forward::{forward, memory_read, score, ForwardOutput, LOGIT_CLAMP};
pub use gradcheck::{
    check_case, gradient_check, relative_error, CaseReport, GradCheckReport, WorstEntry, GRADCHECK_TOLERANCE,
};
pub use loss::{loss_total, topk_count, topk_indices, LossBreakdown, TrainBatch};
pub use model::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, ModelDims,
    ScorerModel, Tensor,
};
pub use train::{clip_grad_norm, fit, Adam, EpochLog, TrainingLog, TrainingVideo};
