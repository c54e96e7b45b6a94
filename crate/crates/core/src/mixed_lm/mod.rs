//! Mixture of content-item-conditioned language models with a learned
//! plan scorer.

mod align;
mod checkpoint;
mod decode;
mod example;
mod gradcheck;
mod network;
mod plan;
mod train;
pub mod vocab;

pub use align::{align_output, AlignmentResult, ALIGN_THRESHOLD};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decode::{decode, step, DecodeMode, Decoded, StepOutput};
pub use example::{apply_masks, examples_from_samples, Example, ItemMask};
pub use gradcheck::{
    check_example, check_vocab, finite_difference_check, relative_error, tiny_config,
    GradCheckReport, GradEntry, FD_STEP,
};
pub use network::{MixedLm, ModelConfig};
pub use plan::{
    argmax, encode_items, mixture_step, plan_scores, softmax, EncodedItems, StepPlanScores,
};
pub use train::{
    forward_train, loss_and_grads, mean_loss, teacher_forced, teacher_forced_accuracy, train,
    EarlyStopping, EpochLog, StopDecision, TeacherForced, TrainConfig, TrainReport,
    TrainStepOutput, PROB_FLOOR,
};
pub use vocab::Vocab;
