//! Trainable handshaking tagger: token encoder, pair kernel, 2N+1 softmax heads.

pub mod backward;
pub mod checkpoint;
pub mod forward;
pub mod gradcheck;
pub mod infer;
pub mod params;
pub mod train;

pub use backward::{batch_gradient, batch_loss, sentence_gradient, Example};
pub use checkpoint::Checkpoint;
pub use forward::{
    argmax_tag, distributions, encode_tokens, handshaking_kernel, loss, predict_link, sentence_loss, tag_distribution,
    OpCounter, PairDistributions, TaggerId, PROB_FLOOR,
};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use infer::{infer, infer_batch, infer_with_stats};
pub use params::{
    BiRecurrent, EncoderParams, KernelParams, Matrix, ModelConfig, ModelParams, Recurrence, TaggerHead, TaggerParams,
    Vocab,
};
pub use train::{build_examples, evaluate_f1, train, EpochRecord, Optimizer, OptimizerKind, TrainConfig, TrainOutcome};
