//! Attention LSTM encoder-decoder trained from scratch.

mod beam;
mod checkpoint;
mod config;
mod grad;
mod model;
mod tensor;
mod train;

pub use beam::{beam_decode, greedy_decode, BeamResult, Hypothesis};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{DecayRule, NmtConfig};
pub use grad::loss_and_gradient;
pub use model::{
    attention_context, decode_step, encode, encode_source, init_model, initial_state, perplexity,
    sentence_logprob, step_logprobs, with_eos, DecoderState, EncodedSource, LstmLayer, NmtModel,
};
pub use tensor::{log_softmax, softmax, Tensor};
pub use train::{
    clip_gradients, global_norm, length_buckets, next_learning_rate, should_decay, train,
    train_with_callback, EvalPoint, IdPair, TrainHistory,
};
