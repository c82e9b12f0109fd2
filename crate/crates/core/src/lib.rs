//! Terminology-aware neural machine translation.
//!
//! Technical terms are pulled out of POS-tagged source sentences, paired with
//! their target translations through a phrase table or word alignments, and
//! replaced by indexed placeholder tokens (`TT_1`, `TT_2`, ...) before an
//! attention LSTM encoder-decoder is trained on the result. At decode time the
//! placeholders are restored with phrase-table translations; SMT n-best lists
//! can be reranked by averaging SMT and NMT scores.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod nmt;
pub mod pipeline;
pub mod rerank;
pub mod smt_bridge;
pub mod synth;
pub mod term_align;
pub mod term_extract;
pub mod token_sub;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
