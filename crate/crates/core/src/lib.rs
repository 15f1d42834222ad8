//! Handshaking token-pair tagging for joint extraction of entities and overlapping
//! relation triples: the codec, the decoder, a small trainable tagger, dataset tooling
//! and evaluation.

pub mod codec;
pub mod data;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod selftest;
pub mod synth;
pub mod types;

pub use codec::{encode, matrix_index, seq_index, tagging_from_json, tagging_to_json, Encoded};
pub use decoder::{decode, decode_oracle, decode_with_mode};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{
    seq_length, HandshakingTagging, LinkKind, LinkTag, Mode, RelationId, RelationSchema, SentenceAnnotation, TokenSpan,
    Triple,
};

/// Double-precision model parameters, the default for training and gradient checks.
pub type Params = model::ModelParams<f64>;
/// Single-precision model parameters.
pub type ParamsF32 = model::ModelParams<f32>;
/// Double-precision checkpoint.
pub type ModelCheckpoint = model::Checkpoint<f64>;
