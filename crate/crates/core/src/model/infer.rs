use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;

use crate::decoder::decode_with_mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Mode, RelationSchema, Triple};

use super::forward::{forward, OpCounter};
use super::params::ModelParams;

fn check_schema<F: Scalar>(params: &ModelParams<F>, schema: &RelationSchema) -> Result<()> {
    if params.relations() != schema.len() {
        return Err(Error::Schema(format!(
            "model has {} relation taggers, schema has {} relations",
            params.relations(),
            schema.len()
        )));
    }
    Ok(())
}

/// Triples predicted for one tokenized sentence, counting the work done in `counter`.
///
/// Sentences longer than the configured maximum are truncated with a warning, or
/// rejected in strict mode. Predicted taggings are always decoded leniently: a network
/// can emit inconsistent tags that strict decoding would refuse.
pub fn infer_with_stats<F: Scalar, S: AsRef<str>>(
    tokens: &[S],
    params: &ModelParams<F>,
    schema: &RelationSchema,
    mode: Mode,
    counter: &mut OpCounter,
) -> Result<BTreeSet<Triple>> {
    check_schema(params, schema)?;
    let max = params.config.max_len;
    let tokens = if tokens.len() > max {
        if mode == Mode::Strict {
            return Err(Error::InvalidInput(format!(
                "sentence of {} tokens exceeds maximum length {max}",
                tokens.len()
            )));
        }
        warn!("truncating sentence of {} tokens to {max}", tokens.len());
        &tokens[..max]
    } else {
        tokens
    };
    let ids = params.encoder.vocab.ids(tokens);
    let fw = forward(params, &ids, counter)?;
    decode_with_mode(&fw.dist.predicted()?, schema, Mode::Lenient)
}

pub fn infer<F: Scalar, S: AsRef<str>>(
    tokens: &[S],
    params: &ModelParams<F>,
    schema: &RelationSchema,
    mode: Mode,
) -> Result<BTreeSet<Triple>> {
    infer_with_stats(tokens, params, schema, mode, &mut OpCounter::default())
}

/// Inference over many sentences, in input order. With `parallel`, sentences are spread
/// over the thread pool.
pub fn infer_batch<F: Scalar, S: AsRef<str> + Sync>(
    sentences: &[Vec<S>],
    params: &ModelParams<F>,
    schema: &RelationSchema,
    mode: Mode,
    parallel: bool,
) -> Result<Vec<BTreeSet<Triple>>> {
    check_schema(params, schema)?;
    if parallel {
        sentences.par_iter().map(|s| infer(s, params, schema, mode)).collect()
    } else {
        sentences.iter().map(|s| infer(s, params, schema, mode)).collect()
    }
}
