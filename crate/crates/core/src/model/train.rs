use std::sync::Arc;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::encode;
use crate::data::truncate;
use crate::error::{Error, Result};
use crate::eval::{micro_prf, MatchMode};
use crate::scalar::Scalar;
use crate::types::{Mode, RelationSchema, SentenceAnnotation, Triple};

use super::backward::{batch_gradient, Example};
use super::gradcheck::{check_gradients, GradCheckReport, FD_STEP, FD_TOLERANCE};
use super::infer::infer_batch;
use super::params::{ModelConfig, ModelParams, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Check the initial gradient against finite differences before training.
    pub grad_check: bool,
    /// Conflict handling when encoding gold taggings.
    pub mode: Mode,
    /// Stop once the selection F1 reaches this value.
    pub stop_at_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 6,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            grad_check: false,
            mode: Mode::Lenient,
            stop_at_f1: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state; Adam keeps first and second moment estimates.
pub struct Optimizer<F> {
    kind: OptimizerKind,
    lr: F,
    step: i32,
    moments: Option<(ModelParams<F>, ModelParams<F>)>,
}

impl<F: Scalar> Optimizer<F> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ModelParams<F>) -> Self {
        let moments = (kind == OptimizerKind::Adam).then(|| (params.zeros_like(), params.zeros_like()));
        Self { kind, lr: F::of(learning_rate), step: 0, moments }
    }

    pub fn update(&mut self, params: &mut ModelParams<F>, grad: &ModelParams<F>) {
        self.step += 1;
        match (self.kind, &mut self.moments) {
            (OptimizerKind::Adam, Some((m, v))) => {
                let (b1, b2) = (F::of(ADAM_BETA1), F::of(ADAM_BETA2));
                let c1 = F::one() - b1.powi(self.step);
                let c2 = F::one() - b2.powi(self.step);
                let eps = F::of(ADAM_EPS);
                let grads = grad.tensors();
                for (((p, m), v), (_, g)) in
                    params.tensors_mut().into_iter().zip(m.tensors_mut()).zip(v.tensors_mut()).zip(grads)
                {
                    for k in 0..p.len() {
                        m[k] = b1 * m[k] + (F::one() - b1) * g[k];
                        v[k] = b2 * v[k] + (F::one() - b2) * g[k] * g[k];
                        p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
            }
            _ => params.add_scaled(grad, -self.lr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Exact-match F1 on the selection set (validation if given, else training).
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters of the epoch with the best selection F1.
    pub params: ModelParams<F>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Epoch in which a non-finite loss or parameter stopped training.
    pub diverged: Option<usize>,
    pub grad_check: Option<GradCheckReport>,
}

/// Gold examples for `annotations`, truncated to `max_len` tokens.
pub fn build_examples(
    annotations: &[SentenceAnnotation],
    schema: &RelationSchema,
    vocab: &Vocab,
    max_len: usize,
    mode: Mode,
) -> Result<Vec<Example>> {
    annotations
        .iter()
        .map(|ann| {
            let (ann, dropped) = truncate(ann, max_len)?;
            if dropped > 0 {
                warn!("dropped {dropped} triple(s) outside the first {max_len} tokens for training");
            }
            let gold = encode(&ann, schema, mode)?.tagging;
            Ok(Example { ids: vocab.ids(&ann.tokens), gold })
        })
        .collect()
}

/// Exact-match micro F1 of `params` on `annotations`.
pub fn evaluate_f1<F: Scalar>(
    params: &ModelParams<F>,
    schema: &RelationSchema,
    annotations: &[SentenceAnnotation],
) -> Result<f64> {
    let sentences: Vec<Vec<String>> = annotations.iter().map(|a| a.tokens.clone()).collect();
    let preds = infer_batch(&sentences, params, schema, Mode::Lenient, true)?;
    let preds: Vec<Vec<Triple>> = preds.into_iter().map(|s| s.into_iter().collect()).collect();
    let golds: Vec<&[Triple]> = annotations.iter().map(|a| a.triples()).collect();
    Ok(micro_prf(&preds, &golds, MatchMode::Exact)?.f1)
}

/// Trains a fresh model. Deterministic given the seed: initialization and shuffling draw
/// from one generator, and gradients are reduced in a fixed order.
pub fn train<F: Scalar>(
    train_set: &[SentenceAnnotation],
    valid_set: &[SentenceAnnotation],
    schema: &RelationSchema,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = Arc::new(Vocab::build(train_set.iter().map(|a| &a.tokens)));
    let mut params = ModelParams::<F>::init(model_config, Arc::clone(&vocab), schema.len(), &mut rng)?;
    let examples = build_examples(train_set, schema, &vocab, model_config.max_len, config.mode)?;
    let selection = if valid_set.is_empty() { train_set } else { valid_set };

    let grad_check = if config.grad_check {
        let report = check_gradients(&params, &examples[..1], FD_STEP, FD_TOLERANCE)?;
        if let Some(bad) = report.failures.first() {
            return Err(Error::Numeric { tensor: format!("gradient check failed at {}[{}]", bad.tensor, bad.index) });
        }
        Some(report)
    } else {
        None
    };

    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<F>)> = None;
    let mut diverged = None;
    'epochs: for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grad) = match batch_gradient(&params, &batch) {
                Ok(v) => v,
                Err(Error::Numeric { tensor }) => {
                    warn!("epoch {epoch}: non-finite value in {tensor}; stopping");
                    diverged = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let before = params.clone();
            opt.update(&mut params, &grad);
            if let Some(t) = params.first_non_finite() {
                warn!("epoch {epoch}: update made {t} non-finite; stopping");
                params = before;
                diverged = Some(epoch);
                break 'epochs;
            }
            loss_sum += loss.as_f64() * chunk.len() as f64;
        }
        let loss = loss_sum / examples.len() as f64;
        let f1 = evaluate_f1(&params, schema, selection)?;
        info!("epoch {epoch}: loss {loss:.6}, f1 {f1:.4}");
        history.push(EpochRecord { epoch, loss, f1 });
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
            best = Some((f1, epoch, params.clone()));
        }
        if config.stop_at_f1.is_some_and(|target| f1 >= target) {
            break;
        }
    }
    let (best_epoch, params) = match best {
        Some((_, epoch, p)) => (Some(epoch), p),
        None => (None, params),
    };
    Ok(TrainOutcome { params, history, best_epoch, diverged, grad_check })
}
