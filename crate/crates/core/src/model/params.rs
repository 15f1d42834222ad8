use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    /// Uniform in `[-1/√fan_in, 1/√fan_in]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| F::of(rng.gen_range(-bound..=bound))).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self · x + bias`.
    pub fn affine_into(&self, x: &[F], bias: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            *o = bias[r] + dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`.
    pub fn t_matvec_acc(&self, y: &[F], out: &mut [F]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr == F::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a · bᵀ`.
    pub fn outer_acc(&mut self, a: &[F], b: &[F]) {
        for (r, &ar) in a.iter().enumerate() {
            if ar == F::zero() {
                continue;
            }
            for (w, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Token vocabulary; id 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from token sequences in first-seen order.
    pub fn build<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut v = Self::from_tokens(std::iter::empty::<String>());
        for s in sentences {
            for tok in s.as_ref() {
                if !v.ids.contains_key(tok) {
                    v.ids.insert(tok.clone(), v.tokens.len());
                    v.tokens.push(tok.clone());
                }
            }
        }
        v
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut v = Self { tokens: vec![UNKNOWN_TOKEN.to_string()], ids: HashMap::new() };
        v.ids.insert(UNKNOWN_TOKEN.to_string(), 0);
        for t in tokens {
            if t != UNKNOWN_TOKEN && !v.ids.contains_key(&t) {
                v.ids.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(deserializer)?;
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(serde::de::Error::custom("vocabulary must start with <unk>"));
        }
        let v = Vocab::from_tokens(tokens.iter().skip(1).cloned());
        if v.tokens.len() != tokens.len() {
            return Err(serde::de::Error::custom("vocabulary has duplicate tokens"));
        }
        Ok(v)
    }
}

/// One direction of the recurrent context mixer: `s_t = tanh(W x_t + U s_prev + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recurrence<F> {
    pub input: Matrix<F>,
    pub recurrent: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Recurrence<F> {
    fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input: Matrix::uniform(hidden, input_dim, input_dim, rng),
            recurrent: Matrix::uniform(hidden, hidden, hidden, rng),
            bias: Matrix::<F>::uniform(1, hidden, input_dim, rng).data,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            input: Matrix::zeros(self.input.rows, self.input.cols),
            recurrent: Matrix::zeros(self.recurrent.rows, self.recurrent.cols),
            bias: vec![F::zero(); self.bias.len()],
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.len()
    }
}

/// Bidirectional tanh recurrence; a token's context vector is `[forward; backward]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiRecurrent<F> {
    pub forward: Recurrence<F>,
    pub backward: Recurrence<F>,
}

/// Token encoder: embedding lookup, optionally followed by the context mixer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<F> {
    pub vocab: Arc<Vocab>,
    /// `V × d`.
    pub embedding: Matrix<F>,
    pub mixer: Option<BiRecurrent<F>>,
}

impl<F: Scalar> EncoderParams<F> {
    /// Dimension of the contextual vectors.
    pub fn output_dim(&self) -> usize {
        match &self.mixer {
            Some(m) => m.forward.hidden() + m.backward.hidden(),
            None => self.embedding.cols,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols
    }
}

/// Handshaking kernel `h_ij = tanh(W [h_i; h_j] + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<F> {
    /// `pair_dim × 2·encoder_dim`.
    pub weight: Matrix<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> KernelParams<F> {
    pub fn pair_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols / 2
    }
}

/// Softmax output head over the three link labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerHead<F> {
    /// `3 × pair_dim`.
    pub weight: Matrix<F>,
    pub bias: Vec<F>,
}

/// The 2N+1 output heads in slot order: EH-to-ET, SH-to-OH per relation, ST-to-OT per relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerParams<F> {
    pub heads: Vec<TaggerHead<F>>,
}

impl<F> TaggerParams<F> {
    pub fn relations(&self) -> usize {
        (self.heads.len() - 1) / 2
    }
}

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Hidden size per direction of the context mixer; `None` feeds embeddings directly.
    pub mixer_hidden: Option<usize>,
    pub pair_dim: usize,
    /// Longest sentence accepted at inference; longer input is truncated (or rejected in strict mode).
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { embed_dim: 32, mixer_hidden: Some(16), pair_dim: 32, max_len: 100 }
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub encoder: EncoderParams<F>,
    pub kernel: KernelParams<F>,
    pub taggers: TaggerParams<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Seeded uniform initialization for `relations` relation types.
    pub fn init<R: Rng>(config: ModelConfig, vocab: Arc<Vocab>, relations: usize, rng: &mut R) -> Result<Self> {
        if config.embed_dim == 0 || config.pair_dim == 0 || config.mixer_hidden == Some(0) {
            return Err(Error::Shape("model dimensions must be positive".into()));
        }
        if relations == 0 {
            return Err(Error::Shape("at least one relation is required".into()));
        }
        let d = config.embed_dim;
        let embedding = Matrix::uniform(vocab.len(), d, d, rng);
        let mixer = config
            .mixer_hidden
            .map(|k| BiRecurrent { forward: Recurrence::init(d, k, rng), backward: Recurrence::init(d, k, rng) });
        let encoder = EncoderParams { vocab, embedding, mixer };
        let e = encoder.output_dim();
        let p = config.pair_dim;
        let kernel = KernelParams {
            weight: Matrix::uniform(p, 2 * e, 2 * e, rng),
            bias: Matrix::<F>::uniform(1, p, 2 * e, rng).data,
        };
        let heads = (0..2 * relations + 1)
            .map(|_| TaggerHead {
                weight: Matrix::uniform(3, p, p, rng),
                bias: Matrix::<F>::uniform(1, 3, p, rng).data,
            })
            .collect();
        Ok(Self { config, encoder, kernel, taggers: TaggerParams { heads } })
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let enc = &self.encoder;
        Self {
            config: self.config,
            encoder: EncoderParams {
                vocab: Arc::clone(&enc.vocab),
                embedding: Matrix::zeros(enc.embedding.rows, enc.embedding.cols),
                mixer: enc
                    .mixer
                    .as_ref()
                    .map(|m| BiRecurrent { forward: m.forward.zeros_like(), backward: m.backward.zeros_like() }),
            },
            kernel: KernelParams {
                weight: Matrix::zeros(self.kernel.weight.rows, self.kernel.weight.cols),
                bias: vec![F::zero(); self.kernel.bias.len()],
            },
            taggers: TaggerParams {
                heads: self
                    .taggers
                    .heads
                    .iter()
                    .map(|h| TaggerHead { weight: Matrix::zeros(3, h.weight.cols), bias: vec![F::zero(); 3] })
                    .collect(),
            },
        }
    }

    pub fn relations(&self) -> usize {
        self.taggers.relations()
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[F])> {
        let mut out: Vec<(String, &[F])> = vec![("encoder.embedding".into(), &self.encoder.embedding.data)];
        if let Some(m) = &self.encoder.mixer {
            for (dir, r) in [("forward", &m.forward), ("backward", &m.backward)] {
                out.push((format!("encoder.mixer.{dir}.input"), &r.input.data));
                out.push((format!("encoder.mixer.{dir}.recurrent"), &r.recurrent.data));
                out.push((format!("encoder.mixer.{dir}.bias"), &r.bias));
            }
        }
        out.push(("kernel.weight".into(), &self.kernel.weight.data));
        out.push(("kernel.bias".into(), &self.kernel.bias));
        for (s, h) in self.taggers.heads.iter().enumerate() {
            out.push((format!("tagger.{s}.weight"), &h.weight.data));
            out.push((format!("tagger.{s}.bias"), &h.bias));
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out: Vec<&mut Vec<F>> = vec![&mut self.encoder.embedding.data];
        if let Some(m) = &mut self.encoder.mixer {
            for r in [&mut m.forward, &mut m.backward] {
                out.push(&mut r.input.data);
                out.push(&mut r.recurrent.data);
                out.push(&mut r.bias);
            }
        }
        out.push(&mut self.kernel.weight.data);
        out.push(&mut self.kernel.bias);
        for h in &mut self.taggers.heads {
            out.push(&mut h.weight.data);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Parameters belonging to the token encoder.
    pub fn encoder_parameter_count(&self) -> usize {
        self.tensors().iter().filter(|(n, _)| n.starts_with("encoder.")).map(|(_, t)| t.len()).sum()
    }

    /// `self += other · scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: F) {
        let src: Vec<Vec<F>> = other.tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * scale;
            }
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors().into_iter().find(|(_, t)| t.iter().any(|v| !v.is_finite())).map(|(n, _)| n)
    }
}
