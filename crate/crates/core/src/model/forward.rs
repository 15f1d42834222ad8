use crate::codec::IndexMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{HandshakingTagging, LinkTag, RelationId};

use super::params::{dot, EncoderParams, KernelParams, ModelParams, Recurrence, TaggerParams};

/// Probability floor inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Which of the 2N+1 taggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaggerId {
    EntityHeadToTail,
    SubjectHeadToObjectHead(RelationId),
    SubjectTailToObjectTail(RelationId),
}

impl TaggerId {
    /// Slot index: 0, then `1..=N`, then `N+1..=2N`. Matches [`HandshakingTagging::sequence`].
    pub fn slot(self, relations: usize) -> Result<usize> {
        let check = |r: RelationId| {
            if r.0 < relations {
                Ok(r.0)
            } else {
                Err(Error::InvalidInput(format!("no tagger for relation {} of {relations}", r.0)))
            }
        };
        Ok(match self {
            TaggerId::EntityHeadToTail => 0,
            TaggerId::SubjectHeadToObjectHead(r) => 1 + check(r)?,
            TaggerId::SubjectTailToObjectTail(r) => 1 + relations + check(r)?,
        })
    }
}

/// Per-call operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub encoder_calls: usize,
    pub kernel_calls: usize,
    pub tagger_calls: usize,
}

/// Intermediate encoder state kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct EncoderCache<F> {
    pub ids: Vec<usize>,
    pub forward_states: Vec<Vec<F>>,
    pub backward_states: Vec<Vec<F>>,
    pub hidden: Vec<Vec<F>>,
}

fn run_recurrence<F: Scalar>(
    rec: &Recurrence<F>,
    inputs: impl Iterator<Item = usize>,
    x: impl Fn(usize) -> Vec<F>,
    states: &mut [Vec<F>],
) {
    let k = rec.hidden();
    let mut prev = vec![F::zero(); k];
    let mut buf = vec![F::zero(); k];
    for t in inputs {
        rec.input.affine_into(&x(t), &rec.bias, &mut buf);
        for (r, b) in buf.iter_mut().enumerate() {
            *b = (*b + dot(rec.recurrent.row(r), &prev)).tanh();
        }
        states[t] = buf.clone();
        prev.copy_from_slice(&buf);
    }
}

pub(crate) fn encode_ids<F: Scalar>(params: &EncoderParams<F>, ids: &[usize]) -> Result<EncoderCache<F>> {
    if ids.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty token list".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= params.embedding.rows) {
        return Err(Error::InvalidInput(format!("token id {bad} outside vocabulary of {}", params.embedding.rows)));
    }
    let n = ids.len();
    let embed = |t: usize| params.embedding.row(ids[t]).to_vec();
    match &params.mixer {
        None => Ok(EncoderCache {
            ids: ids.to_vec(),
            forward_states: Vec::new(),
            backward_states: Vec::new(),
            hidden: (0..n).map(embed).collect(),
        }),
        Some(mixer) => {
            let mut fwd = vec![Vec::new(); n];
            let mut bwd = vec![Vec::new(); n];
            run_recurrence(&mixer.forward, 0..n, embed, &mut fwd);
            run_recurrence(&mixer.backward, (0..n).rev(), embed, &mut bwd);
            let hidden = fwd.iter().zip(&bwd).map(|(f, b)| f.iter().chain(b).copied().collect()).collect();
            Ok(EncoderCache { ids: ids.to_vec(), forward_states: fwd, backward_states: bwd, hidden })
        }
    }
}

/// Contextual vectors `h_1..h_n` for a token sequence; unknown tokens map to id 0.
pub fn encode_tokens<F: Scalar, S: AsRef<str>>(tokens: &[S], params: &EncoderParams<F>) -> Result<Vec<Vec<F>>> {
    let ids = params.vocab.ids(tokens);
    Ok(encode_ids(params, &ids)?.hidden)
}

/// `tanh(W [h_i; h_j] + b)`.
pub fn handshaking_kernel<F: Scalar>(h_i: &[F], h_j: &[F], params: &KernelParams<F>) -> Result<Vec<F>> {
    let d = params.input_dim();
    if h_i.len() != d || h_j.len() != d || params.weight.cols != 2 * d {
        return Err(Error::Shape(format!("kernel expects two {d}-dim vectors, got {} and {}", h_i.len(), h_j.len())));
    }
    let mut out = vec![F::zero(); params.pair_dim()];
    kernel_into(h_i, h_j, params, &mut out);
    Ok(out)
}

#[inline]
fn kernel_into<F: Scalar>(h_i: &[F], h_j: &[F], params: &KernelParams<F>, out: &mut [F]) {
    let d = h_i.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = params.weight.row(r);
        *o = (params.bias[r] + dot(&row[..d], h_i) + dot(&row[d..], h_j)).tanh();
    }
}

#[inline]
pub(crate) fn softmax3<F: Scalar>(z: [F; 3]) -> [F; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

#[inline]
fn logits<F: Scalar>(pair: &[F], head: &super::params::TaggerHead<F>) -> [F; 3] {
    [
        head.bias[0] + dot(head.weight.row(0), pair),
        head.bias[1] + dot(head.weight.row(1), pair),
        head.bias[2] + dot(head.weight.row(2), pair),
    ]
}

/// `softmax(W_o · h_ij + b_o)` for one tagger.
pub fn tag_distribution<F: Scalar>(pair: &[F], taggers: &TaggerParams<F>, tagger: TaggerId) -> Result<[F; 3]> {
    let head = &taggers.heads[tagger.slot(taggers.relations())?];
    if pair.len() != head.weight.cols {
        return Err(Error::Shape(format!("pair vector of dim {} for head of dim {}", pair.len(), head.weight.cols)));
    }
    Ok(softmax3(logits(pair, head)))
}

/// Argmax label; ties go to the smaller label.
pub fn argmax_tag<F: Scalar>(p: &[F; 3]) -> LinkTag {
    let mut best = 0;
    for c in 1..3 {
        if p[c] > p[best] {
            best = c;
        }
    }
    LinkTag::from_index(best)
}

pub fn predict_link<F: Scalar>(pair: &[F], taggers: &TaggerParams<F>, tagger: TaggerId) -> Result<LinkTag> {
    Ok(argmax_tag(&tag_distribution(pair, taggers, tagger)?))
}

/// Tag distributions of every (tagger, pair) cell of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistributions<F> {
    pub n: usize,
    pub slots: usize,
    /// Tagger-major: `probs[slot * seq_len + k]`.
    pub probs: Vec<[F; 3]>,
}

impl<F: Scalar> PairDistributions<F> {
    pub fn seq_len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn get(&self, slot: usize, k: usize) -> [F; 3] {
        self.probs[slot * self.seq_len() + k]
    }

    /// Argmax tagging.
    pub fn predicted(&self) -> Result<HandshakingTagging> {
        let len = self.seq_len();
        let rel = (self.slots - 1) / 2;
        let seq = |slot: usize| (0..len).map(|k| argmax_tag(&self.get(slot, k))).collect::<Vec<_>>();
        HandshakingTagging::from_parts(
            self.n,
            seq(0),
            (0..rel).map(|r| seq(1 + r)).collect(),
            (0..rel).map(|r| seq(1 + rel + r)).collect(),
        )
    }
}

/// Mean negative log-likelihood of the gold tag over every (pair, tagger) cell.
pub fn loss<F: Scalar>(dist: &PairDistributions<F>, gold: &HandshakingTagging) -> Result<F> {
    let len = dist.seq_len();
    if gold.n() != dist.n || gold.sequence_count() != dist.slots || dist.probs.len() != dist.slots * len {
        return Err(Error::Shape(format!(
            "distributions for n = {}, {} taggers; gold n = {}, {} sequences",
            dist.n,
            dist.slots,
            gold.n(),
            gold.sequence_count()
        )));
    }
    let floor = F::of(PROB_FLOOR);
    let mut total = F::zero();
    for (slot, seq) in gold.sequences().enumerate() {
        for (k, tag) in seq.iter().enumerate() {
            total -= dist.probs[slot * len + k][tag.index()].max(floor).ln();
        }
    }
    Ok(total / F::of((dist.slots * len) as f64))
}

/// Per-token halves of the kernel's affine map: `W[:, :e]·h_t` and `W[:, e:]·h_t`.
fn kernel_projections<F: Scalar>(hidden: &[Vec<F>], params: &KernelParams<F>, e: usize) -> (Vec<Vec<F>>, Vec<Vec<F>>) {
    let p = params.pair_dim();
    let project = |h: &[F], lo: usize| (0..p).map(|r| dot(&params.weight.row(r)[lo..lo + e], h)).collect::<Vec<F>>();
    (hidden.iter().map(|h| project(h, 0)).collect(), hidden.iter().map(|h| project(h, e)).collect())
}

/// Full forward pass for one sentence, keeping what backpropagation needs.
#[derive(Debug, Clone)]
pub(crate) struct Forward<F> {
    pub encoder: EncoderCache<F>,
    pub map: IndexMap,
    /// `seq_len × pair_dim`, flat.
    pub pairs: Vec<F>,
    pub dist: PairDistributions<F>,
}

pub(crate) fn forward<F: Scalar>(
    params: &ModelParams<F>,
    ids: &[usize],
    counter: &mut OpCounter,
) -> Result<Forward<F>> {
    let encoder = encode_ids(&params.encoder, ids)?;
    counter.encoder_calls += 1;
    let n = ids.len();
    let map = IndexMap::new(n)?;
    let len = map.len();
    let p = params.kernel.pair_dim();
    if params.kernel.input_dim() != params.encoder.output_dim() {
        return Err(Error::Shape("kernel input does not match encoder output".into()));
    }
    let e = params.encoder.output_dim();
    let (left, right) = kernel_projections(&encoder.hidden, &params.kernel, e);
    let mut pairs = vec![F::zero(); len * p];
    for (k, &(i, j)) in map.pairs().iter().enumerate() {
        let out = &mut pairs[k * p..(k + 1) * p];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (params.kernel.bias[r] + left[i][r] + right[j][r]).tanh();
        }
    }
    counter.kernel_calls += len;
    let slots = params.taggers.heads.len();
    let mut probs = Vec::with_capacity(slots * len);
    for head in &params.taggers.heads {
        for k in 0..len {
            probs.push(softmax3(logits(&pairs[k * p..(k + 1) * p], head)));
        }
    }
    counter.tagger_calls += slots * len;
    Ok(Forward { encoder, map, pairs, dist: PairDistributions { n, slots, probs } })
}

/// Tag distributions for a token-id sequence.
pub fn distributions<F: Scalar>(params: &ModelParams<F>, ids: &[usize]) -> Result<PairDistributions<F>> {
    Ok(forward(params, ids, &mut OpCounter::default())?.dist)
}

/// Loss of one sentence under `params`; the objective the gradient differentiates.
pub fn sentence_loss<F: Scalar>(params: &ModelParams<F>, ids: &[usize], gold: &HandshakingTagging) -> Result<F> {
    loss(&distributions(params, ids)?, gold)
}
