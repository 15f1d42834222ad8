use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::HandshakingTagging;

use super::forward::{forward, loss, Forward, OpCounter, PROB_FLOOR};
use super::params::{Matrix, ModelParams, Recurrence};

/// One training example: token ids and gold tagging.
#[derive(Debug, Clone)]
pub struct Example {
    pub ids: Vec<usize>,
    pub gold: HandshakingTagging,
}

/// Backprop through one direction of the mixer. `order` is the direction the states were computed in.
fn recurrence_backward<F: Scalar>(
    rec: &Recurrence<F>,
    grad: &mut Recurrence<F>,
    order: &[usize],
    states: &[Vec<F>],
    inputs: &dyn Fn(usize) -> Vec<F>,
    d_states: &[Vec<F>],
    d_inputs: &mut [Vec<F>],
) {
    let k = rec.hidden();
    let mut carry = vec![F::zero(); k];
    for (step, &t) in order.iter().enumerate().rev() {
        let da: Vec<F> = (0..k)
            .map(|r| {
                let s = states[t][r];
                (d_states[t][r] + carry[r]) * (F::one() - s * s)
            })
            .collect();
        let x = inputs(t);
        grad.input.outer_acc(&da, &x);
        for (b, &d) in grad.bias.iter_mut().zip(&da) {
            *b += d;
        }
        if step > 0 {
            grad.recurrent.outer_acc(&da, &states[order[step - 1]]);
        }
        rec.input.t_matvec_acc(&da, &mut d_inputs[t]);
        carry.iter_mut().for_each(|c| *c = F::zero());
        rec.recurrent.t_matvec_acc(&da, &mut carry);
    }
}

/// Gradient of one sentence's loss, accumulated into `grad` with weight `scale`.
fn sentence_backward<F: Scalar>(
    params: &ModelParams<F>,
    fw: &Forward<F>,
    gold: &HandshakingTagging,
    scale: F,
    grad: &mut ModelParams<F>,
) {
    let len = fw.map.len();
    let p = params.kernel.pair_dim();
    let e = params.encoder.output_dim();
    let cells = F::of((fw.dist.slots * len) as f64);
    let floor = F::of(PROB_FLOOR);
    let w = scale / cells;

    // taggers
    let mut d_pairs = vec![F::zero(); len * p];
    for (slot, seq) in gold.sequences().enumerate() {
        let head = &params.taggers.heads[slot];
        let g_head = &mut grad.taggers.heads[slot];
        for (k, tag) in seq.iter().enumerate() {
            let probs = fw.dist.probs[slot * len + k];
            let gi = tag.index();
            if probs[gi] < floor {
                continue;
            }
            let mut dz = [F::zero(); 3];
            for c in 0..3 {
                let target = if c == gi { F::one() } else { F::zero() };
                dz[c] = (probs[c] - target) * w;
            }
            let pair = &fw.pairs[k * p..(k + 1) * p];
            g_head.weight.outer_acc(&dz, pair);
            for (b, d) in g_head.bias.iter_mut().zip(&dz) {
                *b += *d;
            }
            head.weight.t_matvec_acc(&dz, &mut d_pairs[k * p..(k + 1) * p]);
        }
    }

    // kernel, via per-token sums of the pre-activation gradient
    let n = fw.map.n();
    let mut d_left = vec![vec![F::zero(); p]; n];
    let mut d_right = vec![vec![F::zero(); p]; n];
    for (k, &(i, j)) in fw.map.pairs().iter().enumerate() {
        let pair = &fw.pairs[k * p..(k + 1) * p];
        for (r, (&h, &d)) in pair.iter().zip(&d_pairs[k * p..(k + 1) * p]).enumerate() {
            let dpre = d * (F::one() - h * h);
            d_left[i][r] += dpre;
            d_right[j][r] += dpre;
            grad.kernel.bias[r] += dpre;
        }
    }
    let mut d_hidden = vec![vec![F::zero(); e]; n];
    for t in 0..n {
        let h = &fw.encoder.hidden[t];
        for (lo, d) in [(0, &d_left[t]), (e, &d_right[t])] {
            for (r, &dr) in d.iter().enumerate() {
                if dr == F::zero() {
                    continue;
                }
                let g_row = &mut grad.kernel.weight.row_mut(r)[lo..lo + e];
                for (g, &hv) in g_row.iter_mut().zip(h) {
                    *g += dr * hv;
                }
                let w_row = &params.kernel.weight.row(r)[lo..lo + e];
                for (dh, &w) in d_hidden[t].iter_mut().zip(w_row) {
                    *dh += dr * w;
                }
            }
        }
    }

    // encoder
    let ids = &fw.encoder.ids;
    let embed_grad = |g: &mut Matrix<F>, t: usize, d: &[F]| {
        for (w, &v) in g.row_mut(ids[t]).iter_mut().zip(d) {
            *w += v;
        }
    };
    match (&params.encoder.mixer, &mut grad.encoder.mixer) {
        (Some(mixer), Some(g_mixer)) => {
            let kf = mixer.forward.hidden();
            let embed = |t: usize| params.encoder.embedding.row(ids[t]).to_vec();
            let d_fwd: Vec<Vec<F>> = d_hidden.iter().map(|d| d[..kf].to_vec()).collect();
            let d_bwd: Vec<Vec<F>> = d_hidden.iter().map(|d| d[kf..].to_vec()).collect();
            let mut d_x = vec![vec![F::zero(); params.encoder.embed_dim()]; n];
            let up: Vec<usize> = (0..n).collect();
            let down: Vec<usize> = (0..n).rev().collect();
            recurrence_backward(
                &mixer.forward,
                &mut g_mixer.forward,
                &up,
                &fw.encoder.forward_states,
                &embed,
                &d_fwd,
                &mut d_x,
            );
            recurrence_backward(
                &mixer.backward,
                &mut g_mixer.backward,
                &down,
                &fw.encoder.backward_states,
                &embed,
                &d_bwd,
                &mut d_x,
            );
            for (t, d) in d_x.iter().enumerate() {
                embed_grad(&mut grad.encoder.embedding, t, d);
            }
        }
        _ => {
            for (t, d) in d_hidden.iter().enumerate() {
                embed_grad(&mut grad.encoder.embedding, t, d);
            }
        }
    }
}

/// Loss and gradient of one sentence.
pub fn sentence_gradient<F: Scalar>(params: &ModelParams<F>, example: &Example) -> Result<(F, ModelParams<F>)> {
    let fw = forward(params, &example.ids, &mut OpCounter::default())?;
    let l = loss(&fw.dist, &example.gold)?;
    let mut grad = params.zeros_like();
    sentence_backward(params, &fw, &example.gold, F::one(), &mut grad);
    Ok((l, grad))
}

/// Mean loss over the batch and its gradient. Sentences run in parallel; the reduction order is fixed.
pub fn batch_gradient<F: Scalar>(params: &ModelParams<F>, batch: &[Example]) -> Result<(F, ModelParams<F>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let parts: Vec<(F, ModelParams<F>)> =
        batch.par_iter().map(|ex| sentence_gradient(params, ex)).collect::<Result<_>>()?;
    let scale = F::one() / F::of(batch.len() as f64);
    let mut total = F::zero();
    let mut grad = params.zeros_like();
    for (l, g) in &parts {
        total += *l;
        grad.add_scaled(g, scale);
    }
    let mean = total * scale;
    if !mean.is_finite() {
        return Err(Error::Numeric { tensor: "loss".into() });
    }
    if let Some(t) = grad.first_non_finite() {
        return Err(Error::Numeric { tensor: format!("grad.{t}") });
    }
    Ok((mean, grad))
}

/// Mean loss over the batch without gradients.
pub fn batch_loss<F: Scalar>(params: &ModelParams<F>, batch: &[Example]) -> Result<F> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let losses: Vec<F> = batch
        .par_iter()
        .map(|ex| loss(&forward(params, &ex.ids, &mut OpCounter::default())?.dist, &ex.gold))
        .collect::<Result<_>>()?;
    Ok(losses.into_iter().sum::<F>() / F::of(batch.len() as f64))
}
