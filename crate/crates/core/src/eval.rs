//! Micro precision / recall / F1 under partial and exact matching, subset breakdowns,
//! and the inference timing benchmark.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{bucket, classify_overlap, BUCKETS};
use crate::error::{Error, Result};
use crate::model::{infer_batch, ModelParams};
use crate::scalar::Scalar;
use crate::types::{Mode, RelationSchema, SentenceAnnotation, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Relation plus the head tokens of subject and object.
    Partial,
    #[default]
    Exact,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Partial => "partial",
            MatchMode::Exact => "exact",
        })
    }
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial" => Ok(MatchMode::Partial),
            "exact" => Ok(MatchMode::Exact),
            other => Err(Error::InvalidInput(format!("unknown match mode {other:?}"))),
        }
    }
}

pub fn match_partial(pred: &Triple, gold: &Triple) -> bool {
    pred.relation == gold.relation
        && pred.subject.head() == gold.subject.head()
        && pred.object.head() == gold.object.head()
}

pub fn match_exact(pred: &Triple, gold: &Triple) -> bool {
    pred == gold
}

pub fn matches(mode: MatchMode, pred: &Triple, gold: &Triple) -> bool {
    match mode {
        MatchMode::Partial => match_partial(pred, gold),
        MatchMode::Exact => match_exact(pred, gold),
    }
}

/// Pooled counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.predicted += o.predicted;
        self.gold += o.gold;
        self.correct += o.correct;
    }
}

/// Counts for one sentence. Duplicates are dropped first; each gold triple matches at most
/// one prediction. Greedy pairing is optimal because both match relations partition
/// triples into equivalence classes.
pub fn sentence_counts(pred: &[Triple], gold: &[Triple], mode: MatchMode) -> Counts {
    let pred: BTreeSet<Triple> = pred.iter().copied().collect();
    let gold: Vec<Triple> = gold.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut used = vec![false; gold.len()];
    let mut correct = 0;
    for p in &pred {
        if let Some(k) = (0..gold.len()).find(|&k| !used[k] && matches(mode, p, &gold[k])) {
            used[k] = true;
            correct += 1;
        }
    }
    Counts { predicted: pred.len(), gold: gold.len(), correct }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

impl Prf {
    /// Scores pooled counts. With nothing predicted and nothing gold, every metric is 1.
    pub fn from_counts(counts: Counts) -> Self {
        if counts.predicted == 0 && counts.gold == 0 {
            warn!("no gold and no predicted triples; scoring as perfect");
            return Self { precision: 1.0, recall: 1.0, f1: 1.0, counts };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(counts.correct, counts.predicted);
        let recall = ratio(counts.correct, counts.gold);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1, counts }
    }
}

fn check_aligned(pred: usize, gold: usize) -> Result<()> {
    if pred != gold {
        return Err(Error::InvalidInput(format!("{pred} prediction lists for {gold} gold lists")));
    }
    Ok(())
}

/// Micro scores: counts pooled over every sentence.
pub fn micro_prf<P: AsRef<[Triple]>, G: AsRef<[Triple]>>(preds: &[P], golds: &[G], mode: MatchMode) -> Result<Prf> {
    check_aligned(preds.len(), golds.len())?;
    let mut total = Counts::default();
    for (p, g) in preds.iter().zip(golds) {
        total += sentence_counts(p.as_ref(), g.as_ref(), mode);
    }
    Ok(Prf::from_counts(total))
}

/// Scores of one pattern or bucket subset; `None` when the subset is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetRow {
    pub label: String,
    pub sentences: usize,
    pub score: Option<Prf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: MatchMode,
    pub overall: Prf,
    pub patterns: Vec<SubsetRow>,
    pub buckets: Vec<SubsetRow>,
}

/// Overall micro scores plus scores on each overlap pattern and triplet-count subset.
/// Sentences without gold triples count only toward the overall score.
pub fn subset_report<P: AsRef<[Triple]>>(
    preds: &[P],
    annotations: &[SentenceAnnotation],
    mode: MatchMode,
) -> Result<EvalReport> {
    check_aligned(preds.len(), annotations.len())?;
    let mut overall = Counts::default();
    let mut pattern = [(0usize, Counts::default()); 3];
    let mut buckets = [(0usize, Counts::default()); 5];
    for (p, ann) in preds.iter().zip(annotations) {
        let c = sentence_counts(p.as_ref(), ann.triples(), mode);
        overall += c;
        if let Ok(pat) = classify_overlap(ann) {
            for (slot, on) in [pat.normal, pat.seo, pat.epo].into_iter().enumerate() {
                if on {
                    pattern[slot].0 += 1;
                    pattern[slot].1 += c;
                }
            }
        }
        if let Some(b) = bucket(ann.triples().len()) {
            buckets[b].0 += 1;
            buckets[b].1 += c;
        }
    }
    let rows = |labels: &[&str], cells: &[(usize, Counts)]| {
        labels
            .iter()
            .zip(cells)
            .map(|(l, &(n, c))| SubsetRow {
                label: l.to_string(),
                sentences: n,
                score: (n > 0).then(|| Prf::from_counts(c)),
            })
            .collect()
    };
    Ok(EvalReport {
        mode,
        overall: Prf::from_counts(overall),
        patterns: rows(&["Normal", "SEO", "EPO"], &pattern),
        buckets: rows(&BUCKETS, &buckets),
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        writeln!(f, "match: {}", self.mode)?;
        writeln!(f, "{:<8}{:>8}{:>8}{:>8}", "", "Prec.", "Rec.", "F1")?;
        let o = &self.overall;
        writeln!(f, "{:<8}{:>8}{:>8}{:>8}", "All", pct(o.precision), pct(o.recall), pct(o.f1))?;
        for row in self.patterns.iter().chain(&self.buckets) {
            let f1 = row.score.map_or_else(|| "-".to_string(), |s| pct(s.f1));
            writeln!(f, "{:<8}{:>24}", row.label, f1)?;
        }
        write!(f, "counts: predicted {}, gold {}, correct {}", o.counts.predicted, o.counts.gold, o.counts.correct)
    }
}

/// One timing figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub batch_size: usize,
    pub samples: usize,
    pub ms_per_sample: f64,
}

/// Parameter counts and per-sample latency, batched and one sentence at a time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub parameters: usize,
    pub encoder_parameters: usize,
    pub encoder_share: f64,
    pub warmup: usize,
    pub batched: Timing,
    pub single: Timing,
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16}{:>12}", "Params (all)", self.parameters)?;
        writeln!(f, "{:<16}{:>11.1}%", "Encoder share", 100.0 * self.encoder_share)?;
        writeln!(f, "{:<16}{:>12.4}  (batch {})", "ms/sample", self.batched.ms_per_sample, self.batched.batch_size)?;
        write!(f, "{:<16}{:>12.4}  (batch 1)", "ms/sample", self.single.ms_per_sample)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub batch_size: usize,
    /// Sentences processed before timing starts.
    pub warmup: usize,
    pub parallel: bool,
    pub mode: Mode,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { batch_size: 24, warmup: 8, parallel: false, mode: Mode::Lenient }
    }
}

fn time_pass<F: Scalar>(
    sentences: &[Vec<String>],
    params: &ModelParams<F>,
    schema: &RelationSchema,
    batch_size: usize,
    cfg: &BenchConfig,
) -> Result<(Timing, Vec<BTreeSet<Triple>>)> {
    let start = Instant::now();
    let mut out = Vec::with_capacity(sentences.len());
    for chunk in sentences.chunks(batch_size) {
        out.extend(infer_batch(chunk, params, schema, cfg.mode, cfg.parallel)?);
    }
    let ms = start.elapsed().as_secs_f64() * 1e3;
    // keep the mean strictly positive on coarse clocks
    let ms_per_sample = (ms / sentences.len() as f64).max(f64::MIN_POSITIVE);
    Ok((Timing { batch_size, samples: sentences.len(), ms_per_sample }, out))
}

/// Times inference over `sentences` batched and with batch size 1. Returns the report and
/// the batched predictions; a mismatch between the two passes is an error.
pub fn bench_inference<F: Scalar>(
    params: &ModelParams<F>,
    schema: &RelationSchema,
    sentences: &[Vec<String>],
    cfg: &BenchConfig,
) -> Result<(TimingReport, Vec<BTreeSet<Triple>>)> {
    if sentences.is_empty() {
        return Err(Error::InvalidInput("cannot benchmark an empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let warm = &sentences[..cfg.warmup.min(sentences.len())];
    infer_batch(warm, params, schema, cfg.mode, cfg.parallel)?;
    let (batched, preds) = time_pass(sentences, params, schema, cfg.batch_size, cfg)?;
    let (single, single_preds) = time_pass(sentences, params, schema, 1, cfg)?;
    if preds != single_preds {
        return Err(Error::InvalidInput("batched and single-sentence inference disagree".into()));
    }
    if batched.ms_per_sample > single.ms_per_sample {
        warn!(
            "batched inference ({:.4} ms/sample) slower than batch size 1 ({:.4} ms/sample)",
            batched.ms_per_sample, single.ms_per_sample
        );
    }
    let parameters = params.parameter_count();
    let encoder_parameters = params.encoder_parameter_count();
    Ok((
        TimingReport {
            parameters,
            encoder_parameters,
            encoder_share: encoder_parameters as f64 / parameters as f64,
            warmup: warm.len(),
            batched,
            single,
        },
        preds,
    ))
}
