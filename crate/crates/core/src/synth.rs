//! Seeded generators of synthetic test data.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::codec::is_lossless;
use crate::error::Result;
use crate::types::{
    HandshakingTagging, LinkKind, LinkTag, RelationId, RelationSchema, SentenceAnnotation, TokenSpan, Triple,
};

/// Schema `r0, r1, …`.
pub fn schema(relations: usize) -> Result<RelationSchema> {
    RelationSchema::new((0..relations).map(|r| format!("r{r}")))
}

fn random_span<R: Rng>(rng: &mut R, n: usize, pool: &[TokenSpan]) -> TokenSpan {
    // sometimes nest inside an existing entity
    if let Some(outer) =
        pool.iter().filter(|s| s.len() > 1).collect::<Vec<_>>().choose(rng).filter(|_| rng.gen_bool(0.3))
    {
        let head = rng.gen_range(outer.head()..=outer.tail());
        let tail = rng.gen_range(head..=outer.tail());
        return TokenSpan::new(head, tail).expect("head <= tail");
    }
    let head = rng.gen_range(0..n);
    let tail = rng.gen_range(head..n.min(head + 3));
    TokenSpan::new(head, tail).expect("head <= tail")
}

/// Raw annotation: up to `max_triples` triples over a small entity pool, with nested
/// spans, shared entities and repeated entity pairs. It may conflict or be ambiguous.
pub fn random_annotation<R: Rng>(
    rng: &mut R,
    max_n: usize,
    relations: usize,
    max_triples: usize,
) -> Result<SentenceAnnotation> {
    let n = rng.gen_range(1..=max_n);
    let triples = random_triples(rng, n, relations, max_triples);
    SentenceAnnotation::from_tokens((0..n).map(|i| format!("w{i}")), triples)
}

fn random_triples<R: Rng>(rng: &mut R, n: usize, relations: usize, max_triples: usize) -> Vec<Triple> {
    let mut pool = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let s = random_span(rng, n, &pool);
        pool.push(s);
    }
    let mut triples: Vec<Triple> = Vec::new();
    for _ in 0..rng.gen_range(0..=max_triples) {
        let r = RelationId(rng.gen_range(0..relations));
        let t = match triples.choose(rng) {
            // same pair, new relation
            Some(prev) if rng.gen_bool(0.25) => Triple::new(prev.subject, r, prev.object),
            _ => {
                if rng.gen_bool(0.3) {
                    let s = random_span(rng, n, &pool);
                    pool.push(s);
                }
                Triple::new(*pool.choose(rng).expect("non-empty"), r, *pool.choose(rng).expect("non-empty"))
            }
        };
        triples.push(t);
    }
    triples
}

/// Keeps the triples of `ann` in order, skipping any whose addition would make the set
/// conflict or imply extra triples.
pub fn make_lossless(ann: &SentenceAnnotation, schema: &RelationSchema) -> Result<SentenceAnnotation> {
    let mut kept: Vec<Triple> = Vec::new();
    for &t in ann.triples() {
        kept.push(t);
        let trial = SentenceAnnotation::new(ann.text.clone(), ann.tokens.clone(), kept.iter().copied())?;
        if !is_lossless(&trial, schema)? {
            kept.pop();
        }
    }
    SentenceAnnotation::new(ann.text.clone(), ann.tokens.clone(), kept)
}

/// Annotation whose tagging decodes back to exactly its triples.
pub fn lossless_annotation<R: Rng>(
    rng: &mut R,
    max_n: usize,
    schema: &RelationSchema,
    max_triples: usize,
) -> Result<SentenceAnnotation> {
    make_lossless(&random_annotation(rng, max_n, schema.len(), max_triples)?, schema)
}

/// Arbitrary tagging: each cell independently non-zero with probability `density`.
/// With `reversed_entities`, EH-to-ET cells may also carry tag 2.
pub fn random_tagging<R: Rng>(
    rng: &mut R,
    n: usize,
    relations: usize,
    density: f64,
    reversed_entities: bool,
) -> Result<HandshakingTagging> {
    let mut tagging = HandshakingTagging::zeros(n, relations)?;
    let pick = |rng: &mut R, allow_two: bool| {
        if !rng.gen_bool(density) {
            LinkTag::None
        } else if allow_two && rng.gen_bool(0.5) {
            LinkTag::Reversed
        } else {
            LinkTag::Forward
        }
    };
    for i in 0..n {
        for j in i..n {
            let t = pick(rng, reversed_entities);
            tagging.set(LinkKind::EntityHeadToTail, RelationId(0), i, j, t)?;
            for r in 0..relations {
                for kind in [LinkKind::SubjectHeadToObjectHead, LinkKind::SubjectTailToObjectTail] {
                    let t = pick(rng, true);
                    tagging.set(kind, RelationId(r), i, j, t)?;
                }
            }
        }
    }
    Ok(tagging)
}

/// Small corpus for overfitting checks: `size` sentences of 4 to 9 tokens drawn from a
/// 40-word vocabulary, each with one to three lossless triples.
pub fn learnable_corpus<R: Rng>(rng: &mut R, size: usize, schema: &RelationSchema) -> Result<Vec<SentenceAnnotation>> {
    corpus(rng, size, 4..=9, 40, schema, 3)
}

/// Benchmark corpus: `size` sentences of up to `max_n` tokens.
pub fn bench_corpus<R: Rng>(
    rng: &mut R,
    size: usize,
    max_n: usize,
    schema: &RelationSchema,
) -> Result<Vec<SentenceAnnotation>> {
    corpus(rng, size, 1..=max_n, 500, schema, 4)
}

fn corpus<R: Rng>(
    rng: &mut R,
    size: usize,
    lengths: std::ops::RangeInclusive<usize>,
    vocab: usize,
    schema: &RelationSchema,
    max_triples: usize,
) -> Result<Vec<SentenceAnnotation>> {
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let n = rng.gen_range(lengths.clone());
        let tokens: Vec<String> = (0..n).map(|_| format!("tok{}", rng.gen_range(0..vocab))).collect();
        let triples = random_triples(rng, n, schema.len(), max_triples);
        let ann = make_lossless(&SentenceAnnotation::new(tokens.join(" "), tokens.clone(), triples)?, schema)?;
        if !ann.triples().is_empty() || max_triples == 0 {
            out.push(ann);
        }
    }
    Ok(out)
}
