//! Tag sequences → triple set.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::codec::{fold, IndexMap};
use crate::error::{Error, Result};
use crate::types::{seq_length, HandshakingTagging, LinkTag, Mode, RelationSchema, TokenSpan, Triple};

/// Entity spans grouped by head position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeadEntityIndex {
    by_head: BTreeMap<usize, BTreeSet<TokenSpan>>,
}

impl HeadEntityIndex {
    pub fn insert(&mut self, span: TokenSpan) {
        self.by_head.entry(span.head()).or_default().insert(span);
    }

    /// Spans starting at `head`; empty when none.
    pub fn starting_at(&self, head: usize) -> impl Iterator<Item = &TokenSpan> {
        self.by_head.get(&head).into_iter().flatten()
    }

    pub fn heads(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_head.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.by_head.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_head.is_empty()
    }
}

/// (subject tail, object tail) pairs linked under one relation.
pub type TailPairSet = HashSet<(usize, usize)>;

/// Entities recovered from an EH-to-ET sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Entities {
    pub spans: BTreeSet<TokenSpan>,
    pub index: HeadEntityIndex,
    /// Tag-2 cells skipped in lenient mode.
    pub ignored_reversed: usize,
}

/// Collects every span `(i, j)` whose EH-to-ET cell is 1.
pub fn extract_entities(eh2et: &[LinkTag], n: usize, mode: Mode) -> Result<Entities> {
    let map = IndexMap::new(n)?;
    extract_with_map(eh2et, &map, mode)
}

fn extract_with_map(eh2et: &[LinkTag], map: &IndexMap, mode: Mode) -> Result<Entities> {
    if eh2et.len() != map.len() {
        return Err(Error::InvalidInput(format!("EH-to-ET sequence of length {} for n = {}", eh2et.len(), map.n())));
    }
    let mut out = Entities::default();
    for (k, tag) in eh2et.iter().enumerate() {
        match tag {
            LinkTag::None => {}
            LinkTag::Forward => {
                let (i, j) = map.pairs()[k];
                let span = TokenSpan::new(i, j)?;
                out.spans.insert(span);
                out.index.insert(span);
            }
            LinkTag::Reversed => match mode {
                Mode::Strict => {
                    return Err(Error::CorruptTagging(format!("tag 2 in EH-to-ET at flat index {k}")));
                }
                Mode::Lenient => out.ignored_reversed += 1,
            },
        }
    }
    Ok(out)
}

/// Work counters of one decoding call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Sequence cells read.
    pub cells_visited: usize,
    /// (subject, object) candidates tested against the tail-pair set.
    pub candidate_checks: usize,
    pub ignored_reversed: usize,
}

/// Decodes a tagging in strict mode.
pub fn decode(tagging: &HandshakingTagging, schema: &RelationSchema) -> Result<BTreeSet<Triple>> {
    decode_with_stats(tagging, schema, Mode::Strict).map(|(t, _)| t)
}

/// Decodes a tagging; lenient mode treats tag 2 in EH-to-ET as 0.
pub fn decode_with_mode(tagging: &HandshakingTagging, schema: &RelationSchema, mode: Mode) -> Result<BTreeSet<Triple>> {
    decode_with_stats(tagging, schema, mode).map(|(t, _)| t)
}

pub fn decode_with_stats(
    tagging: &HandshakingTagging,
    schema: &RelationSchema,
    mode: Mode,
) -> Result<(BTreeSet<Triple>, DecodeStats)> {
    check_shape(tagging, schema)?;
    let map = IndexMap::new(tagging.n())?;
    let entities = extract_with_map(tagging.eh2et(), &map, mode)?;
    let mut stats =
        DecodeStats { cells_visited: map.len(), candidate_checks: 0, ignored_reversed: entities.ignored_reversed };
    let index = &entities.index;
    let mut triples = BTreeSet::new();

    for r in schema.ids() {
        let mut tails = TailPairSet::new();
        for (k, tag) in tagging.st2ot(r).iter().enumerate() {
            let (i, j) = map.pairs()[k];
            match tag {
                LinkTag::None => {}
                LinkTag::Forward => {
                    tails.insert((i, j));
                }
                LinkTag::Reversed => {
                    tails.insert((j, i));
                }
            }
        }
        stats.cells_visited += map.len();

        for (k, tag) in tagging.sh2oh(r).iter().enumerate() {
            let (i, j) = map.pairs()[k];
            // objects are looked up by the object-head position
            let (subject_head, object_head) = match tag {
                LinkTag::None => continue,
                LinkTag::Forward => (i, j),
                LinkTag::Reversed => (j, i),
            };
            for s in index.starting_at(subject_head) {
                for o in index.starting_at(object_head) {
                    stats.candidate_checks += 1;
                    if tails.contains(&(s.tail(), o.tail())) {
                        triples.insert(Triple::new(*s, r, *o));
                    }
                }
            }
        }
        stats.cells_visited += map.len();
    }
    Ok((triples, stats))
}

fn check_shape(tagging: &HandshakingTagging, schema: &RelationSchema) -> Result<()> {
    if tagging.relations() != schema.len() {
        return Err(Error::InvalidInput(format!(
            "tagging has {} relations, schema {}",
            tagging.relations(),
            schema.len()
        )));
    }
    let len = seq_length(tagging.n())?;
    if tagging.sequences().any(|s| s.len() != len) {
        return Err(Error::InvalidInput(format!("sequence length differs from {len}")));
    }
    Ok(())
}

/// Whether `seq` carries a link `from → to`. A diagonal cell has no direction, so any
/// non-zero tag links it.
fn links(seq: &[LinkTag], map: &IndexMap, from: usize, to: usize) -> bool {
    let ((i, j), want) = fold(from, to);
    let got = seq[map.flat(i, j).expect("pair within sentence")];
    if i == j {
        got.is_link()
    } else {
        got == want
    }
}

/// Brute-force reference decoder: tests every (entity, relation, entity) combination.
pub fn decode_oracle(tagging: &HandshakingTagging, schema: &RelationSchema, mode: Mode) -> Result<BTreeSet<Triple>> {
    check_shape(tagging, schema)?;
    let map = IndexMap::new(tagging.n())?;
    let entities = extract_with_map(tagging.eh2et(), &map, mode)?;
    let mut out = BTreeSet::new();
    for s in &entities.spans {
        for o in &entities.spans {
            for r in schema.ids() {
                if links(tagging.sh2oh(r), &map, s.head(), o.head())
                    && links(tagging.st2ot(r), &map, s.tail(), o.tail())
                {
                    out.insert(Triple::new(*s, r, *o));
                }
            }
        }
    }
    Ok(out)
}
