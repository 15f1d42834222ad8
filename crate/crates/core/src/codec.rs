//! Annotation ⇄ handshaking tagging.
//!
//! Token pairs `(i, j)` with `i <= j` are flattened row-major over the upper triangle:
//! `(0,0), (0,1), …, (0,n-1), (1,1), …, (n-1,n-1)`. A link whose natural direction
//! `(row, col)` has `row > col` is folded onto the transposed cell with tag 2.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    seq_length, HandshakingTagging, LinkKind, LinkTag, Mode, RelationId, RelationSchema, SentenceAnnotation, Triple,
};

/// Flat index of pair `(i, j)` in a sentence of `n` tokens.
pub fn seq_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i > j || j >= n {
        return Err(Error::InvalidIndex(format!("pair ({i}, {j}) is not in the upper triangle of n = {n}")));
    }
    Ok(row_start(i, n) + (j - i))
}

#[inline]
fn row_start(i: usize, n: usize) -> usize {
    // i·n − i·(i−1)/2, written to stay in unsigned arithmetic at i = 0
    i * (2 * n + 1 - i) / 2
}

/// Pair `(i, j)` at flat index `k`; inverse of [`seq_index`].
pub fn matrix_index(k: usize, n: usize) -> Result<(usize, usize)> {
    let len = seq_length(n)?;
    if k >= len {
        return Err(Error::InvalidIndex(format!("flat index {k} outside [0, {len}) for n = {n}")));
    }
    // root of i² − (2n+1)·i + 2k = 0, corrected for rounding
    let b = (2 * n + 1) as f64;
    let est = ((b - (b * b - 8.0 * k as f64).max(0.0).sqrt()) / 2.0).floor() as usize;
    let mut i = est.min(n - 1);
    while row_start(i, n) > k {
        i -= 1;
    }
    while i + 1 < n && row_start(i + 1, n) <= k {
        i += 1;
    }
    Ok((i, i + (k - row_start(i, n))))
}

/// Precomputed flat-index ⇄ pair map for one sentence length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl IndexMap {
    pub fn new(n: usize) -> Result<Self> {
        let len = seq_length(n)?;
        let mut pairs = Vec::with_capacity(len);
        for i in 0..n {
            for j in i..n {
                pairs.push((i, j));
            }
        }
        Ok(Self { n, pairs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Flat index of `(i, j)`, `i <= j < n`.
    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> Result<usize> {
        seq_index(i, j, self.n)
    }

    #[inline]
    pub fn pair(&self, k: usize) -> Result<(usize, usize)> {
        self.pairs.get(k).copied().ok_or_else(|| {
            Error::InvalidIndex(format!("flat index {k} outside [0, {}) for n = {}", self.pairs.len(), self.n))
        })
    }

    /// Pairs in flat order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Upper-triangle cell and tag carrying a directed link `from → to`.
#[inline]
pub fn fold(from: usize, to: usize) -> ((usize, usize), LinkTag) {
    if from <= to {
        ((from, to), LinkTag::Forward)
    } else {
        ((to, from), LinkTag::Reversed)
    }
}

/// Two triples demanding different non-zero tags at the same cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EncodeConflict {
    pub kind: LinkKind,
    pub relation: RelationId,
    pub pair: (usize, usize),
    /// Tag written first, in triple input order.
    pub first: LinkTag,
    /// Contradicting tag demanded later.
    pub second: LinkTag,
}

/// Encoder output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub tagging: HandshakingTagging,
    /// Conflicts resolved by the lenient tie-break. Always empty in strict mode.
    pub conflicts: Vec<EncodeConflict>,
    /// Triples whose subject and object are the same span.
    pub self_relations: Vec<Triple>,
}

struct CellWriter {
    conflicts: BTreeMap<(LinkKind, RelationId, usize), EncodeConflict>,
}

impl CellWriter {
    fn write(&mut self, tagging: &mut HandshakingTagging, kind: LinkKind, r: RelationId, from: usize, to: usize) {
        let n = tagging.n();
        let (pair, tag) = fold(from, to);
        let k = row_start(pair.0, n) + (pair.1 - pair.0);
        let seq = tagging.sequence_mut(kind, r);
        let current = seq[k];
        if current == LinkTag::None {
            seq[k] = tag;
        } else if current != tag {
            self.conflicts.entry((kind, r, k)).or_insert(EncodeConflict {
                kind,
                relation: r,
                pair,
                first: current,
                second: tag,
            });
            // forward link wins
            seq[k] = LinkTag::Forward;
        }
    }
}

/// Encodes the gold triples of `ann` into its 2N+1 tag sequences.
///
/// In strict mode any conflicting cell fails the whole sentence with [`Error::Conflict`];
/// in lenient mode tag 1 wins over tag 2 and the conflicts are returned.
pub fn encode(ann: &SentenceAnnotation, schema: &RelationSchema, mode: Mode) -> Result<Encoded> {
    ann.validate(schema)?;
    let mut tagging = HandshakingTagging::zeros(ann.len(), schema.len())?;
    let mut writer = CellWriter { conflicts: BTreeMap::new() };

    for t in ann.triples() {
        for span in [t.subject, t.object] {
            writer.write(&mut tagging, LinkKind::EntityHeadToTail, RelationId(0), span.head(), span.tail());
        }
        writer.write(&mut tagging, LinkKind::SubjectHeadToObjectHead, t.relation, t.subject.head(), t.object.head());
        writer.write(&mut tagging, LinkKind::SubjectTailToObjectTail, t.relation, t.subject.tail(), t.object.tail());
    }

    let conflicts: Vec<EncodeConflict> = writer.conflicts.into_values().collect();
    let self_relations = ann.self_relations();
    if mode == Mode::Strict {
        if !conflicts.is_empty() {
            return Err(Error::Conflict(conflicts));
        }
        if !self_relations.is_empty() {
            log::warn!("{} triple(s) relate a span to itself", self_relations.len());
        }
    }
    Ok(Encoded { tagging, conflicts, self_relations })
}

/// Conflicts that strict encoding would reject; empty iff strict [`encode`] succeeds.
pub fn detect_conflicts(ann: &SentenceAnnotation, schema: &RelationSchema) -> Result<Vec<EncodeConflict>> {
    Ok(encode(ann, schema, Mode::Lenient)?.conflicts)
}

/// Triples that the tagging of `ann` implies beyond its gold set.
///
/// A tagging records, per relation, only which head pairs and which tail pairs are
/// linked. When two gold triples of one relation have entity spans that recombine (a
/// subject sharing one triple's head and another's tail, with a matching object), the
/// recombined triple is indistinguishable from gold. Such annotations cannot round-trip
/// even though no cell conflicts.
pub fn implied_extra_triples(ann: &SentenceAnnotation) -> BTreeSet<Triple> {
    let entities = ann.entities();
    let gold = ann.triple_set();
    // per relation: (subject head, object head) and (subject tail, object tail) pairs
    type Pairs = BTreeSet<(usize, usize)>;
    let mut by_relation: BTreeMap<RelationId, (Pairs, Pairs)> = BTreeMap::new();
    for t in ann.triples() {
        let (heads, tails) = by_relation.entry(t.relation).or_default();
        heads.insert((t.subject.head(), t.object.head()));
        tails.insert((t.subject.tail(), t.object.tail()));
    }
    let mut extra = BTreeSet::new();
    for (&r, (heads, tails)) in &by_relation {
        for &s in &entities {
            for &o in &entities {
                let t = Triple::new(s, r, o);
                if heads.contains(&(s.head(), o.head())) && tails.contains(&(s.tail(), o.tail())) && !gold.contains(&t)
                {
                    extra.insert(t);
                }
            }
        }
    }
    extra
}

/// True when strict encoding succeeds and decoding recovers exactly the gold triples.
pub fn is_lossless(ann: &SentenceAnnotation, schema: &RelationSchema) -> Result<bool> {
    Ok(detect_conflicts(ann, schema)?.is_empty() && implied_extra_triples(ann).is_empty())
}

/// Line format of a serialized tagging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaggingRecord {
    pub n: usize,
    pub relations: Vec<String>,
    pub eh2et: Vec<u8>,
    pub sh2oh: Vec<Vec<u8>>,
    pub st2ot: Vec<Vec<u8>>,
}

impl TaggingRecord {
    pub fn from_tagging(tagging: &HandshakingTagging, schema: &RelationSchema) -> Result<Self> {
        if tagging.relations() != schema.len() {
            return Err(Error::Schema(format!(
                "tagging has {} relations, schema {}",
                tagging.relations(),
                schema.len()
            )));
        }
        let bytes = |s: &[LinkTag]| s.iter().map(|t| *t as u8).collect::<Vec<u8>>();
        Ok(Self {
            n: tagging.n(),
            relations: schema.names().to_vec(),
            eh2et: bytes(tagging.eh2et()),
            sh2oh: tagging.sh2oh_all().iter().map(|s| bytes(s)).collect(),
            st2ot: tagging.st2ot_all().iter().map(|s| bytes(s)).collect(),
        })
    }

    /// Rebuilds the tagging and its schema. Strict mode rejects tag 2 in EH-to-ET.
    pub fn to_tagging(&self, mode: Mode) -> Result<(HandshakingTagging, RelationSchema)> {
        let schema = RelationSchema::new(self.relations.iter().cloned())?;
        if self.sh2oh.len() != schema.len() || self.st2ot.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} relations but {} SH-to-OH and {} ST-to-OT sequences",
                schema.len(),
                self.sh2oh.len(),
                self.st2ot.len()
            )));
        }
        let tags = |s: &[u8]| -> Result<Vec<LinkTag>> {
            s.iter()
                .map(|&v| LinkTag::from_u8(v).ok_or_else(|| Error::CorruptTagging(format!("tag value {v}"))))
                .collect()
        };
        let eh2et = tags(&self.eh2et)?;
        if mode == Mode::Strict {
            if let Some(k) = eh2et.iter().position(|t| *t == LinkTag::Reversed) {
                return Err(Error::CorruptTagging(format!("tag 2 in EH-to-ET at flat index {k}")));
            }
        }
        let sh2oh = self.sh2oh.iter().map(|s| tags(s)).collect::<Result<Vec<_>>>()?;
        let st2ot = self.st2ot.iter().map(|s| tags(s)).collect::<Result<Vec<_>>>()?;
        let tagging = HandshakingTagging::from_parts(self.n, eh2et, sh2oh, st2ot)?;
        Ok((tagging, schema))
    }
}

/// Serializes a tagging as one JSON line (no trailing newline).
pub fn tagging_to_json(tagging: &HandshakingTagging, schema: &RelationSchema) -> Result<String> {
    Ok(serde_json::to_string(&TaggingRecord::from_tagging(tagging, schema)?)?)
}

pub fn tagging_from_json(line: &str, mode: Mode) -> Result<(HandshakingTagging, RelationSchema)> {
    let record: TaggingRecord = serde_json::from_str(line)?;
    record.to_tagging(mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TokenSpan;

    fn span(h: usize, t: usize) -> TokenSpan {
        TokenSpan::new(h, t).unwrap()
    }

    // "New York City mayor De Blasio was born in New York"
    //   0    1    2     3    4    5     6   7   8  9   10
    fn mayor_sentence(triples: Vec<Triple>) -> SentenceAnnotation {
        SentenceAnnotation::from_tokens(
            ["New", "York", "City", "mayor", "De", "Blasio", "was", "born", "in", "New", "York"],
            triples,
        )
        .unwrap()
    }

    fn tag_at(seq: &[LinkTag], i: usize, j: usize, n: usize) -> LinkTag {
        seq[seq_index(i, j, n).unwrap()]
    }

    #[test]
    fn recombining_triples_are_not_lossless() {
        let schema = RelationSchema::new(["r", "q"]).unwrap();
        let (r, q) = (RelationId(0), RelationId(1));
        let ann = SentenceAnnotation::from_tokens(
            ["a", "b", "c", "d", "e"],
            [
                Triple::new(span(0, 0), r, span(3, 3)),
                Triple::new(span(1, 1), r, span(4, 4)),
                Triple::new(span(0, 1), q, span(3, 4)),
            ],
        )
        .unwrap();
        assert!(detect_conflicts(&ann, &schema).unwrap().is_empty());
        let extra = implied_extra_triples(&ann);
        assert_eq!(extra.into_iter().collect::<Vec<_>>(), [Triple::new(span(0, 1), r, span(3, 4))]);
        assert!(!is_lossless(&ann, &schema).unwrap());
        let decoded = crate::decoder::decode(&encode(&ann, &schema, Mode::Strict).unwrap().tagging, &schema).unwrap();
        assert_eq!(decoded.len(), 4);
    }

    #[test]
    fn seq_index_examples() {
        assert_eq!(seq_index(0, 0, 3).unwrap(), 0);
        assert_eq!(seq_index(1, 2, 3).unwrap(), 4);
        assert_eq!(seq_index(2, 2, 3).unwrap(), 5);
        assert!(seq_index(2, 1, 3).is_err());
        assert!(seq_index(0, 3, 3).is_err());
    }

    #[test]
    fn matrix_index_examples() {
        assert_eq!(matrix_index(0, 3).unwrap(), (0, 0));
        assert_eq!(matrix_index(4, 3).unwrap(), (1, 2));
        assert!(matrix_index(6, 3).is_err());
    }

    #[test]
    fn matrix_index_last_of_hundred_by_scan() {
        let found = (0..100usize)
            .flat_map(|i| (i..100).map(move |j| (i, j)))
            .find(|&(i, j)| seq_index(i, j, 100).unwrap() == 5049)
            .unwrap();
        assert_eq!(found, (99, 99));
        assert_eq!(matrix_index(5049, 100).unwrap(), found);
    }

    #[test]
    fn flat_indices_cover_range_in_lexicographic_order() {
        for n in 1..=40 {
            let map = IndexMap::new(n).unwrap();
            let mut expected = 0;
            for i in 0..n {
                for j in i..n {
                    let k = seq_index(i, j, n).unwrap();
                    assert_eq!(k, expected);
                    assert_eq!(matrix_index(k, n).unwrap(), (i, j));
                    assert_eq!(map.pair(k).unwrap(), (i, j));
                    expected += 1;
                }
            }
            assert_eq!(expected, map.len());
        }
    }

    #[test]
    fn entity_links_for_mayor_example() {
        let ann = mayor_sentence(vec![Triple::new(span(0, 2), RelationId(0), span(4, 5))]);
        let schema = RelationSchema::new(["mayor"]).unwrap();
        let t = encode(&ann, &schema, Mode::Strict).unwrap().tagging;
        let n = ann.len();
        assert_eq!(tag_at(t.eh2et(), 0, 2, n), LinkTag::Forward);
        assert_eq!(tag_at(t.eh2et(), 4, 5, n), LinkTag::Forward);
        assert_eq!(tag_at(t.sh2oh(RelationId(0)), 0, 4, n), LinkTag::Forward);
        assert_eq!(tag_at(t.st2ot(RelationId(0)), 2, 5, n), LinkTag::Forward);
        let ones: usize = t.sequences().map(|s| s.iter().filter(|x| x.is_link()).count()).sum();
        assert_eq!(ones, 4);
    }

    #[test]
    fn reversed_link_folds_to_tag_two() {
        // (De Blasio, born in, New York) with the object preceding the subject
        let ann = mayor_sentence(vec![Triple::new(span(4, 5), RelationId(1), span(0, 1))]);
        let schema = RelationSchema::new(["mayor", "born in"]).unwrap();
        let t = encode(&ann, &schema, Mode::Strict).unwrap().tagging;
        let n = ann.len();
        assert_eq!(tag_at(t.st2ot(RelationId(1)), 1, 5, n), LinkTag::Reversed);
        assert_eq!(tag_at(t.sh2oh(RelationId(1)), 0, 4, n), LinkTag::Reversed);
        assert!(t.eh2et().iter().all(|x| *x != LinkTag::Reversed));
    }

    #[test]
    fn empty_triples_give_all_zero_sequences() {
        let ann = mayor_sentence(vec![]);
        let schema = RelationSchema::new(["a", "b", "c"]).unwrap();
        let t = encode(&ann, &schema, Mode::Strict).unwrap().tagging;
        assert_eq!(t.sequence_count(), 7);
        assert!(t.sequences().all(|s| s.iter().all(|x| *x == LinkTag::None)));
    }

    #[test]
    fn opposite_directions_conflict() {
        let a = span(0, 1);
        let b = span(3, 4);
        let ann = mayor_sentence(vec![Triple::new(a, RelationId(0), b), Triple::new(b, RelationId(0), a)]);
        let schema = RelationSchema::new(["r"]).unwrap();
        let conflicts = detect_conflicts(&ann, &schema).unwrap();
        assert_eq!(conflicts.len(), 2);
        assert_eq!(conflicts[0].kind, LinkKind::SubjectHeadToObjectHead);
        assert_eq!(conflicts[0].pair, (0, 3));
        assert_eq!(conflicts[1].kind, LinkKind::SubjectTailToObjectTail);
        assert_eq!(conflicts[1].pair, (1, 4));
        for c in &conflicts {
            assert_eq!((c.first, c.second), (LinkTag::Forward, LinkTag::Reversed));
        }
        match encode(&ann, &schema, Mode::Strict) {
            Err(Error::Conflict(list)) => assert_eq!(list, conflicts),
            other => panic!("expected conflict, got {other:?}"),
        }
        let lenient = encode(&ann, &schema, Mode::Lenient).unwrap();
        assert_eq!(tag_at(lenient.tagging.sh2oh(RelationId(0)), 0, 3, ann.len()), LinkTag::Forward);
    }

    #[test]
    fn lenient_prefers_forward_even_when_second() {
        let a = span(0, 1);
        let b = span(3, 4);
        let ann = mayor_sentence(vec![Triple::new(b, RelationId(0), a), Triple::new(a, RelationId(0), b)]);
        let schema = RelationSchema::new(["r"]).unwrap();
        let enc = encode(&ann, &schema, Mode::Lenient).unwrap();
        assert_eq!(enc.conflicts[0].first, LinkTag::Reversed);
        assert_eq!(tag_at(enc.tagging.sh2oh(RelationId(0)), 0, 3, ann.len()), LinkTag::Forward);
    }

    #[test]
    fn single_triple_has_no_conflicts() {
        let ann = mayor_sentence(vec![Triple::new(span(0, 2), RelationId(0), span(4, 5))]);
        let schema = RelationSchema::new(["r"]).unwrap();
        assert!(detect_conflicts(&ann, &schema).unwrap().is_empty());
    }

    #[test]
    fn self_relation_is_accepted_and_reported() {
        let a = span(1, 2);
        let ann = mayor_sentence(vec![Triple::new(a, RelationId(0), a)]);
        let schema = RelationSchema::new(["r"]).unwrap();
        let enc = encode(&ann, &schema, Mode::Strict).unwrap();
        assert_eq!(enc.self_relations.len(), 1);
    }

    #[test]
    fn relation_outside_schema_is_rejected() {
        let ann = mayor_sentence(vec![Triple::new(span(0, 0), RelationId(4), span(1, 1))]);
        let schema = RelationSchema::new(["r"]).unwrap();
        assert!(matches!(encode(&ann, &schema, Mode::Lenient), Err(Error::Schema(_))));
    }

    #[test]
    fn serialized_tagging_round_trips_bit_exact() {
        let ann = mayor_sentence(vec![
            Triple::new(span(0, 2), RelationId(0), span(4, 5)),
            Triple::new(span(4, 5), RelationId(1), span(0, 1)),
        ]);
        let schema = RelationSchema::new(["mayor", "born in"]).unwrap();
        let t = encode(&ann, &schema, Mode::Strict).unwrap().tagging;
        let line = tagging_to_json(&t, &schema).unwrap();
        assert!(line.starts_with("{\"n\":11,\"relations\":[\"mayor\",\"born in\"],\"eh2et\":["));
        let (back, back_schema) = tagging_from_json(&line, Mode::Strict).unwrap();
        assert_eq!(back, t);
        assert_eq!(back_schema, schema);
        assert_eq!(tagging_to_json(&back, &back_schema).unwrap(), line);
    }

    #[test]
    fn serialized_tag_two_in_entity_sequence_is_corrupt_in_strict_mode() {
        let line = r#"{"n":1,"relations":["r"],"eh2et":[2],"sh2oh":[[0]],"st2ot":[[0]]}"#;
        assert!(matches!(tagging_from_json(line, Mode::Strict), Err(Error::CorruptTagging(_))));
        assert!(tagging_from_json(line, Mode::Lenient).is_ok());
        let bad_len = r#"{"n":2,"relations":["r"],"eh2et":[0],"sh2oh":[[0]],"st2ot":[[0]]}"#;
        assert!(tagging_from_json(bad_len, Mode::Lenient).is_err());
        let bad_tag = r#"{"n":1,"relations":["r"],"eh2et":[0],"sh2oh":[[3]],"st2ot":[[0]]}"#;
        assert!(tagging_from_json(bad_tag, Mode::Lenient).is_err());
    }
}
