//! Domain types shared across the crate.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validation strictness. Strict surfaces every irregularity as an error, lenient
/// repairs deterministically and reports what it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Strict,
    Lenient,
}

/// Inclusive token span, 0-based on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct TokenSpan {
    head: usize,
    tail: usize,
}

impl TokenSpan {
    pub fn new(head: usize, tail: usize) -> Result<Self> {
        if head > tail {
            return Err(Error::InvalidInput(format!("span head {head} after tail {tail}")));
        }
        Ok(Self { head, tail })
    }

    pub fn single(pos: usize) -> Self {
        Self { head: pos, tail: pos }
    }

    #[inline]
    pub fn head(&self) -> usize {
        self.head
    }

    #[inline]
    pub fn tail(&self) -> usize {
        self.tail
    }

    pub fn len(&self) -> usize {
        self.tail - self.head + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fits(&self, n: usize) -> bool {
        self.tail < n
    }
}

impl TryFrom<[usize; 2]> for TokenSpan {
    type Error = Error;

    fn try_from([head, tail]: [usize; 2]) -> Result<Self> {
        TokenSpan::new(head, tail)
    }
}

impl From<TokenSpan> for [usize; 2] {
    fn from(span: TokenSpan) -> Self {
        [span.head, span.tail]
    }
}

impl fmt::Display for TokenSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.head, self.tail)
    }
}

/// Dense relation id, the position of the relation in its [`RelationSchema`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub usize);

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A (subject, relation, object) triple over token spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: TokenSpan,
    pub relation: RelationId,
    pub object: TokenSpan,
}

impl Triple {
    pub fn new(subject: TokenSpan, relation: RelationId, object: TokenSpan) -> Self {
        Self { subject, relation, object }
    }
}

/// Ordered registry of relation types. A relation's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    names: Vec<String>,
    ids: HashMap<String, RelationId>,
}

impl RelationSchema {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Schema("relation schema is empty".into()));
        }
        let mut ids = HashMap::with_capacity(names.len());
        for (pos, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), RelationId(pos)).is_some() {
                return Err(Error::Schema(format!("duplicate relation name {name:?}")));
            }
        }
        Ok(Self { names, ids })
    }

    /// Number of relation types.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<RelationId> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: RelationId) -> Option<&str> {
        self.names.get(id.0).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.names.len()).map(RelationId)
    }

    pub fn contains(&self, id: RelationId) -> bool {
        id.0 < self.names.len()
    }
}

impl Serialize for RelationSchema {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.names.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RelationSchema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        RelationSchema::new(names).map_err(serde::de::Error::custom)
    }
}

/// A tokenized sentence with its gold triples.
///
/// `triples` keeps input order (the lenient encoder's tie-break depends on it) but never
/// holds two structurally equal members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SentenceAnnotation {
    pub text: String,
    pub tokens: Vec<String>,
    triples: Vec<Triple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub char_spans: Option<Vec<(usize, usize)>>,
}

impl SentenceAnnotation {
    /// Builds an annotation, dropping repeated triples (first occurrence kept).
    pub fn new(
        text: impl Into<String>,
        tokens: Vec<String>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("sentence has no tokens".into()));
        }
        let n = tokens.len();
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for t in triples {
            if !t.subject.fits(n) || !t.object.fits(n) {
                return Err(Error::InvalidInput(format!(
                    "triple {} {} {} out of range for {n} tokens",
                    t.subject, t.relation, t.object
                )));
            }
            if seen.insert(t) {
                kept.push(t);
            }
        }
        Ok(Self { text: text.into(), tokens, triples: kept, char_spans: None })
    }

    /// Annotation whose text is the space-joined tokens.
    pub fn from_tokens<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let text = tokens.join(" ");
        Self::new(text, tokens, triples)
    }

    pub fn with_char_spans(mut self, spans: Vec<(usize, usize)>) -> Result<Self> {
        if spans.len() != self.tokens.len() {
            return Err(Error::InvalidInput(format!("{} char spans for {} tokens", spans.len(), self.tokens.len())));
        }
        self.char_spans = Some(spans);
        Ok(self)
    }

    /// Sentence length in tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple_set(&self) -> BTreeSet<Triple> {
        self.triples.iter().copied().collect()
    }

    /// Every span that occurs as a subject or an object.
    pub fn entities(&self) -> BTreeSet<TokenSpan> {
        self.triples.iter().flat_map(|t| [t.subject, t.object]).collect()
    }

    /// Checks every triple's relation against `schema`.
    pub fn validate(&self, schema: &RelationSchema) -> Result<()> {
        for t in &self.triples {
            if !schema.contains(t.relation) {
                return Err(Error::Schema(format!(
                    "relation id {} outside schema of {} relations",
                    t.relation.0,
                    schema.len()
                )));
            }
        }
        Ok(())
    }

    /// Triples relating a span to itself. Accepted by the codec; strict validation flags them.
    pub fn self_relations(&self) -> Vec<Triple> {
        self.triples.iter().filter(|t| t.subject == t.object).copied().collect()
    }

    /// Text covered by `span`, re-joined with single spaces.
    pub fn span_text(&self, span: TokenSpan) -> String {
        self.tokens[span.head..=span.tail].join(" ")
    }
}

/// Link label of one token pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(u8)]
pub enum LinkTag {
    #[default]
    None = 0,
    /// Row token links to column token.
    Forward = 1,
    /// Column token links to row token (folded from the lower triangle).
    Reversed = 2,
}

impl LinkTag {
    pub const ALL: [LinkTag; 3] = [LinkTag::None, LinkTag::Forward, LinkTag::Reversed];

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(LinkTag::None),
            1 => Some(LinkTag::Forward),
            2 => Some(LinkTag::Reversed),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_link(self) -> bool {
        self != LinkTag::None
    }
}

impl Serialize for LinkTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(*self as u8)
    }
}

impl<'de> Deserialize<'de> for LinkTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(deserializer)?;
        LinkTag::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("tag {v} not in {{0, 1, 2}}")))
    }
}

/// The three link kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    #[serde(rename = "EH-to-ET")]
    EntityHeadToTail,
    #[serde(rename = "SH-to-OH")]
    SubjectHeadToObjectHead,
    #[serde(rename = "ST-to-OT")]
    SubjectTailToObjectTail,
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::EntityHeadToTail => "EH-to-ET",
            LinkKind::SubjectHeadToObjectHead => "SH-to-OH",
            LinkKind::SubjectTailToObjectTail => "ST-to-OT",
        })
    }
}

/// Number of token pairs `(i, j)` with `i <= j < n`.
pub fn seq_length(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidInput("sentence length must be at least 1".into()));
    }
    Ok((n * n + n) / 2)
}

/// The 2N+1 flattened tag sequences of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakingTagging {
    n: usize,
    eh2et: Vec<LinkTag>,
    sh2oh: Vec<Vec<LinkTag>>,
    st2ot: Vec<Vec<LinkTag>>,
}

impl HandshakingTagging {
    /// All-zero tagging for a sentence of `n` tokens and `relations` relation types.
    pub fn zeros(n: usize, relations: usize) -> Result<Self> {
        let len = seq_length(n)?;
        if relations == 0 {
            return Err(Error::InvalidInput("at least one relation is required".into()));
        }
        Ok(Self {
            n,
            eh2et: vec![LinkTag::None; len],
            sh2oh: vec![vec![LinkTag::None; len]; relations],
            st2ot: vec![vec![LinkTag::None; len]; relations],
        })
    }

    /// Assembles a tagging from its parts, checking the 2N+1 and length invariants.
    pub fn from_parts(
        n: usize,
        eh2et: Vec<LinkTag>,
        sh2oh: Vec<Vec<LinkTag>>,
        st2ot: Vec<Vec<LinkTag>>,
    ) -> Result<Self> {
        let len = seq_length(n)?;
        if sh2oh.is_empty() || sh2oh.len() != st2ot.len() {
            return Err(Error::Shape(format!("{} SH-to-OH and {} ST-to-OT sequences", sh2oh.len(), st2ot.len())));
        }
        let bad = std::iter::once(&eh2et).chain(&sh2oh).chain(&st2ot).find(|s| s.len() != len);
        if let Some(seq) = bad {
            return Err(Error::Shape(format!("sequence of length {} where {len} expected for n = {n}", seq.len())));
        }
        Ok(Self { n, eh2et, sh2oh, st2ot })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn relations(&self) -> usize {
        self.sh2oh.len()
    }

    /// Length of every sequence, `(n² + n) / 2`.
    pub fn seq_len(&self) -> usize {
        self.eh2et.len()
    }

    /// Total number of sequences, `2N + 1`.
    pub fn sequence_count(&self) -> usize {
        1 + self.sh2oh.len() + self.st2ot.len()
    }

    pub fn eh2et(&self) -> &[LinkTag] {
        &self.eh2et
    }

    pub fn sh2oh(&self, r: RelationId) -> &[LinkTag] {
        &self.sh2oh[r.0]
    }

    pub fn st2ot(&self, r: RelationId) -> &[LinkTag] {
        &self.st2ot[r.0]
    }

    pub fn sh2oh_all(&self) -> &[Vec<LinkTag>] {
        &self.sh2oh
    }

    pub fn st2ot_all(&self) -> &[Vec<LinkTag>] {
        &self.st2ot
    }

    /// Sequence for a tagger slot: 0 is EH-to-ET, `1..=N` SH-to-OH, `N+1..=2N` ST-to-OT.
    pub fn sequence(&self, slot: usize) -> &[LinkTag] {
        let n_rel = self.sh2oh.len();
        match slot {
            0 => &self.eh2et,
            s if s <= n_rel => &self.sh2oh[s - 1],
            s => &self.st2ot[s - 1 - n_rel],
        }
    }

    /// Writes `tag` at pair `(i, j)`, `i <= j`, of the sequence selected by `kind` and `r`
    /// (`r` is ignored for EH-to-ET).
    pub fn set(&mut self, kind: LinkKind, r: RelationId, i: usize, j: usize, tag: LinkTag) -> Result<()> {
        if kind != LinkKind::EntityHeadToTail && r.0 >= self.sh2oh.len() {
            return Err(Error::InvalidIndex(format!("relation {} outside {} relations", r.0, self.sh2oh.len())));
        }
        let k = crate::codec::seq_index(i, j, self.n)?;
        self.sequence_mut(kind, r)[k] = tag;
        Ok(())
    }

    /// Tag at pair `(i, j)`, `i <= j`.
    pub fn get(&self, kind: LinkKind, r: RelationId, i: usize, j: usize) -> Result<LinkTag> {
        let k = crate::codec::seq_index(i, j, self.n)?;
        let seq = match kind {
            LinkKind::EntityHeadToTail => &self.eh2et,
            LinkKind::SubjectHeadToObjectHead => {
                self.sh2oh.get(r.0).ok_or_else(|| Error::InvalidIndex(format!("relation {}", r.0)))?
            }
            LinkKind::SubjectTailToObjectTail => {
                self.st2ot.get(r.0).ok_or_else(|| Error::InvalidIndex(format!("relation {}", r.0)))?
            }
        };
        Ok(seq[k])
    }

    pub(crate) fn sequence_mut(&mut self, kind: LinkKind, r: RelationId) -> &mut Vec<LinkTag> {
        match kind {
            LinkKind::EntityHeadToTail => &mut self.eh2et,
            LinkKind::SubjectHeadToObjectHead => &mut self.sh2oh[r.0],
            LinkKind::SubjectTailToObjectTail => &mut self.st2ot[r.0],
        }
    }

    /// Iterates all sequences in tagger-slot order.
    pub fn sequences(&self) -> impl Iterator<Item = &[LinkTag]> {
        std::iter::once(self.eh2et.as_slice())
            .chain(self.sh2oh.iter().map(Vec::as_slice))
            .chain(self.st2ot.iter().map(Vec::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_length_examples() {
        assert_eq!(seq_length(1).unwrap(), 1);
        assert_eq!(seq_length(3).unwrap(), 6);
        assert_eq!(seq_length(100).unwrap(), 5050);
        assert!(matches!(seq_length(0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn seq_length_counts_upper_triangle_pairs() {
        for n in 1..=64usize {
            let pairs = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).count();
            assert_eq!(seq_length(n).unwrap(), pairs, "n = {n}");
        }
    }

    #[test]
    fn span_rejects_reversed_bounds() {
        assert!(TokenSpan::new(3, 2).is_err());
        let s = TokenSpan::new(2, 4).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.fits(5));
        assert!(!s.fits(4));
    }

    #[test]
    fn span_serializes_as_pair() {
        let s = TokenSpan::new(1, 3).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        assert!(serde_json::from_str::<TokenSpan>("[3,1]").is_err());
    }

    #[test]
    fn annotation_deduplicates_triples() {
        let t = Triple::new(TokenSpan::single(0), RelationId(0), TokenSpan::single(1));
        let ann = SentenceAnnotation::from_tokens(["a", "b"], [t, t]).unwrap();
        assert_eq!(ann.triples().len(), 1);
    }

    #[test]
    fn annotation_rejects_out_of_range_span() {
        let t = Triple::new(TokenSpan::single(0), RelationId(0), TokenSpan::single(2));
        assert!(SentenceAnnotation::from_tokens(["a", "b"], [t]).is_err());
        assert!(SentenceAnnotation::from_tokens(Vec::<String>::new(), []).is_err());
    }

    #[test]
    fn schema_rejects_duplicates_and_empty() {
        assert!(RelationSchema::new(["a", "a"]).is_err());
        assert!(RelationSchema::new(Vec::<String>::new()).is_err());
        let s = RelationSchema::new(["mayor", "born in"]).unwrap();
        assert_eq!(s.id("born in"), Some(RelationId(1)));
        assert_eq!(s.name(RelationId(0)), Some("mayor"));
    }

    #[test]
    fn tagging_shape_invariants() {
        let t = HandshakingTagging::zeros(4, 3).unwrap();
        assert_eq!(t.sequence_count(), 7);
        assert!(t.sequences().all(|s| s.len() == 10));
        assert!(HandshakingTagging::from_parts(
            2,
            vec![LinkTag::None; 3],
            vec![vec![LinkTag::None; 2]],
            vec![vec![LinkTag::None; 3]]
        )
        .is_err());
    }

    #[test]
    fn link_tag_serde_rejects_out_of_range() {
        assert_eq!(serde_json::from_str::<LinkTag>("2").unwrap(), LinkTag::Reversed);
        assert!(serde_json::from_str::<LinkTag>("3").is_err());
    }
}
