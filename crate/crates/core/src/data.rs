//! Dataset ingestion, mention alignment, overlap taxonomy and corpus statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{Mode, RelationSchema, SentenceAnnotation, TokenSpan, Triple};

/// Longest sentence used for training.
pub const MAX_SENTENCE_LEN: usize = 100;

/// Entity annotation standard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standard {
    /// Only the final token of each entity is annotated.
    LastWord,
    #[default]
    WholeSpan,
}

impl fmt::Display for Standard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Standard::LastWord => "last-word",
            Standard::WholeSpan => "whole-span",
        })
    }
}

impl std::str::FromStr for Standard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last-word" => Ok(Standard::LastWord),
            "whole-span" => Ok(Standard::WholeSpan),
            other => Err(Error::InvalidInput(format!("unknown annotation standard {other:?}"))),
        }
    }
}

/// Splits text into tokens with `[start, end)` character offsets.
pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<(String, (usize, usize))>;
}

/// Whitespace splitting with every punctuation character detached as its own token.
/// Letters, digits and `_` form words.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasicTokenizer;

impl Tokenizer for BasicTokenizer {
    fn tokenize(&self, text: &str) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        let mut word: Option<(String, usize)> = None;
        let flush = |word: &mut Option<(String, usize)>, end: usize, out: &mut Vec<_>| {
            if let Some((w, start)) = word.take() {
                out.push((w, (start, end)));
            }
        };
        for (pos, c) in text.chars().enumerate() {
            if c.is_alphanumeric() || c == '_' {
                match &mut word {
                    Some((w, _)) => w.push(c),
                    None => word = Some((c.to_string(), pos)),
                }
            } else {
                flush(&mut word, pos, &mut out);
                if !c.is_whitespace() {
                    out.push((c.to_string(), (pos, pos + 1)));
                }
            }
        }
        flush(&mut word, text.chars().count(), &mut out);
        out
    }
}

/// Subject or object reference in a raw record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mention {
    /// Surface string; aligned to its leftmost token-aligned occurrence.
    Text(String),
    /// `[start, end)` character offsets.
    Offsets([usize; 2]),
    Located {
        text: String,
        char_span: [usize; 2],
    },
}

impl fmt::Display for Mention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mention::Text(t) | Mention::Located { text: t, .. } => f.write_str(t),
            Mention::Offsets([s, e]) => write!(f, "[{s}, {e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordTriple {
    pub subject: Mention,
    pub relation: String,
    pub object: Mention,
}

/// One raw input record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetRecord {
    pub text: String,
    pub triples: Vec<RecordTriple>,
    /// Pre-tokenized form, honored instead of the tokenizer when present.
    pub tokens: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTriple {
    List(Mention, String, Mention),
    Object { subject: Mention, relation: String, object: Mention },
}

#[derive(Deserialize)]
struct RawRelation {
    subject: String,
    predicate: String,
    object: String,
    #[serde(default)]
    subj_char_span: Option<[usize; 2]>,
    #[serde(default)]
    obj_char_span: Option<[usize; 2]>,
}

#[derive(Deserialize)]
struct RawRecord {
    text: String,
    #[serde(default)]
    triple_list: Option<Vec<RawTriple>>,
    #[serde(default)]
    relation_list: Option<Vec<RawRelation>>,
    #[serde(default)]
    tokens: Option<Vec<String>>,
}

impl RawRecord {
    fn into_record(self) -> std::result::Result<DatasetRecord, String> {
        let triples = match (self.triple_list, self.relation_list) {
            (Some(list), None) => {
                list.into_iter()
                    .map(|t| match t {
                        RawTriple::List(subject, relation, object)
                        | RawTriple::Object { subject, relation, object } => RecordTriple { subject, relation, object },
                    })
                    .collect()
            }
            (None, Some(list)) => list
                .into_iter()
                .map(|r| {
                    let locate = |text: String, span: Option<[usize; 2]>| match span {
                        Some(char_span) => Mention::Located { text, char_span },
                        None => Mention::Text(text),
                    };
                    RecordTriple {
                        subject: locate(r.subject, r.subj_char_span),
                        relation: r.predicate,
                        object: locate(r.object, r.obj_char_span),
                    }
                })
                .collect(),
            (Some(_), Some(_)) => return Err("record has both triple_list and relation_list".into()),
            (None, None) => return Err("record has neither triple_list nor relation_list".into()),
        };
        Ok(DatasetRecord { text: self.text, triples, tokens: self.tokens })
    }
}

/// A parsed record and its 1-based position: the line number for JSON Lines input, the
/// element index for a JSON array.
pub type Numbered<T> = (usize, T);

/// Parses JSON Lines or a single JSON array of records.
pub fn parse_records(content: &str) -> Result<Vec<Numbered<DatasetRecord>>> {
    let trimmed = content.trim_start();
    if trimmed.starts_with('[') {
        let raw: Vec<Value> =
            serde_json::from_str(content).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        return raw
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let rec = serde_json::from_value::<RawRecord>(v)
                    .map_err(|e| e.to_string())
                    .and_then(RawRecord::into_record)
                    .map_err(|message| Error::Parse { line: i + 1, message: format!("record {}: {message}", i + 1) })?;
                Ok((i + 1, rec))
            })
            .collect();
    }
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec = serde_json::from_str::<RawRecord>(l)
                .map_err(|e| e.to_string())
                .and_then(RawRecord::into_record)
                .map_err(|message| Error::Parse { line: i + 1, message })?;
            Ok((i + 1, rec))
        })
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<Numbered<DatasetRecord>>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&content)
}

/// Relation names in first-seen order.
pub fn relation_names<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut names = Vec::new();
    for rec in records {
        for t in &rec.triples {
            if seen.insert(t.relation.as_str()) {
                names.push(t.relation.clone());
            }
        }
    }
    names
}

/// Parses a relation schema: a JSON array of names, `{"relations": [...]}`, a name → id
/// object, or an `[id → name, name → id]` pair.
pub fn parse_schema(content: &str) -> Result<RelationSchema> {
    let v: Value = serde_json::from_str(content)?;
    schema_from_value(&v)
}

pub fn load_schema(path: &Path) -> Result<RelationSchema> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&content)
}

fn schema_from_value(v: &Value) -> Result<RelationSchema> {
    let bad = |what: &str| Error::Schema(format!("unrecognized schema layout: {what}"));
    match v {
        Value::Array(items) if items.iter().all(Value::is_string) => {
            RelationSchema::new(items.iter().map(|s| s.as_str().unwrap_or_default().to_string()))
        }
        Value::Array(items) if items.len() == 2 && items.iter().all(Value::is_object) => schema_from_value(&items[1]),
        Value::Object(map) if map.contains_key("relations") => schema_from_value(&map["relations"]),
        Value::Object(map) => {
            let mut by_id = BTreeMap::new();
            for (name, id) in map {
                let id = id.as_u64().ok_or_else(|| bad("ids must be non-negative integers"))? as usize;
                if by_id.insert(id, name.clone()).is_some() {
                    return Err(Error::Schema(format!("relation id {id} assigned twice")));
                }
            }
            if by_id.keys().copied().ne(0..by_id.len()) {
                return Err(Error::Schema("relation ids must be exactly 0..N".into()));
            }
            RelationSchema::new(by_id.into_values())
        }
        _ => Err(bad("expected an array or object")),
    }
}

fn locate_tokens(text: &str, tokens: &[String]) -> Result<Vec<(usize, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut spans = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let tc: Vec<char> = tok.chars().collect();
        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        if tc.is_empty() || chars.get(pos..pos + tc.len()) != Some(&tc[..]) {
            return Err(Error::InvalidInput(format!("token {tok:?} not found at character {pos} of the text")));
        }
        spans.push((pos, pos + tc.len()));
        pos += tc.len();
    }
    if chars[pos..].iter().any(|c| !c.is_whitespace()) {
        return Err(Error::InvalidInput(format!("tokens stop at character {pos}, before the end of the text")));
    }
    Ok(spans)
}

fn span_from_offsets(spans: &[(usize, usize)], start: usize, end: usize, mention: &str) -> Result<TokenSpan> {
    let err = |reason: &str| Error::Alignment { mention: mention.to_string(), reason: reason.to_string() };
    let head = spans.iter().position(|&(s, _)| s == start);
    let tail = spans.iter().position(|&(_, e)| e == end);
    match (head, tail) {
        (Some(h), Some(t)) if h <= t => TokenSpan::new(h, t),
        _ => Err(err("crosses token boundaries")),
    }
}

/// Token span covering exactly the mention's tokens; the leftmost token-aligned
/// occurrence wins when a string mention occurs more than once.
pub fn align_spans(text: &str, char_spans: &[(usize, usize)], mention: &Mention) -> Result<TokenSpan> {
    let label = mention.to_string();
    let err = |reason: &str| Error::Alignment { mention: label.clone(), reason: reason.to_string() };
    match mention {
        Mention::Offsets([s, e]) => {
            if s >= e {
                return Err(err("empty character range"));
            }
            span_from_offsets(char_spans, *s, *e, &label)
        }
        Mention::Located { text: m, char_span: [s, e] } => {
            let covered: String = text.chars().skip(*s).take(e.saturating_sub(*s)).collect();
            if s >= e || covered != *m {
                return Err(err("character span does not match the mention text"));
            }
            span_from_offsets(char_spans, *s, *e, &label)
        }
        Mention::Text(m) => {
            let m = m.trim();
            if m.is_empty() {
                return Err(err("empty mention"));
            }
            let chars: Vec<char> = text.chars().collect();
            let mc: Vec<char> = m.chars().collect();
            let mut found = false;
            for start in 0..chars.len().saturating_sub(mc.len() - 1) {
                if chars[start..start + mc.len()] == mc[..] {
                    found = true;
                    if let Ok(span) = span_from_offsets(char_spans, start, start + mc.len(), &label) {
                        return Ok(span);
                    }
                }
            }
            Err(err(if found { "crosses token boundaries" } else { "not found in text" }))
        }
    }
}

/// Converts a raw record into a tokenized annotation.
pub fn annotate(
    record: &DatasetRecord,
    standard: Standard,
    schema: &RelationSchema,
    tokenizer: &dyn Tokenizer,
) -> Result<SentenceAnnotation> {
    let (tokens, spans): (Vec<String>, Vec<(usize, usize)>) = match &record.tokens {
        Some(tokens) => (tokens.clone(), locate_tokens(&record.text, tokens)?),
        None => tokenizer.tokenize(&record.text).into_iter().unzip(),
    };
    let collapse = |span: TokenSpan| match standard {
        Standard::LastWord => TokenSpan::single(span.tail()),
        Standard::WholeSpan => span,
    };
    let mut triples = Vec::with_capacity(record.triples.len());
    for t in &record.triples {
        let relation = schema
            .id(&t.relation)
            .ok_or_else(|| Error::Schema(format!("relation {:?} is not in the schema", t.relation)))?;
        let subject = collapse(align_spans(&record.text, &spans, &t.subject)?);
        let object = collapse(align_spans(&record.text, &spans, &t.object)?);
        triples.push(Triple::new(subject, relation, object));
    }
    SentenceAnnotation::new(record.text.clone(), tokens, triples)?.with_char_spans(spans)
}

/// A record that could not be used, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedSplit {
    pub annotations: Vec<SentenceAnnotation>,
    pub skipped: Vec<Skipped>,
}

/// Annotates records in parallel, preserving input order. Strict mode fails on the first
/// unusable record; lenient mode skips it and reports why.
pub fn annotate_all(
    records: &[Numbered<DatasetRecord>],
    standard: Standard,
    schema: &RelationSchema,
    mode: Mode,
    tokenizer: &dyn Tokenizer,
) -> Result<LoadedSplit> {
    let results: Vec<(usize, Result<SentenceAnnotation>)> =
        records.par_iter().map(|(line, rec)| (*line, annotate(rec, standard, schema, tokenizer))).collect();
    let mut out = LoadedSplit::default();
    for (line, res) in results {
        match res {
            Ok(ann) => out.annotations.push(ann),
            Err(e) if mode == Mode::Strict => {
                return Err(Error::Parse { line, message: e.to_string() });
            }
            Err(e) => {
                warn!("skipping record {line}: {e}");
                out.skipped.push(Skipped { line, reason: e.to_string() });
            }
        }
    }
    Ok(out)
}

/// Reads and annotates one dataset file.
pub fn load_dataset(path: &Path, standard: Standard, schema: &RelationSchema, mode: Mode) -> Result<LoadedSplit> {
    annotate_all(&read_records(path)?, standard, schema, mode, &BasicTokenizer)
}

/// Keeps the first `max_len` tokens and the triples that fit in them. Returns the number
/// of dropped triples.
pub fn truncate(ann: &SentenceAnnotation, max_len: usize) -> Result<(SentenceAnnotation, usize)> {
    if ann.len() <= max_len {
        return Ok((ann.clone(), 0));
    }
    if max_len == 0 {
        return Err(Error::InvalidInput("maximum length must be positive".into()));
    }
    let kept: Vec<Triple> =
        ann.triples().iter().filter(|t| t.subject.fits(max_len) && t.object.fits(max_len)).copied().collect();
    let dropped = ann.triples().len() - kept.len();
    let mut out = SentenceAnnotation::new(ann.text.clone(), ann.tokens[..max_len].to_vec(), kept)?;
    if let Some(spans) = &ann.char_spans {
        out = out.with_char_spans(spans[..max_len].to_vec())?;
    }
    Ok((out, dropped))
}

/// Overlap flags of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OverlapPattern {
    pub normal: bool,
    pub seo: bool,
    pub epo: bool,
}

/// Normal when every subject and object slot holds a distinct span. EPO when two triples
/// share the same ordered (subject, object) pair. SEO when a span is shared across
/// different entity pairs, including a reversed pair or a span related to itself.
pub fn classify_overlap(ann: &SentenceAnnotation) -> Result<OverlapPattern> {
    let triples = ann.triples();
    if triples.is_empty() {
        return Err(Error::InvalidInput("cannot classify a sentence without triples".into()));
    }
    let entities = ann.entities();
    if entities.len() == 2 * triples.len() {
        return Ok(OverlapPattern { normal: true, seo: false, epo: false });
    }
    let pairs: BTreeSet<(TokenSpan, TokenSpan)> = triples.iter().map(|t| (t.subject, t.object)).collect();
    let epo = pairs.len() != triples.len();
    let seo = entities.len() != 2 * pairs.len();
    Ok(OverlapPattern { normal: false, seo, epo })
}

/// Triplet-count bucket labels: 1, 2, 3, 4, ≥5.
pub const BUCKETS: [&str; 5] = ["N=1", "N=2", "N=3", "N=4", "N>=5"];

/// Bucket index for a sentence with `count ≥ 1` triples.
pub fn bucket(count: usize) -> Option<usize> {
    (count > 0).then(|| count.min(5) - 1)
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplits {
    pub train: Vec<SentenceAnnotation>,
    pub valid: Vec<SentenceAnnotation>,
    pub test: Vec<SentenceAnnotation>,
}

/// Corpus statistics; pattern and bucket counts are over the test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub normal: usize,
    pub seo: usize,
    pub epo: usize,
    /// Counts for N = 1, 2, 3, 4, ≥5.
    pub buckets: [usize; 5],
    /// Test sentences without any triple; they fall in no pattern and no bucket.
    pub no_triples: usize,
    pub relations: usize,
}

pub fn dataset_stats(splits: &DatasetSplits, schema: &RelationSchema) -> StatsReport {
    let per: Vec<Option<(OverlapPattern, usize)>> =
        splits.test.par_iter().map(|a| classify_overlap(a).ok().map(|p| (p, a.triples().len()))).collect();
    let mut r = StatsReport {
        train: splits.train.len(),
        valid: splits.valid.len(),
        test: splits.test.len(),
        normal: 0,
        seo: 0,
        epo: 0,
        buckets: [0; 5],
        no_triples: 0,
        relations: schema.len(),
    };
    for item in per {
        match item {
            None => r.no_triples += 1,
            Some((p, count)) => {
                r.normal += p.normal as usize;
                r.seo += p.seo as usize;
                r.epo += p.epo as usize;
                if let Some(b) = bucket(count) {
                    r.buckets[b] += 1;
                }
            }
        }
    }
    r
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:>8}{:>8}{:>8}", "", "Train", "Valid", "Test")?;
        writeln!(f, "{:<8}{:>8}{:>8}{:>8}", "Size", self.train, self.valid, self.test)?;
        writeln!(f)?;
        writeln!(f, "{:<8}{:>8}", "Normal", self.normal)?;
        writeln!(f, "{:<8}{:>8}", "SEO", self.seo)?;
        writeln!(f, "{:<8}{:>8}", "EPO", self.epo)?;
        for (label, count) in BUCKETS.iter().zip(self.buckets) {
            writeln!(f, "{label:<8}{count:>8}")?;
        }
        if self.no_triples > 0 {
            writeln!(f, "{:<8}{:>8}", "N=0", self.no_triples)?;
        }
        write!(f, "{:<8}{:>8}", "Rels", self.relations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RelationId;

    fn schema() -> RelationSchema {
        RelationSchema::new(["mayor", "born in", "r2"]).unwrap()
    }

    fn record(json: &str) -> DatasetRecord {
        parse_records(json).unwrap().remove(0).1
    }

    #[test]
    fn tokenizer_detaches_punctuation() {
        let toks = BasicTokenizer.tokenize("Hi, New_York (N.Y.)!");
        let words: Vec<&str> = toks.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, ["Hi", ",", "New_York", "(", "N", ".", "Y", ".", ")", "!"]);
        assert_eq!(toks[2].1, (4, 12));
    }

    #[test]
    fn both_standards() {
        let rec = record(
            r#"{"text": "New York City mayor De Blasio", "triple_list": [["New York City", "mayor", "De Blasio"]]}"#,
        );
        let s = schema();
        let whole = annotate(&rec, Standard::WholeSpan, &s, &BasicTokenizer).unwrap();
        let t = whole.triples()[0];
        assert_eq!((t.subject, t.object), (TokenSpan::new(0, 2).unwrap(), TokenSpan::new(4, 5).unwrap()));
        let last = annotate(&rec, Standard::LastWord, &s, &BasicTokenizer).unwrap();
        let t = last.triples()[0];
        assert_eq!((t.subject, t.object), (TokenSpan::single(2), TokenSpan::single(5)));
        assert_eq!(t.relation, RelationId(0));
    }

    #[test]
    fn alignment_rules() {
        let text = "a b c b c";
        let spans: Vec<_> = BasicTokenizer.tokenize(text).into_iter().map(|(_, s)| s).collect();
        let m = |s: &str| Mention::Text(s.into());
        assert_eq!(align_spans(text, &spans, &m("b c")).unwrap(), TokenSpan::new(1, 2).unwrap());
        assert_eq!(align_spans(text, &spans, &Mention::Offsets([6, 9])).unwrap(), TokenSpan::new(3, 4).unwrap());
        let word = "abc d";
        let wspans: Vec<_> = BasicTokenizer.tokenize(word).into_iter().map(|(_, s)| s).collect();
        assert!(matches!(align_spans(word, &wspans, &m("b")), Err(Error::Alignment { .. })));
        assert!(matches!(align_spans(word, &wspans, &m("zz")), Err(Error::Alignment { .. })));
        assert!(align_spans(word, &wspans, &m(" ")).is_err());
        // a token-internal hit before the aligned one is skipped
        let t2 = "ab b";
        let s2: Vec<_> = BasicTokenizer.tokenize(t2).into_iter().map(|(_, s)| s).collect();
        assert_eq!(align_spans(t2, &s2, &m("b")).unwrap(), TokenSpan::single(1));
    }

    #[test]
    fn located_mentions_and_pretokenized_records() {
        let rec = record(
            r#"{"text": "Paris is in France .", "tokens": ["Paris", "is", "in", "France", "."], "relation_list": [{"subject": "Paris", "predicate": "r2", "object": "France", "obj_char_span": [12, 18]}]}"#,
        );
        let ann = annotate(&rec, Standard::WholeSpan, &schema(), &BasicTokenizer).unwrap();
        assert_eq!(ann.triples()[0].object, TokenSpan::single(3));
        assert_eq!(ann.char_spans.as_ref().unwrap()[3], (12, 18));
        let bad = record(r#"{"text": "Paris", "tokens": ["Pa"], "triple_list": []}"#);
        assert!(annotate(&bad, Standard::WholeSpan, &schema(), &BasicTokenizer).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(parse_records("").unwrap().is_empty());
        let content = "{\"text\": \"a\", \"triple_list\": []}\n\n{\"text\": 3}\n";
        match parse_records(content) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let arr = r#"[{"text": "a b", "triple_list": [["a", "r2", "b"]]}, {"text": "c d", "triple_list": []}]"#;
        let recs = parse_records(arr).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].0, 2);
    }

    #[test]
    fn lenient_skips_and_strict_fails() {
        let recs = parse_records(concat!(
            "{\"text\": \"a b\", \"triple_list\": [[\"a\", \"r2\", \"b\"]]}\n",
            "{\"text\": \"a b\", \"triple_list\": [[\"a\", \"r2\", \"zz\"]]}\n",
            "{\"text\": \"a b\", \"triple_list\": [[\"a\", \"unknown\", \"b\"]]}\n",
        ))
        .unwrap();
        let out = annotate_all(&recs, Standard::WholeSpan, &schema(), Mode::Lenient, &BasicTokenizer).unwrap();
        assert_eq!(out.annotations.len(), 1);
        assert_eq!(out.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), [2, 3]);
        match annotate_all(&recs, Standard::WholeSpan, &schema(), Mode::Strict, &BasicTokenizer) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_layouts() {
        let names = ["a", "b"];
        for src in
            [r#"["a","b"]"#, r#"{"relations":["a","b"]}"#, r#"{"b":1,"a":0}"#, r#"[{"0":"a","1":"b"},{"a":0,"b":1}]"#]
        {
            assert_eq!(parse_schema(src).unwrap().names(), names, "{src}");
        }
        assert!(parse_schema(r#"{"a":0,"b":2}"#).is_err());
        assert!(parse_schema(r#"[]"#).is_err());
        assert!(parse_schema("3").is_err());
    }

    fn ann(triples: &[(usize, usize, usize, usize, usize)]) -> SentenceAnnotation {
        let ts = triples.iter().map(|&(sh, st, r, oh, ot)| {
            Triple::new(TokenSpan::new(sh, st).unwrap(), RelationId(r), TokenSpan::new(oh, ot).unwrap())
        });
        SentenceAnnotation::from_tokens((0..8).map(|i| format!("w{i}")), ts).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let p = classify_overlap(&ann(&[(0, 0, 0, 1, 1)])).unwrap();
        assert_eq!(p, OverlapPattern { normal: true, seo: false, epo: false });
        let p = classify_overlap(&ann(&[(0, 0, 0, 1, 1), (0, 0, 1, 2, 2)])).unwrap();
        assert_eq!(p, OverlapPattern { normal: false, seo: true, epo: false });
        let p = classify_overlap(&ann(&[(0, 0, 0, 1, 1), (0, 0, 1, 1, 1)])).unwrap();
        assert_eq!(p, OverlapPattern { normal: false, seo: false, epo: true });
        let p = classify_overlap(&ann(&[(0, 0, 0, 1, 1), (0, 0, 1, 1, 1), (0, 0, 2, 3, 3)])).unwrap();
        assert_eq!(p, OverlapPattern { normal: false, seo: true, epo: true });
        // reversed pair is single-entity style sharing
        let p = classify_overlap(&ann(&[(0, 0, 0, 1, 1), (1, 1, 0, 0, 0)])).unwrap();
        assert_eq!(p, OverlapPattern { normal: false, seo: true, epo: false });
        // nested but distinct spans do not overlap in this sense
        let p = classify_overlap(&ann(&[(0, 1, 0, 2, 2), (0, 0, 0, 3, 3)])).unwrap();
        assert!(p.normal);
        assert!(classify_overlap(&ann(&[])).is_err());
    }

    #[test]
    fn buckets_partition() {
        assert_eq!(bucket(0), None);
        assert_eq!((1..=9).map(|c| bucket(c).unwrap()).collect::<Vec<_>>(), [0, 1, 2, 3, 4, 4, 4, 4, 4]);
    }

    #[test]
    fn truncation_drops_out_of_window_triples() {
        let a = ann(&[(0, 0, 0, 1, 1), (0, 0, 1, 6, 7)]);
        let (t, dropped) = truncate(&a, 5).unwrap();
        assert_eq!((t.len(), t.triples().len(), dropped), (5, 1, 1));
        assert_eq!(truncate(&a, 100).unwrap().1, 0);
    }

    #[test]
    fn standard_parses() {
        assert_eq!("last-word".parse::<Standard>().unwrap(), Standard::LastWord);
        assert!("lastword".parse::<Standard>().is_err());
        assert_eq!(serde_json::to_string(&Standard::WholeSpan).unwrap(), "\"whole-span\"");
    }
}
