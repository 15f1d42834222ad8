//! Randomized property suites behind the `selftest` command.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codec::encode;
use crate::data::classify_overlap;
use crate::decoder::{decode_oracle, decode_with_mode};
use crate::error::Result;
use crate::model::backward::Example;
use crate::model::gradcheck::{check_gradients, FD_STEP, FD_TOLERANCE};
use crate::model::{ModelConfig, ModelParams, Vocab};
use crate::synth;
use crate::types::{Mode, RelationSchema};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    /// Named tallies of what the generated cases covered.
    pub coverage: BTreeMap<String, usize>,
    pub millis: u128,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), cases: 0, failures: 0, first_failure: None, coverage: BTreeMap::new(), millis: 0 }
    }

    fn fail(&mut self, msg: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(msg());
        }
    }

    fn tally(&mut self, key: &str) {
        *self.coverage.entry(key.into()).or_default() += 1;
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

/// `decode(encode(ann)) = ann.triples` on lossless annotations with n ≤ 12, N ≤ 4 and up
/// to 6 triples.
pub fn roundtrip_suite(seed: u64, cases: usize) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schemas: Vec<RelationSchema> = (1..=4).map(synth::schema).collect::<Result<_>>()?;
    let mut out = SuiteResult::new("roundtrip");
    for case in 0..cases {
        let schema = &schemas[rng.gen_range(0..schemas.len())];
        let ann = synth::lossless_annotation(&mut rng, 12, schema, 6)?;
        let ents = ann.entities();
        if ents.iter().any(|a| ents.iter().any(|b| a != b && b.head() <= a.head() && a.tail() <= b.tail())) {
            out.tally("nested");
        }
        if let Ok(p) = classify_overlap(&ann) {
            for (flag, key) in [(p.normal, "normal"), (p.seo, "seo"), (p.epo, "epo")] {
                if flag {
                    out.tally(key);
                }
            }
        }
        out.cases += 1;
        let tagging = encode(&ann, schema, Mode::Strict)?.tagging;
        let decoded = decode_with_mode(&tagging, schema, Mode::Strict)?;
        if decoded != ann.triple_set() {
            out.fail(|| format!("case {case}: {:?} decoded to {decoded:?}", ann.triples()));
        }
    }
    out.millis = start.elapsed().as_millis();
    Ok(out)
}

/// Decoder against the brute-force oracle on arbitrary taggings with n ≤ 10, N ≤ 3.
pub fn oracle_suite(seed: u64, cases: usize) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schemas: Vec<RelationSchema> = (1..=3).map(synth::schema).collect::<Result<_>>()?;
    let mut out = SuiteResult::new("oracle");
    for case in 0..cases {
        let schema = &schemas[rng.gen_range(0..schemas.len())];
        let n = rng.gen_range(1..=10);
        let density = rng.gen_range(0.05..0.6);
        let tagging = synth::random_tagging(&mut rng, n, schema.len(), density, true)?;
        out.cases += 1;
        let fast = decode_with_mode(&tagging, schema, Mode::Lenient)?;
        let slow = decode_oracle(&tagging, schema, Mode::Lenient)?;
        if !fast.is_empty() {
            out.tally("non-empty");
        }
        if fast != slow {
            out.fail(|| format!("case {case}: decoder {} triples, oracle {}", fast.len(), slow.len()));
        }
    }
    out.millis = start.elapsed().as_millis();
    Ok(out)
}

/// Finite-difference check on random instances with n ≤ 6, N ≤ 2, d ≤ 8 in double
/// precision. Every parameter coordinate counts as one case.
pub fn gradient_suite(seed: u64, instances: usize) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteResult::new("gradient");
    for inst in 0..instances {
        let relations = rng.gen_range(1..=2);
        let schema = synth::schema(relations)?;
        let d = rng.gen_range(2..=8);
        let mixer = if inst % 3 == 2 { None } else { Some(rng.gen_range(1..=4)) };
        let cfg = ModelConfig { embed_dim: d, mixer_hidden: mixer, pair_dim: rng.gen_range(2..=8), max_len: 6 };
        let batch: Vec<_> =
            (0..2).map(|_| synth::lossless_annotation(&mut rng, 6, &schema, 4)).collect::<Result<_>>()?;
        let vocab = Arc::new(Vocab::build(batch.iter().map(|a| &a.tokens)));
        let params = ModelParams::<f64>::init(cfg, Arc::clone(&vocab), relations, &mut rng)?;
        let examples: Vec<Example> = batch
            .iter()
            .map(|a| Ok(Example { ids: vocab.ids(&a.tokens), gold: encode(a, &schema, Mode::Strict)?.tagging }))
            .collect::<Result<_>>()?;
        let report = check_gradients(&params, &examples, FD_STEP, FD_TOLERANCE)?;
        out.cases += report.coordinates;
        out.tally("instances");
        for m in &report.failures {
            out.fail(|| {
                format!("instance {inst}: {}[{}] analytic {} numeric {}", m.tensor, m.index, m.analytic, m.numeric)
            });
        }
    }
    out.millis = start.elapsed().as_millis();
    Ok(out)
}

/// Every suite at the given size: `cases` for the combinatorial suites, `instances` for
/// the gradient suite.
pub fn run_all(seed: u64, cases: usize, instances: usize) -> Result<Vec<SuiteResult>> {
    Ok(vec![roundtrip_suite(seed, cases)?, oracle_suite(seed, cases)?, gradient_suite(seed, instances)?])
}
