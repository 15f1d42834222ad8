use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use handshake::data::{load_dataset, load_schema, Standard};
use handshake::eval::{micro_prf, MatchMode};
use handshake::model::{infer_batch, Checkpoint};
use handshake::{Mode, Triple};
use handshake_cli::{exit, run};
use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn handshake(args: &[&str]) -> i32 {
    run(std::iter::once("handshake").chain(args.iter().copied()))
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn read_json(p: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn split_args<'a>(train: &'a str, valid: &'a str, test: &'a str, schema: &'a str) -> Vec<&'a str> {
    vec!["--train", train, "--valid", valid, "--test", test, "--schema", schema]
}

#[test]
fn encode_then_decode_recovers_gold() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = (fixture("test.json"), fixture("schema.json"));
    let (tags, triples) = (path(&dir, "tags.jsonl"), path(&dir, "triples.jsonl"));
    assert_eq!(handshake(&["encode", "--data", &data, "--schema", &schema, "--out", &tags]), exit::OK);
    let report = read_json(&format!("{tags}.report.json"));
    assert_eq!(report["report"]["sentences"], 3);
    assert_eq!(report["report"]["sentences_with_conflicts"], 0);
    assert_eq!(report["provenance"]["seed"], 0);
    assert_eq!(handshake(&["decode", "--data", &tags, "--out", &triples]), exit::OK);

    let schema = load_schema(Path::new(&schema)).unwrap();
    let gold = load_dataset(Path::new(&data), Standard::WholeSpan, &schema, Mode::Strict).unwrap().annotations;
    let lines: Vec<Value> =
        fs::read_to_string(&triples).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), gold.len());
    for (line, ann) in lines.iter().zip(&gold) {
        let decoded: BTreeSet<(Vec<usize>, String, Vec<usize>)> =
            serde_json::from_value(line["spans"].clone()).unwrap();
        let expected: BTreeSet<_> = ann
            .triples()
            .iter()
            .map(|t| {
                let s = vec![t.subject.head(), t.subject.tail()];
                let o = vec![t.object.head(), t.object.tail()];
                (s, schema.name(t.relation).unwrap().to_string(), o)
            })
            .collect();
        assert_eq!(decoded, expected);
        assert_eq!(line["text"], ann.text.as_str());
        assert_eq!(line["triple_list"].as_array().unwrap().len(), ann.triples().len());
    }
    // surface mentions are recovered from the character offsets
    assert_eq!(lines[2]["triple_list"][0][0]["text"], "Alan Turing");
    assert_eq!(lines[2]["triple_list"][0][2]["char_span"], serde_json::json!([24, 30]));
}

#[test]
fn decoded_output_is_a_valid_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = (fixture("test.json"), fixture("schema.json"));
    let (tags, triples, again) = (path(&dir, "t.jsonl"), path(&dir, "d.jsonl"), path(&dir, "t2.jsonl"));
    assert_eq!(handshake(&["encode", "--data", &data, "--schema", &schema, "--out", &tags]), exit::OK);
    assert_eq!(handshake(&["decode", "--data", &tags, "--out", &triples]), exit::OK);
    assert_eq!(handshake(&["encode", "--data", &triples, "--schema", &schema, "--out", &again]), exit::OK);
    assert_eq!(fs::read_to_string(&tags).unwrap(), fs::read_to_string(&again).unwrap());
}

#[test]
fn decode_accepts_bare_taggings() {
    let dir = tempfile::tempdir().unwrap();
    let tags = path(&dir, "bare.jsonl");
    // n = 3, one relation: entities [0,0] and [2,2], r0 from [2,2] to [0,0]
    let line = r#"{"n":3,"relations":["r0"],"eh2et":[1,0,0,0,0,1],"sh2oh":[[0,0,2,0,0,0]],"st2ot":[[0,0,2,0,0,0]]}"#;
    fs::write(&tags, format!("{line}\n")).unwrap();
    let out = path(&dir, "out.jsonl");
    assert_eq!(handshake(&["decode", "--data", &tags, "--out", &out]), exit::OK);
    let v: Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(v["spans"], serde_json::json!([[[2, 2], "r0", [0, 0]]]));
    assert!(v.get("triple_list").is_none());
}

#[test]
fn stats_fixture_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "stats.json");
    let (tr, va, te, sc) = (fixture("train.json"), fixture("valid.json"), fixture("test.json"), fixture("schema.json"));
    let mut args = vec!["stats"];
    args.extend(split_args(&tr, &va, &te, &sc));
    args.extend(["--out", &out]);
    assert_eq!(handshake(&args), exit::OK);
    let s = &read_json(&out)["report"]["stats"];
    assert_eq!((s["train"].as_u64(), s["valid"].as_u64(), s["test"].as_u64()), (Some(2), Some(1), Some(3)));
    assert_eq!((s["normal"].as_u64(), s["seo"].as_u64(), s["epo"].as_u64()), (Some(1), Some(2), Some(1)));
    assert_eq!(s["buckets"], serde_json::json!([1, 1, 1, 0, 0]));
    assert_eq!(s["relations"], 6);
}

#[test]
fn stats_replays_from_its_own_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "stats.json");
    let te = fixture("test.json");
    assert_eq!(handshake(&["stats", "--test", &te, "--out", &out]), exit::OK);
    let first = fs::read_to_string(&out).unwrap();
    let copy = path(&dir, "config.json");
    fs::write(&copy, &first).unwrap();
    fs::remove_file(&out).unwrap();
    assert_eq!(handshake(&["stats", "--config", &copy]), exit::OK);
    assert_eq!(fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(&dir, "cfg.json");
    let out = path(&dir, "s.json");
    let te = fixture("test.json");
    fs::write(&cfg, serde_json::json!({ "test": te, "out": out, "standard": "whole-span", "seed": 4 }).to_string())
        .unwrap();
    assert_eq!(handshake(&["stats", "--config", &cfg, "--seed", "9"]), exit::OK);
    let v = read_json(&out);
    assert_eq!(v["provenance"]["seed"], 9);
    assert_eq!(v["provenance"]["config"]["standard"], "whole-span");
    fs::write(&cfg, r#"{"no_such_option": 1}"#).unwrap();
    assert_eq!(handshake(&["stats", "--config", &cfg, "--test", &te]), exit::USAGE);
}

#[test]
fn train_eval_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = path(&dir, "model.json");
    let (tr, va, te, sc) = (fixture("train.json"), fixture("valid.json"), fixture("test.json"), fixture("schema.json"));
    let mut args = vec!["train"];
    args.extend(split_args(&tr, &va, &te, &sc));
    args.extend([
        "--ckpt",
        &ckpt,
        "--epochs",
        "3",
        "--embed-dim",
        "8",
        "--pair-dim",
        "8",
        "--mixer-hidden",
        "4",
        "--grad-check",
    ]);
    assert_eq!(handshake(&args), exit::OK);
    let history = read_json(&format!("{ckpt}.history.json"));
    assert_eq!(history["report"]["history"].as_array().unwrap().len(), 3);
    assert_eq!(history["report"]["grad_check"]["passed"], true);

    let report = path(&dir, "eval.json");
    assert_eq!(
        handshake(&["eval", "--ckpt", &ckpt, "--data", &te, "--match", "partial", "--by-subset", "--out", &report]),
        exit::OK
    );
    let r = &read_json(&report)["report"];
    assert_eq!(r["mode"], "partial");
    assert_eq!(r["patterns"].as_array().unwrap().len(), 3);
    assert_eq!(r["buckets"].as_array().unwrap().len(), 5);

    // the CLI score equals the library composition
    let model = Checkpoint::<f64>::load(Path::new(&ckpt)).unwrap();
    let gold = load_dataset(Path::new(&te), Standard::WholeSpan, &model.schema, Mode::Lenient).unwrap().annotations;
    let tokens: Vec<Vec<String>> = gold.iter().map(|a| a.tokens.clone()).collect();
    let preds: Vec<Vec<Triple>> = infer_batch(&tokens, &model.params, &model.schema, Mode::Lenient, false)
        .unwrap()
        .into_iter()
        .map(|s| s.into_iter().collect())
        .collect();
    let golds: Vec<&[Triple]> = gold.iter().map(|a| a.triples()).collect();
    let prf = micro_prf(&preds, &golds, MatchMode::Partial).unwrap();
    assert_eq!(r["overall"]["f1"].as_f64().unwrap(), prf.f1);
    assert_eq!(r["overall"]["predicted"].as_u64().unwrap() as usize, prf.counts.predicted);

    let bench = path(&dir, "bench.json");
    assert_eq!(handshake(&["bench", "--ckpt", &ckpt, "--data", &te, "--batch-size", "2", "--out", &bench]), exit::OK);
    let b = &read_json(&bench)["report"];
    assert!(b["batched"]["ms_per_sample"].as_f64().unwrap() > 0.0);
    assert!(b["single"]["ms_per_sample"].as_f64().unwrap() > 0.0);
    assert_eq!(b["batched"]["batch_size"], 2);
    assert_eq!(b["single"]["batch_size"], 1);
}

#[test]
fn training_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = path(&dir, "m.json");
    let (tr, va) = (fixture("train.json"), fixture("valid.json"));
    let args = [
        "train",
        "--train",
        &tr,
        "--valid",
        &va,
        "--ckpt",
        &ckpt,
        "--epochs",
        "2",
        "--embed-dim",
        "6",
        "--pair-dim",
        "6",
        "--seed",
        "3",
    ];
    assert_eq!(handshake(&args), exit::OK);
    let model = fs::read(&ckpt).unwrap();
    let history_path = format!("{ckpt}.history.json");
    let history = fs::read(&history_path).unwrap();
    let cfg = path(&dir, "replay.json");
    fs::copy(&history_path, &cfg).unwrap();
    fs::remove_file(&ckpt).unwrap();
    assert_eq!(handshake(&["train", "--config", &cfg]), exit::OK);
    assert_eq!(fs::read(&ckpt).unwrap(), model);
    assert_eq!(fs::read(&history_path).unwrap(), history);
}

#[test]
fn schema_mismatch_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = path(&dir, "m.json");
    let (tr, te) = (fixture("train.json"), fixture("test.json"));
    assert_eq!(
        handshake(&["train", "--train", &tr, "--ckpt", &ckpt, "--epochs", "1", "--embed-dim", "4", "--pair-dim", "4"]),
        exit::OK
    );
    // trained without --schema: only the three relations seen in training
    assert_eq!(handshake(&["eval", "--ckpt", &ckpt, "--data", &te, "--schema", &fixture("schema.json")]), exit::SCHEMA);
    // strict loading rejects test relations the checkpoint does not know
    assert_eq!(handshake(&["eval", "--ckpt", &ckpt, "--data", &te, "--mode", "strict"]), exit::DATA);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(handshake(&["stats", "--no-such-flag"]), exit::USAGE);
    assert_eq!(handshake(&["encode"]), exit::USAGE);
    assert_eq!(handshake(&["encode", "--data", &path(&dir, "missing.json")]), exit::IO);

    let bad = path(&dir, "bad.json");
    fs::write(&bad, "{\"text\": \"a b\", \"triple_list\": [[\"a\", \"r\", \"zzz\"]]}\n").unwrap();
    assert_eq!(handshake(&["encode", "--data", &bad, "--out", &path(&dir, "o.jsonl")]), exit::DATA);

    let ckpt = path(&dir, "notackpt.json");
    fs::write(&ckpt, "{\"format\": \"other\", \"version\": 1, \"scalar\": \"f64\"}").unwrap();
    assert_eq!(handshake(&["eval", "--ckpt", &ckpt, "--data", &fixture("test.json")]), exit::NUMERIC);
}

#[test]
fn conflicts_fail_strict_and_are_reported_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(&dir, "conflict.json");
    fs::write(&data, "{\"text\": \"Alice met Bob .\", \"triple_list\": [[\"Alice\", \"met\", \"Bob\"], [\"Bob\", \"met\", \"Alice\"]]}\n").unwrap();
    let out = path(&dir, "tags.jsonl");
    assert_eq!(handshake(&["encode", "--data", &data, "--out", &out]), exit::DATA);
    assert_eq!(handshake(&["encode", "--data", &data, "--out", &out, "--mode", "lenient"]), exit::OK);
    let report = read_json(&format!("{out}.report.json"));
    assert_eq!(report["report"]["sentences_with_conflicts"], 1);
    assert_eq!(report["provenance"]["config"]["mode"], "lenient");
}

#[test]
fn selftest_passes_on_small_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "selftest.json");
    assert_eq!(handshake(&["selftest", "--cases", "200", "--instances", "1", "--seed", "5", "--out", &out]), exit::OK);
    let suites = read_json(&out)["report"].as_array().unwrap().clone();
    let names: Vec<&str> = suites.iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["roundtrip", "oracle", "gradient"]);
    assert!(suites.iter().all(|s| s["failures"] == 0));
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(handshake(&["--help"]), exit::OK);
    assert_eq!(handshake(&["--version"]), exit::OK);
}
