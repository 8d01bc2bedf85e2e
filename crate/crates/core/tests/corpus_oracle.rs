mod common;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use common::{fixtures, load};
use serde_json::Value;
use tutorbench_core::corpus::{
    corpus_stats, load_corpus, parse_corpus, sample_internal_test, split_for_finetune, CorpusError, Split,
};

const FIXTURES: [&str; 5] = ["appendix.json", "handwritten.json", "filter_set.json", "train.jsonl", "dev.jsonl"];

fn raw_records(path: &Path) -> Vec<Value> {
    let text = fs::read_to_string(path).unwrap();
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => items,
        _ => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect(),
    }
}

/// Welford running moments over f64s; deliberately a different path from the
/// library's two-pass computation.
fn welford(values: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in values.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    (mean, (m2 / values.len() as f64).sqrt())
}

#[test]
fn stats_match_brute_force_on_every_fixture() {
    for name in FIXTURES {
        let path = fixtures().join(name);
        let raw = raw_records(&path);
        let turns: Vec<f64> = raw
            .iter()
            .map(|r| r["utterances"].as_array().unwrap().len() as f64)
            .collect();
        let words: Vec<f64> = raw
            .iter()
            .filter_map(|r| r.get("response").and_then(Value::as_str))
            .map(|s| s.split(|c: char| c.is_whitespace()).filter(|w| !w.is_empty()).count() as f64)
            .collect();

        let stats = corpus_stats(&load_corpus(&path, Split::Custom).unwrap()).unwrap();
        let (tm, ts) = welford(&turns);
        assert_eq!(stats.sample_count, raw.len(), "{name}");
        assert!((stats.turns_mean - tm).abs() <= 1e-9, "{name}");
        assert!((stats.turns_std - ts).abs() <= 1e-9, "{name}");
        assert_eq!(stats.turns_max as f64, turns.iter().cloned().fold(f64::MIN, f64::max), "{name}");
        if words.is_empty() {
            assert!(stats.response_len_mean.is_none(), "{name}");
        } else {
            let (wm, ws) = welford(&words);
            assert!((stats.response_len_mean.unwrap() - wm).abs() <= 1e-9, "{name}");
            assert!((stats.response_len_std.unwrap() - ws).abs() <= 1e-9, "{name}");
            assert_eq!(stats.response_len_min.unwrap() as f64, words.iter().cloned().fold(f64::MAX, f64::min));
            assert_eq!(stats.response_len_max.unwrap() as f64, words.iter().cloned().fold(f64::MIN, f64::max));
        }
    }
}

#[test]
fn fixtures_round_trip_through_jsonl() {
    for name in FIXTURES {
        let corpus = load(name);
        assert_eq!(parse_corpus(&corpus.to_jsonl(), Split::Custom).unwrap(), corpus, "{name}");
    }
}

#[test]
fn appendix_fixture_shape() {
    let c = load("appendix.json");
    assert_eq!(c.ids(), common::APPENDIX_IDS);
    assert_eq!(
        c.get("0701").unwrap().reference_response.as_deref(),
        Some("But e.g. pleased with their visit = good idea")
    );
    assert_eq!(c.get("0701").unwrap().utterances.len(), 7);
    assert_eq!(c.get("1062").unwrap().utterances.len(), 8);
}

#[test]
fn dev_fixture_has_no_references() {
    let dev = load("dev.jsonl");
    assert!(dev.samples.iter().all(|s| s.reference_response.is_none()));
    assert!(corpus_stats(&dev).unwrap().response_len_mean.is_none());
    assert!(matches!(dev.require_references(), Err(CorpusError::MissingReferences(_))));
}

#[test]
fn internal_test_set_avoids_exemplars() {
    let train = load("train.jsonl");
    let exclude: HashSet<String> = common::PINNED_EXEMPLARS.iter().map(|s| s.to_string()).collect();
    let a = sample_internal_test(&train, 50, 7, &exclude).unwrap();
    let b = sample_internal_test(&train, 50, 7, &exclude).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 50);
    assert!(a.ids().iter().all(|id| !exclude.contains(id)));
}

#[test]
fn train_fixture_splits_95_5() {
    let train = load("train.jsonl");
    let (t, h) = split_for_finetune(&train, 0.05, 3).unwrap();
    assert_eq!((t.len(), h.len()), (95, 5));
    let ids: HashSet<String> = t.ids().into_iter().chain(h.ids()).collect();
    assert_eq!(ids.len(), 100);
}
