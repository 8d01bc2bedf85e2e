mod common;

use std::fs;

use common::{blessing, fixtures, load};
use tutorbench_core::backends::{export_finetune_dataset, finetune_record, FinetuneSerialization};
use tutorbench_core::corpus::{Corpus, Split};

#[test]
fn dialogue_1062_export_matches_golden() {
    let appendix = load("appendix.json");
    let sample = appendix.get("1062").unwrap().clone();
    let record = finetune_record(&sample, &FinetuneSerialization::default()).unwrap();
    assert!(record.prompt.ends_with("student: I got it\nteacher:"));
    assert_eq!(record.completion, " Yes that's great - that would look good in an answer\n");

    let line = export_finetune_dataset(&Corpus::new(Split::Train, vec![sample]).unwrap(), &Default::default()).unwrap();
    let path = fixtures().join("golden/finetune_1062.jsonl");
    if blessing() {
        fs::write(&path, &line).unwrap();
    }
    assert_eq!(line, fs::read_to_string(&path).unwrap());
}

#[test]
fn train_export_has_one_line_per_sample() {
    let train = load("train.jsonl");
    let out = export_finetune_dataset(&train, &FinetuneSerialization::default()).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 100);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["completion", "prompt"]);
    }
}
