//! The three files exchanged with the training side: the pretraining corpus,
//! canonical pairs, and predictions.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::Command;

use kbfact::{
    evaluate_classification, format_pair_input, load_canonical, read_corpus, read_predictions,
    Label, MetricError, PredictionRecord,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn keys(v: &serde_json::Value) -> Vec<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn corpus_records_have_the_fixed_field_order() {
    let text = fs::read_to_string(fixture("walk_seed7.jsonl")).unwrap();
    for line in text.lines() {
        // Parsed maps are sorted, so check the order on the raw line.
        let positions: Vec<usize> = [
            "\"id\"",
            "\"strategy\"",
            "\"text\"",
            "\"masked_text\"",
            "\"targets\"",
            "\"source_entities\"",
            "\"seed\"",
        ]
        .iter()
        .map(|k| line.find(k).unwrap())
        .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let mut k = keys(&v);
        k.sort();
        assert_eq!(
            k,
            [
                "id",
                "masked_text",
                "seed",
                "source_entities",
                "strategy",
                "targets",
                "text"
            ]
        );
        for t in v["targets"].as_array().unwrap() {
            let mut tk = keys(t);
            tk.sort();
            assert_eq!(tk, ["surface", "unit"]);
        }
    }
    for record in read_corpus(BufReader::new(
        File::open(fixture("walk_seed7.jsonl")).unwrap(),
    )) {
        record.unwrap().validate().unwrap();
    }
}

#[test]
fn golden_walk_corpus_is_reproduced() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("walk.jsonl");
    let status = Command::new(env!("CARGO_BIN_EXE_kbfact"))
        .args(["synth", "walk", "--kb"])
        .arg(fixture("small_kb.tsv"))
        .arg("--out")
        .arg(&out)
        .args(["--n", "6", "--k", "3", "--seed", "7"])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read_to_string(out).unwrap(),
        fs::read_to_string(fixture("walk_seed7.jsonl")).unwrap()
    );
}

#[test]
fn unknown_corpus_fields_are_rejected() {
    let line = r#"{"id":"walk-0","strategy":"knowledge_walk","text":"a b c","masked_text":"a [MASK] c","targets":[{"unit":1,"surface":"b"}],"source_entities":["a","c"],"seed":1,"extra":0}"#;
    let err = read_corpus(format!("\n{line}\n").as_bytes())
        .next()
        .unwrap()
        .unwrap_err();
    assert!(err.to_string().starts_with("line 2"), "{err}");
}

#[test]
fn canonical_pairs_and_classifier_inputs() {
    let pairs = load_canonical(File::open(fixture("pairs.jsonl")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 10);
    let expected: Vec<String> = fs::read_to_string(fixture("pair_inputs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let got: Vec<String> = pairs.iter().map(format_pair_input).collect();
    assert_eq!(got, expected);
    assert_eq!(
        got[1],
        "The vaccine [SEP] works. [SEP] Trials show efficacy."
    );
}

#[test]
fn predictions_fixture_is_accepted() {
    let preds = read_predictions(BufReader::new(
        File::open(fixture("predictions.jsonl")).unwrap(),
    ))
    .unwrap();
    assert_eq!(preds.len(), 10);
    for p in &preds {
        // Training side contract: factual iff score_factual >= 0.5.
        assert_eq!(
            p.pred_label == Label::Factual,
            p.score_factual >= 0.5,
            "{}",
            p.id
        );
    }
    let gold = load_canonical(File::open(fixture("pairs.jsonl")).unwrap()).unwrap();
    let report = evaluate_classification(&gold, &preds, true).unwrap();
    assert_eq!(report.rows[0].n, 10);
    assert_eq!(report.unmatched_predictions, 0);
    let groups: Vec<&str> = report.rows.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(groups, ["all", "cnndm", "untagged", "xsum"]);
}

#[test]
fn malformed_predictions_are_rejected_with_line() {
    let cases = [
        r#"{"id":"a","pred_label":"factual"}"#,
        r#"{"id":"a","pred_label":"maybe","score_factual":0.5}"#,
        r#"{"id":"a","pred_label":"factual","score_factual":1.5}"#,
        r#"{"id":"","pred_label":"factual","score_factual":0.5}"#,
        r#"{"id":"a","pred_label":"factual","score_factual":0.5,"logits":[0,1]}"#,
        "not json",
    ];
    for case in cases {
        let text =
            format!("{{\"id\":\"ok\",\"pred_label\":\"factual\",\"score_factual\":0.7}}\n{case}\n");
        match read_predictions(text.as_bytes()) {
            Err(MetricError::InvalidPrediction { line: Some(2), .. }) => {}
            other => panic!("{case}: {other:?}"),
        }
    }
}

#[test]
fn prediction_records_serialize_to_the_documented_shape() {
    let p = PredictionRecord {
        id: "x".into(),
        pred_label: Label::NonFactual,
        score_factual: 0.25,
    };
    assert_eq!(
        serde_json::to_string(&p).unwrap(),
        r#"{"id":"x","pred_label":"non_factual","score_factual":0.25}"#
    );
}
