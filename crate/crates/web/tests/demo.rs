use serde_json::Value;
use termnmt_web::{rerank_json, score_json, tokenize_terms_json};

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("ok")).unwrap()
}

#[test]
fn tokenize_shows_placeholders_and_translations() {
    let v = parse(tokenize_terms_json(
        "ka/noun ri/noun ga/particle su/noun wo/particle ka/noun ri/noun mi/verb",
        "ka ri ||| zhong guo ||| 0.9\nsu ||| mei ||| 1.0\n",
    ));
    let s = &v[0];
    assert_eq!(s["tokens"], serde_json::json!(["TT_1", "ga", "TT_2", "wo", "TT_1", "mi"]));
    let terms = s["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 3);
    assert_eq!(terms[0]["translation"], "zhong guo");
    assert_eq!(terms[1]["placeholder"], "TT_2");
    assert_eq!(terms[2]["placeholder"], "TT_1");
}

#[test]
fn tokenize_reports_bad_input() {
    assert!(tokenize_terms_json("no-tag", "").is_err());
    assert!(tokenize_terms_json("a/noun", "broken line").is_err());
}

#[test]
fn score_identical_is_100() {
    let v = parse(score_json("a b c d\n", "a b c d\n"));
    assert_eq!(v["bleu"], 100.0);
    assert_eq!(v["ribes"], 100.0);
    assert!(score_json("a\nb\n", "a\n").is_err());
}

#[test]
fn rerank_averages_per_group() {
    let nbest = "0 ||| a b ||| -1 ||| -1\n0 ||| b ||| -3 ||| -3\n1 ||| c ||| -2 ||| -2\n";
    let v = parse(rerank_json(nbest, "-9 -1 -4", false));
    let first = v[0]["ranked"].as_array().unwrap();
    // (-1 - 9) / 2 = -5 against (-3 - 1) / 2 = -2.
    assert_eq!(first[0]["text"], "b");
    assert_eq!(first[0]["combined"], -2.0);
    assert_eq!(first[0]["smt_rank"], 2);
    assert_eq!(v[1]["ranked"][0]["combined"], -3.0);
    assert!(rerank_json(nbest, "-1 -2", false).is_err());
    assert!(rerank_json(nbest, "-1 x -2", false).is_err());
}
