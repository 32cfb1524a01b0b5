use serde_json::Value;
use trusteq_core::calibration::{bucket, ece};
use trusteq_web::{
    calibration_json, compare_json, ksweep_json, models, predict_json, synthetic_records,
};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn models_train_on_bundled_corpus() {
    let m = models().unwrap();
    assert_eq!(m.dataset.len(), 64);
    assert_eq!(m.capped.vocab().len(), 50);
    assert!(m.full.vocab().len() > 50);
}

#[test]
fn compare_reports_overlap_of_listed_words() {
    let out = parse(
        &compare_json(
            "How do I learn to cook?",
            "What is the best way to learn cooking?",
            "kshap",
            5,
            3,
        )
        .unwrap(),
    );
    let models = out["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    let words = |i: usize| -> Vec<String> {
        models[i]["top"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p[0].as_str().unwrap().to_owned())
            .collect()
    };
    let (a, b) = (words(0), words(1));
    assert_eq!(a.len(), 5);
    let shared = a.iter().filter(|w| b.contains(w)).count() as f64;
    let union = (a.len() + b.len()) as f64 - shared;
    assert_eq!(out["jaccard"].as_f64().unwrap(), shared / union);
    for m in models {
        let p: f64 = m["probs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert!((p - 1.0).abs() < 1e-12);
    }
}

#[test]
fn compare_is_seed_deterministic() {
    let run = || compare_json("why is the sky blue", "", "lime", 3, 11).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn bad_inputs_are_errors() {
    assert!(compare_json("a b", "", "gradient", 3, 0).is_err());
    assert!(compare_json("a b", "", "lime", 0, 0).is_err());
    assert!(compare_json("   ", "", "lime", 3, 0).is_err());
    assert!(calibration_json(0, 1.0, 0).is_err());
    assert!(calibration_json(10, -1.0, 0).is_err());
    assert!(ksweep_json("lime", 0, 4, 0).is_err());
    assert!(ksweep_json("lime", 5, 0, 0).is_err());
}

#[test]
fn sharpening_raises_calibration_error() {
    let err = |s| ece(&bucket(&synthetic_records(4000, s, 5)).unwrap());
    let (calibrated, sharp) = (err(1.0), err(4.0));
    assert!(calibrated < 0.05, "{calibrated}");
    assert!(sharp > calibrated + 0.1, "{sharp} vs {calibrated}");
}

#[test]
fn calibration_output_has_two_series_and_a_valid_figure() {
    let out = parse(&calibration_json(500, 2.0, 1).unwrap());
    assert_eq!(out["reports"].as_array().unwrap().len(), 2);
    let svg = out["svg"].as_str().unwrap();
    let doc = roxmltree::Document::parse(svg).unwrap();
    assert_eq!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count(),
        2
    );
}

#[test]
fn ksweep_covers_every_k() {
    let out = parse(&ksweep_json("lime", 6, 8, 7).unwrap());
    let sweep = out["sweep"].as_array().unwrap();
    let ks: Vec<u64> = sweep.iter().map(|p| p[0].as_u64().unwrap()).collect();
    assert_eq!(ks, vec![1, 2, 3, 4, 5, 6]);
    assert!(sweep
        .iter()
        .all(|p| (0.0..=1.0).contains(&p[1].as_f64().unwrap())));
    assert_eq!(out["instances"], 8);
    roxmltree::Document::parse(out["svg"].as_str().unwrap()).unwrap();
}

#[test]
fn predict_lists_both_models() {
    let out = parse(
        &predict_json(
            "How can I improve my English?",
            "How do I get better at English?",
        )
        .unwrap(),
    );
    let names: Vec<&str> = out
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["bow-full", "bow-50"]);
}
