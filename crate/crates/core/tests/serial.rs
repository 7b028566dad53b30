use elicit_core::model::GroundTruth;
use elicit_core::prelude::*;
use elicit_core::serial::{self, Versioned};
use nalgebra::{DMatrix, DVector};

fn round_trip<T: Versioned + PartialEq + std::fmt::Debug + serde::Serialize + serde::de::DeserializeOwned>(value: &T) {
    let text = serial::to_string(value).unwrap();
    let back: T = serial::from_str(&text).unwrap();
    assert_eq!(&back, value);
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["format"], T::FORMAT);
    assert_eq!(json["version"], T::VERSION);
}

#[test]
fn core_types_round_trip() {
    let spec = SyntheticSpec {
        n: 6,
        m: 5,
        m_star: 2,
        psi2: 1.0,
        sigma2: 1.0,
        test_size: 4,
        seed: 2,
    };
    let p = generate_synthetic(&spec);
    let h = Hyperparameters::synthetic(5, 2);
    let mut log = FeedbackLog::new();
    log.push(Feedback::value(1, 0.25), 5).unwrap();
    log.push(Feedback::relevance(3, false), 5).unwrap();
    log.push(Feedback::uncertain(0), 5).unwrap();
    let fit = fit_posterior(&p.train, &log, &h, &EpConfig::default()).unwrap();
    round_trip(&p.train);
    round_trip(&h);
    round_trip(&Hyperparameters::review_data());
    round_trip(&log);
    round_trip(&fit.posterior);
}

#[test]
fn matrices_are_row_major() {
    let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let d = Dataset::with_default_names(x, DVector::from_vec(vec![0.5, 1.5])).unwrap();
    let v = serial::to_value(&d).unwrap();
    assert_eq!(v["body"]["x"], serde_json::json!([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
    assert_eq!(v["body"]["y"], serde_json::json!([0.5, 1.5]));
}

#[test]
fn wrong_format_or_version_is_rejected() {
    let h = Hyperparameters::synthetic(5, 2);
    let mut v = serial::to_value(&h).unwrap();
    v["version"] = serde_json::json!(99);
    assert!(matches!(
        serial::from_value::<Hyperparameters>(v),
        Err(Error::Format { found_version: 99, .. })
    ));
    let d = serial::to_value(&FeedbackLog::new()).unwrap();
    assert!(matches!(serial::from_value::<Hyperparameters>(d), Err(Error::Format { .. })));
}

#[test]
fn corrupt_payloads_are_rejected() {
    assert!(serial::from_str::<Dataset>("{ not json").is_err());
    let ragged = r#"{"format":"elicit.dataset","version":1,"body":{"x":[[1.0],[2.0,3.0]],"y":[1,2],"feature_names":["a"]}}"#;
    assert!(serial::from_str::<Dataset>(ragged).is_err());
    let bad_y = r#"{"format":"elicit.dataset","version":1,"body":{"x":[[1.0]],"y":[1,2],"feature_names":["a"]}}"#;
    assert!(serial::from_str::<Dataset>(bad_y).is_err());
}

#[test]
fn atomic_save_replaces_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.json");
    serial::save(&Hyperparameters::synthetic(5, 2), &path).unwrap();
    serial::save(&Hyperparameters::review_data(), &path).unwrap();
    let back: Hyperparameters = serial::load(&path).unwrap();
    assert_eq!(back, Hyperparameters::review_data());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn ground_truth_is_plain_json() {
    let t = GroundTruth {
        w: vec![0.0, 1.0],
        gamma: vec![false, true],
        m_star: 1,
    };
    let text = serde_json::to_string(&t).unwrap();
    assert_eq!(serde_json::from_str::<GroundTruth>(&text).unwrap(), t);
}

#[test]
fn empty_dataset_round_trips() {
    let d = Dataset::with_default_names(DMatrix::zeros(0, 3), DVector::zeros(0)).unwrap();
    let back: Dataset = serial::from_str(&serial::to_string(&d).unwrap()).unwrap();
    assert_eq!(back.m(), 3);
    assert_eq!(back, d);
}
