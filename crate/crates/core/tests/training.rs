mod common;

use dflsim::competency::score_dataset;
use dflsim::levers::lever_table;
use dflsim::models::{Family, ModelRegistry};
use dflsim::pipeline::SplitSpec;
use dflsim::scenario::{simulate, Scenario};
use dflsim::training::{train, TrainingRequest};

fn request() -> TrainingRequest {
    TrainingRequest {
        split: SplitSpec { folds: 5, ..SplitSpec::default() },
        ..TrainingRequest::default()
    }
}

#[test]
fn linear_wins_on_calibrated_survey() {
    let data = common::small_survey(8, 3);
    let out = train(&data, &ModelRegistry::with_defaults(), &request()).unwrap();
    assert_eq!(out.results.len(), 3);
    assert_eq!(out.selection.family, Family::Linear);
    assert_eq!(out.train_size + out.test_size, data.len());
    let table = out.lever_table.as_ref().unwrap();
    let total: f64 = table.rows.iter().map(|r| r.relative_weight).sum();
    assert!((total - 100.0).abs() < 1e-9);
    for r in &out.results {
        let e = &r.candidate.report;
        assert!((e.rmse * e.rmse - e.mse).abs() < 1e-9);
        assert_eq!(r.cv.fold_r2.len(), 5);
    }
}

#[test]
fn training_is_deterministic() {
    let data = common::small_survey(12, 5);
    let req = TrainingRequest { families: vec!["linear".into(), "boosting".into()], ..request() };
    let a = train(&data, &ModelRegistry::with_defaults(), &req).unwrap();
    let b = train(&data, &ModelRegistry::with_defaults(), &req).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn ensembles_are_refused_lever_tables() {
    let data = common::small_survey(12, 5);
    let req = TrainingRequest { families: vec!["forest".into()], ..request() };
    let out = train(&data, &ModelRegistry::with_defaults(), &req).unwrap();
    assert!(out.lever_table.is_none());
    let err = lever_table(out.chosen(), &data.codebook).unwrap_err().to_string();
    assert!(err.contains("lever extraction requires the transparent model"), "{err}");
}

#[test]
fn device_access_reach_matches_lacking_count() {
    let data = common::small_survey(8, 9);
    let req = TrainingRequest { families: vec!["linear".into()], ..request() };
    let out = train(&data, &ModelRegistry::with_defaults(), &req).unwrap();
    let s = Scenario::preset("device_access", &data.codebook).unwrap();
    let res = simulate(&data, out.chosen(), &s).unwrap();
    let pos = data.codebook.position("device_ownership").unwrap();
    let lacking = data.records.iter().filter(|r| r.values[pos].level() != Some(1)).count();
    assert_eq!(res.reached, lacking);
    assert!(res.population_gain_points > 0.0);
    // gains only where the lever moved
    for (o, r) in res.records.iter().zip(&data.records) {
        assert_eq!(o.reached, r.values[pos].level() != Some(1));
        if !o.reached {
            assert_eq!(o.delta_points, 0.0);
        }
    }
    // the target scores are what the model was trained to predict
    assert_eq!(score_dataset(&data).len(), res.population);
}
