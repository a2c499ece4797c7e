mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use dflsim::codebook::default_codebook;
use dflsim::competency::score_record;
use dflsim::dataset::{parse_csv, Dataset, Provenance, SurveyRecord, Value};
use dflsim::levers::lever_table;
use dflsim::models::{LinearRegression, TrainedModel};
use dflsim::pipeline::{apply_to_indices, assign_folds, fit_preprocess, stratified_split, SplitSpec};
use dflsim::scenario::{counterfactual_dataset, simulate, Scenario};

fn random_record(levels: &[u32], id: usize) -> SurveyRecord {
    let cb = default_codebook();
    let values = cb
        .fields
        .iter()
        .zip(levels.iter().cycle())
        .enumerate()
        .map(|(i, (f, l))| {
            if f.kind.is_categorical() {
                if i != cb.country_position() && l % 17 == 0 {
                    Value::Missing
                } else {
                    Value::Level(l % f.categories.len() as u32)
                }
            } else {
                Value::Number(f64::from(l % 9))
            }
        })
        .collect();
    SurveyRecord { record_id: format!("p{id}"), values }
}

fn dataset(rows: &[Vec<u32>]) -> Dataset {
    let recs = rows.iter().enumerate().map(|(i, l)| random_record(l, i)).collect();
    Dataset::new(default_codebook(), recs, Provenance::Ingested).unwrap()
}

fn linear_model(data: &Dataset) -> TrainedModel {
    let all: Vec<usize> = (0..data.len()).collect();
    let plan = fit_preprocess(data, &all, "all").unwrap();
    let x = apply_to_indices(&plan, data, &all);
    let y: Vec<f64> = data.records.iter().map(|r| score_record(r, &data.codebook).dfl_points).collect();
    TrainedModel::fit(&LinearRegression::default(), plan, &x, &y, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_is_sum_of_domains_and_bounded(levels in prop::collection::vec(0u32..1000, 60)) {
        let cb = default_codebook();
        let s = score_record(&random_record(&levels, 0), &cb);
        prop_assert_eq!(s.dfl_points, s.dc_points + s.fc_points + s.dfc_points);
        prop_assert!((0.0..=52.0).contains(&s.dfl_points));
        prop_assert!(s.dc_points <= 18.0 && s.fc_points <= 16.0 && s.dfc_points <= 18.0);
    }

    #[test]
    fn csv_round_trip_preserves_records(rows in prop::collection::vec(prop::collection::vec(0u32..1000, 60), 1..20)) {
        let d = dataset(&rows);
        let back = parse_csv(default_codebook(), &d.to_csv_string(), Provenance::Ingested).unwrap();
        prop_assert_eq!(&back.records, &d.records);
        prop_assert_eq!(back.fingerprint(), d.fingerprint());
    }

    #[test]
    fn split_partitions_and_balances(seed in 0u64..1000, frac in 0.05f64..0.5, rows in prop::collection::vec(prop::collection::vec(0u32..1000, 60), 30..120)) {
        let d = dataset(&rows);
        let spec = SplitSpec { test_fraction: frac, seed, folds: 4, ..SplitSpec::default() };
        let cpos = d.codebook.country_position();
        let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for r in &d.records { per.entry(r.values[cpos].level().unwrap()).or_default().1 += 1; }
        let split = match stratified_split(&d, &spec) {
            Ok(s) => s,
            Err(_) => {
                // strata smaller than the fold count are refused up front
                prop_assert!(per.values().any(|&(_, n)| n < 4));
                return Ok(());
            }
        };
        let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
        for &i in &split.test { per.entry(d.records[i].values[cpos].level().unwrap()).or_default().0 += 1; }
        for (test, size) in per.values() {
            prop_assert!((*test as f64 - frac * *size as f64).abs() <= 1.0);
        }
        let folds = assign_folds(&d, &split.train, &spec).unwrap();
        let mut sizes = [0usize; 4];
        for f in &folds { sizes[*f] += 1; }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn simulation_invariants_hold(rows in prop::collection::vec(prop::collection::vec(0u32..1000, 60), 40..80), pick in 0usize..13) {
        let d = dataset(&rows);
        let model = linear_model(&d);
        let table = lever_table(&model, &d.codebook).unwrap();
        let total: f64 = table.rows.iter().map(|r| r.relative_weight).sum();
        prop_assert!(table.rows.iter().all(|r| r.relative_weight >= 0.0));
        prop_assert!((total - 100.0).abs() < 1e-9);

        let name = Scenario::preset_names()[pick];
        let mut s = Scenario::preset(name, &d.codebook).unwrap();
        s.clip = true;
        let clipped = simulate(&d, &model, &s).unwrap();
        s.clip = false;
        let raw = simulate(&d, &model, &s).unwrap();
        for (c, r) in clipped.records.iter().zip(&raw.records) {
            prop_assert!(c.delta_points <= r.delta_points + 1e-12);
        }
        prop_assert_eq!(clipped.reached, raw.reached);
        // applying the scenario twice changes nothing the second time
        let cf = counterfactual_dataset(&d, &s).unwrap();
        let again = simulate(&cf, &model, &s).unwrap();
        prop_assert_eq!(again.reached, 0);
        prop_assert!(again.records.iter().all(|o| o.delta_points == 0.0));
    }
}
