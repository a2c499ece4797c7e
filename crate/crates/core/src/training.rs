//! Train, compare and select models on one dataset.
//!
//! Each requested family is cross-validated on the training split, refitted
//! on the whole training split with a plan fitted there, and scored on the
//! held-out test split. Selection then applies the accuracy, stability and
//! transparency rule.

use serde::{Deserialize, Serialize};

use crate::competency::score_dataset;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::levers::{lever_table, LeverTable};
use crate::models::{evaluate, select_model, Candidate, EvaluationReport, ModelRegistry, Selection, TrainedModel, DEFAULT_ACCURACY_TOLERANCE};
use crate::pipeline::{apply_to_indices, cross_validate, fit_preprocess, stratified_split, CvReport, SplitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRequest {
    #[serde(default)]
    pub split: SplitSpec,
    pub families: Vec<String>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_ACCURACY_TOLERANCE
}

impl Default for TrainingRequest {
    fn default() -> Self {
        TrainingRequest {
            split: SplitSpec::default(),
            families: vec!["linear".into(), "forest".into(), "boosting".into()],
            tolerance: DEFAULT_ACCURACY_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyResult {
    pub candidate: Candidate,
    pub cv: CvReport,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub request: TrainingRequest,
    pub dataset_fingerprint: String,
    pub train_size: usize,
    pub test_size: usize,
    pub results: Vec<FamilyResult>,
    pub selection: Selection,
    /// Present when the chosen model is linear.
    pub lever_table: Option<LeverTable>,
    pub lever_error: Option<String>,
}

impl TrainingOutcome {
    pub fn chosen(&self) -> &TrainedModel {
        self.model(&self.selection.chosen).expect("selection names a trained family")
    }

    pub fn model(&self, name: &str) -> Option<&TrainedModel> {
        self.results.iter().find(|r| r.model.name == name).map(|r| &r.model)
    }

    pub fn reports(&self) -> Vec<(&str, &EvaluationReport)> {
        self.results.iter().map(|r| (r.candidate.name.as_str(), &r.candidate.report)).collect()
    }
}

pub fn train(dataset: &Dataset, registry: &ModelRegistry, request: &TrainingRequest) -> Result<TrainingOutcome> {
    request.split.validate()?;
    let strategies = registry.resolve(&request.families.join(","))?;
    let targets: Vec<f64> = score_dataset(dataset).iter().map(|s| s.dfl_points).collect();
    let split = stratified_split(dataset, &request.split)?;
    let plan = fit_preprocess(dataset, &split.train, "train")?;
    let x_train = apply_to_indices(&plan, dataset, &split.train);
    let y_train: Vec<f64> = split.train.iter().map(|&i| targets[i]).collect();
    let x_test = apply_to_indices(&plan, dataset, &split.test);
    let y_test: Vec<f64> = split.test.iter().map(|&i| targets[i]).collect();

    let mut results = Vec::with_capacity(strategies.len());
    for s in strategies {
        log::info!("training {}", s.name());
        let cv = cross_validate(dataset, &split.train, &targets, s, &request.split)?;
        let model = TrainedModel::fit(s, plan.clone(), &x_train, &y_train, request.split.seed)?;
        let mut report = evaluate(&y_test, &model.predictor.predict(&x_test))?;
        report.cv_r2_mean = Some(cv.mean).filter(|m| m.is_finite());
        report.cv_r2_std = Some(cv.std).filter(|m| m.is_finite());
        report.cv_fold_r2 = cv.fold_r2.clone();
        let candidate = Candidate {
            name: s.name().to_string(),
            family: s.family(),
            transparency_rank: s.transparency_rank(),
            report,
        };
        results.push(FamilyResult { candidate, cv, model });
    }
    let candidates: Vec<Candidate> = results.iter().map(|r| r.candidate.clone()).collect();
    let selection = select_model(&candidates, request.tolerance)?;
    let chosen = results.iter().find(|r| r.model.name == selection.chosen).map(|r| &r.model).expect("chosen exists");
    let (lever_table, lever_error) = match lever_table(chosen, &dataset.codebook) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(TrainingOutcome {
        request: request.clone(),
        dataset_fingerprint: dataset.fingerprint(),
        train_size: split.train.len(),
        test_size: split.test.len(),
        results,
        selection,
        lever_table,
        lever_error,
    })
}
