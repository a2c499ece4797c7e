//! Model families behind a common [`ModelStrategy`] trait, registered by
//! name in a [`ModelRegistry`].
//!
//! A strategy only knows how to fit a [`Predictor`] on an encoded feature
//! matrix. [`TrainedModel`] bundles the predictor with the preprocessing plan
//! it was fitted with, so it can score raw survey records.

pub mod boosting;
pub mod forest;
pub mod linear;
mod metrics;
pub mod selection;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use boosting::{fit_boosting, BoostingConfig, BoostingModel};
pub use forest::{fit_forest, FeatureSubsample, ForestConfig, ForestModel};
pub use linear::{fit_linear, LinearModel, DEFAULT_RIDGE};
pub use metrics::{evaluate, r_squared, EvaluationReport};
pub use selection::{select_model, Candidate, Selection, SelectionStage, DEFAULT_ACCURACY_TOLERANCE};

use crate::dataset::SurveyRecord;
use crate::error::{Error, Result};
use crate::fingerprint::json_fingerprint;
use crate::pipeline::{FeatureMatrix, PreprocessPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Linear,
    RandomForest,
    GradientBoosting,
}

impl Family {
    /// 1 is the most transparent.
    pub fn transparency_rank(self) -> u8 {
        match self {
            Family::Linear => 1,
            Family::GradientBoosting => 2,
            Family::RandomForest => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::Linear => "Linear Regression",
            Family::RandomForest => "Random Forest",
            Family::GradientBoosting => "Gradient Boosting",
        }
    }
}

/// Fitted parameters of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "parameters", rename_all = "snake_case")]
pub enum Predictor {
    Linear(LinearModel),
    Forest(ForestModel),
    Boosting(BoostingModel),
}

impl Predictor {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            Predictor::Linear(m) => m.predict_row(row),
            Predictor::Forest(m) => m.predict_row(row),
            Predictor::Boosting(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.rows).map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match self {
            Predictor::Linear(m) => Some(m),
            _ => None,
        }
    }
}

/// A fitting algorithm selectable by name.
pub trait ModelStrategy: Send + Sync {
    fn name(&self) -> &str;
    fn family(&self) -> Family;
    /// Hyperparameters, echoed into model artifacts.
    fn config(&self) -> serde_json::Value;
    fn fit(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Result<Predictor>;

    fn transparency_rank(&self) -> u8 {
        self.family().transparency_rank()
    }
}

#[derive(Debug, Clone)]
pub struct LinearRegression {
    pub ridge: f64,
}

impl Default for LinearRegression {
    fn default() -> Self {
        LinearRegression { ridge: DEFAULT_RIDGE }
    }
}

impl ModelStrategy for LinearRegression {
    fn name(&self) -> &str {
        "linear"
    }

    fn family(&self) -> Family {
        Family::Linear
    }

    fn config(&self) -> serde_json::Value {
        serde_json::json!({ "ridge": self.ridge })
    }

    fn fit(&self, x: &FeatureMatrix, y: &[f64], _seed: u64) -> Result<Predictor> {
        fit_linear(x, y, self.ridge).map(Predictor::Linear)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RandomForest {
    pub config: ForestConfig,
}

impl ModelStrategy for RandomForest {
    fn name(&self) -> &str {
        "forest"
    }

    fn family(&self) -> Family {
        Family::RandomForest
    }

    fn config(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn fit(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Result<Predictor> {
        fit_forest(x, y, &self.config, seed).map(Predictor::Forest)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradientBoosting {
    pub config: BoostingConfig,
}

impl ModelStrategy for GradientBoosting {
    fn name(&self) -> &str {
        "boosting"
    }

    fn family(&self) -> Family {
        Family::GradientBoosting
    }

    fn config(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn fit(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Result<Predictor> {
        fit_boosting(x, y, &self.config, seed).map(Predictor::Boosting)
    }
}

/// Name-keyed collection of strategies, in registration order.
#[derive(Default)]
pub struct ModelRegistry {
    entries: Vec<Box<dyn ModelStrategy>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        ModelRegistry::default()
    }

    /// `linear`, `forest` and `boosting` with their default hyperparameters.
    pub fn with_defaults() -> Self {
        let mut r = ModelRegistry::new();
        r.register(Box::new(LinearRegression::default()));
        r.register(Box::new(RandomForest::default()));
        r.register(Box::new(GradientBoosting::default()));
        r
    }

    /// Adds a strategy, replacing any existing one with the same name.
    pub fn register(&mut self, strategy: Box<dyn ModelStrategy>) {
        self.entries.retain(|s| s.name() != strategy.name());
        self.entries.push(strategy);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ModelStrategy> {
        self.entries
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|s| s.name()).collect()
    }

    /// Resolves a comma-separated list such as `linear,forest,boosting`.
    pub fn resolve(&self, list: &str) -> Result<Vec<&dyn ModelStrategy>> {
        let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if names.is_empty() {
            return Err(Error::InvalidInput("no model families requested".into()));
        }
        names.into_iter().map(|n| self.get(n)).collect()
    }
}

/// A fitted predictor with the preprocessing it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub name: String,
    pub kind: Family,
    pub transparency_rank: u8,
    pub config: serde_json::Value,
    pub seed: u64,
    pub plan: PreprocessPlan,
    pub predictor: Predictor,
}

impl TrainedModel {
    pub fn fit(
        strategy: &dyn ModelStrategy,
        plan: PreprocessPlan,
        x: &FeatureMatrix,
        y: &[f64],
        seed: u64,
    ) -> Result<Self> {
        let predictor = strategy.fit(x, y, seed)?;
        Ok(TrainedModel {
            name: strategy.name().to_string(),
            kind: strategy.family(),
            transparency_rank: strategy.transparency_rank(),
            config: strategy.config(),
            seed,
            plan,
            predictor,
        })
    }

    pub fn predict_record(&self, record: &SurveyRecord) -> f64 {
        self.predictor.predict_row(&self.plan.encode(record))
    }

    pub fn predict_records<'a>(&self, records: impl IntoIterator<Item = &'a SurveyRecord>) -> Vec<f64> {
        let mut row = vec![0.0; self.plan.n_columns()];
        records
            .into_iter()
            .map(|r| {
                self.plan.encode_into(r, &mut row);
                self.predictor.predict_row(&row)
            })
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        json_fingerprint(self)
    }
}
