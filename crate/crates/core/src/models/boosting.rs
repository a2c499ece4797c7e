use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, BinnedFeatures, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::pipeline::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for BoostingConfig {
    fn default() -> Self {
        BoostingConfig { trees: 200, max_depth: 3, learning_rate: 0.1, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after each stage; entry 0 is the constant model.
    pub stage_mse: Vec<f64>,
}

impl BoostingModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

/// Stage-wise least-squares boosting: start from the target mean and add
/// `learning_rate` times a regression tree fitted to the current residuals.
pub fn fit_boosting(x: &FeatureMatrix, y: &[f64], config: &BoostingConfig, seed: u64) -> Result<BoostingModel> {
    if x.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} feature rows but {} targets", x.rows, y.len())));
    }
    if x.rows < 2 {
        return Err(Error::InvalidInput("gradient boosting needs at least 2 rows".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid learning rate {}", config.learning_rate)));
    }
    let n = x.rows;
    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mse = |fitted: &[f64]| fitted.iter().zip(y).map(|(f, t)| (t - f).powi(2)).sum::<f64>() / n as f64;
    let mut stage_mse = vec![mse(&fitted)];
    let binned = BinnedFeatures::new(x);
    let params = TreeParams { max_depth: config.max_depth, min_leaf: config.min_leaf, max_features: None };
    // splits consider every feature; the generator is only consulted for sub-sampling
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(config.trees);
    let mut residual = vec![0.0; n];
    for _ in 0..config.trees {
        for i in 0..n {
            residual[i] = y[i] - fitted[i];
        }
        let tree = grow(&binned, &residual, (0..n).collect(), params, &mut rng);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += config.learning_rate * tree.predict_row(x.row(i));
        }
        stage_mse.push(mse(&fitted));
        trees.push(tree);
    }
    Ok(BoostingModel { base, learning_rate: config.learning_rate, trees, stage_mse })
}
