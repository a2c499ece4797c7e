use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, BinnedFeatures, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::pipeline::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubsample {
    fn resolve(self, p: usize) -> Option<usize> {
        match self {
            FeatureSubsample::Sqrt => Some(((p as f64).sqrt().round() as usize).max(1)),
            FeatureSubsample::All => None,
            FeatureSubsample::Count(k) => Some(k.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { trees: 100, max_depth: 8, min_leaf: 5, feature_subsample: FeatureSubsample::Sqrt, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bagged regression trees. Tree `t` draws from its own ChaCha stream of the
/// master seed, so the forest is identical however the trees are scheduled.
pub fn fit_forest(x: &FeatureMatrix, y: &[f64], config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if x.rows != y.len() {
        return Err(Error::InvalidInput(format!("{} feature rows but {} targets", x.rows, y.len())));
    }
    if x.rows < 2 {
        return Err(Error::InvalidInput("random forest needs at least 2 rows".into()));
    }
    if config.trees == 0 {
        return Err(Error::InvalidInput("random forest needs at least 1 tree".into()));
    }
    let binned = BinnedFeatures::new(x);
    let params = TreeParams {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        max_features: config.feature_subsample.resolve(x.cols),
    };
    let trees = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if config.bootstrap {
                (0..x.rows).map(|_| rng.random_range(0..x.rows)).collect()
            } else {
                (0..x.rows).collect()
            };
            grow(&binned, y, rows, params, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target() {
        let x = FeatureMatrix::from_rows(&(0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect::<Vec<_>>());
        let y = vec![4.25; 20];
        let f = fit_forest(&x, &y, &ForestConfig { trees: 5, ..Default::default() }, 1).unwrap();
        assert!((0..20).all(|i| f.predict_row(x.row(i)) == 4.25));
    }

    #[test]
    fn single_stump_tree() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![0.0], vec![1.0]]);
        let y = [0.0, 10.0, 0.0, 10.0];
        let cfg = ForestConfig {
            trees: 1,
            max_depth: 1,
            min_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            bootstrap: false,
        };
        let f = fit_forest(&x, &y, &cfg, 3).unwrap();
        assert_eq!(f.predict_row(&[0.0]), 0.0);
        assert_eq!(f.predict_row(&[1.0]), 10.0);
    }

    #[test]
    fn seeded_determinism() {
        let x = FeatureMatrix::from_rows(&(0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64, i as f64]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..60).map(|i| ((i % 7) * 2 + i % 5) as f64).collect();
        let cfg = ForestConfig { trees: 10, ..Default::default() };
        assert_eq!(fit_forest(&x, &y, &cfg, 9).unwrap(), fit_forest(&x, &y, &cfg, 9).unwrap());
        assert_ne!(fit_forest(&x, &y, &cfg, 9).unwrap(), fit_forest(&x, &y, &cfg, 10).unwrap());
    }
}
