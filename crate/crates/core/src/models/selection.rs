//! Lexicographic model selection: accuracy first, then stability, then
//! transparency.

use serde::{Deserialize, Serialize};

use super::{EvaluationReport, Family};
use crate::error::{Error, Result};

pub const DEFAULT_ACCURACY_TOLERANCE: f64 = 0.01;

/// Relative slack on the lowest CV R² standard deviation.
pub const STABILITY_RELATIVE_SLACK: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub family: Family,
    pub transparency_rank: u8,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStage {
    pub criterion: String,
    pub survivors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: String,
    pub family: Family,
    pub tolerance: f64,
    pub stages: Vec<SelectionStage>,
}

/// Picks one candidate:
/// 1. keep candidates whose test R² is within `tolerance` of the best;
/// 2. keep those whose CV R² std is within 10% of the lowest survivor std;
/// 3. take the best (lowest) transparency rank, then the name.
pub fn select_model(candidates: &[Candidate], tolerance: f64) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("model selection needs at least one candidate".into()));
    }
    let mut pool: Vec<&Candidate> = candidates.iter().collect();
    pool.sort_by(|a, b| a.name.cmp(&b.name));
    let r2 = |c: &Candidate| c.report.test_r2.unwrap_or(f64::NEG_INFINITY);
    let sd = |c: &Candidate| c.report.cv_r2_std.filter(|s| s.is_finite()).unwrap_or(f64::INFINITY);
    let names = |p: &[&Candidate]| p.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    let mut stages = Vec::new();

    let best = pool.iter().map(|c| r2(c)).fold(f64::NEG_INFINITY, f64::max);
    pool.retain(|c| best - r2(c) <= tolerance + 1e-12);
    stages.push(SelectionStage { criterion: format!("test R² within {tolerance} of best ({best:.4})"), survivors: names(&pool) });

    let least = pool.iter().map(|c| sd(c)).fold(f64::INFINITY, f64::min);
    if least.is_finite() {
        pool.retain(|c| sd(c) <= least * (1.0 + STABILITY_RELATIVE_SLACK) + 1e-15);
    }
    stages.push(SelectionStage {
        criterion: format!("CV R² std within {:.0}% of lowest ({least:.4})", STABILITY_RELATIVE_SLACK * 100.0),
        survivors: names(&pool),
    });

    pool.sort_by(|a, b| a.transparency_rank.cmp(&b.transparency_rank).then_with(|| a.name.cmp(&b.name)));
    let winner = pool[0];
    stages.push(SelectionStage { criterion: "most transparent".into(), survivors: vec![winner.name.clone()] });
    Ok(Selection { chosen: winner.name.clone(), family: winner.family, tolerance, stages })
}
