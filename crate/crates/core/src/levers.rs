//! Policy-lever tables from the transparent model.
//!
//! Weights are shares of summed absolute standardized coefficients. A
//! categorical field contributes the sum over its indicator columns, so each
//! survey item gets one row.

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Domain};
use crate::error::{Error, Result};
use crate::models::{LinearModel, TrainedModel};
use crate::pipeline::FieldPlan;

/// Role label for fields outside government influence.
pub const SEGMENTATION: &str = "segmentation variable";
pub const LEVER: &str = "lever";

/// `raw_j * std(x_j) / std(y)`, with zero-variance features mapped to 0.
pub fn standardize(raw: &[f64], feature_std: &[f64], target_std: f64) -> Result<Vec<f64>> {
    if raw.len() != feature_std.len() {
        return Err(Error::InvalidInput(format!(
            "{} coefficients but {} feature standard deviations",
            raw.len(),
            feature_std.len()
        )));
    }
    if target_std.is_nan() || target_std <= 0.0 || !target_std.is_finite() {
        return Err(Error::InvalidInput(format!("target standard deviation must be positive (got {target_std})")));
    }
    Ok(raw
        .iter()
        .zip(feature_std)
        .map(|(b, s)| if *s == 0.0 { 0.0 } else { b * s / target_std })
        .collect())
}

/// Which coefficients the relative weights are normalised over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBase {
    #[default]
    AllFeatures,
    ModifiableOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverRow {
    pub field: String,
    pub domain: Domain,
    pub modifiable: bool,
    pub role: String,
    /// Points per unit change. For categorical fields, the spread between the
    /// largest and smallest indicator coefficient.
    pub raw_coefficient: f64,
    /// Sum of absolute standardized coefficients over the field's columns.
    pub standardized: f64,
    pub relative_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverTable {
    pub model: String,
    pub base: WeightBase,
    pub rows: Vec<LeverRow>,
    pub warnings: Vec<String>,
}

fn domain_order(d: Domain) -> u8 {
    match d {
        Domain::Digital => 0,
        Domain::Financial => 1,
        Domain::DigitalFinancial => 2,
        Domain::SocioEconomic => 3,
        Domain::Demographic => 4,
    }
}

impl LeverTable {
    /// Modifiable rows only, heaviest first.
    pub fn ranked(&self) -> Vec<&LeverRow> {
        let mut rows: Vec<&LeverRow> = self.rows.iter().filter(|r| r.modifiable).collect();
        rows.sort_by(|a, b| b.relative_weight.total_cmp(&a.relative_weight).then_with(|| a.field.cmp(&b.field)));
        rows
    }

    pub fn row(&self, field: &str) -> Option<&LeverRow> {
        self.rows.iter().find(|r| r.field == field)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("field,domain,role,raw_coefficient,standardized,relative_weight\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.field,
                r.domain.label(),
                r.role,
                r.raw_coefficient,
                r.standardized,
                r.relative_weight
            ));
        }
        out
    }
}

pub fn lever_table(model: &TrainedModel, codebook: &Codebook) -> Result<LeverTable> {
    lever_table_with(model, codebook, WeightBase::AllFeatures)
}

pub fn lever_table_with(model: &TrainedModel, codebook: &Codebook, base: WeightBase) -> Result<LeverTable> {
    let linear = model
        .predictor
        .as_linear()
        .ok_or_else(|| Error::LeverScope(model.kind.label().to_string()))?;
    let std = standardize(&linear.coefficients, &linear.feature_std, linear.target_std)?;
    let mut rows = field_rows(model, linear, &std, codebook)?;
    let mut warnings = Vec::new();
    if !rows.iter().any(|r| r.modifiable) {
        warnings.push("codebook declares no modifiable fields; lever set is empty".to_string());
    }
    let total: f64 = rows
        .iter()
        .filter(|r| base == WeightBase::AllFeatures || r.modifiable)
        .map(|r| r.standardized)
        .sum();
    for r in &mut rows {
        let counted = base == WeightBase::AllFeatures || r.modifiable;
        r.relative_weight = if counted && total > 0.0 { r.standardized / total * 100.0 } else { 0.0 };
    }
    if total == 0.0 {
        warnings.push("all standardized coefficients are zero; weights set to 0".to_string());
    }
    rows.sort_by(|a, b| {
        domain_order(a.domain)
            .cmp(&domain_order(b.domain))
            .then_with(|| b.relative_weight.total_cmp(&a.relative_weight))
            .then_with(|| a.field.cmp(&b.field))
    });
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LeverTable { model: model.name.clone(), base, rows, warnings })
}

fn field_rows(model: &TrainedModel, linear: &LinearModel, std: &[f64], codebook: &Codebook) -> Result<Vec<LeverRow>> {
    model
        .plan
        .fields
        .iter()
        .map(|fp| {
            let f = codebook
                .field(fp.field())
                .ok_or_else(|| Error::InvalidInput(format!("model field {:?} not in codebook", fp.field())))?;
            let cols = fp.columns();
            let standardized = cols.iter().map(|&c| std[c].abs()).sum();
            let raw_coefficient = match fp {
                FieldPlan::Numeric { column, .. } => linear.coefficients[*column],
                FieldPlan::Categorical { .. } => {
                    let coefs = cols.iter().map(|&c| linear.coefficients[c]);
                    if cols.len() < 2 {
                        0.0
                    } else {
                        coefs.clone().fold(f64::NEG_INFINITY, f64::max) - coefs.fold(f64::INFINITY, f64::min)
                    }
                }
            };
            Ok(LeverRow {
                field: f.name.clone(),
                domain: f.domain,
                modifiable: f.modifiable,
                role: if f.modifiable { LEVER } else { SEGMENTATION }.to_string(),
                raw_coefficient,
                standardized,
                relative_weight: 0.0,
            })
        })
        .collect()
}

/// Splits the codebook into modifiable levers and segmentation variables.
pub fn classify_features(codebook: &Codebook) -> (Vec<String>, Vec<String>) {
    let (levers, seg): (Vec<_>, Vec<_>) = codebook.fields.iter().partition(|f| f.modifiable);
    if levers.is_empty() {
        log::warn!("codebook {:?} has no modifiable fields", codebook.name);
    }
    (
        levers.into_iter().map(|f| f.name.clone()).collect(),
        seg.into_iter().map(|f| f.name.clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::default_codebook;

    #[test]
    fn standardize_hand_values() {
        assert_eq!(standardize(&[2.0], &[0.5], 1.0).unwrap(), vec![1.0]);
        assert_eq!(standardize(&[5.0, 1.0], &[0.0, 2.0], 4.0).unwrap(), vec![0.0, 0.5]);
        // rescaling x by 10 divides the coefficient and multiplies the std
        let a = standardize(&[3.0], &[0.7], 2.0).unwrap()[0];
        let b = standardize(&[0.3], &[7.0], 2.0).unwrap()[0];
        assert!((a - b).abs() < 1e-12);
        assert!(standardize(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn classification_is_a_partition() {
        let cb = default_codebook();
        let (levers, seg) = classify_features(&cb);
        assert_eq!(levers.len() + seg.len(), cb.fields.len());
        assert!(levers.contains(&"device_ownership".to_string()));
        assert!(seg.contains(&"age_group".to_string()));
        assert!(!levers.iter().any(|l| seg.contains(l)));
    }
}
