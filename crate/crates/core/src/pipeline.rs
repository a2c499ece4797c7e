//! Leakage-safe preprocessing and validation protocol.
//!
//! A country-stratified hold-out split is drawn first. Cross-validation runs
//! on the training part only, with stratified folds, and every fold fits its
//! own [`PreprocessPlan`] (imputation values and one-hot maps) on the
//! complement folds before the plan touches the validation fold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, FieldKind};
use crate::dataset::{Dataset, SurveyRecord, Value};
use crate::error::{Error, Result};
use crate::fingerprint::json_fingerprint;
use crate::models::{r_squared, ModelStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub strata_field: String,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { test_fraction: 0.2, strata_field: "country".into(), folds: 10, seed: 7 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidInput(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 folds (got {})", self.folds)));
        }
        Ok(())
    }
}

/// Record indices of a hold-out split, each list in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn strata(dataset: &Dataset, field: &str, members: &[usize]) -> Result<Vec<Vec<usize>>> {
    let pos = dataset
        .codebook
        .position(field)
        .ok_or_else(|| Error::InvalidInput(format!("unknown strata field {field:?}")))?;
    let f = &dataset.codebook.fields[pos];
    if !f.kind.is_categorical() {
        return Err(Error::InvalidInput(format!("strata field {field:?} must be categorical")));
    }
    let mut groups = vec![Vec::new(); f.categories.len()];
    for &i in members {
        let r = &dataset.records[i];
        let level = r.values[pos]
            .level()
            .ok_or_else(|| Error::InvalidInput(format!("record {} has no stratum", r.record_id)))?;
        groups[level].push(i);
    }
    Ok(groups)
}

/// Per-stratum hold-out split: each stratum contributes
/// `round(test_fraction * size)` test records.
pub fn stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let groups = strata(dataset, &spec.strata_field, &all)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut test = Vec::new();
    for (level, mut members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < spec.folds {
            let label = &dataset.codebook.field(&spec.strata_field).expect("checked").categories[level];
            return Err(Error::InvalidInput(format!(
                "stratum {label:?} has {} records, fewer than {} folds",
                members.len(),
                spec.folds
            )));
        }
        members.shuffle(&mut rng);
        let n_test = (spec.test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..n_test]);
    }
    test.sort_unstable();
    let mut is_test = vec![false; dataset.len()];
    for &i in &test {
        is_test[i] = true;
    }
    let train = (0..dataset.len()).filter(|&i| !is_test[i]).collect();
    Ok(Split { train, test })
}

/// Fold index for every entry of `members`. Within each stratum, members are
/// shuffled and dealt round-robin; the dealing position carries over between
/// strata so fold sizes stay balanced.
pub fn assign_folds(dataset: &Dataset, members: &[usize], spec: &SplitSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let groups = strata(dataset, &spec.strata_field, members)?;
    let slot: std::collections::HashMap<usize, usize> = members.iter().enumerate().map(|(s, &i)| (i, s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);
    let mut folds = vec![0; members.len()];
    let mut next = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            folds[slot[&i]] = next % spec.folds;
            next += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedLevel {
    pub level: u32,
    pub label: String,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldPlan {
    Numeric { field: String, position: usize, impute: f64, column: usize },
    Categorical { field: String, position: usize, impute_level: u32, encoding: Vec<EncodedLevel> },
}

impl FieldPlan {
    pub fn field(&self) -> &str {
        match self {
            FieldPlan::Numeric { field, .. } | FieldPlan::Categorical { field, .. } => field,
        }
    }

    pub fn position(&self) -> usize {
        match self {
            FieldPlan::Numeric { position, .. } | FieldPlan::Categorical { position, .. } => *position,
        }
    }

    /// Feature columns produced by this field.
    pub fn columns(&self) -> Vec<usize> {
        match self {
            FieldPlan::Numeric { column, .. } => vec![*column],
            FieldPlan::Categorical { encoding, .. } => encoding.iter().map(|e| e.column).collect(),
        }
    }
}

/// Imputation values and one-hot maps fitted on one partition. Immutable
/// once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub fitted_on: String,
    pub fields: Vec<FieldPlan>,
    pub column_names: Vec<String>,
    pub warnings: Vec<String>,
}

impl PreprocessPlan {
    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    pub fn fingerprint(&self) -> String {
        json_fingerprint(self)
    }

    pub fn field_plan(&self, field: &str) -> Option<&FieldPlan> {
        self.fields.iter().find(|p| p.field() == field)
    }

    /// Writes the encoded feature row for one record into `out`.
    pub fn encode_into(&self, record: &SurveyRecord, out: &mut [f64]) {
        out.fill(0.0);
        for fp in &self.fields {
            match fp {
                FieldPlan::Numeric { position, impute, column, .. } => {
                    out[*column] = record.values[*position].number().unwrap_or(*impute);
                }
                FieldPlan::Categorical { position, impute_level, encoding, .. } => {
                    let level = record.values[*position].level().map(|l| l as u32).unwrap_or(*impute_level);
                    if let Some(e) = encoding.iter().find(|e| e.level == level) {
                        out[e.column] = 1.0;
                    }
                }
            }
        }
    }

    pub fn encode(&self, record: &SurveyRecord) -> Vec<f64> {
        let mut row = vec![0.0; self.n_columns()];
        self.encode_into(record, &mut row);
        row
    }
}

/// Dense row-major feature matrix with no missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "feature matrix shape mismatch");
        FeatureMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        FeatureMatrix::new(rows.len(), cols, data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.data[i * self.cols + j])
    }
}

/// Fits imputation and encoding on the records at `members`.
///
/// Numeric fields impute the mean of observed values; categorical fields the
/// mode, ties going to the lexicographically smallest label. Only categories
/// observed in the fit partition receive indicator columns.
pub fn fit_preprocess(
    dataset: &Dataset,
    members: &[usize],
    fitted_on: impl Into<String>,
) -> Result<PreprocessPlan> {
    if members.is_empty() {
        return Err(Error::InvalidInput("cannot fit preprocessing on an empty partition".into()));
    }
    fit_preprocess_records(&dataset.codebook, members.iter().map(|&i| &dataset.records[i]), fitted_on)
}

pub fn fit_preprocess_records<'a>(
    codebook: &Codebook,
    records: impl Iterator<Item = &'a SurveyRecord> + Clone,
    fitted_on: impl Into<String>,
) -> Result<PreprocessPlan> {
    let mut fields = Vec::with_capacity(codebook.fields.len());
    let mut column_names = Vec::new();
    let mut warnings = Vec::new();
    let mut any = false;
    for (pos, f) in codebook.fields.iter().enumerate() {
        if f.kind == FieldKind::Numeric {
            let (mut sum, mut n) = (0.0, 0usize);
            for r in records.clone() {
                any = true;
                if let Value::Number(x) = r.values[pos] {
                    sum += x;
                    n += 1;
                }
            }
            let impute = if n == 0 {
                warnings.push(format!("field {:?} entirely missing in fit set; imputing 0", f.name));
                0.0
            } else {
                sum / n as f64
            };
            fields.push(FieldPlan::Numeric { field: f.name.clone(), position: pos, impute, column: column_names.len() });
            column_names.push(f.name.clone());
        } else {
            let mut counts = vec![0usize; f.categories.len()];
            for r in records.clone() {
                any = true;
                if let Some(l) = r.values[pos].level() {
                    counts[l] += 1;
                }
            }
            let mut encoding = Vec::new();
            for (level, &c) in counts.iter().enumerate() {
                if c > 0 {
                    encoding.push(EncodedLevel {
                        level: level as u32,
                        label: f.categories[level].clone(),
                        column: column_names.len(),
                    });
                    column_names.push(format!("{}={}", f.name, f.categories[level]));
                }
            }
            let impute_level = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| f.categories[*b].cmp(&f.categories[*a])))
                .map(|(l, _)| l as u32)
                .unwrap_or_else(|| {
                    warnings.push(format!("field {:?} entirely missing in fit set; imputing first category", f.name));
                    0
                });
            fields.push(FieldPlan::Categorical { field: f.name.clone(), position: pos, impute_level, encoding });
        }
    }
    if !any {
        return Err(Error::InvalidInput("cannot fit preprocessing on an empty partition".into()));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PreprocessPlan { fitted_on: fitted_on.into(), fields, column_names, warnings })
}

pub fn apply_preprocess<'a>(plan: &PreprocessPlan, records: impl IntoIterator<Item = &'a SurveyRecord>) -> FeatureMatrix {
    let cols = plan.n_columns();
    let mut data = Vec::new();
    let mut rows = 0;
    for r in records {
        let start = data.len();
        data.resize(start + cols, 0.0);
        plan.encode_into(r, &mut data[start..]);
        rows += 1;
    }
    FeatureMatrix::new(rows, cols, data)
}

pub fn apply_to_indices(plan: &PreprocessPlan, dataset: &Dataset, members: &[usize]) -> FeatureMatrix {
    apply_preprocess(plan, members.iter().map(|&i| &dataset.records[i]))
}

/// The plan each fold is validated with, fitted on the complement folds.
pub fn fold_plans(dataset: &Dataset, members: &[usize], folds: &[usize], n_folds: usize) -> Result<Vec<PreprocessPlan>> {
    (0..n_folds)
        .map(|k| {
            let fit: Vec<usize> = members.iter().zip(folds).filter(|(_, &f)| f != k).map(|(&i, _)| i).collect();
            fit_preprocess(dataset, &fit, format!("fold-{k}-complement"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// R² per fold in fold order; `None` where the fold target has zero variance.
    pub fold_r2: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
    pub plan_fingerprints: Vec<String>,
    pub warnings: Vec<String>,
}

/// Mean and sample standard deviation of the defined fold values.
pub fn mean_std(values: &[Option<f64>]) -> (f64, f64) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let std = if defined.len() > 1 {
        (defined.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// k-fold cross-validation over `members` (typically the training split).
/// `targets` is aligned with the dataset's records.
pub fn cross_validate(
    dataset: &Dataset,
    members: &[usize],
    targets: &[f64],
    strategy: &dyn ModelStrategy,
    spec: &SplitSpec,
) -> Result<CvReport> {
    let folds = assign_folds(dataset, members, spec)?;
    let plans = fold_plans(dataset, members, &folds, spec.folds)?;
    let per_fold: Vec<Result<Option<f64>>> = (0..spec.folds)
        .into_par_iter()
        .map(|k| {
            let fit: Vec<usize> = members.iter().zip(&folds).filter(|(_, &f)| f != k).map(|(&i, _)| i).collect();
            let val: Vec<usize> = members.iter().zip(&folds).filter(|(_, &f)| f == k).map(|(&i, _)| i).collect();
            let plan = &plans[k];
            let x_fit = apply_to_indices(plan, dataset, &fit);
            let y_fit: Vec<f64> = fit.iter().map(|&i| targets[i]).collect();
            let predictor = strategy.fit(&x_fit, &y_fit, spec.seed.wrapping_add(k as u64))?;
            let x_val = apply_to_indices(plan, dataset, &val);
            let y_val: Vec<f64> = val.iter().map(|&i| targets[i]).collect();
            let pred = predictor.predict(&x_val);
            Ok(r_squared(&y_val, &pred))
        })
        .collect();
    let fold_r2 = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    let warnings: Vec<String> = fold_r2
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(k, _)| format!("fold {k}: zero target variance, R² undefined and excluded"))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let (mean, std) = mean_std(&fold_r2);
    Ok(CvReport { fold_r2, mean, std, plan_fingerprints: plans.iter().map(|p| p.fingerprint()).collect(), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{CodebookField, Domain};
    use crate::dataset::Provenance;

    fn tiny_codebook() -> Codebook {
        let mut fields = crate::codebook::default_codebook().fields;
        fields.push(CodebookField {
            name: "tag".into(),
            domain: Domain::SocioEconomic,
            kind: FieldKind::Categorical,
            points: 0,
            modifiable: false,
            categories: vec!["b".into(), "a".into(), "c".into()],
        });
        Codebook::new("t", "country", fields).unwrap()
    }

    fn dataset_with(cb: &Codebook, rows: &[(Option<f64>, Option<&str>)]) -> Dataset {
        let hs = cb.position("household_size").unwrap();
        let tag = cb.position("tag").unwrap();
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (x, t))| {
                let mut values = vec![Value::Missing; cb.fields.len()];
                values[cb.country_position()] = Value::Level(0);
                values[hs] = x.map_or(Value::Missing, Value::Number);
                values[tag] = t.map_or(Value::Missing, |t| Value::Level(cb.fields[tag].category_index(t).unwrap() as u32));
                SurveyRecord { record_id: format!("r{i}"), values }
            })
            .collect();
        Dataset::new(cb.clone(), records, Provenance::Ingested).unwrap()
    }

    #[test]
    fn numeric_mean_and_categorical_mode() {
        let cb = tiny_codebook();
        let ds = dataset_with(&cb, &[(Some(2.0), Some("a")), (Some(4.0), Some("a")), (None, Some("b"))]);
        let plan = fit_preprocess(&ds, &[0, 1, 2], "all").unwrap();
        match plan.field_plan("household_size").unwrap() {
            FieldPlan::Numeric { impute, .. } => assert_eq!(*impute, 3.0),
            _ => panic!(),
        }
        match plan.field_plan("tag").unwrap() {
            FieldPlan::Categorical { impute_level, .. } => assert_eq!(cb.field("tag").unwrap().categories[*impute_level as usize], "a"),
            _ => panic!(),
        }
    }

    #[test]
    fn mode_tie_goes_to_smallest_label() {
        let cb = tiny_codebook();
        // level order is b, a, c; lexicographic tie-break must still pick "a"
        let ds = dataset_with(&cb, &[(None, Some("b")), (None, Some("a"))]);
        let plan = fit_preprocess(&ds, &[0, 1], "all").unwrap();
        match plan.field_plan("tag").unwrap() {
            FieldPlan::Categorical { impute_level, .. } => assert_eq!(*impute_level, 1),
            _ => panic!(),
        }
    }

    #[test]
    fn unseen_category_encodes_to_zero_block() {
        let cb = tiny_codebook();
        let ds = dataset_with(&cb, &[(Some(1.0), Some("a")), (Some(1.0), Some("b")), (None, Some("c"))]);
        let plan = fit_preprocess(&ds, &[0, 1], "fit").unwrap();
        let cols = plan.field_plan("tag").unwrap().columns();
        assert_eq!(cols.len(), 2);
        let x = apply_to_indices(&plan, &ds, &[0, 2]);
        assert_eq!(cols.iter().map(|&c| x.row(0)[c]).sum::<f64>(), 1.0);
        assert!(cols.iter().all(|&c| x.row(1)[c] == 0.0));
        let hs = plan.field_plan("household_size").unwrap().columns()[0];
        assert_eq!(x.row(1)[hs], 1.0);
        assert!(x.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn entirely_missing_field_warns() {
        let cb = tiny_codebook();
        let ds = dataset_with(&cb, &[(None, None), (None, None)]);
        let plan = fit_preprocess(&ds, &[0, 1], "fit").unwrap();
        assert!(plan.warnings.iter().any(|w| w.contains("household_size")));
        assert!(plan.warnings.iter().any(|w| w.contains("tag")));
    }

    #[test]
    fn split_spec_bounds() {
        let bad = SplitSpec { test_fraction: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SplitSpec { folds: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_single_stratum_split() {
        let cb = tiny_codebook();
        let ds = dataset_with(&cb, &[(None, None); 10]);
        let spec = SplitSpec { folds: 5, ..Default::default() };
        let split = stratified_split(&ds, &spec).unwrap();
        assert_eq!(split.test.len(), 2);
        assert_eq!(split.train.len(), 8);
        let too_many = SplitSpec { folds: 11, ..Default::default() };
        assert!(stratified_split(&ds, &too_many).unwrap_err().to_string().contains("fewer than"));
    }

    #[test]
    fn mean_std_skips_undefined() {
        let (m, s) = mean_std(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
