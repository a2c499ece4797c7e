//! Descriptive profiling: per-country statistics, relative-dispersion
//! comparison of DFC against DFL, disparity gap tables and the cross-country
//! DFC/DFL correlation.

use serde::{Deserialize, Serialize};

use crate::codebook::FieldKind;
use crate::competency::CompetencyScores;
use crate::dataset::{summarize, Dataset, DatasetSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Dfc,
    Dfl,
}

impl Measure {
    pub fn of(self, s: &CompetencyScores) -> f64 {
        match self {
            Measure::Dfc => s.dfc_pct,
            Measure::Dfl => s.dfl_pct,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Measure::Dfc => "DFC",
            Measure::Dfl => "DFL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample (n - 1) standard deviation; 0 for a single observation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Describe {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Some(Describe { count: n, mean, median, std, min: sorted[0], max: sorted[n - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryStats {
    pub country: String,
    pub dfc: Describe,
    pub dfl: Describe,
}

/// One row per country present, in codebook order.
pub fn country_stats(dataset: &Dataset, scores: &[CompetencyScores]) -> Vec<CountryStats> {
    let cb = &dataset.codebook;
    let cpos = cb.country_position();
    let mut buckets: Vec<(Vec<f64>, Vec<f64>)> = vec![Default::default(); cb.countries().len()];
    for (r, s) in dataset.records.iter().zip(scores) {
        let l = r.values[cpos].level().expect("country is never missing");
        buckets[l].0.push(s.dfc_pct);
        buckets[l].1.push(s.dfl_pct);
    }
    cb.countries()
        .iter()
        .zip(buckets)
        .filter_map(|(c, (dfc, dfl))| {
            Some(CountryStats { country: c.clone(), dfc: Describe::of(&dfc)?, dfl: Describe::of(&dfl)? })
        })
        .collect()
}

/// Relative dispersion `std / mean`.
pub fn coefficient_of_variation(mean: f64, std: f64) -> Result<f64> {
    if mean.is_nan() || mean <= 0.0 {
        return Err(Error::InvalidInput(format!("coefficient of variation needs a positive mean (got {mean})")));
    }
    Ok(std / mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminanceRow {
    pub country: String,
    pub cv_dfc: Option<f64>,
    pub cv_dfl: Option<f64>,
    /// DFC is relatively more dispersed than DFL.
    pub dfc_more_variable: bool,
}

pub fn discriminance_report(stats: &[CountryStats]) -> Vec<DiscriminanceRow> {
    stats
        .iter()
        .map(|s| {
            let cv_dfc = coefficient_of_variation(s.dfc.mean, s.dfc.std).ok();
            let cv_dfl = coefficient_of_variation(s.dfl.mean, s.dfl.std).ok();
            let flag = matches!((cv_dfc, cv_dfl), (Some(a), Some(b)) if a > b);
            DiscriminanceRow { country: s.country.clone(), cv_dfc, cv_dfl, dfc_more_variable: flag }
        })
        .collect()
}

pub const DEFAULT_MIN_CELL: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub label: String,
    pub count: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub category: String,
    pub lowest_group: String,
    pub lowest_mean: f64,
    pub highest_group: String,
    pub highest_mean: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub measure: Measure,
    pub min_cell: usize,
    pub rows: Vec<GapRow>,
    pub warnings: Vec<String>,
}

/// Gap between the lowest and highest eligible group means.
///
/// Groups are ordered by `(mean, label)`; the first is the lowest and the
/// last the highest, so ties resolve lexicographically.
pub fn gap_from_groups(category: &str, groups: &[GroupMean]) -> Option<GapRow> {
    if groups.len() < 2 {
        return None;
    }
    let key = |g: &&GroupMean| (g.mean, g.label.clone());
    let cmp = |a: &&GroupMean, b: &&GroupMean| {
        let (am, al) = key(a);
        let (bm, bl) = key(b);
        am.total_cmp(&bm).then(al.cmp(&bl))
    };
    let lo = groups.iter().min_by(cmp)?;
    let hi = groups.iter().max_by(cmp)?;
    Some(GapRow {
        category: category.to_string(),
        lowest_group: lo.label.clone(),
        lowest_mean: lo.mean,
        highest_group: hi.label.clone(),
        highest_mean: hi.mean,
        gap: hi.mean - lo.mean,
    })
}

/// Per-group means of a measure over one categorical field, missing excluded.
pub fn group_means(dataset: &Dataset, scores: &[CompetencyScores], field: usize, measure: Measure) -> Vec<GroupMean> {
    let f = &dataset.codebook.fields[field];
    let mut sums = vec![(0usize, 0.0f64); f.categories.len()];
    for (r, s) in dataset.records.iter().zip(scores) {
        if let Some(l) = r.values[field].level() {
            sums[l].0 += 1;
            sums[l].1 += measure.of(s);
        }
    }
    f.categories
        .iter()
        .zip(sums)
        .filter(|(_, (n, _))| *n > 0)
        .map(|(label, (n, sum))| GroupMean { label: label.clone(), count: n, mean: sum / n as f64 })
        .collect()
}

pub fn gap_table(
    dataset: &Dataset,
    scores: &[CompetencyScores],
    fields: &[&str],
    measure: Measure,
    min_cell: usize,
) -> Result<GapTable> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for name in fields {
        let pos = dataset
            .codebook
            .position(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown field {name:?}")))?;
        if dataset.codebook.fields[pos].kind == FieldKind::Numeric {
            return Err(Error::InvalidInput(format!("field {name:?} is numeric; gap tables need categories")));
        }
        let groups: Vec<GroupMean> =
            group_means(dataset, scores, pos, measure).into_iter().filter(|g| g.count >= min_cell).collect();
        match gap_from_groups(name, &groups) {
            Some(row) => rows.push(row),
            None => {
                let msg = format!("field {name:?} skipped: fewer than 2 groups with at least {min_cell} records");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    rows.sort_by(|a, b| b.gap.total_cmp(&a.gap).then_with(|| a.category.cmp(&b.category)));
    Ok(GapTable { measure, min_cell, rows, warnings })
}

/// Pearson correlation over per-country (DFC mean, DFL mean) pairs.
pub fn dfc_dfl_correlation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!("correlation needs at least 3 countries (got {})", pairs.len())));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput("correlation undefined for zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub summary: DatasetSummary,
    pub country_stats: Vec<CountryStats>,
    pub discriminance: Vec<DiscriminanceRow>,
    pub dfc_dfl_correlation: Option<f64>,
    pub gaps: GapTable,
}

/// Full descriptive profile. Gap tables cover every categorical
/// non-competency field except the country field.
pub fn profile(dataset: &Dataset, scores: &[CompetencyScores], min_cell: usize) -> Result<ProfileReport> {
    let stats = country_stats(dataset, scores);
    let pairs: Vec<(f64, f64)> = stats.iter().map(|s| (s.dfc.mean, s.dfl.mean)).collect();
    let cb = &dataset.codebook;
    let fields: Vec<&str> = cb
        .fields
        .iter()
        .filter(|f| !f.domain.is_competency() && f.kind.is_categorical() && f.name != cb.country_field)
        .map(|f| f.name.as_str())
        .collect();
    Ok(ProfileReport {
        summary: summarize(dataset),
        discriminance: discriminance_report(&stats),
        dfc_dfl_correlation: dfc_dfl_correlation(&pairs).ok(),
        gaps: gap_table(dataset, scores, &fields, Measure::Dfc, min_cell)?,
        country_stats: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(label: &str, mean: f64) -> GroupMean {
        GroupMean { label: label.into(), count: 100, mean }
    }

    #[test]
    fn describe_two_values() {
        let d = Describe::of(&[20.0, 40.0]).unwrap();
        assert_eq!(d.mean, 30.0);
        assert_eq!(d.median, 30.0);
        // hand: sqrt(((20-30)^2 + (40-30)^2) / 1) = sqrt(200)
        assert!((d.std - 14.142135623730951).abs() < 1e-12);
    }

    #[test]
    fn describe_single() {
        let d = Describe::of(&[12.5]).unwrap();
        assert_eq!((d.mean, d.median, d.min, d.max, d.std), (12.5, 12.5, 12.5, 12.5, 0.0));
    }

    #[test]
    fn cv_values() {
        assert_eq!(format!("{:.3}", coefficient_of_variation(32.6, 15.0).unwrap()), "0.460");
        assert_eq!(format!("{:.3}", coefficient_of_variation(41.1, 14.3).unwrap()), "0.348");
        assert_eq!(coefficient_of_variation(17.0, 0.0).unwrap(), 0.0);
        assert!(coefficient_of_variation(0.0, 1.0).is_err());
        assert!(coefficient_of_variation(-3.0, 1.0).is_err());
    }

    #[test]
    fn gap_rows() {
        let row = gap_from_groups("language", &[g("Tok Pisin", 34.10), g("Tongan", 46.40)]).unwrap();
        assert_eq!(format!("{:.2}", row.gap), "12.30");
        assert_eq!(row.lowest_group, "Tok Pisin");

        let row = gap_from_groups("x", &[g("b", 20.0), g("c", 50.0), g("a", 10.0)]).unwrap();
        assert_eq!((row.lowest_mean, row.highest_mean, row.gap), (10.0, 50.0, 40.0));

        let row = gap_from_groups("x", &[g("b", 5.0), g("a", 5.0), g("c", 5.0)]).unwrap();
        assert_eq!((row.lowest_group.as_str(), row.highest_group.as_str(), row.gap), ("a", "c", 0.0));

        assert!(gap_from_groups("x", &[g("a", 1.0)]).is_none());
    }

    #[test]
    fn correlation_cases() {
        let appendix = [
            (43.7, 50.7),
            (32.6, 41.1),
            (38.7, 43.3),
            (36.3, 41.9),
            (37.9, 39.6),
            (46.2, 44.3),
            (37.3, 44.2),
        ];
        // independent value from a spreadsheet-style calculation
        assert!((dfc_dfl_correlation(&appendix).unwrap() - 0.6353946254137116).abs() < 1e-6);
        assert!((dfc_dfl_correlation(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert!(dfc_dfl_correlation(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]).unwrap() < 0.0);
        assert!(dfc_dfl_correlation(&[(1.0, 3.0), (2.0, 2.0)]).is_err());
        assert!(dfc_dfl_correlation(&[(1.0, 3.0), (1.0, 2.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn equal_cv_not_flagged() {
        let d = Describe::of(&[10.0, 30.0]).unwrap();
        let s = CountryStats { country: "X".into(), dfc: d, dfl: d };
        assert!(!discriminance_report(std::slice::from_ref(&s))[0].dfc_more_variable);
        let flat = Describe::of(&[20.0, 20.0]).unwrap();
        let s = CountryStats { dfc: flat, ..s };
        assert!(!discriminance_report(&[s])[0].dfc_more_variable);
    }
}
