//! Domain competency scores and the additive composite index.

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Domain, INDEX_MAX_POINTS};
use crate::dataset::{Dataset, SurveyRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetencyScores {
    pub dc_points: f64,
    pub fc_points: f64,
    pub dfc_points: f64,
    pub dfl_points: f64,
    pub dc_pct: f64,
    pub fc_pct: f64,
    pub dfc_pct: f64,
    pub dfl_pct: f64,
}

/// Converts index points to a percentage of the 52-point scale.
pub fn points_to_pct(points: f64) -> f64 {
    points / f64::from(INDEX_MAX_POINTS) * 100.0
}

pub fn pct_to_points(pct: f64) -> f64 {
    pct / 100.0 * f64::from(INDEX_MAX_POINTS)
}

fn domain_pct(points: f64, max: u32) -> f64 {
    if max == 0 {
        0.0
    } else {
        points / f64::from(max) * 100.0
    }
}

/// Scores one record. Missing scored responses earn no points.
pub fn score_record(record: &SurveyRecord, codebook: &Codebook) -> CompetencyScores {
    let (mut dc, mut fc, mut dfc) = (0.0, 0.0, 0.0);
    for (i, field) in codebook.scored_fields() {
        let Some(level) = record.values[i].level() else { continue };
        let p = field.level_points(level);
        match field.domain {
            Domain::Digital => dc += p,
            Domain::Financial => fc += p,
            Domain::DigitalFinancial => dfc += p,
            _ => unreachable!("scored fields live in competency domains"),
        }
    }
    let dfl = dc + fc + dfc;
    CompetencyScores {
        dc_points: dc,
        fc_points: fc,
        dfc_points: dfc,
        dfl_points: dfl,
        dc_pct: domain_pct(dc, codebook.domain_max(Domain::Digital)),
        fc_pct: domain_pct(fc, codebook.domain_max(Domain::Financial)),
        dfc_pct: domain_pct(dfc, codebook.domain_max(Domain::DigitalFinancial)),
        dfl_pct: points_to_pct(dfl),
    }
}

pub fn score_dataset(dataset: &Dataset) -> Vec<CompetencyScores> {
    dataset.records.iter().map(|r| score_record(r, &dataset.codebook)).collect()
}

/// Delimited export: record_id, country, four point columns, four percent columns.
pub fn scores_csv(dataset: &Dataset, scores: &[CompetencyScores]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record([
        "record_id",
        "country",
        "dc_points",
        "fc_points",
        "dfc_points",
        "dfl_points",
        "dc_pct",
        "fc_pct",
        "dfc_pct",
        "dfl_pct",
    ])
    .expect("in-memory write");
    for (r, s) in dataset.records.iter().zip(scores) {
        let mut row = vec![r.record_id.clone(), r.country(&dataset.codebook).to_string()];
        for x in [s.dc_points, s.fc_points, s.dfc_points, s.dfl_points, s.dc_pct, s.fc_pct, s.dfc_pct, s.dfl_pct] {
            row.push(format!("{x}"));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
