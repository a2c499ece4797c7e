//! Markdown renderings of profiles, evaluations, lever tables and scenario
//! outcomes. Output is a pure function of its inputs.

use std::fmt::Write as _;

use crate::levers::LeverTable;
use crate::profiling::ProfileReport;
use crate::scenario::{ResponderPartition, SimulationResult};
use crate::training::TrainingOutcome;

fn opt(x: Option<f64>, digits: usize) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => "n/a".to_string(),
    }
}

/// Key-value provenance block placed at the top of every report.
pub fn provenance_header(pairs: &[(&str, String)]) -> String {
    let mut out = String::from("<!-- provenance\n");
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}: {v}");
    }
    out.push_str("-->\n\n");
    out
}

pub fn profile_markdown(p: &ProfileReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Country competency statistics (% of index)\n");
    out.push_str("| Country | N | DFC mean | DFC std | DFL mean | DFL std | CV(DFC) | CV(DFL) | DFC more variable |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|:---:|\n");
    for (s, d) in p.country_stats.iter().zip(&p.discriminance) {
        let _ = writeln!(
            out,
            "| {} | {} | {:.1} | {:.1} | {:.1} | {:.1} | {} | {} | {} |",
            s.country,
            s.dfc.count,
            s.dfc.mean,
            s.dfc.std,
            s.dfl.mean,
            s.dfl.std,
            opt(d.cv_dfc, 3),
            opt(d.cv_dfl, 3),
            if d.dfc_more_variable { "yes" } else { "no" }
        );
    }
    let _ = writeln!(out, "\nCountry-level correlation of mean DFC and mean DFL: {}\n", opt(p.dfc_dfl_correlation, 3));
    let _ = writeln!(out, "## Socio-demographic gaps in {} (min cell {})\n", p.gaps.measure.label(), p.gaps.min_cell);
    out.push_str("| Category | Lowest group | Mean | Highest group | Mean | Gap |\n|---|---|---:|---|---:|---:|\n");
    for g in &p.gaps.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.2}% | {} | {:.2}% | {:.2}% |",
            g.category, g.lowest_group, g.lowest_mean, g.highest_group, g.highest_mean, g.gap
        );
    }
    for w in &p.gaps.warnings {
        let _ = writeln!(out, "\n> {w}");
    }
    out
}

pub fn evaluation_markdown(t: &TrainingOutcome) -> String {
    let mut out = String::from("## Model comparison\n\n");
    out.push_str("| Model | Test R² | CV R² mean | CV R² std | MSE | RMSE | MAE | Selected |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|:---:|\n");
    for r in &t.results {
        let e = &r.candidate.report;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.2} | {:.2} | {:.2} | {} |",
            r.candidate.family.label(),
            opt(e.test_r2, 3),
            opt(e.cv_r2_mean, 3),
            opt(e.cv_r2_std, 4),
            e.mse,
            e.rmse,
            e.mae,
            if r.candidate.name == t.selection.chosen { "yes" } else { "" }
        );
    }
    out.push_str("\nSelection steps:\n\n");
    for s in &t.selection.stages {
        let _ = writeln!(out, "- {}: {}", s.criterion, s.survivors.join(", "));
    }
    out
}

pub fn lever_markdown(table: &LeverTable) -> String {
    let mut out = String::from("## Modifiable drivers and relative predictive weight\n\n");
    out.push_str("| Domain | Lever | Std. coefficient | Relative weight |\n|---|---|---:|---:|\n");
    for r in table.rows.iter().filter(|r| r.modifiable) {
        let _ = writeln!(out, "| {} | {} | {:.4} | {:.2}% |", r.domain.label(), r.field, r.standardized, r.relative_weight);
    }
    let seg: f64 = table.rows.iter().filter(|r| !r.modifiable).map(|r| r.relative_weight).sum();
    let _ = writeln!(out, "\nSegmentation variables carry {seg:.2}% of the total weight.");
    out
}

pub fn scenario_markdown(results: &[SimulationResult]) -> String {
    let mut out = String::from("## Simulated interventions\n\n");
    out.push_str("| Scenario | Levers | Reach | Population gain (pp) | Gain among reached (pp) | Clip |\n");
    out.push_str("|---|---:|---:|---:|---:|:---:|\n");
    for r in results {
        let _ = writeln!(
            out,
            "| {} | {} | {:.1}% | {:.2} | {:.2} | {} |",
            r.scenario.name,
            r.scenario.assignments.len(),
            r.reach * 100.0,
            r.population_gain_pct,
            r.reached_gain_pct,
            if r.scenario.clip { "on" } else { "off" }
        );
    }
    for r in results {
        for t in &r.subgroups {
            let _ = writeln!(out, "\n### {} by {}\n", r.scenario.name, t.field);
            out.push_str("| Group | N | Reach | Gain (pp) | Lagging |\n|---|---:|---:|---:|:---:|\n");
            for g in &t.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.1}% | {:.2} | {} |",
                    g.group,
                    g.count,
                    g.reach * 100.0,
                    g.gain_pct,
                    if g.lagging { "yes" } else { "" }
                );
            }
        }
    }
    out
}

pub fn responder_markdown(p: &ResponderPartition) -> String {
    let mut out = String::from("## Responder profiles\n\n");
    let _ = writeln!(out, "Scenario set: {}\n", p.scenarios.join(", "));
    out.push_str("| Partition | N | Share | Mean baseline | Mean gain (pp) |\n|---|---:|---:|---:|---:|\n");
    for pr in &p.profiles {
        let _ = writeln!(
            out,
            "| {} | {} | {:.1}% | {:.1}% | {:.2} |",
            pr.partition,
            pr.count,
            pr.share_of_population * 100.0,
            pr.mean_baseline_pct,
            pr.mean_gain_pct
        );
    }
    let fields: Vec<&str> = p
        .profiles
        .iter()
        .max_by_key(|pr| pr.modal.len())
        .map(|pr| pr.modal.iter().map(|m| m.field.as_str()).collect())
        .unwrap_or_default();
    if !fields.is_empty() {
        out.push_str("\n| Field |");
        for pr in &p.profiles {
            let _ = write!(out, " {} |", pr.partition);
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(p.profiles.len()));
        out.push('\n');
        for f in fields {
            let _ = write!(out, "| {f} |");
            for pr in &p.profiles {
                match pr.modal.iter().find(|m| m.field == f) {
                    Some(m) => {
                        let _ = write!(out, " {} ({:.0}%) |", m.value, m.share * 100.0);
                    }
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
    }
    out
}
