//! Static what-if scenarios over a trained model.
//!
//! A scenario moves chosen levers to target values for every record that
//! lacks them, then re-predicts through the model's own preprocessing. The
//! gain is counterfactual minus baseline prediction. Nothing here assumes a
//! linear model.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, CodebookField, INDEX_MAX_POINTS};
use crate::competency::points_to_pct;
use crate::dataset::{Dataset, SurveyRecord, Value};
use crate::error::{Error, Result};
use crate::models::TrainedModel;

/// Group label used for records with no value in a disaggregation field.
pub const MISSING_GROUP: &str = "(missing)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Lever field → target category label.
    pub assignments: BTreeMap<String, String>,
    /// Segmentation field → admitted labels. Records must match every entry.
    #[serde(default)]
    pub filter: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_clip")]
    pub clip: bool,
}

fn default_clip() -> bool {
    true
}

/// Single-lever presets and the four bundles, by name.
pub const PRESETS: &[(&str, &[&str])] = &[
    ("device_access", &["device_ownership"]),
    ("content_creation", &["content_creation"]),
    ("computational_skills", &["computational_skills"]),
    ("financial_optimism", &["financial_optimism"]),
    ("budget_management", &["budget_management"]),
    ("expense_recording", &["expense_recording"]),
    ("digital_autonomy", &["digital_autonomy"]),
    ("cybersecurity_resilience", &["cybersecurity_resilience"]),
    ("digital_spending_tracking", &["digital_spending_tracking"]),
    ("digital_capability", &["device_ownership", "content_creation", "computational_skills"]),
    ("financial_capability", &["budget_management", "expense_recording"]),
    ("df_safety", &["digital_autonomy", "cybersecurity_resilience"]),
    (
        "comprehensive",
        &[
            "device_ownership",
            "content_creation",
            "computational_skills",
            "financial_optimism",
            "budget_management",
            "expense_recording",
            "digital_autonomy",
            "cybersecurity_resilience",
            "digital_spending_tracking",
        ],
    ),
];

impl Scenario {
    /// Scenario moving each lever to its highest category.
    pub fn lift_to_top(name: impl Into<String>, codebook: &Codebook, levers: &[&str]) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for l in levers {
            let f = codebook.field(l).ok_or_else(|| Error::Scenario(format!("unknown lever {l:?}")))?;
            let top = f.categories.last().ok_or_else(|| Error::Scenario(format!("lever {l:?} has no categories")))?;
            assignments.insert(l.to_string(), top.clone());
        }
        Ok(Scenario { name: name.into(), assignments, filter: BTreeMap::new(), clip: true })
    }

    pub fn preset(name: &str, codebook: &Codebook) -> Result<Self> {
        let (_, levers) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Scenario(format!("unknown scenario preset {name:?}")))?;
        Scenario::lift_to_top(name, codebook, levers)
    }

    pub fn preset_names() -> Vec<&'static str> {
        PRESETS.iter().map(|(n, _)| *n).collect()
    }

    pub fn is_bundle(&self) -> bool {
        self.assignments.len() >= 2
    }

    /// Checks lever scope and vocabularies, resolving labels to levels.
    pub fn resolve<'a>(&self, codebook: &'a Codebook) -> Result<ResolvedScenario<'a>> {
        if self.assignments.is_empty() {
            return Err(Error::Scenario(format!("scenario {:?} assigns no levers", self.name)));
        }
        let mut levers = Vec::new();
        for (name, label) in &self.assignments {
            let pos = codebook.position(name).ok_or_else(|| Error::Scenario(format!("unknown lever {name:?}")))?;
            let f = &codebook.fields[pos];
            if !f.modifiable {
                return Err(Error::Scenario(format!("{name:?} is a segmentation variable, not a modifiable lever")));
            }
            if !f.kind.is_categorical() {
                return Err(Error::Scenario(format!("lever {name:?} is not categorical")));
            }
            let level = f.category_index(label).ok_or_else(|| {
                Error::Scenario(format!("target {label:?} is not a category of {name:?} ({:?})", f.categories))
            })?;
            levers.push((pos, f, level));
        }
        let mut filter = Vec::new();
        for (name, labels) in &self.filter {
            let pos = codebook.position(name).ok_or_else(|| Error::Scenario(format!("unknown filter field {name:?}")))?;
            let f = &codebook.fields[pos];
            if f.modifiable {
                return Err(Error::Scenario(format!("filter field {name:?} must be a segmentation variable")));
            }
            if !f.kind.is_categorical() {
                return Err(Error::Scenario(format!("filter field {name:?} is not categorical")));
            }
            let mut allowed = BTreeSet::new();
            for l in labels {
                let level = f
                    .category_index(l)
                    .ok_or_else(|| Error::Scenario(format!("filter value {l:?} is not a category of {name:?}")))?;
                allowed.insert(level);
            }
            filter.push((pos, allowed));
        }
        Ok(ResolvedScenario { levers, filter })
    }
}

pub struct ResolvedScenario<'a> {
    levers: Vec<(usize, &'a CodebookField, usize)>,
    filter: Vec<(usize, BTreeSet<usize>)>,
}

fn lacks(field: &CodebookField, current: Value, target: usize) -> bool {
    match current.level() {
        None => true,
        Some(cur) if field.is_scored() => field.level_points(cur) < field.level_points(target),
        Some(cur) => cur != target,
    }
}

impl ResolvedScenario<'_> {
    pub fn passes_filter(&self, record: &SurveyRecord) -> bool {
        self.filter
            .iter()
            .all(|(pos, allowed)| record.values[*pos].level().is_some_and(|l| allowed.contains(&l)))
    }

    /// The modified record, or `None` when the record is out of scope or
    /// already holds every assigned value.
    pub fn counterfactual(&self, record: &SurveyRecord) -> Option<SurveyRecord> {
        if !self.passes_filter(record) {
            return None;
        }
        let mut out: Option<SurveyRecord> = None;
        for &(pos, field, target) in &self.levers {
            if lacks(field, record.values[pos], target) {
                out.get_or_insert_with(|| record.clone()).values[pos] = Value::Level(target as u32);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub record_id: String,
    pub reached: bool,
    pub baseline_points: f64,
    pub counterfactual_points: f64,
    pub delta_points: f64,
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub group: String,
    pub count: usize,
    pub reached: usize,
    pub reach: f64,
    pub gain_points: f64,
    pub gain_pct: f64,
    /// Mean gain below the population gain.
    pub lagging: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTable {
    pub field: String,
    pub rows: Vec<SubgroupRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub scenario: Scenario,
    pub model_fingerprint: String,
    pub dataset_fingerprint: String,
    pub model_seed: u64,
    pub population: usize,
    pub reached: usize,
    pub reach: f64,
    pub population_gain_points: f64,
    pub population_gain_pct: f64,
    /// Mean gain among reached records; 0 when nobody is reached.
    pub reached_gain_points: f64,
    pub reached_gain_pct: f64,
    pub records: Vec<RecordOutcome>,
    #[serde(default)]
    pub subgroups: Vec<SubgroupTable>,
    pub warnings: Vec<String>,
}

impl SimulationResult {
    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta_points).collect()
    }
}

fn clamp_points(x: f64) -> f64 {
    x.clamp(0.0, f64::from(INDEX_MAX_POINTS))
}

/// Gain after bounding both predictions to the index range. Clipping only
/// ever shrinks a gain; a negative delta is left as predicted.
pub fn clipped_delta(baseline: f64, counterfactual: f64) -> f64 {
    let raw = counterfactual - baseline;
    raw.min(clamp_points(counterfactual) - clamp_points(baseline))
}

pub fn simulate(dataset: &Dataset, model: &TrainedModel, scenario: &Scenario) -> Result<SimulationResult> {
    let resolved = scenario.resolve(&dataset.codebook)?;
    if dataset.is_empty() {
        return Err(Error::Scenario("cannot simulate on an empty population".into()));
    }
    let records: Vec<RecordOutcome> = dataset
        .records
        .par_iter()
        .map(|r| {
            let baseline = model.predict_record(r);
            let (reached, cf) = match resolved.counterfactual(r) {
                Some(m) => (true, model.predict_record(&m)),
                None => (false, baseline),
            };
            let delta = if scenario.clip { clipped_delta(baseline, cf) } else { cf - baseline };
            RecordOutcome {
                record_id: r.record_id.clone(),
                reached,
                baseline_points: baseline,
                counterfactual_points: cf,
                delta_points: delta,
                delta_pct: points_to_pct(delta),
            }
        })
        .collect();
    let n = records.len();
    let reached = records.iter().filter(|r| r.reached).count();
    let total: f64 = records.iter().map(|r| r.delta_points).sum();
    let reached_total: f64 = records.iter().filter(|r| r.reached).map(|r| r.delta_points).sum();
    let population_gain_points = total / n as f64;
    let reached_gain_points = if reached > 0 { reached_total / reached as f64 } else { 0.0 };
    let mut warnings = Vec::new();
    if !scenario.filter.is_empty() && !dataset.records.iter().any(|r| resolved.passes_filter(r)) {
        warnings.push(format!("scenario {:?}: filter matches no records", scenario.name));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SimulationResult {
        scenario: scenario.clone(),
        model_fingerprint: model.fingerprint(),
        dataset_fingerprint: dataset.fingerprint(),
        model_seed: model.seed,
        population: n,
        reached,
        reach: reached as f64 / n as f64,
        population_gain_points,
        population_gain_pct: points_to_pct(population_gain_points),
        reached_gain_points,
        reached_gain_pct: points_to_pct(reached_gain_points),
        records,
        subgroups: Vec::new(),
        warnings,
    })
}

/// As [`simulate`], for scenarios combining two or more levers.
pub fn simulate_bundle(dataset: &Dataset, model: &TrainedModel, bundle: &Scenario) -> Result<SimulationResult> {
    if !bundle.is_bundle() {
        return Err(Error::Scenario(format!("bundle {:?} needs at least two levers", bundle.name)));
    }
    simulate(dataset, model, bundle)
}

/// The population with the scenario applied.
pub fn counterfactual_dataset(dataset: &Dataset, scenario: &Scenario) -> Result<Dataset> {
    let resolved = scenario.resolve(&dataset.codebook)?;
    let records = dataset
        .records
        .iter()
        .map(|r| resolved.counterfactual(r).unwrap_or_else(|| r.clone()))
        .collect();
    Ok(Dataset { codebook: dataset.codebook.clone(), records, provenance: dataset.provenance })
}

/// Gain and reach per group of each field. Groups appear in codebook order,
/// followed by [`MISSING_GROUP`] when present.
pub fn disaggregate(result: &SimulationResult, dataset: &Dataset, by: &[&str]) -> Result<Vec<SubgroupTable>> {
    if result.records.len() != dataset.len() {
        return Err(Error::InvalidInput(format!(
            "result covers {} records but dataset has {}",
            result.records.len(),
            dataset.len()
        )));
    }
    let cb = &dataset.codebook;
    by.iter()
        .map(|name| {
            let pos = cb.position(name).ok_or_else(|| Error::InvalidInput(format!("unknown field {name:?}")))?;
            let field = &cb.fields[pos];
            if !field.kind.is_categorical() {
                return Err(Error::InvalidInput(format!("cannot disaggregate by numeric field {name:?}")));
            }
            let k = field.categories.len();
            // slot k collects missing values
            let mut count = vec![0usize; k + 1];
            let mut reached = vec![0usize; k + 1];
            let mut gain = vec![0.0f64; k + 1];
            for (rec, out) in dataset.records.iter().zip(&result.records) {
                let slot = rec.values[pos].level().unwrap_or(k);
                count[slot] += 1;
                reached[slot] += usize::from(out.reached);
                gain[slot] += out.delta_points;
            }
            let rows = (0..=k)
                .filter(|&s| count[s] > 0)
                .map(|s| {
                    let g = gain[s] / count[s] as f64;
                    SubgroupRow {
                        group: if s == k { MISSING_GROUP.to_string() } else { field.categories[s].clone() },
                        count: count[s],
                        reached: reached[s],
                        reach: reached[s] as f64 / count[s] as f64,
                        gain_points: g,
                        gain_pct: points_to_pct(g),
                        lagging: g < result.population_gain_points,
                    }
                })
                .collect();
            Ok(SubgroupTable { field: name.to_string(), rows })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponderConfig {
    /// Deltas at or below this many points count as no response.
    pub non_responder_threshold: f64,
    pub deep_decile: f64,
    pub high_baseline_quantile: f64,
}

impl Default for ResponderConfig {
    fn default() -> Self {
        ResponderConfig { non_responder_threshold: 0.0, deep_decile: 0.10, high_baseline_quantile: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonResponder {
    pub record_id: String,
    pub delta_points: f64,
    /// Baseline at or above the high-baseline quantile.
    pub ceiling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioNonResponders {
    pub scenario: String,
    pub records: Vec<NonResponder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalValue {
    pub field: String,
    pub value: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionProfile {
    pub partition: String,
    pub count: usize,
    pub share_of_population: f64,
    pub mean_baseline_pct: f64,
    /// Mean over records of the per-record mean delta across scenarios.
    pub mean_gain_points: f64,
    pub mean_gain_pct: f64,
    pub modal: Vec<ModalValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponderPartition {
    pub config: ResponderConfig,
    pub scenarios: Vec<String>,
    pub ceiling_threshold_points: f64,
    pub per_scenario: Vec<ScenarioNonResponders>,
    /// Records failing to respond in at least one scenario.
    pub non_responders: Vec<String>,
    pub broad_responders: Vec<String>,
    pub deep_impact: Vec<String>,
    pub profiles: Vec<PartitionProfile>,
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn partition_responders(
    results: &[SimulationResult],
    dataset: &Dataset,
    config: &ResponderConfig,
) -> Result<ResponderPartition> {
    let first = results.first().ok_or_else(|| Error::Scenario("responder partition needs at least one scenario".into()))?;
    let n = dataset.len();
    for r in results {
        if r.records.len() != n || r.records.iter().zip(&dataset.records).any(|(o, d)| o.record_id != d.record_id) {
            return Err(Error::Scenario(format!("scenario {:?} was computed on a different population", r.scenario.name)));
        }
    }
    if !(0.0..=1.0).contains(&config.deep_decile) || !(0.0..=1.0).contains(&config.high_baseline_quantile) {
        return Err(Error::InvalidInput("responder fractions must lie in [0, 1]".into()));
    }
    let tau = config.non_responder_threshold;
    let baselines: Vec<f64> = first.records.iter().map(|r| r.baseline_points).collect();
    let ceiling_threshold_points = quantile(&baselines, config.high_baseline_quantile);

    let per_scenario: Vec<ScenarioNonResponders> = results
        .iter()
        .map(|res| ScenarioNonResponders {
            scenario: res.scenario.name.clone(),
            records: res
                .records
                .iter()
                .filter(|o| o.delta_points <= tau)
                .map(|o| NonResponder {
                    record_id: o.record_id.clone(),
                    delta_points: o.delta_points,
                    ceiling: o.baseline_points >= ceiling_threshold_points,
                })
                .collect(),
        })
        .collect();

    let mean_delta: Vec<f64> = (0..n)
        .map(|i| results.iter().map(|r| r.records[i].delta_points).sum::<f64>() / results.len() as f64)
        .collect();
    let broad_idx: Vec<usize> = (0..n).filter(|&i| results.iter().all(|r| r.records[i].delta_points > tau)).collect();
    let non_idx: Vec<usize> = (0..n).filter(|&i| results.iter().any(|r| r.records[i].delta_points <= tau)).collect();

    let mut ranked = broad_idx.clone();
    ranked.sort_by(|&a, &b| {
        mean_delta[b]
            .total_cmp(&mean_delta[a])
            .then_with(|| dataset.records[a].record_id.cmp(&dataset.records[b].record_id))
    });
    let deep_n = (config.deep_decile * ranked.len() as f64).ceil() as usize;
    let deep_idx: Vec<usize> = ranked[..deep_n.min(ranked.len())].to_vec();

    let ids = |idx: &[usize]| idx.iter().map(|&i| dataset.records[i].record_id.clone()).collect::<Vec<_>>();
    let profiles = vec![
        profile_of("non_responders", &non_idx, dataset, &baselines, &mean_delta),
        profile_of("broad_responders", &broad_idx, dataset, &baselines, &mean_delta),
        profile_of("deep_impact", &deep_idx, dataset, &baselines, &mean_delta),
    ];
    Ok(ResponderPartition {
        config: *config,
        scenarios: results.iter().map(|r| r.scenario.name.clone()).collect(),
        ceiling_threshold_points,
        per_scenario,
        non_responders: ids(&non_idx),
        broad_responders: ids(&broad_idx),
        deep_impact: ids(&deep_idx),
        profiles,
    })
}

fn profile_of(name: &str, idx: &[usize], dataset: &Dataset, baselines: &[f64], mean_delta: &[f64]) -> PartitionProfile {
    let cb = &dataset.codebook;
    let count = idx.len();
    let mean = |v: &[f64]| if count == 0 { 0.0 } else { idx.iter().map(|&i| v[i]).sum::<f64>() / count as f64 };
    let mean_gain_points = mean(mean_delta);
    let modal = cb
        .fields
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.modifiable && f.kind.is_categorical())
        .filter_map(|(pos, f)| {
            if count == 0 {
                return None;
            }
            let k = f.categories.len();
            let mut tally = vec![0usize; k + 1];
            for &i in idx {
                tally[dataset.records[i].values[pos].level().unwrap_or(k)] += 1;
            }
            // first maximum wins, so ties resolve to codebook order
            let (slot, c) = tally.iter().enumerate().fold((0, 0), |best, (s, &c)| if c > best.1 { (s, c) } else { best });
            Some(ModalValue {
                field: f.name.clone(),
                value: if slot == k { MISSING_GROUP.to_string() } else { f.categories[slot].clone() },
                share: c as f64 / count as f64,
            })
        })
        .collect();
    PartitionProfile {
        partition: name.to_string(),
        count,
        share_of_population: if dataset.is_empty() { 0.0 } else { count as f64 / dataset.len() as f64 },
        mean_baseline_pct: points_to_pct(mean(baselines)),
        mean_gain_points,
        mean_gain_pct: points_to_pct(mean_gain_points),
        modal,
    }
}
