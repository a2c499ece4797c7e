//! Calibrated synthetic microdata.
//!
//! Each country gets two correlated latent scores: one for the
//! digital-financial domain and one for the remaining scored items. The
//! latents are pushed through Beta marginals whose moments are solved from
//! the per-country DFC and DFL targets (after correcting for item-level
//! missingness and integer rounding). Domain totals are then spread over
//! individual items by weighted sampling, using item propensities fitted so
//! their mean matches the domain mean. Demographic and socio-economic fields
//! are drawn conditionally on the latents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};
use statrs::statistics::Distribution as _;

use crate::codebook::{default_codebook, Codebook, Domain, FieldKind};
use crate::dataset::{Dataset, Provenance, SurveyRecord, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryTarget {
    pub country: String,
    pub count: usize,
    pub dfc_mean_pct: f64,
    pub dfc_std_pct: f64,
    pub dfl_mean_pct: f64,
    pub dfl_std_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub countries: Vec<CountryTarget>,
    #[serde(default = "default_missing_rate")]
    pub missing_rate: f64,
    /// Latent correlation between the DFC score and the rest of the index.
    #[serde(default = "default_latent_correlation")]
    pub latent_correlation: f64,
}

fn default_missing_rate() -> f64 {
    0.02
}

fn default_latent_correlation() -> f64 {
    0.6
}

impl SynthesisSpec {
    /// Participant counts of the seven-country survey together with the
    /// published per-country DFC and DFL moments.
    pub fn appendix_a() -> Self {
        let rows: [(&str, usize, f64, f64, f64, f64); 7] = [
            ("Fiji", 1678, 43.7, 16.4, 50.7, 14.8),
            ("PNG", 1587, 32.6, 15.0, 41.1, 14.3),
            ("Samoa", 1216, 38.7, 15.7, 43.3, 12.4),
            ("Solomon Islands", 1540, 36.3, 11.9, 41.9, 12.2),
            ("Timor-Leste", 1631, 37.9, 13.0, 39.6, 12.7),
            ("Tonga", 1227, 46.2, 15.2, 44.3, 12.5),
            ("Vanuatu", 1229, 37.3, 17.6, 44.2, 12.9),
        ];
        SynthesisSpec {
            countries: rows
                .iter()
                .map(|&(c, n, dm, ds, lm, ls)| CountryTarget {
                    country: c.into(),
                    count: n,
                    dfc_mean_pct: dm,
                    dfc_std_pct: ds,
                    dfl_mean_pct: lm,
                    dfl_std_pct: ls,
                })
                .collect(),
            missing_rate: default_missing_rate(),
            latent_correlation: default_latent_correlation(),
        }
    }

    /// Named calibration presets.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "appendixa" | "appendix_a" | "appendix-a" => Some(Self::appendix_a()),
            _ => None,
        }
    }

    pub fn total(&self) -> usize {
        self.countries.iter().map(|c| c.count).sum()
    }
}

/// Beta marginal with moment parameters on the unit interval.
fn beta_for(mean: f64, var: f64, what: &str) -> Result<Beta> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::Synthesis(format!("{what}: mean {:.4} outside (0, 1) after adjustment", mean)));
    }
    let cap = mean * (1.0 - mean);
    if !(var > 0.0 && var < cap) {
        return Err(Error::Synthesis(format!("{what}: infeasible dispersion (variance {var:.5}, limit {cap:.5})")));
    }
    let common = cap / var - 1.0;
    Beta::new(mean * common, (1.0 - mean) * common).map_err(|e| Error::Synthesis(format!("{what}: {e}")))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Item propensities `logistic(shift + difficulty_i)` with `shift` fitted so
/// the mean propensity equals `target`.
fn fit_propensities(difficulty: &[f64], target: f64) -> Vec<f64> {
    let mean_at = |s: f64| difficulty.iter().map(|d| logistic(s + d)).sum::<f64>() / difficulty.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);
    difficulty.iter().map(|d| logistic(shift + d)).collect()
}

/// A scored item viewed as a ladder of unit point steps.
struct Ladder {
    field: usize,
    capacity: u32,
    weight: f64,
}

/// Spreads `units` points over the ladders. Each unit goes to a ladder with
/// remaining capacity, chosen with probability proportional to its weight.
fn allocate(units: u32, ladders: &[Ladder], rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut filled = vec![0u32; ladders.len()];
    for _ in 0..units {
        let total: f64 = ladders.iter().zip(&filled).filter(|(l, f)| **f < l.capacity).map(|(l, _)| l.weight).sum();
        if total <= 0.0 {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = None;
        for (i, l) in ladders.iter().enumerate() {
            if filled[i] >= l.capacity {
                continue;
            }
            chosen = Some(i);
            pick -= l.weight;
            if pick <= 0.0 {
                break;
            }
        }
        if let Some(i) = chosen {
            filled[i] += 1;
        }
    }
    filled
}

fn ladders_for(codebook: &Codebook, domains: &[Domain], mean_fraction: f64) -> Result<Vec<Ladder>> {
    let fields: Vec<usize> = codebook
        .scored_fields()
        .filter(|(_, f)| domains.contains(&f.domain))
        .map(|(i, f)| {
            if f.points as usize != f.categories.len() - 1 {
                Err(Error::Synthesis(format!(
                    "field {:?}: synthesis needs one point per level step ({} points, {} levels)",
                    f.name,
                    f.points,
                    f.categories.len()
                )))
            } else {
                Ok(i)
            }
        })
        .collect::<Result<_>>()?;
    let n = fields.len().max(1);
    // evenly spread difficulties, easiest item first
    let difficulty: Vec<f64> =
        (0..fields.len()).map(|k| if n == 1 { 0.0 } else { 1.5 - 3.0 * k as f64 / (n - 1) as f64 }).collect();
    let p = fit_propensities(&difficulty, mean_fraction.clamp(1e-6, 1.0 - 1e-6));
    Ok(fields
        .iter()
        .zip(p)
        .map(|(&field, p)| Ladder { field, capacity: codebook.fields[field].points, weight: p / (1.0 - p) })
        .collect())
}

fn categorical_draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        pick -= w;
        if pick <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn language_weights(country: &str, languages: &[String]) -> Vec<f64> {
    let table: &[(&str, f64)] = match country {
        "Fiji" => &[("English", 0.4), ("Fijian", 0.4), ("Hindi", 0.2)],
        "PNG" => &[("Tok Pisin", 0.7), ("English", 0.3)],
        "Samoa" => &[("Samoan", 0.9), ("English", 0.1)],
        "Solomon Islands" => &[("Pijin", 0.85), ("English", 0.15)],
        "Timor-Leste" => &[("Tetum", 0.95), ("English", 0.05)],
        "Tonga" => &[("Tongan", 0.9), ("English", 0.1)],
        "Vanuatu" => &[("Bislama", 0.85), ("English", 0.15)],
        _ => &[],
    };
    let w: Vec<f64> =
        languages.iter().map(|l| table.iter().find(|(n, _)| n == l).map(|(_, w)| *w).unwrap_or(0.0)).collect();
    if w.iter().sum::<f64>() > 0.0 {
        w
    } else {
        vec![1.0; languages.len()]
    }
}

/// Per-country latent moments in point units, before missingness.
struct LatentPlan {
    dfc: Beta,
    rest: Beta,
    dfc_max: u32,
    rest_max: u32,
}

fn plan_country(t: &CountryTarget, spec: &SynthesisSpec, codebook: &Codebook) -> Result<LatentPlan> {
    let what = t.country.as_str();
    if t.count == 0 {
        return Err(Error::Synthesis(format!("{what}: zero record count")));
    }
    for (name, v) in [("DFC mean", t.dfc_mean_pct), ("DFL mean", t.dfl_mean_pct)] {
        if !(v > 0.0 && v < 100.0) {
            return Err(Error::Synthesis(format!("{what}: {name} {v} outside (0, 100)")));
        }
    }
    for (name, v) in [("DFC std", t.dfc_std_pct), ("DFL std", t.dfl_std_pct)] {
        if !(v > 0.0 && v < 50.0) {
            return Err(Error::Synthesis(format!("{what}: {name} {v} outside (0, 50)")));
        }
    }
    let m = spec.missing_rate;
    let rho = spec.latent_correlation;
    let dfc_max = codebook.domain_max(Domain::DigitalFinancial);
    let rest_max = codebook.domain_max(Domain::Digital) + codebook.domain_max(Domain::Financial);
    let total = f64::from(dfc_max + rest_max);

    // targets in points after missingness
    let mu_c = t.dfc_mean_pct / 100.0 * f64::from(dfc_max);
    let sd_c = t.dfc_std_pct / 100.0 * f64::from(dfc_max);
    let mu_l = t.dfl_mean_pct / 100.0 * total;
    let sd_l = t.dfl_std_pct / 100.0 * total;

    // undo independent item thinning: E' = (1-m)E, Var' = (1-m)^2 Var + m(1-m)E
    let keep = 1.0 - m;
    let mu_c_pre = mu_c / keep;
    let mu_l_pre = mu_l / keep;
    let var_c_pre = (sd_c * sd_c - m * keep * mu_c_pre) / (keep * keep);
    let var_l_pre = (sd_l * sd_l - m * keep * mu_l_pre) / (keep * keep);
    if var_c_pre <= 0.0 || var_l_pre <= 0.0 {
        return Err(Error::Synthesis(format!("{what}: dispersion too small for missing rate {m}")));
    }
    let mu_r_pre = mu_l_pre - mu_c_pre;
    // Var(L) = Var(C) + Var(R) + 2 rho sd(C) sd(R)
    let sc = var_c_pre.sqrt();
    let disc = rho * rho * var_c_pre - var_c_pre + var_l_pre;
    if disc < 0.0 {
        return Err(Error::Synthesis(format!("{what}: DFL dispersion below what the DFC dispersion implies")));
    }
    let sr = -rho * sc + disc.sqrt();
    if sr <= 0.0 {
        return Err(Error::Synthesis(format!("{what}: no positive dispersion for the remaining domains")));
    }
    // rounding to whole points adds 1/12 point^2
    let rounding = 1.0 / 12.0;
    let dfc = beta_for(
        mu_c_pre / f64::from(dfc_max),
        (var_c_pre - rounding).max(1e-9) / f64::from(dfc_max).powi(2),
        &format!("{what} DFC"),
    )?;
    let rest = beta_for(
        mu_r_pre / f64::from(rest_max),
        (sr * sr - rounding).max(1e-9) / f64::from(rest_max).powi(2),
        &format!("{what} DC+FC"),
    )?;
    Ok(LatentPlan { dfc, rest, dfc_max, rest_max })
}

/// Generates a dataset over the bundled default codebook.
pub fn synthesize_dataset(spec: &SynthesisSpec, seed: u64) -> Result<Dataset> {
    synthesize_with_codebook(spec, &default_codebook(), seed)
}

pub fn synthesize_with_codebook(spec: &SynthesisSpec, codebook: &Codebook, seed: u64) -> Result<Dataset> {
    if spec.countries.is_empty() {
        return Err(Error::Synthesis("no countries requested".into()));
    }
    if !(0.0..0.5).contains(&spec.missing_rate) {
        return Err(Error::Synthesis(format!("missing rate {} outside [0, 0.5)", spec.missing_rate)));
    }
    if !(-0.99..=0.99).contains(&spec.latent_correlation) {
        return Err(Error::Synthesis("latent correlation must lie in [-0.99, 0.99]".into()));
    }
    let cpos = codebook.country_position();
    let std_normal = Normal::standard();

    let mut records = Vec::with_capacity(spec.total());
    for (ci, target) in spec.countries.iter().enumerate() {
        let country_level = codebook.fields[cpos]
            .category_index(&target.country)
            .ok_or_else(|| Error::Synthesis(format!("unknown country {:?}", target.country)))?;
        let plan = plan_country(target, spec, codebook)?;
        let dfc_ladders = ladders_for(codebook, &[Domain::DigitalFinancial], plan.dfc.mean().unwrap_or(0.5))?;
        let rest_ladders =
            ladders_for(codebook, &[Domain::Digital, Domain::Financial], plan.rest.mean().unwrap_or(0.5))?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ci as u64 + 1);
        let rho = spec.latent_correlation;
        for k in 0..target.count {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * e;
            let zmix = (z1 + z2) / (2.0 + 2.0 * rho).sqrt();

            let mut values = vec![Value::Missing; codebook.fields.len()];
            values[cpos] = Value::Level(country_level as u32);

            let dfc_units = (plan.dfc.inverse_cdf(std_normal.cdf(z1)) * f64::from(plan.dfc_max)).round() as u32;
            let rest_units = (plan.rest.inverse_cdf(std_normal.cdf(z2)) * f64::from(plan.rest_max)).round() as u32;
            for (ladders, units) in [(&dfc_ladders, dfc_units), (&rest_ladders, rest_units)] {
                for (l, level) in ladders.iter().zip(allocate(units, ladders, &mut rng)) {
                    values[l.field] = Value::Level(level);
                }
            }

            fill_context(codebook, &target.country, &mut values, z1, zmix, &mut rng);

            for (i, v) in values.iter_mut().enumerate() {
                if i != cpos && rng.random::<f64>() < spec.missing_rate {
                    *v = Value::Missing;
                }
            }
            records.push(SurveyRecord { record_id: format!("R{ci}{k:05}"), values });
        }
    }
    Dataset::new(codebook.clone(), records, Provenance::Synthetic { seed })
}

/// Draws the non-scored fields. Fields absent from the codebook are skipped;
/// unknown non-scored fields get a uniform draw.
fn fill_context(
    codebook: &Codebook,
    country: &str,
    values: &mut [Value],
    z_dfc: f64,
    zmix: f64,
    rng: &mut ChaCha8Rng,
) {
    let noise = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let clamp_level = |x: f64, levels: usize| x.round().clamp(0.0, (levels - 1) as f64) as u32;
    for (i, f) in codebook.fields.iter().enumerate() {
        if f.is_scored() || i == codebook.country_position() {
            continue;
        }
        let levels = f.categories.len();
        values[i] = match f.name.as_str() {
            "gender" => Value::Level(u32::from(rng.random::<f64>() >= 0.52 + 0.04 * (-zmix).tanh())),
            "age_group" => {
                let w = [0.22, 0.25, 0.2, 0.14, 0.1, 0.06, 0.03];
                let idx = categorical_draw(&w[..levels.min(w.len())], rng);
                Value::Level(idx as u32)
            }
            "language" => Value::Level(categorical_draw(&language_weights(country, &f.categories), rng) as u32),
            "area" => Value::Level(u32::from(rng.random::<f64>() < logistic(-0.4 + 0.6 * zmix))),
            "education" => Value::Level(clamp_level(2.6 + 1.1 * zmix + 0.8 * noise(rng), levels)),
            "income" => Value::Level(clamp_level(1.2 + 0.8 * zmix + 0.7 * noise(rng), levels)),
            "occupation" => {
                let slope = |label: &str| match label {
                    "Caregiver" => -0.3,
                    "Employed" => 0.5,
                    "Other" => -0.4,
                    "Overseas worker" => 0.3,
                    "Student" => 0.2,
                    _ => 0.0,
                };
                let base = |label: &str| match label {
                    "Overseas worker" => 0.05,
                    "Student" => 0.15,
                    _ => 0.2,
                };
                let w: Vec<f64> = f.categories.iter().map(|c| base(c) * (slope(c) * zmix).exp()).collect();
                Value::Level(categorical_draw(&w, rng) as u32)
            }
            "household_size" => Value::Number((1.5 + 0.35 * noise(rng)).exp().round().max(1.0)),
            "numeracy_comfort" => Value::Level(u32::from(rng.random::<f64>() < logistic(0.2 + 0.8 * z_dfc))),
            _ => match f.kind {
                FieldKind::Numeric => Value::Number(noise(rng)),
                _ => Value::Level(rng.random_range(0..levels) as u32),
            },
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::competency::score_dataset;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn fiji_mean_on_target() {
        let mut spec = SynthesisSpec::appendix_a();
        spec.countries.retain(|c| c.country == "Fiji");
        spec.countries[0].dfl_mean_pct = 50.9;
        let ds = synthesize_dataset(&spec, 11).unwrap();
        assert_eq!(ds.len(), 1678);
        let scores = score_dataset(&ds);
        let (m, _) = moments(&scores.iter().map(|s| s.dfl_pct).collect::<Vec<_>>());
        assert!((49.4..=52.4).contains(&m), "Fiji DFL mean {m}");
    }

    #[test]
    fn deterministic_per_seed() {
        let mut spec = SynthesisSpec::appendix_a();
        spec.countries.truncate(2);
        let a = synthesize_dataset(&spec, 5).unwrap();
        let b = synthesize_dataset(&spec, 5).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let c = synthesize_dataset(&spec, 6).unwrap();
        assert_ne!(a.to_csv_string(), c.to_csv_string());
    }

    #[test]
    fn rejects_infeasible_targets() {
        let mut spec = SynthesisSpec::appendix_a();
        spec.countries[0].dfl_mean_pct = 120.0;
        assert!(synthesize_dataset(&spec, 1).is_err());
        let mut spec = SynthesisSpec::appendix_a();
        spec.countries[1].count = 0;
        assert!(synthesize_dataset(&spec, 1).unwrap_err().to_string().contains("zero"));
    }

    #[test]
    fn propensities_hit_domain_mean() {
        let d = [1.0, 0.0, -1.0, -2.0];
        let p = fit_propensities(&d, 0.37);
        assert!((p.iter().sum::<f64>() / 4.0 - 0.37).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn allocation_respects_capacity() {
        let ladders = vec![
            Ladder { field: 0, capacity: 1, weight: 5.0 },
            Ladder { field: 1, capacity: 3, weight: 1.0 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(allocate(4, &ladders, &mut rng), vec![1, 3]);
        assert_eq!(allocate(9, &ladders, &mut rng), vec![1, 3]);
        assert_eq!(allocate(0, &ladders, &mut rng), vec![0, 0]);
    }
}
