//! Survey microdata: records, validation, delimited-text IO and summaries.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, FieldKind};
use crate::error::{Error, Result, Violation, MAX_VIOLATIONS};
use crate::fingerprint::sha256_hex;

/// A single response cell. Categorical levels are stored as indices into the
/// field's category list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Missing,
    Level(u32),
    Number(f64),
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn level(&self) -> Option<usize> {
        match *self {
            Value::Level(l) => Some(l as usize),
            _ => None,
        }
    }

    pub fn number(&self) -> Option<f64> {
        match *self {
            Value::Number(x) => Some(x),
            _ => None,
        }
    }
}

/// One respondent. `values` is aligned with the codebook's field order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRecord {
    pub record_id: String,
    pub values: Vec<Value>,
}

impl SurveyRecord {
    pub fn value(&self, codebook: &Codebook, field: &str) -> Option<Value> {
        codebook.position(field).map(|i| self.values[i])
    }

    /// The country label of this record.
    pub fn country<'a>(&self, codebook: &'a Codebook) -> &'a str {
        let pos = codebook.country_position();
        let level = self.values[pos].level().expect("validated record has a country");
        &codebook.fields[pos].categories[level]
    }

    /// Category label of a categorical field, `None` when missing.
    /// Sets a categorical field by label.
    pub fn set_label(&mut self, codebook: &Codebook, field: &str, label: &str) -> Result<()> {
        let pos = codebook.position(field).ok_or_else(|| Error::InvalidInput(format!("unknown field {field:?}")))?;
        let level = codebook.fields[pos]
            .category_index(label)
            .ok_or_else(|| Error::InvalidInput(format!("{label:?} is not a category of {field:?}")))?;
        self.values[pos] = Value::Level(level as u32);
        Ok(())
    }

    pub fn label<'a>(&self, codebook: &'a Codebook, field: usize) -> Option<&'a str> {
        self.values[field].level().map(|l| codebook.fields[field].categories[l].as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Ingested,
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub codebook: Codebook,
    pub records: Vec<SurveyRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Validates every record against the codebook, failing with up to
    /// [`MAX_VIOLATIONS`] violations.
    pub fn new(codebook: Codebook, records: Vec<SurveyRecord>, provenance: Provenance) -> Result<Self> {
        let mut violations = Vec::new();
        let mut ids = HashSet::with_capacity(records.len());
        let country = codebook.country_position();
        for r in &records {
            if violations.len() >= MAX_VIOLATIONS {
                break;
            }
            if !ids.insert(r.record_id.as_str()) {
                violations.push(Violation {
                    record_id: r.record_id.clone(),
                    field: "record_id".into(),
                    message: "duplicate record_id".into(),
                });
                continue;
            }
            if r.values.len() != codebook.fields.len() {
                violations.push(Violation {
                    record_id: r.record_id.clone(),
                    field: "*".into(),
                    message: format!("expected {} values, got {}", codebook.fields.len(), r.values.len()),
                });
                continue;
            }
            for (i, (f, v)) in codebook.fields.iter().zip(&r.values).enumerate() {
                let problem = match (*v, f.kind) {
                    (Value::Missing, _) if i == country => Some("country is required".to_string()),
                    (Value::Missing, _) => None,
                    (Value::Number(x), FieldKind::Numeric) if !x.is_finite() => Some("non-finite number".into()),
                    (Value::Number(_), FieldKind::Numeric) => None,
                    (Value::Level(l), k) if k.is_categorical() && (l as usize) < f.categories.len() => None,
                    (Value::Level(l), _) => Some(format!("level {l} out of range")),
                    (Value::Number(_), _) => Some("number given for categorical field".into()),
                };
                if let Some(message) = problem {
                    violations.push(Violation { record_id: r.record_id.clone(), field: f.name.clone(), message });
                    if violations.len() >= MAX_VIOLATIONS {
                        break;
                    }
                }
            }
        }
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(Dataset { codebook, records, provenance })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["record_id".to_string()];
        header.extend(self.codebook.fields.iter().map(|f| f.name.clone()));
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let mut row = Vec::with_capacity(header.len());
            row.push(r.record_id.clone());
            for (f, v) in self.codebook.fields.iter().zip(&r.values) {
                row.push(match *v {
                    Value::Missing => String::new(),
                    Value::Level(l) => f.categories[l as usize].clone(),
                    Value::Number(x) => format!("{x}"),
                });
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Content hash over codebook and canonical microdata.
    pub fn fingerprint(&self) -> String {
        let cb = serde_json::to_string(&self.codebook).expect("codebook serializes");
        sha256_hex(format!("{cb}\n{}", self.to_csv_string()).as_bytes())
    }

    pub fn summarize(&self) -> DatasetSummary {
        summarize(self)
    }
}

/// Loads a codebook and comma-separated microdata, validating both.
pub fn load_dataset(codebook_path: &Path, data_path: &Path) -> Result<Dataset> {
    let codebook = Codebook::load(codebook_path)?;
    let text = std::fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
    parse_csv(codebook, &text, Provenance::Ingested).map_err(|e| match e {
        Error::Malformed { message, .. } => Error::malformed(data_path, message),
        other => other,
    })
}

/// Parses microdata text against a codebook. Empty cells are missing values.
pub fn parse_csv(codebook: Codebook, text: &str, provenance: Provenance) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::malformed("<data>", e.to_string()))?.clone();
    let mut column_of_field = vec![None; codebook.fields.len()];
    let mut id_col = None;
    for (c, h) in headers.iter().enumerate() {
        if h == "record_id" {
            id_col = Some(c);
            continue;
        }
        let pos = codebook.position(h).ok_or_else(|| Error::malformed("<data>", format!("unknown field {h:?}")))?;
        if column_of_field[pos].replace(c).is_some() {
            return Err(Error::malformed("<data>", format!("column {h:?} repeated")));
        }
    }
    let id_col = id_col.ok_or_else(|| Error::malformed("<data>", "missing record_id column"))?;
    if let Some(i) = column_of_field.iter().position(Option::is_none) {
        return Err(Error::malformed("<data>", format!("missing column {:?}", codebook.fields[i].name)));
    }

    let mut records = Vec::new();
    let mut violations = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::malformed("<data>", format!("row {}: {e}", line + 2)))?;
        let record_id = row.get(id_col).unwrap_or_default().to_string();
        let mut values = Vec::with_capacity(codebook.fields.len());
        for (f, col) in codebook.fields.iter().zip(&column_of_field) {
            let cell = row.get(col.expect("checked above")).unwrap_or_default();
            let value = if cell.is_empty() {
                Value::Missing
            } else if f.kind == FieldKind::Numeric {
                match cell.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Value::Number(x),
                    _ => {
                        violations.push(Violation {
                            record_id: record_id.clone(),
                            field: f.name.clone(),
                            message: format!("not a number: {cell:?}"),
                        });
                        Value::Missing
                    }
                }
            } else {
                match f.category_index(cell) {
                    Some(l) => Value::Level(l as u32),
                    None => {
                        violations.push(Violation {
                            record_id: record_id.clone(),
                            field: f.name.clone(),
                            message: format!("category {cell:?} not in vocabulary"),
                        });
                        Value::Missing
                    }
                }
            };
            values.push(value);
        }
        if violations.len() >= MAX_VIOLATIONS {
            violations.truncate(MAX_VIOLATIONS);
            return Err(Error::Validation(violations));
        }
        records.push(SurveyRecord { record_id, values });
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Dataset::new(codebook, records, provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub per_country: Vec<(String, usize)>,
    pub missingness: Vec<(String, f64)>,
}

pub fn summarize(dataset: &Dataset) -> DatasetSummary {
    let cb = &dataset.codebook;
    let cpos = cb.country_position();
    let mut counts = vec![0usize; cb.countries().len()];
    let mut missing = vec![0usize; cb.fields.len()];
    for r in &dataset.records {
        if let Some(l) = r.values[cpos].level() {
            counts[l] += 1;
        }
        for (m, v) in missing.iter_mut().zip(&r.values) {
            *m += usize::from(v.is_missing());
        }
    }
    let n = dataset.records.len();
    DatasetSummary {
        total: n,
        per_country: cb.countries().iter().cloned().zip(counts).collect(),
        missingness: cb
            .fields
            .iter()
            .zip(missing)
            .map(|(f, m)| (f.name.clone(), if n == 0 { 0.0 } else { m as f64 / n as f64 }))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::default_codebook;

    fn header(cb: &Codebook) -> String {
        let mut h = vec!["record_id".to_string()];
        h.extend(cb.fields.iter().map(|f| f.name.clone()));
        h.join(",")
    }

    fn row(cb: &Codebook, id: &str, overrides: &[(&str, &str)]) -> String {
        let mut cells = vec![id.to_string()];
        for f in &cb.fields {
            let v = overrides.iter().find(|(n, _)| *n == f.name).map(|(_, v)| v.to_string());
            cells.push(v.unwrap_or_else(|| match f.kind {
                FieldKind::Numeric => "4".into(),
                _ => f.categories[0].clone(),
            }));
        }
        cells.join(",")
    }

    #[test]
    fn three_records_parse() {
        let cb = default_codebook();
        let text = format!(
            "{}\n{}\n{}\n{}\n",
            header(&cb),
            row(&cb, "a", &[]),
            row(&cb, "b", &[("country", "Tonga")]),
            row(&cb, "c", &[("household_size", "")])
        );
        let ds = parse_csv(cb, &text, Provenance::Ingested).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records[1].country(&ds.codebook), "Tonga");
        assert_eq!(ds.to_csv_string(), text);
    }

    #[test]
    fn out_of_vocabulary_names_record_and_field() {
        let cb = default_codebook();
        let text = format!("{}\n{}\n", header(&cb), row(&cb, "r7", &[("gender", "Martian")]));
        let err = parse_csv(cb, &text, Provenance::Ingested).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r7") && msg.contains("gender") && msg.contains("Martian"), "{msg}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let cb = default_codebook();
        let text = format!("{}\n{}\n{}\n", header(&cb), row(&cb, "a", &[]), row(&cb, "a", &[]));
        assert!(parse_csv(cb, &text, Provenance::Ingested).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn unknown_column_rejected() {
        let cb = default_codebook();
        let text = format!("{},favourite_colour\n", header(&cb));
        assert!(parse_csv(cb, &text, Provenance::Ingested).unwrap_err().to_string().contains("unknown field"));
    }

    #[test]
    fn violations_are_bounded() {
        let cb = default_codebook();
        let mut text = header(&cb) + "\n";
        for i in 0..50 {
            text += &row(&cb, &format!("r{i}"), &[("gender", "?")]);
            text += "\n";
        }
        match parse_csv(cb, &text, Provenance::Ingested).unwrap_err() {
            Error::Validation(v) => assert_eq!(v.len(), MAX_VIOLATIONS),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn summary_counts_and_missingness() {
        let cb = default_codebook();
        let empty = Dataset::new(cb.clone(), vec![], Provenance::Ingested).unwrap();
        let s = empty.summarize();
        assert_eq!(s.total, 0);
        assert!(s.per_country.iter().all(|(_, c)| *c == 0));
        assert!(s.missingness.iter().all(|(_, m)| *m == 0.0));

        let text = format!(
            "{}\n{}\n{}\n{}\n{}\n",
            header(&cb),
            row(&cb, "a", &[]),
            row(&cb, "b", &[("gender", "")]),
            row(&cb, "c", &[]),
            row(&cb, "d", &[("country", "PNG")])
        );
        let ds = parse_csv(cb, &text, Provenance::Ingested).unwrap();
        let s = ds.summarize();
        assert_eq!(s.per_country.iter().map(|(_, c)| c).sum::<usize>(), 4);
        let gender = s.missingness.iter().find(|(f, _)| f == "gender").unwrap().1;
        assert_eq!(gender, 0.25);
    }
}
