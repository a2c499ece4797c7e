//! Survey codebook: the field catalogue every dataset is validated against.
//!
//! Scored fields (Binary or Ordinal with `points > 0`) make up the 52-point
//! literacy index. A scored field's categories are ordered from lacking to
//! having; the score of category `i` is `points * i / (len - 1)`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound of the composite index, in points.
pub const INDEX_MAX_POINTS: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Demographic,
    SocioEconomic,
    Digital,
    Financial,
    DigitalFinancial,
}

impl Domain {
    /// Domains whose items form the competency index and may be intervened on.
    pub fn is_competency(self) -> bool {
        matches!(self, Domain::Digital | Domain::Financial | Domain::DigitalFinancial)
    }

    pub fn label(self) -> &'static str {
        match self {
            Domain::Demographic => "Demographic",
            Domain::SocioEconomic => "Socio-Economic",
            Domain::Digital => "Digital",
            Domain::Financial => "Financial",
            Domain::DigitalFinancial => "Digital Financial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Binary,
    Ordinal,
    Categorical,
    Numeric,
}

impl FieldKind {
    pub fn is_categorical(self) -> bool {
        !matches!(self, FieldKind::Numeric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookField {
    pub name: String,
    pub domain: Domain,
    pub kind: FieldKind,
    #[serde(default)]
    pub points: u32,
    #[serde(default)]
    pub modifiable: bool,
    #[serde(default)]
    pub categories: Vec<String>,
}

impl CodebookField {
    pub fn is_scored(&self) -> bool {
        self.points > 0
    }

    /// Points earned by the category at `level`.
    pub fn level_points(&self, level: usize) -> f64 {
        if self.points == 0 || self.categories.len() < 2 {
            return 0.0;
        }
        f64::from(self.points) * level as f64 / (self.categories.len() - 1) as f64
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codebook {
    pub name: String,
    pub country_field: String,
    pub fields: Vec<CodebookField>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.country_field == other.country_field && self.fields == other.fields
    }
}

impl Codebook {
    /// Builds and validates a codebook.
    pub fn new(name: impl Into<String>, country_field: impl Into<String>, fields: Vec<CodebookField>) -> Result<Self> {
        let mut cb = Codebook { name: name.into(), country_field: country_field.into(), fields, index: HashMap::new() };
        cb.validate()?;
        Ok(cb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cb: Codebook = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.to_string()))?;
        Codebook::new(cb.name, cb.country_field, cb.fields)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&mut self) -> Result<()> {
        self.index.clear();
        for (i, f) in self.fields.iter().enumerate() {
            if f.name.is_empty() || f.name == "record_id" {
                return Err(Error::Codebook(format!("invalid field name {:?}", f.name)));
            }
            if self.index.insert(f.name.clone(), i).is_some() {
                return Err(Error::Codebook(format!("duplicate field name {:?}", f.name)));
            }
            match f.kind {
                FieldKind::Binary if f.categories.len() != 2 => {
                    return Err(Error::Codebook(format!("binary field {:?} needs exactly 2 categories", f.name)));
                }
                FieldKind::Ordinal | FieldKind::Categorical if f.categories.is_empty() => {
                    return Err(Error::Codebook(format!("field {:?} has no categories", f.name)));
                }
                FieldKind::Numeric if !f.categories.is_empty() => {
                    return Err(Error::Codebook(format!("numeric field {:?} cannot list categories", f.name)));
                }
                _ => {}
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = f.categories.iter().find(|c| !seen.insert(c.as_str())) {
                return Err(Error::Codebook(format!("field {:?} repeats category {:?}", f.name, dup)));
            }
            if f.points > 0 {
                if !matches!(f.kind, FieldKind::Binary | FieldKind::Ordinal) {
                    return Err(Error::Codebook(format!("scored field {:?} must be Binary or Ordinal", f.name)));
                }
                if !f.domain.is_competency() {
                    return Err(Error::Codebook(format!("field {:?} is scored outside a competency domain", f.name)));
                }
                if f.categories.len() < 2 {
                    return Err(Error::Codebook(format!("scored field {:?} needs at least 2 levels", f.name)));
                }
            }
            if f.modifiable && !f.domain.is_competency() {
                return Err(Error::Codebook(format!(
                    "field {:?} in domain {:?} cannot be modifiable",
                    f.name, f.domain
                )));
            }
        }
        let total: u32 = self.fields.iter().filter(|f| f.domain.is_competency()).map(|f| f.points).sum();
        if total != INDEX_MAX_POINTS {
            return Err(Error::Codebook(format!("points must sum to {INDEX_MAX_POINTS} (got {total})")));
        }
        let country = self
            .field(&self.country_field)
            .ok_or_else(|| Error::Codebook(format!("country field {:?} not declared", self.country_field)))?;
        if country.kind != FieldKind::Categorical {
            return Err(Error::Codebook("country field must be Categorical".into()));
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<&CodebookField> {
        self.position(name).map(|i| &self.fields[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        if self.index.is_empty() && !self.fields.is_empty() {
            return self.fields.iter().position(|f| f.name == name);
        }
        self.index.get(name).copied()
    }

    pub fn country_position(&self) -> usize {
        self.position(&self.country_field).expect("validated codebook has a country field")
    }

    pub fn countries(&self) -> &[String] {
        &self.fields[self.country_position()].categories
    }

    /// Maximum attainable points within a domain.
    pub fn domain_max(&self, domain: Domain) -> u32 {
        self.fields.iter().filter(|f| f.domain == domain).map(|f| f.points).sum()
    }

    pub fn scored_fields(&self) -> impl Iterator<Item = (usize, &CodebookField)> {
        self.fields.iter().enumerate().filter(|(_, f)| f.is_scored())
    }
}

fn binary(name: &str, domain: Domain) -> CodebookField {
    CodebookField {
        name: name.into(),
        domain,
        kind: FieldKind::Binary,
        points: 1,
        modifiable: true,
        categories: vec!["no".into(), "yes".into()],
    }
}

fn ordinal(name: &str, domain: Domain, points: u32, levels: &[&str]) -> CodebookField {
    CodebookField {
        name: name.into(),
        domain,
        kind: FieldKind::Ordinal,
        points,
        modifiable: domain.is_competency(),
        categories: levels.iter().map(|s| s.to_string()).collect(),
    }
}

fn categorical(name: &str, domain: Domain, levels: &[&str]) -> CodebookField {
    CodebookField {
        name: name.into(),
        domain,
        kind: FieldKind::Categorical,
        points: 0,
        modifiable: false,
        categories: levels.iter().map(|s| s.to_string()).collect(),
    }
}

pub const COUNTRIES: [&str; 7] = ["Fiji", "PNG", "Samoa", "Solomon Islands", "Timor-Leste", "Tonga", "Vanuatu"];

pub const DIGITAL_ITEMS: [&str; 15] = [
    "device_ownership",
    "mobile_phone",
    "internet_access",
    "content_creation",
    "computational_skills",
    "email_use",
    "online_search",
    "social_media",
    "video_calls",
    "file_management",
    "software_install",
    "cloud_storage",
    "online_learning",
    "wifi_configuration",
    "device_security_settings",
];

pub const FINANCIAL_ITEMS: [&str; 14] = [
    "expense_recording",
    "budget_management",
    "financial_optimism",
    "bank_account",
    "emergency_fund",
    "debt_management",
    "interest_understanding",
    "inflation_understanding",
    "goal_planning",
    "insurance_awareness",
    "price_comparison",
    "loan_repayment",
    "household_budget_role",
    "retirement_planning",
];

pub const DIGITAL_FINANCIAL_ITEMS: [&str; 18] = [
    "digital_spending_tracking",
    "digital_autonomy",
    "cybersecurity_resilience",
    "mobile_money",
    "online_transfer",
    "pin_memory",
    "scam_awareness",
    "dfs_confidence",
    "website_security_check",
    "digital_wallet",
    "card_payment",
    "bill_payment_online",
    "fraud_reporting",
    "digital_savings",
    "remittance_app",
    "qr_payment",
    "online_purchase",
    "transaction_alerts",
];

/// Bundled default codebook.
///
/// Allocation of the 52 index points: Digital 18, Financial 16,
/// Digital Financial 18. The allocation is a documented stand-in; supply a
/// codebook file to override it.
pub fn default_codebook() -> Codebook {
    use Domain::*;
    let mut fields = vec![
        categorical("country", Demographic, &COUNTRIES),
        categorical("gender", Demographic, &["Female", "Male"]),
        ordinal("age_group", Demographic, 0, &["15-24", "25-34", "35-44", "45-54", "55-64", "65-74", "75+"]),
        categorical(
            "language",
            Demographic,
            &["Bislama", "English", "Fijian", "Hindi", "Pijin", "Samoan", "Tetum", "Tok Pisin", "Tongan"],
        ),
        categorical("area", Demographic, &["Rural", "Urban"]),
        ordinal(
            "education",
            SocioEconomic,
            0,
            &["No formal education", "Primary", "Lower secondary", "Upper secondary", "Tertiary", "Postgraduate"],
        ),
        categorical(
            "occupation",
            SocioEconomic,
            &["Caregiver", "Employed", "Other", "Overseas worker", "Self-employed", "Student"],
        ),
        ordinal("income", SocioEconomic, 0, &["No income", "Low", "Moderate", "High"]),
        CodebookField {
            name: "household_size".into(),
            domain: SocioEconomic,
            kind: FieldKind::Numeric,
            points: 0,
            modifiable: false,
            categories: vec![],
        },
        CodebookField {
            name: "numeracy_comfort".into(),
            domain: SocioEconomic,
            kind: FieldKind::Binary,
            points: 0,
            modifiable: false,
            categories: vec!["no".into(), "yes".into()],
        },
    ];
    fields.extend(DIGITAL_ITEMS.iter().map(|n| binary(n, Digital)));
    fields.push(ordinal("app_usage_frequency", Digital, 3, &["never", "monthly", "weekly", "daily"]));
    fields.extend(FINANCIAL_ITEMS.iter().map(|n| binary(n, Financial)));
    fields.push(ordinal("savings_habit", Financial, 2, &["never", "sometimes", "regularly"]));
    fields.extend(DIGITAL_FINANCIAL_ITEMS.iter().map(|n| binary(n, DigitalFinancial)));
    Codebook::new("pacific-dfl-default", "country", fields).expect("default codebook is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_allocation() {
        let cb = default_codebook();
        assert_eq!(cb.domain_max(Domain::Digital), 18);
        assert_eq!(cb.domain_max(Domain::Financial), 16);
        assert_eq!(cb.domain_max(Domain::DigitalFinancial), 18);
        assert_eq!(cb.countries().len(), 7);
        assert_eq!(cb.field("app_usage_frequency").unwrap().level_points(2), 2.0);
    }

    #[test]
    fn points_must_sum_to_52() {
        let mut fields = default_codebook().fields;
        let i = fields.iter().position(|f| f.name == "app_usage_frequency").unwrap();
        fields[i].points = 1;
        fields[i].categories.truncate(2);
        let err = Codebook::new("x", "country", fields).unwrap_err();
        assert!(err.to_string().contains("points must sum to 52"), "{err}");
    }

    #[test]
    fn demographic_cannot_be_modifiable() {
        let mut fields = default_codebook().fields;
        fields[1].modifiable = true;
        assert!(Codebook::new("x", "country", fields).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut fields = default_codebook().fields;
        let dup = fields[1].clone();
        fields.push(dup);
        assert!(Codebook::new("x", "country", fields).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn json_round_trip() {
        let cb = default_codebook();
        let text = serde_json::to_string(&cb).unwrap();
        let back: Codebook = serde_json::from_str(&text).unwrap();
        let back = Codebook::new(back.name, back.country_field, back.fields).unwrap();
        assert_eq!(cb, back);
        assert_eq!(back.position("gender"), Some(1));
    }
}
