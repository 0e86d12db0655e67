use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Category id used for a missing categorical value.
pub const MISSING_CATEGORY: u32 = u32::MAX;

/// Seconds per day; DSL time quantities are expressed in days.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Categorical,
    Numeric,
}

/// Semantic role of a numeric field. Amount-like fields drive the `Amount`
/// feature tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FieldRole {
    #[default]
    Amount,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<FieldRole>,
}

impl FieldSpec {
    pub fn categorical(name: &str) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Categorical,
            role: None,
        }
    }

    pub fn numeric(name: &str) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Numeric,
            role: None,
        }
    }

    pub fn is_amount(&self) -> bool {
        self.kind == FieldKind::Numeric && self.role.unwrap_or_default() == FieldRole::Amount
    }
}

fn default_id_field() -> String {
    "id".to_string()
}

/// Layout of the raw event records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchema {
    #[serde(default = "default_id_field")]
    pub id_field: String,
    pub timestamp_field: String,
    pub fields: Vec<FieldSpec>,
    #[serde(default)]
    pub vocabularies: BTreeMap<String, Vec<String>>,
}

impl EventSchema {
    pub fn new(timestamp_field: &str, fields: Vec<FieldSpec>) -> Result<Self> {
        let mut schema = EventSchema {
            id_field: default_id_field(),
            timestamp_field: timestamp_field.to_string(),
            fields,
            vocabularies: BTreeMap::new(),
        };
        for f in &schema.fields {
            if f.kind == FieldKind::Categorical {
                schema.vocabularies.entry(f.name.clone()).or_default();
            }
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in [&self.id_field, &self.timestamp_field] {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("schema field `{name}` declared twice")));
            }
        }
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Config(format!("schema field `{}` declared twice", f.name)));
            }
            if f.kind == FieldKind::Categorical && f.role.is_some() {
                return Err(Error::Config(format!(
                    "role is only meaningful for numeric fields (`{}`)",
                    f.name
                )));
            }
        }
        for (name, vocab) in &self.vocabularies {
            match self.field(name) {
                Some((_, f)) if f.kind == FieldKind::Categorical => {}
                _ => {
                    return Err(Error::Config(format!(
                        "vocabulary for `{name}` which is not a categorical field"
                    )))
                }
            }
            let mut uniq = HashSet::new();
            if let Some(dup) = vocab.iter().find(|v| !uniq.insert(v.as_str())) {
                return Err(Error::Config(format!("vocabulary `{name}` repeats `{dup}`")));
            }
            if vocab.len() >= MISSING_CATEGORY as usize {
                return Err(Error::Config(format!("vocabulary `{name}` too large")));
            }
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<(usize, &FieldSpec)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }

    pub fn vocabulary(&self, name: &str) -> &[String] {
        self.vocabularies.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn category_id(&self, field: &str, value: &str) -> Option<u32> {
        self.vocabulary(field)
            .iter()
            .position(|v| v == value)
            .map(|i| i as u32)
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_field_rejected() {
        let err = EventSchema::new(
            "ts",
            vec![FieldSpec::numeric("amount"), FieldSpec::numeric("amount")],
        );
        assert!(err.is_err());
    }

    #[test]
    fn duplicate_vocabulary_rejected() {
        let mut s = EventSchema::new("ts", vec![FieldSpec::categorical("mcc")]).unwrap();
        s.vocabularies
            .insert("mcc".into(), vec!["a".into(), "a".into()]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn numeric_defaults_to_amount_role() {
        assert!(FieldSpec::numeric("amount").is_amount());
        let mut other = FieldSpec::numeric("balance");
        other.role = Some(FieldRole::Other);
        assert!(!other.is_amount());
    }
}
