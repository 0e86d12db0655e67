//! Event sequences, labels and embeddings as immutable, row-aligned collections.
//!
//! Sequences are kept in lexicographic id order so every downstream row index
//! is reproducible. Missing numeric values are `NaN`; missing categorical
//! values are [`MISSING_CATEGORY`].

mod embeddings;
mod folds;
mod ingest;
mod labels;
mod schema;
mod store;

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use embeddings::{export_embeddings, import_embeddings, read_embeddings_csv, ImportReport};
pub use folds::{split_folds, FoldPlan};
pub use ingest::{ingest_events, read_events, write_events_jsonl};
pub use labels::{import_labels, write_labels_csv};
pub use schema::{
    EventSchema, FieldKind, FieldRole, FieldSpec, MISSING_CATEGORY, SECONDS_PER_DAY,
};
pub use store::{load_store, save_store};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub enum Column {
    Categorical(Vec<u32>),
    Numeric(Vec<f64>),
}

/// Bitwise equality so that missing (`NaN`) cells compare equal.
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Column::Categorical(a), Column::Categorical(b)) => a == b,
            (Column::Numeric(a), Column::Numeric(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One entity's time-ordered events. `columns` follows `EventSchema::fields`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub sequence_id: String,
    pub timestamps: Vec<f64>,
    pub columns: Vec<Column>,
}

impl EventSequence {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn numeric(&self, field: usize) -> Option<&[f64]> {
        match self.columns.get(field) {
            Some(Column::Numeric(v)) => Some(v),
            _ => None,
        }
    }

    pub fn categorical(&self, field: usize) -> Option<&[u32]> {
        match self.columns.get(field) {
            Some(Column::Categorical(v)) => Some(v),
            _ => None,
        }
    }

    pub fn validate(&self, schema: &EventSchema) -> Result<()> {
        let n = self.timestamps.len();
        if self.columns.len() != schema.fields.len() {
            return Err(Error::Data(format!(
                "sequence {}: {} columns for {} schema fields",
                self.sequence_id,
                self.columns.len(),
                schema.fields.len()
            )));
        }
        if self.timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data(format!(
                "sequence {}: non-finite timestamp",
                self.sequence_id
            )));
        }
        if self.timestamps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Data(format!(
                "sequence {}: timestamps not sorted",
                self.sequence_id
            )));
        }
        for (col, spec) in self.columns.iter().zip(&schema.fields) {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "sequence {}: column `{}` has {} values for {} events",
                    self.sequence_id,
                    spec.name,
                    col.len(),
                    n
                )));
            }
            match (col, spec.kind) {
                (Column::Categorical(ids), FieldKind::Categorical) => {
                    let size = schema.vocabulary(&spec.name).len() as u32;
                    if ids.iter().any(|&c| c != MISSING_CATEGORY && c >= size) {
                        return Err(Error::Data(format!(
                            "sequence {}: category id out of range in `{}`",
                            self.sequence_id, spec.name
                        )));
                    }
                }
                (Column::Numeric(_), FieldKind::Numeric) => {}
                _ => {
                    return Err(Error::Data(format!(
                        "sequence {}: column `{}` has the wrong kind",
                        self.sequence_id, spec.name
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Binary,
    Multiclass,
    Regression,
}

impl TargetKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TargetKind::Regression)
    }
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TargetKind::Binary => "binary",
            TargetKind::Multiclass => "multiclass",
            TargetKind::Regression => "regression",
        })
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(TargetKind::Binary),
            "multiclass" => Ok(TargetKind::Multiclass),
            "regression" => Ok(TargetKind::Regression),
            other => Err(Error::Config(format!("unknown target kind `{other}`"))),
        }
    }
}

/// Labels of one target. Classification labels are class indices `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub kind: TargetKind,
    pub values: Vec<f64>,
}

impl Target {
    pub fn new(kind: TargetKind, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite label".into()));
        }
        match kind {
            TargetKind::Binary if values.iter().any(|&v| v != 0.0 && v != 1.0) => {
                return Err(Error::Data("binary labels must be 0 or 1".into()))
            }
            TargetKind::Multiclass if values.iter().any(|&v| v < 0.0 || v.fract() != 0.0) => {
                return Err(Error::Data(
                    "multiclass labels must be non-negative integers".into(),
                ))
            }
            _ => {}
        }
        Ok(Target { kind, values })
    }

    pub fn n_classes(&self) -> usize {
        match self.kind {
            TargetKind::Binary => 2,
            TargetKind::Multiclass => {
                self.values.iter().fold(0.0f64, |m, &v| m.max(v)) as usize + 1
            }
            TargetKind::Regression => 0,
        }
    }
}

/// Frozen embeddings, one row per sequence in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::Data("embedding dimension must be >= 1".into()));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("embedding contains a non-finite entry".into()));
        }
        Ok(EmbeddingMatrix { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    /// Column-major copy, the layout probes consume.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| self.rows.column(j).to_vec())
            .collect()
    }
}

/// Immutable aligned collection of sequences, labels and embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: EventSchema,
    sequences: Vec<EventSequence>,
    labels: BTreeMap<String, Target>,
    embeddings: Option<EmbeddingMatrix>,
}

impl Dataset {
    /// Builds a dataset, sorting sequences by id and checking every invariant.
    pub fn new(schema: EventSchema, mut sequences: Vec<EventSequence>) -> Result<Self> {
        schema.validate()?;
        sequences.sort_by(|a, b| a.sequence_id.cmp(&b.sequence_id));
        let mut ids = HashSet::new();
        for s in &sequences {
            if !ids.insert(s.sequence_id.as_str()) {
                return Err(Error::Data(format!("duplicate sequence id `{}`", s.sequence_id)));
            }
            s.validate(&schema)?;
        }
        Ok(Dataset {
            schema,
            sequences,
            labels: BTreeMap::new(),
            embeddings: None,
        })
    }

    pub fn with_target(mut self, name: &str, target: Target) -> Result<Self> {
        if target.values.len() != self.sequences.len() {
            return Err(Error::Data(format!(
                "target `{name}` has {} rows for {} sequences",
                target.values.len(),
                self.sequences.len()
            )));
        }
        self.labels.insert(name.to_string(), target);
        Ok(self)
    }

    pub fn with_embeddings(mut self, embeddings: EmbeddingMatrix) -> Result<Self> {
        if embeddings.n_rows() != self.sequences.len() {
            return Err(Error::Data(format!(
                "embeddings have {} rows for {} sequences",
                embeddings.n_rows(),
                self.sequences.len()
            )));
        }
        self.embeddings = Some(embeddings);
        Ok(self)
    }

    pub fn schema(&self) -> &EventSchema {
        &self.schema
    }

    pub fn sequences(&self) -> &[EventSequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.sequences.iter().map(|s| s.sequence_id.as_str())
    }

    pub fn labels(&self) -> &BTreeMap<String, Target> {
        &self.labels
    }

    pub fn target(&self, name: &str) -> Result<&Target> {
        self.labels
            .get(name)
            .ok_or_else(|| Error::Config(format!("no labels for target `{name}`")))
    }

    pub fn embeddings(&self) -> Option<&EmbeddingMatrix> {
        self.embeddings.as_ref()
    }

    pub fn require_embeddings(&self) -> Result<&EmbeddingMatrix> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no embeddings".into()))
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn schema() -> EventSchema {
        let mut s = EventSchema::new(
            "ts",
            vec![FieldSpec::categorical("mcc"), FieldSpec::numeric("amount")],
        )
        .unwrap();
        s.vocabularies.insert(
            "mcc".into(),
            vec!["5411".into(), "5812".into(), "6011".into()],
        );
        s
    }

    pub fn sequence(id: &str, ts: &[f64], mcc: &[u32], amount: &[f64]) -> EventSequence {
        EventSequence {
            sequence_id: id.into(),
            timestamps: ts.to_vec(),
            columns: vec![
                Column::Categorical(mcc.to_vec()),
                Column::Numeric(amount.to_vec()),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn sequences_sorted_by_id() {
        let ds = Dataset::new(
            schema(),
            vec![
                sequence("b", &[0.0], &[0], &[1.0]),
                sequence("a", &[0.0], &[1], &[2.0]),
            ],
        )
        .unwrap();
        assert_eq!(ds.ids().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn unsorted_timestamps_rejected() {
        let r = Dataset::new(schema(), vec![sequence("a", &[5.0, 1.0], &[0, 0], &[1.0, 1.0])]);
        assert!(r.is_err());
    }

    #[test]
    fn category_out_of_range_rejected() {
        let r = Dataset::new(schema(), vec![sequence("a", &[0.0], &[7], &[1.0])]);
        assert!(r.is_err());
        let ok = Dataset::new(schema(), vec![sequence("a", &[0.0], &[MISSING_CATEGORY], &[f64::NAN])]);
        assert!(ok.is_ok());
    }

    #[test]
    fn label_row_count_checked() {
        let ds = Dataset::new(schema(), vec![sequence("a", &[0.0], &[0], &[1.0])]).unwrap();
        let t = Target::new(TargetKind::Binary, vec![0.0, 1.0]).unwrap();
        assert!(ds.with_target("y", t).is_err());
    }

    #[test]
    fn embeddings_must_be_finite() {
        let m = Array2::from_shape_vec((1, 2), vec![0.0, f64::INFINITY]).unwrap();
        assert!(EmbeddingMatrix::new(m).is_err());
    }
}
