//! Loop state carried between iterations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fdsl::{Category, FeatureSpec};
use crate::probe::CvResult;
use crate::scoring::CandidateRecord;

/// Per-category counts with every category present.
pub type TypeCounts = BTreeMap<Category, usize>;

pub fn type_counts<'a>(cats: impl IntoIterator<Item = &'a Category>) -> TypeCounts {
    let mut m: TypeCounts = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for c in cats {
        *m.entry(*c).or_default() += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedFeature {
    pub name: String,
    pub dsl: String,
    pub category: Category,
    pub iteration: usize,
    pub reconstruction_ef: Option<f64>,
    pub alignment_fe: f64,
    pub utility: f64,
    pub p_value: f64,
    /// Accepted-set CV metric right after this feature joined.
    pub metric_after: f64,
    pub importance_rank: Option<usize>,
}

impl AcceptedFeature {
    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            name: self.name.clone(),
            dsl: self.dsl.clone(),
            category: Some(self.category),
        }
    }
}

/// A candidate that never produced a valid feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub iteration: usize,
    pub text: String,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    /// Accepted-set CV metric at the end of the iteration.
    pub metric: f64,
    pub mean_loss: f64,
    pub n_proposed: usize,
    pub n_repaired: usize,
    pub n_rejected: usize,
    pub n_duplicates: usize,
    pub n_scored: usize,
    pub n_accepted: usize,
    pub accepted_total: usize,
    pub candidate_types: TypeCounts,
    pub accepted_types: TypeCounts,
    pub verdicts: BTreeMap<String, usize>,
}

pub struct IterationState {
    /// Index of the next iteration to run.
    pub iteration: usize,
    pub accepted: Vec<AcceptedFeature>,
    pub accepted_columns: Vec<Vec<f64>>,
    pub ledger: Vec<CandidateRecord>,
    /// Candidate columns in ledger order.
    pub ledger_columns: Vec<Vec<f64>>,
    pub ledger_names: Vec<String>,
    pub rejections: Vec<Rejection>,
    /// CV result of `[z, accepted]`.
    pub current: CvResult,
    pub baseline: CvResult,
    pub history: Vec<IterationSummary>,
}

impl IterationState {
    pub fn new(baseline: CvResult) -> Self {
        IterationState {
            iteration: 0,
            accepted: Vec::new(),
            accepted_columns: Vec::new(),
            ledger: Vec::new(),
            ledger_columns: Vec::new(),
            ledger_names: Vec::new(),
            rejections: Vec::new(),
            current: baseline.clone(),
            baseline,
            history: Vec::new(),
        }
    }

    pub fn accepted_slices(&self) -> Vec<&[f64]> {
        self.accepted_columns.iter().map(Vec::as_slice).collect()
    }

    pub fn knows(&self, canonical: &str) -> bool {
        self.ledger.iter().any(|r| r.dsl == canonical)
    }
}
