//! Structured feedback that conditions each generation round.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::state::IterationState;
use crate::dataset::{Column, Dataset, FieldKind, TargetKind, MISSING_CATEGORY};
use crate::fdsl::Category;
use crate::scoring::{CandidateRecord, Verdict};
use crate::Result;

const VOCAB_PREVIEW: usize = 30;
const EXEMPLARS: usize = 3;
const ERROR_DIGEST: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReflectionConfig {
    /// Budget in estimated tokens (serialized bytes / 4).
    pub token_budget: usize,
    pub sample_sequences: usize,
    pub sample_events: usize,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig {
            token_budget: 8_000,
            sample_sequences: 3,
            sample_events: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub name: String,
    pub kind: FieldKind,
    pub amount: bool,
    pub vocabulary_size: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub target: String,
    pub kind: TargetKind,
    pub n_rows: usize,
    /// Class frequencies for classification targets.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub class_rates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNote {
    pub dsl: String,
    pub category: Category,
    pub reconstruction_ef: Option<f64>,
    pub utility: f64,
    pub p_value: f64,
    pub verdict: Verdict,
    pub importance_rank: Option<usize>,
}

impl From<&CandidateRecord> for FeatureNote {
    fn from(r: &CandidateRecord) -> Self {
        FeatureNote {
            dsl: r.dsl.clone(),
            category: r.category,
            reconstruction_ef: r.reconstruction_ef,
            utility: r.utility,
            p_value: r.p_value,
            verdict: r.verdict,
            importance_rank: r.importance_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSequence {
    pub id: String,
    pub n_events: usize,
    pub events: Vec<BTreeMap<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub iteration: usize,
    pub remaining_budget: usize,
    pub baseline_metric: f64,
    pub current_metric: f64,
    pub timestamp_field: String,
    pub fields: Vec<FieldSummary>,
    pub label: LabelSummary,
    pub accepted: Vec<FeatureNote>,
    pub aligned_exemplars: Vec<FeatureNote>,
    pub orthogonal_exemplars: Vec<FeatureNote>,
    pub last_iteration: Vec<FeatureNote>,
    pub errors: Vec<String>,
    pub samples: Vec<SampleSequence>,
    pub truncated: bool,
}

impl Reflection {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn estimated_tokens(&self) -> Result<usize> {
        Ok(self.to_json()?.len() / 4)
    }
}

fn label_summary(name: &str, values: &[f64], kind: TargetKind, n_classes: usize) -> LabelSummary {
    let n = values.len();
    let mut s = LabelSummary {
        target: name.to_string(),
        kind,
        n_rows: n,
        class_rates: Vec::new(),
        mean: None,
        std: None,
    };
    if kind.is_classification() {
        let mut counts = vec![0usize; n_classes];
        for &v in values {
            counts[v as usize] += 1;
        }
        s.class_rates = counts.iter().map(|&c| c as f64 / n as f64).collect();
    } else {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        s.mean = Some(mean);
        s.std = Some(var.sqrt());
    }
    s
}

fn samples(dataset: &Dataset, n_seq: usize, n_events: usize) -> Vec<SampleSequence> {
    let schema = dataset.schema();
    dataset
        .sequences()
        .iter()
        .take(n_seq)
        .map(|seq| {
            let events = (0..seq.len().min(n_events))
                .map(|e| {
                    let mut ev = BTreeMap::new();
                    ev.insert(schema.timestamp_field.clone(), Value::from(seq.timestamps[e]));
                    for (f, col) in schema.fields.iter().zip(&seq.columns) {
                        let v = match col {
                            Column::Numeric(v) if v[e].is_finite() => Value::from(v[e]),
                            Column::Categorical(v) if v[e] != MISSING_CATEGORY => schema
                                .vocabulary(&f.name)
                                .get(v[e] as usize)
                                .map_or(Value::Null, |s| Value::from(s.as_str())),
                            _ => Value::Null,
                        };
                        ev.insert(f.name.clone(), v);
                    }
                    ev
                })
                .collect();
            SampleSequence {
                id: seq.sequence_id.clone(),
                n_events: seq.len(),
                events,
            }
        })
        .collect()
}

fn top<F: Fn(&CandidateRecord) -> f64>(records: &[&CandidateRecord], key: F) -> Vec<FeatureNote> {
    let mut v: Vec<&&CandidateRecord> = records.iter().collect();
    // Stable sort keeps ledger order among ties.
    v.sort_by(|a, b| key(b).total_cmp(&key(a)));
    v.into_iter().take(EXEMPLARS).map(|r| FeatureNote::from(*r)).collect()
}

/// Builds the reflection for the next iteration. Deterministic; when over
/// the token budget, sample sequences are shortened and then dropped, and
/// `truncated` is set.
pub fn build_reflection(
    state: &IterationState,
    dataset: &Dataset,
    target: &str,
    budget_remaining: usize,
    config: &ReflectionConfig,
) -> Result<Reflection> {
    let schema = dataset.schema();
    let t = dataset.target(target)?;
    let fields = schema
        .fields
        .iter()
        .map(|f| {
            let vocab = schema.vocabulary(&f.name);
            FieldSummary {
                name: f.name.clone(),
                kind: f.kind,
                amount: f.is_amount(),
                vocabulary_size: vocab.len(),
                vocabulary: vocab.iter().take(VOCAB_PREVIEW).cloned().collect(),
            }
        })
        .collect();
    let accepted = state
        .accepted
        .iter()
        .filter_map(|a| state.ledger.iter().find(|r| r.dsl == a.dsl))
        .map(FeatureNote::from)
        .collect();
    let aligned: Vec<&CandidateRecord> = state.ledger.iter().filter(|r| r.verdict == Verdict::Aligned).collect();
    let complementary: Vec<&CandidateRecord> =
        state.ledger.iter().filter(|r| r.verdict == Verdict::Complementary).collect();
    let last = state.iteration.checked_sub(1);
    let last_iteration = state
        .ledger
        .iter()
        .filter(|r| Some(r.iteration) == last)
        .map(FeatureNote::from)
        .collect();
    let errors = state
        .rejections
        .iter()
        .filter(|r| Some(r.iteration) == last)
        .take(ERROR_DIGEST)
        .map(|r| format!("{}: {}", r.text, r.diagnostics.join("; ")))
        .collect();
    let mut r = Reflection {
        iteration: state.iteration,
        remaining_budget: budget_remaining,
        baseline_metric: state.baseline.metric,
        current_metric: state.current.metric,
        timestamp_field: schema.timestamp_field.clone(),
        fields,
        label: label_summary(target, &t.values, t.kind, t.n_classes()),
        accepted,
        aligned_exemplars: top(&aligned, |r| r.reconstruction_ef.unwrap_or(f64::NEG_INFINITY)),
        orthogonal_exemplars: top(&complementary, |r| r.utility),
        last_iteration,
        errors,
        samples: samples(dataset, config.sample_sequences, config.sample_events),
        truncated: false,
    };
    while r.estimated_tokens()? > config.token_budget {
        let longest = r.samples.iter_mut().max_by_key(|s| s.events.len());
        match longest {
            Some(s) if s.events.len() > 1 => {
                let keep = s.events.len() / 2;
                s.events.truncate(keep);
            }
            Some(_) => {
                r.samples.pop();
            }
            None => {
                if r.last_iteration.pop().is_none() && r.errors.pop().is_none() {
                    break;
                }
            }
        }
        r.truncated = true;
    }
    Ok(r)
}
