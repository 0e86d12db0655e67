//! Validation of candidate text and the bounded self-correction loop.

use super::extract::extract_expression;
use super::generator::Generator;
use super::prompt::repair_prompt;
use crate::dataset::Dataset;
use crate::fdsl::{compile_text, evaluate_feature, CompiledFeature};

/// Sequences a candidate must evaluate on before it is accepted for scoring.
pub const PROBE_SEQUENCES: usize = 10;

/// Parses, type-checks and evaluates `text` on the first few sequences.
pub fn validate(text: &str, dataset: &Dataset) -> Result<CompiledFeature, String> {
    let cf = compile_text(text, dataset.schema()).map_err(|d| d.to_string())?;
    for seq in dataset.sequences().iter().take(PROBE_SEQUENCES) {
        // Degenerate inputs map to missing; only a panic would be a failure.
        let _ = evaluate_feature(&cf, seq);
    }
    Ok(cf)
}

#[derive(Debug, Clone)]
pub enum RepairOutcome {
    /// Valid feature, the text that produced it and the repair rounds used.
    Valid {
        feature: CompiledFeature,
        text: String,
        rounds: usize,
        diagnostics: Vec<String>,
    },
    /// Every diagnostic seen, in order.
    Rejected { diagnostics: Vec<String> },
}

/// Validates `text`, asking the generator for a fix after each failure, up
/// to `max_rounds` times. A generator error ends the loop with a transport
/// note instead of propagating.
pub fn repair(
    generator: &mut dyn Generator,
    text: &str,
    dataset: &Dataset,
    max_rounds: usize,
) -> RepairOutcome {
    let mut current = text.to_string();
    let mut diagnostics = Vec::new();
    for round in 0..=max_rounds {
        let diag = match validate(&current, dataset) {
            Ok(feature) => {
                return RepairOutcome::Valid {
                    feature,
                    text: current,
                    rounds: round,
                    diagnostics,
                }
            }
            Err(d) => d,
        };
        diagnostics.push(format!("`{current}`: {diag}"));
        if round == max_rounds {
            break;
        }
        match generator.complete(&repair_prompt(&current, &diag)) {
            Ok(resp) => current = extract_expression(&resp),
            Err(e) => {
                diagnostics.push(format!("transport failure during repair: {e}"));
                break;
            }
        }
    }
    RepairOutcome::Rejected { diagnostics }
}
