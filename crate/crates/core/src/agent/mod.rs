//! The discovery loop.
//!
//! Each iteration builds a [`Reflection`] from the loop state, asks a
//! [`Generator`] for candidate expressions, repairs the ones that fail to
//! compile, drops duplicates by canonical text, scores the rest against the
//! current accepted set and greedily accepts complementary candidates while
//! the budget lasts and each one strictly improves the CV metric.

mod discovery;
mod extract;
mod generator;
mod prompt;
mod reflection;
mod repair;
mod state;

pub use discovery::{run_discovery, run_iteration, DiscoveryConfig, DiscoveryReport, IterationContext, MultiTargetEntry};
pub use extract::{extract_candidates, extract_expression, first_fenced_block, RawCandidate};
pub use generator::{
    Generator, GeneratorSpec, HttpGenerator, MockGenerator, MockScript, Prompt, Request, ScriptItem,
};
pub use prompt::{generation_prompt, repair_prompt};
pub use reflection::{build_reflection, FeatureNote, LabelSummary, Reflection, ReflectionConfig, SampleSequence};
pub use repair::{repair, validate, RepairOutcome, PROBE_SEQUENCES};
pub use state::{type_counts, AcceptedFeature, IterationState, IterationSummary, Rejection, TypeCounts};
