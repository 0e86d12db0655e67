//! The feature expression language.
//!
//! A feature is one aggregator call, or arithmetic and unary functions over
//! several of them, and always evaluates to one number per sequence:
//!
//! ```text
//! mean(amount where mcc == "5411") / mean(amount)
//! count(window=last_days(30))
//! ewma(amount, halflife_days=7)
//! ```
//!
//! Text is parsed to a [`FeatureExpr`], whose canonical printed form is the
//! feature's identity. [`compile`] binds an AST to a schema, and
//! [`evaluate_batch`] turns a list of compiled features into a
//! [`FeatureMatrix`]. The full grammar lives in [`parser`]'s docs.

mod ast;
mod compile;
mod diag;
mod eval;
mod lexer;
pub mod parser;
mod print;
pub mod random;
mod tag;

use std::path::Path;

pub use ast::*;
pub use compile::{compile, compile_specs, compile_text, CompiledFeature, FeatureSpec};
pub use diag::{DiagCode, Diagnostic};
pub use eval::{evaluate_batch, evaluate_feature, FeatureMatrix};
pub use parser::parse;
pub use print::canonical_print;
pub use tag::{tag_category, Category};

use crate::{Error, Result};

/// Reads a JSON array of `{name, dsl, category?}` entries.
pub fn read_feature_list(path: &Path) -> Result<Vec<FeatureSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_feature_list(specs: &[FeatureSpec], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(specs)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
