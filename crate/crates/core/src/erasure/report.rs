//! Before/after reconstruction report for an erased embedding.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingMatrix, FoldPlan, Target};
use crate::fdsl::Category;
use crate::probe::{metric_name, GbtConfig};
use crate::scoring::{base_cv, group_report};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub category: Category,
    pub erased: bool,
    pub n_features: usize,
    pub r2_before: f64,
    pub r2_after: f64,
    /// `r2_after - r2_before` in percentage points.
    pub delta_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub name: String,
    pub category: Category,
    pub r2_before: Option<f64>,
    pub r2_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamDelta {
    pub metric: String,
    pub before: f64,
    pub after: f64,
    pub delta_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasureReport {
    pub erased_group: Category,
    pub groups: Vec<GroupDelta>,
    pub features: Vec<FeatureDelta>,
    pub downstream: Option<DownstreamDelta>,
}

impl ErasureReport {
    pub fn group(&self, c: Category) -> Option<&GroupDelta> {
        self.groups.iter().find(|g| g.category == c)
    }
}

/// Per-group reconstruction R² on `z` and `z_erased`, plus the downstream
/// CV metric on each when a target is given.
pub fn erasure_report(
    z: &Array2<f64>,
    z_erased: &Array2<f64>,
    catalog: &[(String, Category, Vec<f64>)],
    erased_group: Category,
    target: Option<&Target>,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<ErasureReport> {
    if z.dim() != z_erased.dim() {
        return Err(Error::Data("original and erased embeddings differ in shape".into()));
    }
    if !catalog.iter().any(|(_, c, _)| *c == erased_group) {
        return Err(Error::Data(format!("catalog has no feature in the erased group {erased_group}")));
    }
    let before_emb = EmbeddingMatrix::new(z.clone())?;
    let after_emb = EmbeddingMatrix::new(z_erased.clone())?;
    let before = group_report(catalog, &before_emb, plan, probe)?;
    let after = group_report(catalog, &after_emb, plan, probe)?;
    let groups = before
        .groups
        .iter()
        .map(|g| {
            let r2_after = after.group(g.category).unwrap_or(f64::NAN);
            GroupDelta {
                category: g.category,
                erased: g.category == erased_group,
                n_features: g.n_features,
                r2_before: g.mean_r2,
                r2_after,
                delta_pp: 100.0 * (r2_after - g.mean_r2),
            }
        })
        .collect();
    let features = catalog
        .iter()
        .zip(before.features.iter().zip(&after.features))
        .map(|((name, c, _), (b, a))| FeatureDelta {
            name: name.clone(),
            category: *c,
            r2_before: b.reconstruction_r2,
            r2_after: a.reconstruction_r2,
        })
        .collect();
    let downstream = match target {
        Some(t) => {
            let b = base_cv(&[], &before_emb, t, plan, probe)?;
            let a = base_cv(&[], &after_emb, t, plan, probe)?;
            Some(DownstreamDelta {
                metric: metric_name(t.kind).to_string(),
                before: b.metric,
                after: a.metric,
                delta_pp: 100.0 * (a.metric - b.metric),
            })
        }
        None => None,
    };
    Ok(ErasureReport {
        erased_group,
        groups,
        features,
        downstream,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::{planted_leakage, LeakageConfig};

    #[test]
    fn unchanged_embedding_has_zero_deltas() {
        let b = planted_leakage(&LeakageConfig { n: 300, ..Default::default() }).unwrap();
        let plan = FoldPlan::shuffled(300, 3, 0).unwrap();
        let probe = GbtConfig { n_trees: 20, ..Default::default() };
        let z = b.embeddings.rows().clone();
        let r = erasure_report(&z, &z, &b.catalog, b.sensitive, Some(&b.target), &plan, &probe).unwrap();
        assert!(r.groups.iter().all(|g| g.delta_pp == 0.0));
        assert_eq!(r.downstream.as_ref().unwrap().delta_pp, 0.0);
        assert!(r.group(b.sensitive).unwrap().erased);
    }
}
