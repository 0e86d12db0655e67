//! Candidate scores: how much of a feature the embedding already carries, and
//! how much downstream loss the feature removes when appended to it.
//!
//! Every score here is out-of-fold. Reconstruction and alignment pool the
//! out-of-fold predictions of all folds into one R², which may be negative.
//! Utility is computed per fold and tested with a one-sided paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{EmbeddingMatrix, FoldPlan, Target};
use crate::fdsl::Category;
use crate::probe::{cross_val_loss, metric_r2, oof_predict, CvResult, GbtConfig, GbtModel};
use crate::{Error, Result};

/// Reconstruction needs at least this many non-missing rows.
pub const MIN_RECONSTRUCTION_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub tau_a: f64,
    pub alpha: f64,
    pub folds: usize,
    pub seed: u64,
    pub probe: GbtConfig,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            tau_a: 0.5,
            alpha: 0.05,
            folds: 5,
            seed: 0,
            probe: GbtConfig::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_a > 0.0 && self.tau_a < 1.0) {
            return Err(Error::Config("tau_a must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config("alpha must lie in (0, 0.5)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        self.probe.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Complementary,
    Aligned,
    Uninformative,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Complementary => "complementary",
            Verdict::Aligned => "aligned",
            Verdict::Uninformative => "uninformative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub dsl: String,
    pub category: Category,
    pub iteration: usize,
    pub alignment_fe: f64,
    /// `None` when too few rows are non-missing.
    pub reconstruction_ef: Option<f64>,
    pub utility: f64,
    pub utility_per_fold: Vec<f64>,
    pub p_value: f64,
    pub verdict: Verdict,
    pub importance_rank: Option<usize>,
}

/// Pure rule: complementary iff U > 0 with p <= alpha, else aligned iff
/// reconstruction >= tau_a, else uninformative.
pub fn categorize(
    reconstruction_ef: Option<f64>,
    utility: f64,
    p_value: f64,
    config: &ScoringConfig,
) -> Verdict {
    if utility > 0.0 && p_value <= config.alpha {
        Verdict::Complementary
    } else if reconstruction_ef.is_some_and(|r| r >= config.tau_a) {
        Verdict::Aligned
    } else {
        Verdict::Uninformative
    }
}

fn check_rows(n: usize, emb: &EmbeddingMatrix, plan: &FoldPlan) -> Result<()> {
    if emb.n_rows() != n || plan.n_rows() != n {
        return Err(Error::Data(format!(
            "row mismatch: {n} feature rows, {} embedding rows, {} fold rows",
            emb.n_rows(),
            plan.n_rows()
        )));
    }
    if n < 2 * plan.k {
        return Err(Error::Data(format!("{n} rows is too few for {} folds", plan.k)));
    }
    Ok(())
}

/// Out-of-fold R² of predicting `feature` from the embedding, over the rows
/// where the feature is present.
pub fn reconstruction_ef(
    feature: &[f64],
    embeddings: &EmbeddingMatrix,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<Option<f64>> {
    check_rows(feature.len(), embeddings, plan)?;
    let keep: Vec<bool> = feature.iter().map(|v| !v.is_nan()).collect();
    let kept = keep.iter().filter(|&&k| k).count();
    if kept < MIN_RECONSTRUCTION_ROWS {
        return Ok(None);
    }
    let z = embeddings.columns();
    let zs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    let pred = oof_predict(probe, &zs, feature, plan, &keep)?;
    let (t, p): (Vec<f64>, Vec<f64>) = (0..feature.len())
        .filter(|&r| keep[r])
        .map(|r| (feature[r], pred[r]))
        .unzip();
    Ok(Some(metric_r2(&t, &p)?))
}

/// Mean over embedding dimensions of the out-of-fold R² of predicting that
/// dimension from the candidate columns. Constant dimensions are skipped;
/// if all are, the score is 0.
pub fn alignment_fe(
    columns: &[&[f64]],
    embeddings: &EmbeddingMatrix,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<f64> {
    let n = embeddings.n_rows();
    check_rows(n, embeddings, plan)?;
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Data("candidate columns are not row-aligned".into()));
    }
    let keep = vec![true; n];
    let mut scores = Vec::new();
    for z in embeddings.columns() {
        if z.iter().all(|&v| v == z[0]) {
            continue;
        }
        let pred = oof_predict(probe, columns, &z, plan, &keep)?;
        scores.push(metric_r2(&z, &pred)?);
    }
    Ok(if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityResult {
    pub utility: f64,
    pub per_fold: Vec<f64>,
    pub p_value: f64,
    pub joint: CvResult,
}

/// One-sided paired t-test p-value for mean(diffs) > 0.
pub fn paired_t_p_value(diffs: &[f64]) -> f64 {
    if diffs.len() < 2 {
        return 1.0;
    }
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (k - 1.0);
    if var == 0.0 {
        return if mean > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / k).sqrt();
    let dist = StudentsT::new(0.0, 1.0, k - 1.0).expect("valid degrees of freedom");
    1.0 - dist.cdf(t)
}

/// Design matrix `[z, accepted..., extra...]` as borrowed columns.
pub fn design<'a>(z: &'a [Vec<f64>], accepted: &[&'a [f64]], extra: &[&'a [f64]]) -> Vec<&'a [f64]> {
    z.iter()
        .map(Vec::as_slice)
        .chain(accepted.iter().copied())
        .chain(extra.iter().copied())
        .collect()
}

/// CV result of the model on `[z, accepted]`, the baseline every candidate
/// in an iteration is compared against.
pub fn base_cv(
    accepted: &[&[f64]],
    embeddings: &EmbeddingMatrix,
    target: &Target,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<CvResult> {
    let z = embeddings.columns();
    cross_val_loss(probe, &design(&z, accepted, &[]), target, plan)
}

/// Conditional utility against a precomputed baseline.
pub fn utility_from_base(
    base: &CvResult,
    candidate: &[&[f64]],
    accepted: &[&[f64]],
    embeddings: &EmbeddingMatrix,
    target: &Target,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<UtilityResult> {
    if base.fold_fingerprint != plan.fingerprint() {
        return Err(Error::Invariant("baseline and candidate use different folds".into()));
    }
    let z = embeddings.columns();
    let joint = cross_val_loss(probe, &design(&z, accepted, candidate), target, plan)?;
    if joint.fold_fingerprint != base.fold_fingerprint {
        return Err(Error::Invariant("paired folds differ".into()));
    }
    let per_fold: Vec<f64> = base
        .per_fold_loss
        .iter()
        .zip(&joint.per_fold_loss)
        .map(|(b, j)| b - j)
        .collect();
    let utility = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(UtilityResult {
        utility,
        p_value: paired_t_p_value(&per_fold),
        per_fold,
        joint,
    })
}

/// Loss reduction per fold from appending `candidate` to `[z, accepted]`.
pub fn utility(
    candidate: &[&[f64]],
    accepted: &[&[f64]],
    embeddings: &EmbeddingMatrix,
    target: &Target,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<UtilityResult> {
    let base = base_cv(accepted, embeddings, target, plan, probe)?;
    utility_from_base(&base, candidate, accepted, embeddings, target, plan, probe)
}

/// Scores one single-column candidate against a cached baseline.
#[allow(clippy::too_many_arguments)]
pub fn score_candidate(
    dsl: &str,
    category: Category,
    iteration: usize,
    column: &[f64],
    accepted: &[&[f64]],
    base: &CvResult,
    embeddings: &EmbeddingMatrix,
    target: &Target,
    plan: &FoldPlan,
    config: &ScoringConfig,
) -> Result<CandidateRecord> {
    let recon = reconstruction_ef(column, embeddings, plan, &config.probe)?;
    let align = alignment_fe(&[column], embeddings, plan, &config.probe)?;
    let u = utility_from_base(base, &[column], accepted, embeddings, target, plan, &config.probe)?;
    Ok(CandidateRecord {
        dsl: dsl.to_string(),
        category,
        iteration,
        alignment_fe: align,
        reconstruction_ef: recon,
        verdict: categorize(recon, u.utility, u.p_value, config),
        utility: u.utility,
        utility_per_fold: u.per_fold,
        p_value: u.p_value,
        importance_rank: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub column: usize,
    pub importance: f64,
}

/// Total split gain per column, normalized to sum 1, highest first with
/// ties by column index.
pub fn feature_importance(model: &GbtModel) -> Vec<Importance> {
    let total: f64 = model.gains.iter().sum();
    let mut out: Vec<Importance> = model
        .gains
        .iter()
        .enumerate()
        .map(|(column, g)| Importance {
            column,
            importance: if total > 0.0 { g / total } else { 0.0 },
        })
        .collect();
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.column.cmp(&b.column)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetUtility {
    pub target: String,
    pub utility: f64,
    pub base_loss: f64,
    pub normalized: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTargetUtility {
    pub per_target: Vec<TargetUtility>,
    pub aggregate: f64,
    pub complementary: bool,
}

/// Utility on each target, normalized by that target's baseline loss.
///
/// The candidate is multi-target complementary iff the mean normalized
/// uplift is positive and at least one target is individually significant.
pub fn multi_target_utility(
    candidate: &[&[f64]],
    accepted: &[&[f64]],
    embeddings: &EmbeddingMatrix,
    targets: &[(&str, &Target, &FoldPlan)],
    config: &ScoringConfig,
) -> Result<MultiTargetUtility> {
    if targets.len() < 2 {
        return Err(Error::Config("multi-target utility needs at least 2 targets".into()));
    }
    let mut per_target = Vec::new();
    for &(name, target, plan) in targets {
        let base = base_cv(accepted, embeddings, target, plan, &config.probe)?;
        let u = utility_from_base(&base, candidate, accepted, embeddings, target, plan, &config.probe)?;
        let normalized = if base.mean_loss > 0.0 {
            u.utility / base.mean_loss
        } else {
            0.0
        };
        per_target.push(TargetUtility {
            target: name.to_string(),
            utility: u.utility,
            base_loss: base.mean_loss,
            normalized,
            p_value: u.p_value,
            significant: u.utility > 0.0 && u.p_value <= config.alpha,
        });
    }
    let aggregate = per_target.iter().map(|t| t.normalized).sum::<f64>() / per_target.len() as f64;
    let complementary = aggregate > 0.0 && per_target.iter().any(|t| t.significant);
    Ok(MultiTargetUtility {
        per_target,
        aggregate,
        complementary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReconstruction {
    pub dsl: String,
    pub category: Category,
    pub reconstruction_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub category: Category,
    pub mean_r2: f64,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub groups: Vec<GroupScore>,
    pub features: Vec<FeatureReconstruction>,
    pub notes: Vec<String>,
}

impl GroupReport {
    pub fn group(&self, c: Category) -> Option<f64> {
        self.groups.iter().find(|g| g.category == c).map(|g| g.mean_r2)
    }
}

/// Mean reconstruction R² per feature category. `catalog` holds
/// `(dsl, category, column)` triples.
pub fn group_report(
    catalog: &[(String, Category, Vec<f64>)],
    embeddings: &EmbeddingMatrix,
    plan: &FoldPlan,
    probe: &GbtConfig,
) -> Result<GroupReport> {
    use rayon::prelude::*;
    let scores: Vec<Option<f64>> = catalog
        .par_iter()
        .map(|(_, _, col)| reconstruction_ef(col, embeddings, plan, probe))
        .collect::<Result<_>>()?;
    let features: Vec<FeatureReconstruction> = catalog
        .iter()
        .zip(&scores)
        .map(|((dsl, c, _), s)| FeatureReconstruction {
            dsl: dsl.clone(),
            category: *c,
            reconstruction_r2: *s,
        })
        .collect();
    Ok(group_scores(features))
}

/// Groups already-computed reconstruction scores by category.
pub fn group_scores(features: Vec<FeatureReconstruction>) -> GroupReport {
    let mut groups = Vec::new();
    let mut notes = Vec::new();
    for c in Category::ALL {
        let vals: Vec<f64> = features
            .iter()
            .filter(|f| f.category == c)
            .filter_map(|f| f.reconstruction_r2)
            .collect();
        if vals.is_empty() {
            notes.push(format!("group {c} omitted: no scored features"));
            continue;
        }
        groups.push(GroupScore {
            category: c,
            mean_r2: vals.iter().sum::<f64>() / vals.len() as f64,
            n_features: vals.len(),
        });
    }
    for f in features.iter().filter(|f| f.reconstruction_r2.is_none()) {
        notes.push(format!("{} has fewer than {MIN_RECONSTRUCTION_ROWS} non-missing rows", f.dsl));
    }
    GroupReport {
        groups,
        features,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split_folds, TargetKind};
    use crate::probe::fit;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn embedding(n: usize, d: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
        EmbeddingMatrix::new(Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))).unwrap()
    }

    #[test]
    fn verdict_regions() {
        let c = ScoringConfig::default();
        assert_eq!(categorize(Some(0.9), 0.002, 0.4, &c), Verdict::Aligned);
        assert_eq!(categorize(Some(0.2), 0.01, 0.001, &c), Verdict::Complementary);
        assert_eq!(categorize(Some(0.1), -0.003, 0.9, &c), Verdict::Uninformative);
        assert_eq!(categorize(None, 0.01, 0.5, &c), Verdict::Uninformative);
    }

    #[test]
    fn p_values() {
        assert_eq!(paired_t_p_value(&[0.0; 5]), 1.0);
        assert_eq!(paired_t_p_value(&[0.1; 5]), 0.0);
        let p = paired_t_p_value(&[0.1, 0.2, 0.15, 0.12, 0.3]);
        assert!(p < 0.01);
        let q = paired_t_p_value(&[-0.1, 0.1, -0.05, 0.05, 0.0]);
        assert!((q - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coordinate_reconstructs_and_noise_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let emb = embedding(600, 4, &mut rng);
        let plan = FoldPlan::shuffled(600, 5, 4).unwrap();
        let cfg = GbtConfig::default();
        let f: Vec<f64> = emb.rows().column(2).to_vec();
        let r = reconstruction_ef(&f, &emb, &plan, &cfg).unwrap().unwrap();
        assert!(r >= 0.99, "{r}");
        let noise: Vec<f64> = (0..600).map(|_| rng.gen()).collect();
        let r = reconstruction_ef(&noise, &emb, &plan, &cfg).unwrap().unwrap();
        assert!(r < 0.1, "{r}");
        let a = alignment_fe(&[&f], &EmbeddingMatrix::new(emb.rows().slice(ndarray::s![.., 2..3]).to_owned()).unwrap(), &plan, &cfg).unwrap();
        assert!(a >= 0.99, "{a}");
        let constant = vec![1.0; 600];
        assert!(alignment_fe(&[&constant], &emb, &plan, &cfg).unwrap() <= 0.0);
    }

    #[test]
    fn sparse_feature_is_undefined() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let emb = embedding(100, 2, &mut rng);
        let plan = FoldPlan::shuffled(100, 5, 1).unwrap();
        let f: Vec<f64> = (0..100).map(|i| if i < 49 { i as f64 } else { f64::NAN }).collect();
        assert_eq!(reconstruction_ef(&f, &emb, &plan, &GbtConfig::default()).unwrap(), None);
    }

    #[test]
    fn duplicate_of_accepted_has_zero_utility() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let emb = embedding(400, 3, &mut rng);
        let extra: Vec<f64> = (0..400).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..400)
            .map(|r| ((emb.rows()[[r, 0]] + 2.0 * extra[r] + rng.gen::<f64>()) > 1.0) as u8 as f64)
            .collect();
        let t = Target::new(TargetKind::Binary, y).unwrap();
        let plan = split_folds(&t, 5, 8).unwrap();
        let cfg = GbtConfig::default();
        let u = utility(&[&extra], &[], &emb, &t, &plan, &cfg).unwrap();
        assert!(u.utility > 0.0 && u.p_value < 0.05, "{u:?}");
        let u = utility(&[&extra], &[&extra], &emb, &t, &plan, &cfg).unwrap();
        assert!(u.per_fold.iter().all(|&v| v == 0.0));
        assert_eq!(u.p_value, 1.0);
    }

    #[test]
    fn importance_ranks_planted_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..300).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = x[2].iter().map(|v| v * 4.0).collect();
        let cols: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let m = fit(&GbtConfig::default(), &cols, &y).unwrap();
        let imp = feature_importance(&m);
        assert_eq!(imp[0].column, 2);
        assert!((imp.iter().map(|i| i.importance).sum::<f64>() - 1.0).abs() < 1e-12);
        let single = fit(&GbtConfig::default(), &cols[2..3], &y).unwrap();
        assert_eq!(feature_importance(&single)[0].importance, 1.0);
    }

    #[test]
    fn single_feature_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let emb = embedding(200, 2, &mut rng);
        let plan = FoldPlan::shuffled(200, 5, 2).unwrap();
        let col = emb.rows().column(0).to_vec();
        let cat = vec![("mean(amount)".to_string(), Category::Amount, col.clone())];
        let rep = group_report(&cat, &emb, &plan, &GbtConfig::default()).unwrap();
        let r = reconstruction_ef(&col, &emb, &plan, &GbtConfig::default()).unwrap().unwrap();
        assert_eq!(rep.group(Category::Amount), Some(r));
        assert_eq!(rep.groups.len(), 1);
        assert_eq!(rep.notes.len(), 3);
    }
}
