use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbt::{fit_classes, GbtConfig, Loss};
use super::metrics::{argmax, metric_accuracy, metric_auc, metric_logloss, metric_mae};
use crate::dataset::{FoldPlan, Target, TargetKind};
use crate::{Error, Result};

/// Loss used when fitting and scoring a target of this kind.
/// Name of the CV metric reported for a target kind.
pub fn metric_name(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Binary => "auc",
        TargetKind::Multiclass => "accuracy",
        TargetKind::Regression => "mae",
    }
}

pub fn loss_for(kind: TargetKind) -> Loss {
    match kind {
        TargetKind::Regression => Loss::Squared,
        _ => Loss::Logistic,
    }
}

/// Cross-validated losses and the task's headline metric.
///
/// Loss is logloss for classification and MAE for regression. The metric is
/// AUC (binary), accuracy (multiclass) or MAE (regression, lower is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub mean_loss: f64,
    pub per_fold_loss: Vec<f64>,
    pub metric: f64,
    pub per_fold_metric: Vec<f64>,
    pub higher_is_better: bool,
    pub fold_fingerprint: String,
}

impl CvResult {
    /// True when `self`'s metric is strictly better than `other`'s.
    pub fn beats(&self, other: &CvResult) -> bool {
        if self.higher_is_better {
            self.metric > other.metric
        } else {
            self.metric < other.metric
        }
    }
}

pub(crate) fn gather(x: &[&[f64]], rows: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect()
}

pub(crate) fn as_slices(cols: &[Vec<f64>]) -> Vec<&[f64]> {
    cols.iter().map(Vec::as_slice).collect()
}

fn check_plan(x: &[&[f64]], n: usize, plan: &FoldPlan) -> Result<()> {
    if plan.n_rows() != n || x.iter().any(|c| c.len() != n) {
        return Err(Error::Probe(format!(
            "fold plan covers {} rows, data has {n}",
            plan.n_rows()
        )));
    }
    Ok(())
}

/// Cross-validated loss of a model predicting `target` from columns `x`.
/// Folds run in parallel and are reduced in fold order.
pub fn cross_val_loss(config: &GbtConfig, x: &[&[f64]], target: &Target, plan: &FoldPlan) -> Result<CvResult> {
    let y = &target.values;
    check_plan(x, y.len(), plan)?;
    let cfg = config.clone().with_loss(loss_for(target.kind));
    let n_classes = target.n_classes();
    let folds: Vec<Result<(f64, f64)>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train = plan.train_rows(fold);
            let test = plan.test_rows(fold);
            let xtr = gather(x, &train);
            let ytr: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let xte = gather(x, &test);
            let yte: Vec<f64> = test.iter().map(|&r| y[r]).collect();
            let model = fit_classes(&cfg, &as_slices(&xtr), &ytr, n_classes.max(2))?;
            let xte = as_slices(&xte);
            match target.kind {
                TargetKind::Regression => {
                    let p = model.predict(&xte)?;
                    let mae = metric_mae(&yte, &p)?;
                    Ok((mae, mae))
                }
                TargetKind::Binary => {
                    let probs = model.predict_proba(&xte)?;
                    let p1: Vec<f64> = probs.iter().map(|p| p[1]).collect();
                    let auc = metric_auc(&yte, &p1).unwrap_or(f64::NAN);
                    Ok((metric_logloss(&yte, &probs)?, auc))
                }
                TargetKind::Multiclass => {
                    let probs = model.predict_proba(&xte)?;
                    let pred: Vec<f64> = probs.iter().map(|p| argmax(p) as f64).collect();
                    Ok((metric_logloss(&yte, &probs)?, metric_accuracy(&yte, &pred)?))
                }
            }
        })
        .collect();
    let folds: Vec<(f64, f64)> = folds.into_iter().collect::<Result<_>>()?;
    let per_fold_loss: Vec<f64> = folds.iter().map(|f| f.0).collect();
    let per_fold_metric: Vec<f64> = folds.iter().map(|f| f.1).collect();
    let defined: Vec<f64> = per_fold_metric.iter().copied().filter(|v| !v.is_nan()).collect();
    Ok(CvResult {
        mean_loss: per_fold_loss.iter().sum::<f64>() / plan.k as f64,
        metric: if defined.is_empty() {
            f64::NAN
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        },
        per_fold_loss,
        per_fold_metric,
        higher_is_better: target.kind != TargetKind::Regression,
        fold_fingerprint: plan.fingerprint(),
    })
}

/// Out-of-fold regression predictions for the rows where `keep` is true;
/// other rows get `NaN`. Each fold trains on its kept training rows.
pub fn oof_predict(config: &GbtConfig, x: &[&[f64]], y: &[f64], plan: &FoldPlan, keep: &[bool]) -> Result<Vec<f64>> {
    check_plan(x, y.len(), plan)?;
    let cfg = config.clone().with_loss(Loss::Squared);
    let folds: Vec<Result<Vec<(usize, f64)>>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<usize> = plan.train_rows(fold).into_iter().filter(|&r| keep[r]).collect();
            let test: Vec<usize> = plan.test_rows(fold).into_iter().filter(|&r| keep[r]).collect();
            if test.is_empty() {
                return Ok(Vec::new());
            }
            let xtr = gather(x, &train);
            let ytr: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let model = fit_classes(&cfg, &as_slices(&xtr), &ytr, 1)?;
            let pred = model.predict(&as_slices(&gather(x, &test)))?;
            Ok(test.into_iter().zip(pred).collect())
        })
        .collect();
    let mut out = vec![f64::NAN; y.len()];
    for fold in folds {
        for (r, p) in fold? {
            out[r] = p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_folds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn null_model_logloss_near_ln2() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..3).map(|_| (0..400).map(|_| rng.gen()).collect()).collect();
            let y: Vec<f64> = (0..400).map(|_| rng.gen_range(0..2) as f64).collect();
            let t = Target::new(TargetKind::Binary, y).unwrap();
            let plan = split_folds(&t, 5, seed).unwrap();
            let r = cross_val_loss(&GbtConfig::default(), &as_slices(&x), &t, &plan).unwrap();
            total += r.mean_loss;
        }
        let mean = total / 20.0;
        assert!((mean - 2f64.ln()).abs() <= 0.1, "{mean}");
    }

    #[test]
    fn zero_regression_has_zero_mae() {
        let x = vec![(0..100).map(|i| i as f64).collect::<Vec<_>>()];
        let t = Target::new(TargetKind::Regression, vec![0.0; 100]).unwrap();
        let plan = split_folds(&t, 5, 1).unwrap();
        let r = cross_val_loss(&GbtConfig::default(), &as_slices(&x), &t, &plan).unwrap();
        assert_eq!(r.mean_loss, 0.0);
        assert!(r.per_fold_loss.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn duplicate_column_gives_identical_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        let y: Vec<f64> = a.iter().map(|v| (*v > 0.5) as u8 as f64).collect();
        let t = Target::new(TargetKind::Binary, y).unwrap();
        let plan = split_folds(&t, 5, 2).unwrap();
        let r1 = cross_val_loss(&GbtConfig::default(), &[&a], &t, &plan).unwrap();
        let r2 = cross_val_loss(&GbtConfig::default(), &[&a, &a], &t, &plan).unwrap();
        assert_eq!(r1.per_fold_loss, r2.per_fold_loss);
        assert!(r1.metric > 0.95);
    }
}
