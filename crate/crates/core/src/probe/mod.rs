//! Gradient-boosted tree probes and the metrics computed from them.
//!
//! The same learner backs every fit in the crate: reconstruction probes,
//! alignment probes and downstream utility models.

mod cv;
mod gbt;
mod metrics;

pub use cv::{cross_val_loss, loss_for, metric_name, oof_predict, CvResult};
pub use gbt::{fit, fit_classes, loss_increase_count, GbtConfig, GbtModel, Loss, Tree, TreeNode, LAMBDA};
pub use metrics::{argmax, metric_accuracy, metric_auc, metric_logloss, metric_mae, metric_r2, EvalMetrics};
