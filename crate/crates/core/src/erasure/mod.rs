//! Dependence measurement and post-hoc erasure.
//!
//! [`hsic`] measures kernel dependence between embeddings and sensitive
//! columns; [`fit_eraser`] learns a linear map that trades fidelity to the
//! original embedding against that dependence; [`erasure_report`] shows how
//! reconstruction of each feature group moves as a result.

mod eraser;
mod hsic;
mod report;

pub use eraser::{fit_eraser, EraserConfig, EraserFit, EraserObjective, TraceStep};
pub use hsic::{
    center_gram, hsic, hsic_gram, hsic_with, median_bandwidth, permutation_test, rbf_gram, resolve_bandwidth,
    Bandwidth, HsicConfig, PermutationTest, MEDIAN_SUBSAMPLE,
};
pub use report::{erasure_report, DownstreamDelta, ErasureReport, FeatureDelta, GroupDelta};
