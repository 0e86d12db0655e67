//! The generate, repair, score, select loop.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extract::{extract_candidates, RawCandidate};
use super::generator::Generator;
use super::prompt::generation_prompt;
use super::reflection::{build_reflection, ReflectionConfig};
use super::repair::{repair, RepairOutcome};
use super::state::{type_counts, AcceptedFeature, IterationState, IterationSummary, Rejection, TypeCounts};
use crate::dataset::{split_folds, Dataset, FoldPlan, Target, TargetKind};
use crate::fdsl::{evaluate_batch, write_feature_list, CompiledFeature, FeatureSpec};
use crate::probe::{fit_classes, loss_for, metric_name};
use crate::report::{write_json, ReportHeader};
use crate::scoring::{
    base_cv, design, feature_importance, group_scores, multi_target_utility, score_candidate, CandidateRecord,
    FeatureReconstruction, GroupReport, MultiTargetUtility, ScoringConfig, Verdict,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    /// Target that drives scoring and acceptance.
    pub target: String,
    /// Further targets reported with multi-target utility.
    pub extra_targets: Vec<String>,
    pub iterations: usize,
    pub budget: usize,
    pub batch_size: usize,
    pub max_repair_rounds: usize,
    pub reflection: ReflectionConfig,
    pub scoring: ScoringConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            target: "target".into(),
            extra_targets: Vec::new(),
            iterations: 5,
            budget: 40,
            batch_size: 10,
            max_repair_rounds: 3,
            reflection: ReflectionConfig::default(),
            scoring: ScoringConfig::default(),
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.extra_targets.contains(&self.target) {
            return Err(Error::Config("extra_targets must not repeat the primary target".into()));
        }
        self.scoring.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTargetEntry {
    pub dsl: String,
    pub result: MultiTargetUtility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub header: ReportHeader,
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub target: String,
    pub metric: String,
    pub higher_is_better: bool,
    pub fold_fingerprint: String,
    pub baseline_metric: f64,
    pub baseline_loss: f64,
    pub final_metric: f64,
    /// Final minus baseline metric, sign-adjusted so positive is better.
    pub total_uplift: f64,
    pub trajectory: Vec<IterationSummary>,
    pub accepted: Vec<AcceptedFeature>,
    pub type_distribution: TypeCounts,
    pub ledger: Vec<CandidateRecord>,
    pub rejections: Vec<Rejection>,
    pub group_report: GroupReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub multi_target: Vec<MultiTargetEntry>,
}

impl DiscoveryReport {
    pub fn feature_specs(&self) -> Vec<FeatureSpec> {
        self.accepted.iter().map(AcceptedFeature::spec).collect()
    }

    /// Writes `report.json`, `trajectory.csv` and `features.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("report.json"), self)?;
        write_feature_list(&self.feature_specs(), &dir.join("features.json"))?;
        let path = dir.join("trajectory.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut head = vec!["iteration".to_string(), "metric".into(), "n_accepted".into()];
        head.extend(self.type_distribution.keys().map(|c| c.as_str().to_lowercase()));
        let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        w.write_record(&head).map_err(csv_err)?;
        let mut baseline = vec!["0".to_string(), self.baseline_metric.to_string(), "0".into()];
        baseline.extend(self.type_distribution.keys().map(|_| "0".to_string()));
        w.write_record(&baseline).map_err(csv_err)?;
        for it in &self.trajectory {
            let mut row = vec![(it.iteration + 1).to_string(), it.metric.to_string(), it.accepted_total.to_string()];
            row.extend(it.accepted_types.values().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

/// Read-only inputs shared by every iteration of one run.
pub struct IterationContext<'a> {
    pub dataset: &'a Dataset,
    pub target: &'a Target,
    pub plan: FoldPlan,
    pub config: &'a DiscoveryConfig,
}

impl<'a> IterationContext<'a> {
    pub fn new(dataset: &'a Dataset, config: &'a DiscoveryConfig) -> Result<Self> {
        config.validate()?;
        let target = dataset.target(&config.target)?;
        dataset.require_embeddings()?;
        let plan = split_folds(target, config.scoring.folds, config.scoring.seed)?;
        for w in &plan.warnings {
            log::warn!("{w}");
        }
        Ok(IterationContext {
            dataset,
            target,
            plan,
            config,
        })
    }

    /// State before the first iteration: the embeddings-only baseline.
    pub fn initial_state(&self) -> Result<IterationState> {
        let emb = self.dataset.require_embeddings()?;
        let baseline = base_cv(&[], emb, self.target, &self.plan, &self.config.scoring.probe)?;
        Ok(IterationState::new(baseline))
    }
}

struct Valid {
    name: Option<String>,
    feature: CompiledFeature,
    repaired: bool,
}

fn unique_name(wanted: Option<&str>, fallback: String, taken: &[String]) -> String {
    let base = wanted
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or(fallback);
    let mut name = base.clone();
    let mut k = 2;
    while taken.contains(&name) {
        name = format!("{base}_{k}");
        k += 1;
    }
    name
}

/// Asks for candidates, re-asking with the parse diagnostic when the
/// response holds no usable array.
fn request_candidates(
    generator: &mut dyn Generator,
    state: &mut IterationState,
    ctx: &IterationContext,
) -> Result<Vec<RawCandidate>> {
    let cfg = ctx.config;
    let remaining = cfg.budget.saturating_sub(state.accepted.len());
    let reflection = build_reflection(state, ctx.dataset, &cfg.target, remaining, &cfg.reflection)?;
    let mut prompt = generation_prompt(&reflection, cfg.batch_size)?;
    let mut diagnostics = Vec::new();
    for round in 0..=cfg.max_repair_rounds {
        let response = generator.complete(&prompt)?;
        match extract_candidates(&response, cfg.batch_size) {
            Ok(c) => return Ok(c),
            Err(diag) => {
                log::warn!("iteration {}: unusable response ({diag})", state.iteration);
                diagnostics.push(diag.clone());
                if round < cfg.max_repair_rounds {
                    prompt.user.push_str(&format!(
                        "\n\nYour previous answer could not be used: {diag}\nAnswer again with one fenced JSON array."
                    ));
                }
            }
        }
    }
    state.rejections.push(Rejection {
        iteration: state.iteration,
        text: "<generator response>".into(),
        diagnostics,
    });
    Ok(Vec::new())
}

/// Runs one iteration and advances `state`.
pub fn run_iteration(generator: &mut dyn Generator, state: &mut IterationState, ctx: &IterationContext) -> Result<()> {
    let cfg = ctx.config;
    let it = state.iteration;
    let raw = request_candidates(generator, state, ctx)?;
    let n_proposed = raw.len();

    let mut valid: Vec<Valid> = Vec::new();
    let mut n_rejected = 0;
    for c in &raw {
        match repair(generator, &c.dsl, ctx.dataset, cfg.max_repair_rounds) {
            RepairOutcome::Valid { feature, rounds, .. } => valid.push(Valid {
                name: c.name.clone(),
                feature,
                repaired: rounds > 0,
            }),
            RepairOutcome::Rejected { diagnostics } => {
                n_rejected += 1;
                state.rejections.push(Rejection {
                    iteration: it,
                    text: c.dsl.clone(),
                    diagnostics,
                });
            }
        }
    }
    let n_repaired = valid.iter().filter(|v| v.repaired).count();

    let mut fresh: Vec<Valid> = Vec::new();
    for v in valid {
        if !state.knows(&v.feature.text) && !fresh.iter().any(|f| f.feature.text == v.feature.text) {
            fresh.push(v);
        }
    }
    let n_duplicates = n_proposed - n_rejected - fresh.len();

    let features: Vec<CompiledFeature> = fresh.iter().map(|v| v.feature.clone()).collect();
    let matrix = evaluate_batch(&features, ctx.dataset);
    let emb = ctx.dataset.require_embeddings()?;
    let accepted = state.accepted_slices();
    let mut records: Vec<CandidateRecord> = features
        .par_iter()
        .zip(&matrix.columns)
        .map(|(f, col)| {
            score_candidate(
                &f.text,
                f.category,
                it,
                col,
                &accepted,
                &state.current,
                emb,
                ctx.target,
                &ctx.plan,
                &cfg.scoring,
            )
        })
        .collect::<Result<_>>()?;

    // Importance ranks from one model on [z, accepted, candidates].
    if !records.is_empty() {
        let z = emb.columns();
        let cand: Vec<&[f64]> = matrix.columns.iter().map(Vec::as_slice).collect();
        let x = design(&z, &accepted, &cand);
        let n_classes = if ctx.target.kind == TargetKind::Regression {
            1
        } else {
            ctx.target.n_classes().max(2)
        };
        let probe = cfg.scoring.probe.clone().with_loss(loss_for(ctx.target.kind));
        let model = fit_classes(&probe, &x, &ctx.target.values, n_classes)?;
        let offset = z.len() + accepted.len();
        for (rank, imp) in feature_importance(&model).iter().enumerate() {
            if imp.column >= offset {
                records[imp.column - offset].importance_rank = Some(rank + 1);
            }
        }
    }

    // Greedy acceptance in descending utility, gated on strict improvement.
    let mut order: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].verdict == Verdict::Complementary)
        .collect();
    order.sort_by(|&a, &b| records[b].utility.total_cmp(&records[a].utility));
    let mut n_accepted = 0;
    let mut taken: Vec<String> = state.accepted.iter().map(|a| a.name.clone()).collect();
    taken.extend(state.ledger_names.iter().cloned());
    let mut names: Vec<String> = Vec::with_capacity(records.len());
    for (j, v) in fresh.iter().enumerate() {
        let n = unique_name(v.name.as_deref(), format!("it{it}_f{j}"), &taken);
        taken.push(n.clone());
        names.push(n);
    }
    for i in order {
        if state.accepted.len() >= cfg.budget {
            break;
        }
        let mut cols = state.accepted_slices();
        cols.push(&matrix.columns[i]);
        let joint = base_cv(&cols, emb, ctx.target, &ctx.plan, &cfg.scoring.probe)?;
        if !joint.beats(&state.current) {
            continue;
        }
        let r = &records[i];
        state.accepted.push(AcceptedFeature {
            name: names[i].clone(),
            dsl: r.dsl.clone(),
            category: r.category,
            iteration: it,
            reconstruction_ef: r.reconstruction_ef,
            alignment_fe: r.alignment_fe,
            utility: r.utility,
            p_value: r.p_value,
            metric_after: joint.metric,
            importance_rank: r.importance_rank,
        });
        state.accepted_columns.push(matrix.columns[i].clone());
        state.current = joint;
        n_accepted += 1;
    }

    let mut verdicts: BTreeMap<String, usize> =
        [Verdict::Complementary, Verdict::Aligned, Verdict::Uninformative].iter().map(|v| (v.as_str().to_string(), 0)).collect();
    for r in &records {
        *verdicts.entry(r.verdict.as_str().to_string()).or_default() += 1;
    }
    state.history.push(IterationSummary {
        iteration: it,
        metric: state.current.metric,
        mean_loss: state.current.mean_loss,
        n_proposed,
        n_repaired,
        n_rejected,
        n_duplicates,
        n_scored: records.len(),
        n_accepted,
        accepted_total: state.accepted.len(),
        candidate_types: type_counts(records.iter().map(|r| &r.category)),
        accepted_types: type_counts(state.accepted.iter().map(|a| &a.category)),
        verdicts,
    });
    state.ledger.extend(records);
    state.ledger_columns.extend(matrix.columns);
    state.ledger_names.extend(names);
    state.iteration += 1;
    Ok(())
}

/// Runs the configured number of iterations. A generator that stays
/// unreachable ends the run early with `complete = false`.
pub fn run_discovery(dataset: &Dataset, config: &DiscoveryConfig, generator: &mut dyn Generator) -> Result<DiscoveryReport> {
    let ctx = IterationContext::new(dataset, config)?;
    let mut state = ctx.initial_state()?;
    let mut abort_reason = None;
    while state.iteration < config.iterations {
        log::info!("iteration {} (metric {:.4})", state.iteration, state.current.metric);
        match run_iteration(generator, &mut state, &ctx) {
            Ok(()) => {}
            Err(e @ Error::Generator(_)) => {
                log::error!("{e}");
                abort_reason = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    finish(state, &ctx, abort_reason)
}

fn finish(state: IterationState, ctx: &IterationContext, abort_reason: Option<String>) -> Result<DiscoveryReport> {
    let cfg = ctx.config;
    let emb = ctx.dataset.require_embeddings()?;

    let catalog: Vec<FeatureReconstruction> = state
        .ledger
        .iter()
        .filter(|r| r.verdict == Verdict::Aligned || state.accepted.iter().any(|a| a.dsl == r.dsl))
        .map(|r| FeatureReconstruction {
            dsl: r.dsl.clone(),
            category: r.category,
            reconstruction_r2: r.reconstruction_ef,
        })
        .collect();

    let mut multi_target = Vec::new();
    if !cfg.extra_targets.is_empty() {
        let mut names = vec![cfg.target.as_str()];
        names.extend(cfg.extra_targets.iter().map(String::as_str));
        let targets: Vec<&Target> = names.iter().map(|n| ctx.dataset.target(n)).collect::<Result<_>>()?;
        let plans: Vec<FoldPlan> = targets
            .iter()
            .map(|t| split_folds(t, cfg.scoring.folds, cfg.scoring.seed))
            .collect::<Result<_>>()?;
        let spec: Vec<(&str, &Target, &FoldPlan)> = names
            .iter()
            .zip(&targets)
            .zip(&plans)
            .map(|((n, t), p)| (*n, *t, p))
            .collect();
        for (k, a) in state.accepted.iter().enumerate() {
            let earlier: Vec<&[f64]> = state.accepted_columns[..k].iter().map(Vec::as_slice).collect();
            let result = multi_target_utility(&[&state.accepted_columns[k]], &earlier, emb, &spec, &cfg.scoring)?;
            multi_target.push(MultiTargetEntry {
                dsl: a.dsl.clone(),
                result,
            });
        }
    }

    let sign = if state.baseline.higher_is_better { 1.0 } else { -1.0 };
    let mut seeds = vec![("folds", cfg.scoring.seed), ("probe", cfg.scoring.probe.seed)];
    seeds.sort();
    Ok(DiscoveryReport {
        header: ReportHeader::new(cfg, &seeds, &cfg.scoring.probe)?,
        complete: abort_reason.is_none(),
        abort_reason,
        target: cfg.target.clone(),
        metric: metric_name(ctx.target.kind).into(),
        higher_is_better: state.baseline.higher_is_better,
        fold_fingerprint: ctx.plan.fingerprint(),
        baseline_metric: state.baseline.metric,
        baseline_loss: state.baseline.mean_loss,
        final_metric: state.current.metric,
        total_uplift: sign * (state.current.metric - state.baseline.metric),
        type_distribution: type_counts(state.accepted.iter().map(|a| &a.category)),
        trajectory: state.history,
        accepted: state.accepted,
        ledger: state.ledger,
        rejections: state.rejections,
        group_report: group_scores(catalog),
        multi_target,
    })
}
