//! The `eafd` command surface.
//!
//! Every subcommand reads an optional TOML config, applies flag overrides
//! and writes JSON/CSV outputs into `--out`. Failures print a JSON error
//! object on stderr and exit with the code from [`Error::exit_code`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::agent::{run_discovery, DiscoveryConfig, GeneratorSpec};
use crate::dataset::{
    export_embeddings, import_embeddings, import_labels, ingest_events, load_store, save_store, split_folds,
    write_events_jsonl, write_labels_csv, Dataset, EmbeddingMatrix, FoldPlan,
};
use crate::erasure::{erasure_report, fit_eraser, hsic_with, EraserConfig, ErasureReport};
use crate::fdsl::{compile_specs, evaluate_batch, read_feature_list, write_feature_list, Category, FeatureSpec};
use crate::parallel::with_workers;
use crate::probe::{cross_val_loss, metric_name, CvResult};
use crate::report::{write_json, ReportHeader};
use crate::scoring::{design, group_report, GroupReport};
use crate::synthbench::{generate, SynthConfig};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "eafd", version, about = "Embedding-aware feature discovery over event sequences")]
pub struct Cli {
    /// Worker threads for every parallel section; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic store with a ground-truth manifest.
    Synth(SynthArgs),
    /// Build a store from raw events, labels and embeddings.
    Ingest(IngestArgs),
    /// Run the discovery loop.
    Discover(DiscoverArgs),
    /// Cross-validate a fixed feature list against the embeddings.
    Eval(EvalArgs),
    /// Reconstruction R² per feature group.
    ProbeReport(ProbeReportArgs),
    /// Fit the linear eraser for one feature group and report its effect.
    Erase(EraseArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_users: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Store directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    /// Mock generator script; overrides the configured generator.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    /// Embeddings CSV replacing the store's (e.g. an erased copy).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProbeReportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EraseArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    /// Feature group to erase: Amount, Categories, Time or Activity.
    #[arg(long)]
    pub sensitive_group: Category,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Effective configuration: the TOML file plus flag overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Left out of serialized configs so the config hash ignores it.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    pub synth: SynthConfig,
    pub discovery: DiscoveryConfig,
    pub generator: Option<GeneratorSpec>,
    pub erasure: EraserConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative script paths resolve against the config file.
        if let Some(GeneratorSpec::Mock { script }) = &mut cfg.generator {
            if script.is_relative() {
                if let Some(dir) = path.parent() {
                    *script = dir.join(&*script);
                }
            }
        }
        Ok(cfg)
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} is not a directory", path.display())))
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn synth(cfg: &mut RunConfig, a: &SynthArgs) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.synth.seed = s;
    }
    if let Some(n) = a.n_users {
        cfg.synth.n_users = n;
    }
    let bench = generate(&cfg.synth)?;
    let ds = &bench.dataset;
    save_store(ds, &a.out)?;
    write_json(&a.out.join("manifest.json"), &bench.manifest)?;
    let catalog: Vec<FeatureSpec> = bench
        .manifest
        .features
        .iter()
        .enumerate()
        .map(|(i, e)| FeatureSpec {
            name: format!("m{i}"),
            dsl: e.dsl.clone(),
            category: Some(e.category),
        })
        .collect();
    write_feature_list(&catalog, &a.out.join("catalog.json"))?;

    // Raw inputs in the ingest formats.
    let raw = a.out.join("raw");
    create_dir(&raw)?;
    let events = raw.join("events.jsonl");
    let f = std::fs::File::create(&events).map_err(|e| Error::io(&events, e))?;
    write_events_jsonl(ds, std::io::BufWriter::new(f))?;
    write_json(&raw.join("schema.json"), ds.schema())?;
    write_labels_csv(ds, &raw.join("labels.csv"))?;
    let ids: Vec<&str> = ds.ids().collect();
    export_embeddings(&ids, ds.require_embeddings()?, &raw.join("embeddings.csv"))?;
    println!("wrote {} users to {}", ds.len(), a.out.display());
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    require_file(&a.events)?;
    require_file(&a.schema)?;
    let mut ds = ingest_events(&a.events, &a.schema)?;
    if let Some(l) = &a.labels {
        require_file(l)?;
        ds = import_labels(ds, l)?;
    }
    if let Some(e) = &a.embeddings {
        require_file(e)?;
        let (d, rep) = import_embeddings(ds, e)?;
        if !rep.dropped_ids.is_empty() {
            log::warn!("dropped embedding ids: {}", rep.dropped_ids.join(", "));
        }
        ds = d;
    }
    save_store(&ds, &a.out)?;
    println!("stored {} sequences in {}", ds.len(), a.out.display());
    Ok(())
}

fn discover(cfg: &mut RunConfig, a: &DiscoverArgs) -> Result<i32> {
    require_dir(&a.store)?;
    let d = &mut cfg.discovery;
    if let Some(t) = &a.target {
        d.target = t.clone();
    }
    if let Some(v) = a.iterations {
        d.iterations = v;
    }
    if let Some(v) = a.budget {
        d.budget = v;
    }
    if let Some(v) = a.batch_size {
        d.batch_size = v;
    }
    if let Some(s) = a.seed {
        d.scoring.seed = s;
        d.scoring.probe.seed = s;
    }
    if let Some(m) = &a.mock {
        cfg.generator = Some(GeneratorSpec::Mock { script: m.clone() });
    }
    let spec = cfg
        .generator
        .clone()
        .ok_or_else(|| Error::Config("no generator configured; pass --mock or set [generator]".into()))?;
    if let GeneratorSpec::Mock { script } = &spec {
        require_file(script)?;
    }
    let ds = load_store(&a.store)?;
    let mut generator = spec.build()?;
    let report = run_discovery(&ds, &cfg.discovery, generator.as_mut())?;
    report.write(&a.out)?;
    println!(
        "{} {:.4} -> {:.4} with {} features",
        report.metric,
        report.baseline_metric,
        report.final_metric,
        report.accepted.len()
    );
    Ok(match &report.abort_reason {
        Some(reason) => {
            emit_error("generator", reason, 4);
            4
        }
        None => 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub metric: f64,
    pub mean_loss: f64,
    pub per_fold_metric: Vec<f64>,
    pub per_fold_loss: Vec<f64>,
}

impl From<&CvResult> for EvalEntry {
    fn from(r: &CvResult) -> Self {
        EvalEntry {
            metric: r.metric,
            mean_loss: r.mean_loss,
            per_fold_metric: r.per_fold_metric.clone(),
            per_fold_loss: r.per_fold_loss.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: ReportHeader,
    pub target: String,
    pub metric: String,
    pub features: Vec<FeatureSpec>,
    pub embeddings_only: EvalEntry,
    /// Absent when the feature list is empty.
    pub features_only: Option<EvalEntry>,
    pub joint: EvalEntry,
}

fn eval(cfg: &mut RunConfig, a: &EvalArgs) -> Result<()> {
    require_dir(&a.store)?;
    require_file(&a.features)?;
    if let Some(t) = &a.target {
        cfg.discovery.target = t.clone();
    }
    if let Some(s) = a.seed {
        cfg.discovery.scoring.seed = s;
        cfg.discovery.scoring.probe.seed = s;
    }
    let mut ds = load_store(&a.store)?;
    if let Some(e) = &a.embeddings {
        require_file(e)?;
        ds = import_embeddings(ds, e)?.0;
    }
    let sc = &cfg.discovery.scoring;
    sc.validate()?;
    let specs = read_feature_list(&a.features)?;
    let compiled = compile_specs(&specs, ds.schema())?;
    let matrix = evaluate_batch(&compiled, &ds);
    let target = ds.target(&cfg.discovery.target)?;
    let plan = split_folds(target, sc.folds, sc.seed)?;
    let z = ds.require_embeddings()?.columns();
    let feats: Vec<&[f64]> = matrix.columns.iter().map(Vec::as_slice).collect();
    let emb_only = cross_val_loss(&sc.probe, &design(&z, &[], &[]), target, &plan)?;
    let joint = if feats.is_empty() {
        emb_only.clone()
    } else {
        cross_val_loss(&sc.probe, &design(&z, &feats, &[]), target, &plan)?
    };
    let features_only = if feats.is_empty() {
        None
    } else {
        Some(EvalEntry::from(&cross_val_loss(&sc.probe, &feats, target, &plan)?))
    };
    let report = EvalReport {
        header: ReportHeader::new(&*cfg, &[("folds", sc.seed), ("probe", sc.probe.seed)], &sc.probe)?,
        target: cfg.discovery.target.clone(),
        metric: metric_name(target.kind).into(),
        features: specs,
        embeddings_only: EvalEntry::from(&emb_only),
        features_only,
        joint: EvalEntry::from(&joint),
    };
    create_dir(&a.out)?;
    write_json(&a.out.join("eval.json"), &report)?;
    println!(
        "{}: embeddings {:.4}, joint {:.4}",
        report.metric, report.embeddings_only.metric, report.joint.metric
    );
    Ok(())
}

/// Evaluates a catalog into `(name, category, column)` triples.
fn catalog_columns(path: &Path, ds: &Dataset) -> Result<Vec<(String, Category, Vec<f64>)>> {
    require_file(path)?;
    let specs = read_feature_list(path)?;
    if specs.is_empty() {
        return Err(Error::Data(format!("{} lists no features", path.display())));
    }
    let compiled = compile_specs(&specs, ds.schema())?;
    let matrix = evaluate_batch(&compiled, ds);
    Ok(specs
        .iter()
        .zip(&compiled)
        .zip(matrix.columns)
        .map(|((s, c), col)| (s.name.clone(), c.category, col))
        .collect())
}

/// Folds for probes that need no target: stratified on the configured
/// target when present, otherwise shuffled.
fn probe_plan(ds: &Dataset, cfg: &RunConfig) -> Result<FoldPlan> {
    let sc = &cfg.discovery.scoring;
    match ds.target(&cfg.discovery.target) {
        Ok(t) => split_folds(t, sc.folds, sc.seed),
        Err(_) => FoldPlan::shuffled(ds.len(), sc.folds, sc.seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub header: ReportHeader,
    pub report: GroupReport,
}

fn probe_report(cfg: &mut RunConfig, a: &ProbeReportArgs) -> Result<()> {
    require_dir(&a.store)?;
    if let Some(s) = a.seed {
        cfg.discovery.scoring.seed = s;
        cfg.discovery.scoring.probe.seed = s;
    }
    let ds = load_store(&a.store)?;
    let catalog = catalog_columns(&a.catalog, &ds)?;
    let plan = probe_plan(&ds, cfg)?;
    let sc = &cfg.discovery.scoring;
    let report = group_report(&catalog, ds.require_embeddings()?, &plan, &sc.probe)?;
    create_dir(&a.out)?;
    let out = ProbeReport {
        header: ReportHeader::new(&*cfg, &[("folds", sc.seed), ("probe", sc.probe.seed)], &sc.probe)?,
        report,
    };
    write_json(&a.out.join("probe_report.json"), &out)?;
    for g in &out.report.groups {
        println!("{:12} {:.3} ({} features)", g.category.as_str(), g.mean_r2, g.n_features);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraseOutput {
    pub header: ReportHeader,
    pub config: EraserConfig,
    pub sensitive_columns: Vec<String>,
    pub sigma_x: f64,
    pub sigma_s: f64,
    /// Full-batch HSIC between embeddings and sensitive columns.
    pub hsic_before: f64,
    pub hsic_after: f64,
    pub report: ErasureReport,
    pub w: Vec<Vec<f64>>,
}

/// Sensitive matrix with missing cells set to their column mean.
fn sensitive_matrix(cols: &[&Vec<f64>], n: usize) -> Array2<f64> {
    let means: Vec<f64> = cols
        .iter()
        .map(|c| {
            let (s, k) = c.iter().filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
            if k == 0 {
                0.0
            } else {
                s / k as f64
            }
        })
        .collect();
    Array2::from_shape_fn((n, cols.len()), |(r, c)| {
        let v = cols[c][r];
        if v.is_finite() {
            v
        } else {
            means[c]
        }
    })
}

fn erase(cfg: &mut RunConfig, a: &EraseArgs) -> Result<()> {
    require_dir(&a.store)?;
    if let Some(t) = &a.target {
        cfg.discovery.target = t.clone();
    }
    if let Some(l) = a.lambda {
        cfg.erasure.lambda = l;
    }
    if let Some(s) = a.steps {
        cfg.erasure.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.erasure.hsic.seed = s;
        cfg.discovery.scoring.seed = s;
        cfg.discovery.scoring.probe.seed = s;
    }
    cfg.erasure.validate()?;
    let ds = load_store(&a.store)?;
    let catalog = catalog_columns(&a.catalog, &ds)?;
    let sens: Vec<&(String, Category, Vec<f64>)> = catalog.iter().filter(|(_, c, _)| *c == a.sensitive_group).collect();
    if sens.is_empty() {
        return Err(Error::Data(format!("catalog has no {} features", a.sensitive_group)));
    }
    let emb = ds.require_embeddings()?;
    let z = emb.rows();
    let s = sensitive_matrix(&sens.iter().map(|(_, _, c)| c).collect::<Vec<_>>(), ds.len());
    let fit = match fit_eraser(z.view(), s.view(), &cfg.erasure) {
        Ok(f) => f,
        Err(Error::Diverged { step, loss, initial, trace }) => {
            create_dir(&a.out)?;
            write_trace(&a.out.join("trace.csv"), &trace)?;
            return Err(Error::Diverged { step, loss, initial, trace });
        }
        Err(e) => return Err(e),
    };
    let target = ds.target(&cfg.discovery.target).ok();
    let plan = probe_plan(&ds, cfg)?;
    let sc = &cfg.discovery.scoring;
    let report = erasure_report(z, &fit.erased, &catalog, a.sensitive_group, target, &plan, &sc.probe)?;
    // The eraser standardises S internally; report HSIC on the same scale.
    let s_std = {
        let mut m = s.clone();
        for mut col in m.columns_mut() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            col.mapv_inplace(|v| (v - mean) * scale);
        }
        m
    };
    let hsic_before = hsic_with(z.view(), s_std.view(), fit.sigma_x, fit.sigma_s)?;
    let hsic_after = hsic_with(fit.erased.view(), s_std.view(), fit.sigma_x, fit.sigma_s)?;

    create_dir(&a.out)?;
    let ids: Vec<&str> = ds.ids().collect();
    export_embeddings(&ids, &EmbeddingMatrix::new(fit.erased.clone())?, &a.out.join("embeddings_erased.csv"))?;
    write_trace(&a.out.join("trace.csv"), &fit.trace)?;
    let out = EraseOutput {
        header: ReportHeader::new(
            &*cfg,
            &[("eraser", cfg.erasure.hsic.seed), ("folds", sc.seed), ("probe", sc.probe.seed)],
            &sc.probe,
        )?,
        config: cfg.erasure.clone(),
        sensitive_columns: sens.iter().map(|(n, _, _)| n.clone()).collect(),
        sigma_x: fit.sigma_x,
        sigma_s: fit.sigma_s,
        hsic_before,
        hsic_after,
        w: fit.w.rows().into_iter().map(|r| r.to_vec()).collect(),
        report,
    };
    write_json(&a.out.join("erasure_report.json"), &out)?;
    for g in &out.report.groups {
        println!(
            "{:12} {:.3} -> {:.3} ({:+.1} pp){}",
            g.category.as_str(),
            g.r2_before,
            g.r2_after,
            g.delta_pp,
            if g.erased { " erased" } else { "" }
        );
    }
    Ok(())
}

fn write_trace(path: &Path, trace: &[crate::erasure::TraceStep]) -> Result<()> {
    write_csv(
        path,
        &["step", "fidelity", "hsic", "total"],
        trace.iter().map(|t| {
            vec![
                t.step.to_string(),
                format!("{:?}", t.fidelity),
                format!("{:?}", t.hsic),
                format!("{:?}", t.total),
            ]
        }),
    )
}

fn emit_error(kind: &str, message: &str, code: i32) {
    let v = serde_json::json!({"error": {"kind": kind, "message": message, "exit_code": code}});
    eprintln!("{v}");
}

fn dispatch(cli: &Cli, cfg: &mut RunConfig) -> Result<i32> {
    match &cli.command {
        Command::Synth(a) => synth(cfg, a).map(|_| 0),
        Command::Ingest(a) => ingest(a).map(|_| 0),
        Command::Discover(a) => discover(cfg, a),
        Command::Eval(a) => eval(cfg, a).map(|_| 0),
        Command::ProbeReport(a) => probe_report(cfg, a).map(|_| 0),
        Command::Erase(a) => erase(cfg, a).map(|_| 0),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            emit_error("usage", e.to_string().trim(), 2);
            return 2;
        }
    };
    let result = RunConfig::load(cli.config.as_deref()).and_then(|mut cfg| {
        if let Some(w) = cli.workers {
            cfg.workers = Some(w);
        }
        let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        with_workers(workers, || dispatch(&cli, &mut cfg))?
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let code = e.exit_code();
            emit_error(e.kind(), &e.to_string(), code);
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("eafd").chain(args.iter().copied()))
    }

    #[test]
    fn usage_and_missing_paths_are_config_errors() {
        assert_eq!(run_args(&["discover"]), 2);
        assert_eq!(run_args(&["eval", "--store", "/nonexistent", "--features", "f.json", "--out", "o"]), 2);
    }

    #[test]
    fn toml_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "workers = 3\n[discovery]\niterations = 2\n[erasure]\nlambda = 5.0\n[generator]\nkind = \"mock\"\nscript = \"mock.json\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(cfg.workers, Some(3));
        assert_eq!(cfg.discovery.iterations, 2);
        assert_eq!(cfg.discovery.budget, 40);
        assert_eq!(cfg.erasure.lambda, 5.0);
        assert_eq!(cfg.generator, Some(GeneratorSpec::Mock { script: dir.path().join("mock.json") }));
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p)), Err(Error::Config(_))));
    }

    #[test]
    fn http_generator_config() {
        let text = r#"
workers = 4
[discovery]
target = "target"
iterations = 5
[discovery.scoring]
folds = 5
seed = 0
[generator]
kind = "http"
endpoint = "http://localhost:8000/v1/chat/completions"
model = "m"
api_key_env = "EAFD_API_KEY"
[erasure]
lambda = 100.0
steps = 300
learning_rate = 0.02
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert!(matches!(cfg.generator, Some(GeneratorSpec::Http { ref model, .. }) if model == "m"));
        assert_eq!(cfg.discovery.scoring.folds, 5);
    }

    #[test]
    fn workers_do_not_enter_the_config_hash() {
        let a = RunConfig { workers: Some(1), ..Default::default() };
        let b = RunConfig { workers: Some(8), ..Default::default() };
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn erase_without_group_members_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
        assert_eq!(run_args(&["synth", "--out", &d("s"), "--n-users", "200"]), 0);
        std::fs::write(dir.path().join("cat.json"), r#"[{"name": "a", "dsl": "mean(amount)"}]"#).unwrap();
        let code = run_args(&["erase", "--store", &d("s"), "--catalog", &d("cat.json"), "--sensitive-group", "Time", "--out", &d("e")]);
        assert_eq!(code, 3);
    }

    #[test]
    fn empty_feature_list_makes_joint_equal_embeddings_only() {
        let dir = tempfile::tempdir().unwrap();
        let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
        assert_eq!(run_args(&["synth", "--out", &d("s"), "--n-users", "300"]), 0);
        std::fs::write(dir.path().join("f.json"), "[]").unwrap();
        assert_eq!(run_args(&["eval", "--store", &d("s"), "--features", &d("f.json"), "--out", &d("e")]), 0);
        let r: EvalReport = crate::report::read_json(&dir.path().join("e/eval.json")).unwrap();
        assert_eq!(r.joint, r.embeddings_only);
        assert!(r.features_only.is_none());
    }
}
