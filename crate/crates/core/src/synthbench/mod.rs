//! Synthetic event-sequence datasets with known latent factors.
//!
//! Each user has standard-normal latent factors `u`. Every factor drives one
//! observable statistic of the user's events (a category share, the amount
//! level, the event count, the gap rate, or the amount dispersion). A
//! synthetic encoder sees only the encoded factors `E`:
//! `z = A * tanh(P * u_E) + eps`, so any factor outside `E` is a blind spot.
//! Targets mix encoded and blind factors, and the manifest records which
//! probe features the scoring pipeline should call aligned, complementary or
//! uninformative.

mod leakage;

use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use leakage::{planted_leakage, LeakageBench, LeakageConfig};

use crate::dataset::{
    Column, Dataset, EmbeddingMatrix, EventSchema, EventSequence, FieldSpec, Target, TargetKind, SECONDS_PER_DAY,
};
use crate::fdsl::{canonical_print, parse, Category};
use crate::scoring::Verdict;
use crate::{Error, Result};

/// Name of the binary target.
pub const BINARY_TARGET: &str = "target";
/// Name of the regression target.
pub const REGRESSION_TARGET: &str = "spend";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_factors: usize,
    /// Indices of factors visible to the encoder.
    pub encoded: Vec<usize>,
    pub embedding_dim: usize,
    pub sigma_z: f64,
    pub mean_events: f64,
    pub n_categories: usize,
    /// Binary-target weights per factor; defaults to 0.8 on encoded factors,
    /// 1.2 on blind factors and 0 on the last blind factor (a decoy).
    pub label_weights: Option<Vec<f64>>,
    /// Regression-target weights; defaults to 0.5 on encoded factors and 1.0
    /// on blind factors with a nonzero label weight.
    pub regression_weights: Option<Vec<f64>>,
    pub regression_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 5000,
            n_factors: 6,
            encoded: vec![0, 1, 2],
            embedding_dim: 8,
            sigma_z: 0.02,
            mean_events: 60.0,
            n_categories: 12,
            label_weights: None,
            regression_weights: None,
            regression_noise: 0.5,
            seed: 0,
        }
    }
}

/// The statistic a latent factor drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Wiring {
    CategoryShare { category: usize },
    AmountLevel,
    EventRate,
    GapRate,
    AmountDispersion { category: usize },
}

/// Category shares driven by the first six factors; later factors take
/// the remaining categories in order.
const SHARE_CATEGORIES: [usize; 3] = [0, 7, 9];

fn wiring(n_factors: usize, n_categories: usize) -> Vec<Wiring> {
    let fixed = [
        Wiring::CategoryShare { category: 0 },
        Wiring::AmountLevel,
        Wiring::EventRate,
        Wiring::CategoryShare { category: 7 },
        Wiring::GapRate,
        Wiring::AmountDispersion { category: 9 },
    ];
    let mut spare = (0..n_categories).filter(|c| !SHARE_CATEGORIES.contains(c));
    (0..n_factors)
        .map(|i| match fixed.get(i) {
            Some(w) => *w,
            None => Wiring::CategoryShare {
                category: spare.next().expect("validated category count"),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dsl: String,
    pub expected: Verdict,
    /// Generating factor, if any.
    pub factor: Option<usize>,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub encoded: Vec<usize>,
    pub label_weights: Vec<f64>,
    pub regression_weights: Vec<f64>,
    pub wiring: Vec<Wiring>,
    pub features: Vec<ManifestEntry>,
}

impl GroundTruthManifest {
    pub fn with_verdict(&self, v: Verdict) -> Vec<&ManifestEntry> {
        self.features.iter().filter(|f| f.expected == v).collect()
    }
}

pub struct SynthBench {
    pub dataset: Dataset,
    pub manifest: GroundTruthManifest,
    /// Latent factors per user, in dataset order.
    pub latents: Vec<Vec<f64>>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_users < 10 {
            return bad("n_users must be at least 10".into());
        }
        if self.n_factors < 2 {
            return bad("n_factors must be at least 2".into());
        }
        if self.encoded.is_empty() || self.encoded.len() >= self.n_factors {
            return bad("encoded factors and blind factors must both be non-empty".into());
        }
        let mut e = self.encoded.clone();
        e.sort_unstable();
        e.dedup();
        if e.len() != self.encoded.len() || e.iter().any(|&i| i >= self.n_factors) {
            return bad("encoded factor indices must be distinct and below n_factors".into());
        }
        if self.embedding_dim < self.encoded.len() {
            return bad("embedding_dim must be at least the number of encoded factors".into());
        }
        if !(self.sigma_z >= 0.0) || !(self.regression_noise >= 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        if !(self.mean_events >= 3.0) {
            return bad("mean_events must be at least 3".into());
        }
        let needed = 10 + self.n_factors.saturating_sub(6);
        if self.n_categories < needed {
            return bad(format!("n_categories must be at least {needed}"));
        }
        for (name, w) in [("label_weights", &self.label_weights), ("regression_weights", &self.regression_weights)] {
            if let Some(w) = w {
                if w.len() != self.n_factors || w.iter().any(|v| !v.is_finite()) {
                    return bad(format!("{name} needs {} finite values", self.n_factors));
                }
            }
        }
        Ok(())
    }

    fn blind(&self) -> Vec<usize> {
        (0..self.n_factors).filter(|i| !self.encoded.contains(i)).collect()
    }

    fn label_weights(&self) -> Vec<f64> {
        if let Some(w) = &self.label_weights {
            return w.clone();
        }
        let blind = self.blind();
        (0..self.n_factors)
            .map(|i| {
                if self.encoded.contains(&i) {
                    0.8
                } else if blind.len() >= 2 && Some(&i) == blind.last() {
                    0.0
                } else {
                    1.2
                }
            })
            .collect()
    }

    fn regression_weights(&self, label: &[f64]) -> Vec<f64> {
        if let Some(w) = &self.regression_weights {
            return w.clone();
        }
        (0..self.n_factors)
            .map(|i| {
                if self.encoded.contains(&i) {
                    0.5
                } else if label[i] != 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Categories whose logit some factor moves.
fn driven_categories(wiring: &[Wiring]) -> Vec<usize> {
    wiring
        .iter()
        .filter_map(|w| match *w {
            Wiring::CategoryShare { category } | Wiring::AmountDispersion { category } => Some(category),
            _ => None,
        })
        .collect()
}

/// Share of category `c` among events outside the other driven categories.
/// Under a softmax, the plain share of `c` also moves with every other
/// driven logit; excluding those categories leaves a statistic of `c`'s own
/// factor only.
fn share(c: usize, wiring: &[Wiring]) -> String {
    let others: Vec<String> = driven_categories(wiring)
        .into_iter()
        .filter(|&k| k != c)
        .map(|k| format!("\"c{k}\""))
        .collect();
    let text = if others.is_empty() {
        format!("count(where mcc == \"c{c}\") / count()")
    } else {
        let set = others.join(", ");
        format!("count(where mcc == \"c{c}\") / count(where not mcc in [{set}])")
    };
    canonical_print(&parse(&text).expect("valid share expression"))
}

fn manifest(cfg: &SynthConfig, wiring: &[Wiring], label: &[f64], regression: &[f64]) -> GroundTruthManifest {
    let verdict = |i: usize| {
        if cfg.encoded.contains(&i) {
            Verdict::Aligned
        } else if label[i] != 0.0 {
            Verdict::Complementary
        } else {
            Verdict::Uninformative
        }
    };
    let mut features = Vec::new();
    let mut add = |dsl: String, i: Option<usize>, category: Category| {
        features.push(ManifestEntry {
            expected: i.map_or(Verdict::Uninformative, verdict),
            dsl,
            factor: i,
            category,
        })
    };
    for (i, w) in wiring.iter().enumerate() {
        match *w {
            Wiring::CategoryShare { category } => add(share(category, wiring), Some(i), Category::Categories),
            Wiring::AmountLevel => {
                add("mean(amount)".into(), Some(i), Category::Amount);
                add("median(amount)".into(), Some(i), Category::Amount);
            }
            Wiring::EventRate => add("count()".into(), Some(i), Category::Activity),
            Wiring::GapRate => {
                add("mean_interevent_days()".into(), Some(i), Category::Time);
                add("std_interevent_days()".into(), Some(i), Category::Time);
            }
            Wiring::AmountDispersion { category } => {
                add("std(amount) / mean(amount)".into(), Some(i), Category::Amount);
                add(share(category, wiring), Some(i), Category::Categories);
            }
        }
    }
    add("autocorr(amount, lag=1)".into(), None, Category::Amount);
    GroundTruthManifest {
        encoded: cfg.encoded.clone(),
        label_weights: label.to_vec(),
        regression_weights: regression.to_vec(),
        wiring: wiring.to_vec(),
        features,
    }
}

pub fn schema(n_categories: usize) -> EventSchema {
    let mut s = EventSchema::new("ts", vec![FieldSpec::categorical("mcc"), FieldSpec::numeric("amount")])
        .expect("static schema");
    s.vocabularies
        .insert("mcc".into(), (0..n_categories).map(|c| format!("c{c}")).collect());
    s
}

struct User {
    seq: EventSequence,
    u: Vec<f64>,
    noise: Vec<f64>,
    label_draw: f64,
    reg_noise: f64,
}

fn user(cfg: &SynthConfig, wiring: &[Wiring], idx: usize, id: String) -> User {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(idx as u64 + 1);
    let u: Vec<f64> = (0..cfg.n_factors).map(|_| rng.sample(StandardNormal)).collect();
    let mut logits = vec![0.0; cfg.n_categories];
    let mut rate_scale = 1.0;
    let mut gap_days = 1.5;
    let mut mu = 3.0;
    let mut sigma = 0.5;
    for (i, w) in wiring.iter().enumerate() {
        match *w {
            Wiring::CategoryShare { category } => logits[category] += u[i],
            Wiring::AmountLevel => mu += 0.5 * u[i],
            Wiring::EventRate => rate_scale = (0.3 * u[i]).exp(),
            Wiring::GapRate => gap_days *= (0.5 * u[i]).exp(),
            Wiring::AmountDispersion { category } => {
                sigma *= (0.35 * u[i]).exp();
                logits[category] += u[i];
            }
        }
    }
    let n_events = (Poisson::new(cfg.mean_events * rate_scale)
        .expect("positive rate")
        .sample(&mut rng) as usize)
        .max(3);
    let weights: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
    let cats = WeightedIndex::new(&weights).expect("positive weights");
    let gaps = Exp::new(1.0 / (gap_days * SECONDS_PER_DAY)).expect("positive rate");
    let amounts = LogNormal::new(mu, sigma).expect("valid lognormal");
    let mut t = 0.0;
    let mut ts = Vec::with_capacity(n_events);
    let mut mcc = Vec::with_capacity(n_events);
    let mut amount = Vec::with_capacity(n_events);
    for k in 0..n_events {
        if k > 0 {
            t += gaps.sample(&mut rng);
        }
        ts.push(t);
        mcc.push(cats.sample(&mut rng) as u32);
        amount.push(amounts.sample(&mut rng));
    }
    let noise = (0..cfg.embedding_dim).map(|_| rng.sample(StandardNormal)).collect();
    let label_draw = rng.gen::<f64>();
    let reg_noise = rng.sample(StandardNormal);
    User {
        seq: EventSequence {
            sequence_id: id,
            timestamps: ts,
            columns: vec![Column::Categorical(mcc), Column::Numeric(amount)],
        },
        u,
        noise,
        label_draw,
        reg_noise,
    }
}

/// Generates the dataset (with both targets and embeddings) and manifest.
/// Users are generated in parallel from per-user random streams.
pub fn generate(cfg: &SynthConfig) -> Result<SynthBench> {
    cfg.validate()?;
    let wiring = wiring(cfg.n_factors, cfg.n_categories);
    let label_w = cfg.label_weights();
    let reg_w = cfg.regression_weights(&label_w);

    // Shared encoder parameters come from stream 0.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.encoded.len();
    let p_scale: Vec<f64> = (0..k).map(|_| rng.gen_range(0.3..0.6)).collect();
    let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("valid normal");
    let a = Array2::from_shape_fn((cfg.embedding_dim, k), |(r, c)| {
        if r < k {
            if r == c {
                1.0
            } else {
                0.0
            }
        } else {
            normal.sample(&mut rng)
        }
    });

    let width = cfg.n_users.saturating_sub(1).to_string().len();
    let users: Vec<User> = (0..cfg.n_users)
        .into_par_iter()
        .map(|i| user(cfg, &wiring, i, format!("u{i:0width$}")))
        .collect();

    let mut z = Array2::zeros((cfg.n_users, cfg.embedding_dim));
    let mut y = Vec::with_capacity(cfg.n_users);
    let mut spend = Vec::with_capacity(cfg.n_users);
    for (r, us) in users.iter().enumerate() {
        let h: Vec<f64> = cfg
            .encoded
            .iter()
            .zip(&p_scale)
            .map(|(&f, s)| (s * us.u[f]).tanh())
            .collect();
        for j in 0..cfg.embedding_dim {
            let v: f64 = (0..k).map(|c| a[[j, c]] * h[c]).sum();
            z[[r, j]] = v + cfg.sigma_z * us.noise[j];
        }
        let logit: f64 = label_w.iter().zip(&us.u).map(|(w, u)| w * u).sum();
        y.push(if us.label_draw < 1.0 / (1.0 + (-logit).exp()) { 1.0 } else { 0.0 });
        let reg: f64 = reg_w.iter().zip(&us.u).map(|(w, u)| w * u).sum();
        spend.push(reg + cfg.regression_noise * us.reg_noise);
    }
    let latents = users.iter().map(|u| u.u.clone()).collect();
    let sequences = users.into_iter().map(|u| u.seq).collect();
    let dataset = Dataset::new(schema(cfg.n_categories), sequences)?
        .with_target(BINARY_TARGET, Target::new(TargetKind::Binary, y)?)?
        .with_target(REGRESSION_TARGET, Target::new(TargetKind::Regression, spend)?)?
        .with_embeddings(EmbeddingMatrix::new(z)?)?;
    Ok(SynthBench {
        dataset,
        manifest: manifest(cfg, &wiring, &label_w, &reg_w),
        latents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdsl::compile_text;

    fn small() -> SynthConfig {
        SynthConfig {
            n_users: 200,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.manifest, b.manifest);
        let other = generate(&SynthConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a.dataset, other.dataset);
    }

    #[test]
    fn default_manifest_wiring() {
        let m = generate(&small()).unwrap().manifest;
        assert_eq!(m.label_weights, vec![0.8, 0.8, 0.8, 1.2, 1.2, 0.0]);
        let names = |v| m.with_verdict(v).iter().map(|e| e.dsl.clone()).collect::<Vec<_>>();
        assert_eq!(
            names(Verdict::Aligned),
            vec![share(0, &m.wiring), "mean(amount)".into(), "median(amount)".into(), "count()".into()]
        );
        assert_eq!(
            names(Verdict::Complementary),
            vec![share(7, &m.wiring), "mean_interevent_days()".into(), "std_interevent_days()".into()]
        );
        assert_eq!(
            share(0, &m.wiring),
            r#"count(where mcc == "c0") / count(where not mcc in ["c7", "c9"])"#
        );
        assert_eq!(
            names(Verdict::Uninformative),
            vec!["std(amount) / mean(amount)".to_string(), share(9, &m.wiring), "autocorr(amount, lag=1)".into()]
        );
    }

    #[test]
    fn manifest_features_compile_and_are_canonical() {
        let b = generate(&small()).unwrap();
        for e in &b.manifest.features {
            let cf = compile_text(&e.dsl, b.dataset.schema()).unwrap();
            assert_eq!(cf.text, e.dsl);
            assert_eq!(cf.category, e.category, "{}", e.dsl);
        }
    }

    #[test]
    fn rejects_degenerate_factor_sets() {
        assert!(generate(&SynthConfig { encoded: vec![], ..small() }).is_err());
        assert!(generate(&SynthConfig { encoded: (0..6).collect(), ..small() }).is_err());
    }

    #[test]
    fn shapes() {
        let b = generate(&small()).unwrap();
        assert_eq!(b.dataset.len(), 200);
        assert_eq!(b.dataset.require_embeddings().unwrap().dim(), 8);
        assert!(b.dataset.sequences().iter().all(|s| s.len() >= 3));
        assert_eq!(b.dataset.labels().len(), 2);
    }
}
