//! Exact-split gradient-boosted regression trees.
//!
//! Trees grow level by level. Every feature is presorted once per fit, and
//! each level costs one pass over each sorted feature. Candidate thresholds
//! are the distinct observed values (`x <= threshold` goes left). Missing
//! values are sent to whichever side gives the larger gain. Ties keep the
//! earlier feature, then the lower threshold, then missing-left. An exact
//! copy of an earlier column therefore never wins a split.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// L2 penalty on leaf values.
pub const LAMBDA: f64 = 1.0;

static LOSS_INCREASES: AtomicUsize = AtomicUsize::new(0);

/// Number of boosting rounds, across all fits in this process, whose train
/// loss exceeded the previous round's. Always zero unless the safeguard in
/// [`fit`] is broken.
pub fn loss_increase_count() -> usize {
    LOSS_INCREASES.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub loss: Loss,
    pub seed: u64,
    pub feature_subsample: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            loss: Loss::Squared,
            seed: 0,
            feature_subsample: 1.0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must lie in (0, 1]".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::Config("feature_subsample must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_index(&self, x: &[&[f64]], row: usize) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    missing_left,
                    left,
                    right,
                } => {
                    let v = x[feature][row];
                    let go_left = if v.is_nan() { missing_left } else { v <= threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &[&[f64]], row: usize) -> f64 {
        match self.nodes[self.leaf_index(x, row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    fn scale(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let TreeNode::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

/// A fitted ensemble. Squared loss and binary logistic loss have one output;
/// multiclass logistic has one output per class, combined by softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub loss: Loss,
    pub n_classes: usize,
    pub n_features: usize,
    pub base: Vec<f64>,
    pub rounds: Vec<Vec<Tree>>,
    /// Total split gain per feature over kept trees.
    pub gains: Vec<f64>,
    /// Mean train loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn plus(self, o: Stats) -> Stats {
        Stats {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }

    fn minus(self, o: Stats) -> Stats {
        Stats {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }

    fn score(self) -> f64 {
        self.g * self.g / (self.h + LAMBDA)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
}

struct Presorted {
    order: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
    missing: Vec<Vec<u32>>,
}

fn presort(x: &[&[f64]]) -> Presorted {
    let mut out = Presorted {
        order: Vec::with_capacity(x.len()),
        values: Vec::with_capacity(x.len()),
        missing: Vec::with_capacity(x.len()),
    };
    for col in x {
        let mut ord: Vec<u32> = (0..col.len() as u32).filter(|&r| !col[r as usize].is_nan()).collect();
        ord.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
        out.values.push(ord.iter().map(|&r| col[r as usize]).collect());
        out.order.push(ord);
        out.missing.push((0..col.len() as u32).filter(|&r| col[r as usize].is_nan()).collect());
    }
    out
}

const DONE: u32 = u32::MAX;

struct Grower<'a> {
    x: &'a [&'a [f64]],
    sorted: &'a Presorted,
    min_leaf: usize,
}

impl Grower<'_> {
    /// Best split of each active node on feature `j`.
    fn scan(&self, j: usize, node_of: &[u32], gh: &[[f64; 2]], totals: &[Stats]) -> Vec<Option<Candidate>> {
        struct NodeScan {
            total: Stats,
            parent: f64,
            miss: Stats,
            left: Stats,
            last: f64,
            best_gain: f64,
            best: Option<Candidate>,
        }
        let min_leaf = self.min_leaf;
        let mut st: Vec<NodeScan> = totals
            .iter()
            .map(|&t| NodeScan {
                total: t,
                parent: t.score(),
                miss: Stats::default(),
                left: Stats::default(),
                last: f64::NAN,
                best_gain: 0.0,
                best: None,
            })
            .collect();
        for &r in &self.sorted.missing[j] {
            let k = node_of[r as usize];
            if k != DONE {
                let [g, h] = gh[r as usize];
                st[k as usize].miss.add(g, h);
            }
        }

        #[inline(always)]
        fn offer(s: &mut NodeScan, lhs: Stats, threshold: f64, missing_left: bool, j: usize, min_leaf: usize) {
            let rhs = s.total.minus(lhs);
            if lhs.n < min_leaf || rhs.n < min_leaf {
                return;
            }
            let gain = lhs.score() + rhs.score() - s.parent;
            if gain > s.best_gain {
                s.best_gain = gain;
                s.best = Some(Candidate {
                    gain,
                    feature: j,
                    threshold,
                    missing_left,
                });
            }
        }

        for (&r, &v) in self.sorted.order[j].iter().zip(&self.sorted.values[j]) {
            let r = r as usize;
            let k = node_of[r];
            if k == DONE {
                continue;
            }
            let s = &mut st[k as usize];
            if s.left.n > 0 && v > s.last {
                let (l, t) = (s.left, s.last);
                if s.miss.n > 0 {
                    offer(s, l.plus(s.miss), t, true, j, min_leaf);
                }
                offer(s, l, t, false, j, min_leaf);
            }
            let [g, h] = gh[r];
            s.left.add(g, h);
            s.last = v;
        }
        // All present values left, missing right.
        for s in &mut st {
            if s.left.n > 0 && s.miss.n > 0 {
                let (l, t) = (s.left, s.last);
                offer(s, l, t, false, j, min_leaf);
            }
        }
        st.into_iter().map(|s| s.best).collect()
    }

    /// Grows one tree on gradients `g`, hessians `h`; returns the tree, the
    /// leaf node index of every row, and per-feature gains.
    fn grow(&self, features: &[usize], gh: &[[f64; 2]], max_depth: usize, lr: f64) -> (Tree, Vec<u32>, Vec<(usize, f64)>) {
        let n = gh.len();
        let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
        let mut node_of = vec![0u32; n];
        let mut root = Stats::default();
        for &[g, h] in gh {
            root.add(g, h);
        }
        // (tree node index, stats) per active node.
        let mut active = vec![(0usize, root)];
        let mut leaf_of = vec![0u32; n];
        let mut gains = Vec::new();
        let leaf_value = |s: Stats| -lr * s.g / (s.h + LAMBDA);

        for _depth in 0..max_depth {
            if active.is_empty() {
                break;
            }
            let totals: Vec<Stats> = active.iter().map(|a| a.1).collect();
            let per_feature: Vec<Vec<Option<Candidate>>> = if features.len() > 1 {
                features
                    .par_iter()
                    .map(|&j| self.scan(j, &node_of, gh, &totals))
                    .collect()
            } else {
                features.iter().map(|&j| self.scan(j, &node_of, gh, &totals)).collect()
            };
            let mut chosen: Vec<Option<Candidate>> = vec![None; active.len()];
            for cands in &per_feature {
                for (k, c) in cands.iter().enumerate() {
                    if let Some(c) = c {
                        if chosen[k].is_none_or(|b| c.gain > b.gain) {
                            chosen[k] = Some(*c);
                        }
                    }
                }
            }
            // Child slot in the next level for each (node, side).
            let mut next = Vec::new();
            let mut child_slot = vec![(DONE, DONE); active.len()];
            for (k, &(idx, stats)) in active.iter().enumerate() {
                match chosen[k] {
                    Some(c) => {
                        let l = nodes.len();
                        nodes.push(TreeNode::Leaf { value: 0.0 });
                        nodes.push(TreeNode::Leaf { value: 0.0 });
                        nodes[idx] = TreeNode::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            missing_left: c.missing_left,
                            left: l,
                            right: l + 1,
                        };
                        gains.push((c.feature, c.gain));
                        child_slot[k] = (next.len() as u32, next.len() as u32 + 1);
                        next.push((l, Stats::default()));
                        next.push((l + 1, Stats::default()));
                    }
                    None => nodes[idx] = TreeNode::Leaf { value: leaf_value(stats) },
                }
            }
            // Per active node: split column, threshold, missing side, child slots.
            let route: Vec<Option<(&[f64], f64, bool, u32, u32)>> = chosen
                .iter()
                .zip(&child_slot)
                .map(|(c, &(l, r))| c.map(|c| (self.x[c.feature], c.threshold, c.missing_left, l, r)))
                .collect();
            for r in 0..n {
                let k = node_of[r];
                if k == DONE {
                    continue;
                }
                match route[k as usize] {
                    None => {
                        leaf_of[r] = active[k as usize].0 as u32;
                        node_of[r] = DONE;
                    }
                    Some((col, threshold, missing_left, l, rt)) => {
                        let v = col[r];
                        let go_left = if v.is_nan() { missing_left } else { v <= threshold };
                        let slot = if go_left { l } else { rt };
                        node_of[r] = slot;
                        let [g, h] = gh[r];
                        next[slot as usize].1.add(g, h);
                    }
                }
            }
            active = next;
        }
        for &(idx, stats) in &active {
            nodes[idx] = TreeNode::Leaf { value: leaf_value(stats) };
        }
        for r in 0..n {
            let k = node_of[r];
            if k != DONE {
                leaf_of[r] = active[k as usize].0 as u32;
            }
        }
        (Tree { nodes }, leaf_of, gains)
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Mean train loss for raw margins `f` (row-major, `outputs` per row).
fn mean_loss(loss: Loss, outputs: usize, f: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let total: f64 = match (loss, outputs) {
        (Loss::Squared, _) => f.iter().zip(y).map(|(p, t)| 0.5 * (p - t) * (p - t)).sum(),
        (Loss::Logistic, 1) => f
            .iter()
            .zip(y)
            .map(|(&m, &t)| {
                // log(1 + e^m) - t m, computed stably.
                let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
                softplus - t * m
            })
            .sum(),
        (Loss::Logistic, k) => (0..n)
            .map(|r| {
                let row = &f[r * k..(r + 1) * k];
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                lse - row[y[r] as usize]
            })
            .sum(),
    };
    total / n as f64
}

fn softmax_into(row: &[f64], out: &mut [f64]) {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(row) {
        *o = (v - mx).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

/// Fits with the class count inferred from `y` (at least 2 for logistic loss).
pub fn fit(config: &GbtConfig, x: &[&[f64]], y: &[f64]) -> Result<GbtModel> {
    let k = match config.loss {
        Loss::Squared => 1,
        Loss::Logistic => (y.iter().fold(0.0f64, |a, &b| a.max(b)) as usize + 1).max(2),
    };
    fit_classes(config, x, y, k)
}

/// Fits a model. For logistic loss `y` holds class indices `0..n_classes`.
pub fn fit_classes(config: &GbtConfig, x: &[&[f64]], y: &[f64], n_classes: usize) -> Result<GbtModel> {
    config.validate()?;
    let n = y.len();
    if x.iter().any(|c| c.len() != n) {
        return Err(Error::Probe("feature columns and target differ in length".into()));
    }
    if n < 2 * config.min_samples_leaf {
        return Err(Error::Probe(format!(
            "{n} rows is fewer than 2 x min_samples_leaf ({})",
            config.min_samples_leaf
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Probe("target contains non-finite values".into()));
    }
    let outputs = match config.loss {
        Loss::Squared => 1,
        Loss::Logistic => {
            if n_classes < 2 || y.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || v as usize >= n_classes) {
                return Err(Error::Probe(format!("logistic targets must be class indices below {n_classes}")));
            }
            if n_classes == 2 {
                1
            } else {
                n_classes
            }
        }
    };
    let n_classes = if config.loss == Loss::Squared { 1 } else { n_classes };

    let base: Vec<f64> = match (config.loss, outputs) {
        (Loss::Squared, _) => {
            if y.iter().all(|&v| v == y[0]) {
                vec![y[0]]
            } else {
                vec![y.iter().sum::<f64>() / n as f64]
            }
        }
        (Loss::Logistic, 1) => {
            let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            vec![(p / (1.0 - p)).ln()]
        }
        (Loss::Logistic, k) => {
            let mut counts = vec![0.0; k];
            for &v in y {
                counts[v as usize] += 1.0;
            }
            counts.iter().map(|c| (c / n as f64).max(1e-6).ln()).collect()
        }
    };
    let mut model = GbtModel {
        loss: config.loss,
        n_classes,
        n_features: x.len(),
        base: base.clone(),
        rounds: Vec::new(),
        gains: vec![0.0; x.len()],
        train_loss: Vec::new(),
    };
    let mut f: Vec<f64> = (0..n).flat_map(|_| base.iter().copied()).collect();
    let mut current = mean_loss(config.loss, outputs, &f, y);
    model.train_loss.push(current);
    let constant = config.loss == Loss::Squared && y.iter().all(|&v| v == y[0]);
    if constant || x.is_empty() {
        return Ok(model);
    }

    let sorted = presort(x);
    let grower = Grower {
        x,
        sorted: &sorted,
        min_leaf: config.min_samples_leaf,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = x.len();
    let n_sub = ((config.feature_subsample * p as f64).ceil() as usize).clamp(1, p);
    let mut gh = vec![[0.0f64; 2]; n];
    let mut probs = vec![0.0; outputs];
    let mut delta = vec![0.0; n * outputs];
    let mut trial = vec![0.0; n * outputs];

    for _round in 0..config.n_trees {
        let features: Vec<usize> = if n_sub == p {
            (0..p).collect()
        } else {
            let mut s = sample(&mut rng, p, n_sub).into_vec();
            s.sort_unstable();
            s
        };
        let mut trees = Vec::with_capacity(outputs);
        let mut round_gains = Vec::new();
        for c in 0..outputs {
            for (r, slot) in gh.iter_mut().enumerate() {
                *slot = match (config.loss, outputs) {
                    (Loss::Squared, _) => [f[r] - y[r], 1.0],
                    (Loss::Logistic, 1) => {
                        let pr = sigmoid(f[r]);
                        [pr - y[r], pr * (1.0 - pr)]
                    }
                    (Loss::Logistic, k) => {
                        softmax_into(&f[r * k..(r + 1) * k], &mut probs);
                        let pc = probs[c];
                        [pc - if y[r] as usize == c { 1.0 } else { 0.0 }, pc * (1.0 - pc)]
                    }
                };
            }
            let (tree, leaf_of, gains) = grower.grow(&features, &gh, config.max_depth, config.learning_rate);
            for r in 0..n {
                if let TreeNode::Leaf { value } = tree.nodes[leaf_of[r] as usize] {
                    delta[r * outputs + c] = value;
                }
            }
            trees.push(tree);
            round_gains.extend(gains);
        }

        // Keep the train loss non-increasing: shrink the round until it
        // does not hurt, dropping it entirely as a last resort.
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            for ((t, fv), d) in trial.iter_mut().zip(&f).zip(&delta) {
                *t = fv + factor * d;
            }
            let l = mean_loss(config.loss, outputs, &trial, y);
            if l <= current {
                accepted = Some(l);
                break;
            }
            factor *= 0.5;
        }
        if let Some(l) = accepted {
            if factor != 1.0 {
                for t in &mut trees {
                    t.scale(factor);
                }
            }
            std::mem::swap(&mut f, &mut trial);
            current = l;
            for (j, gain) in round_gains {
                model.gains[j] += gain;
            }
            model.rounds.push(trees);
        }
        let prev = *model.train_loss.last().expect("initial loss");
        if current > prev {
            LOSS_INCREASES.fetch_add(1, Ordering::Relaxed);
        }
        debug_assert!(current <= prev, "train loss increased: {prev} -> {current}");
        model.train_loss.push(current);
    }
    Ok(model)
}

impl GbtModel {
    fn outputs(&self) -> usize {
        self.base.len()
    }

    /// Raw margins, row-major with one value per output.
    pub fn predict_raw(&self, x: &[&[f64]]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::Probe(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        let n = x.first().map_or(0, |c| c.len());
        let k = self.outputs();
        Ok((0..n)
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut out = self.base.clone();
                for round in &self.rounds {
                    for (c, t) in round.iter().enumerate() {
                        out[c] += t.predict_row(x, r);
                    }
                }
                debug_assert_eq!(out.len(), k);
                out
            })
            .collect())
    }

    /// Regression values, or the class-1 probability for binary models.
    pub fn predict(&self, x: &[&[f64]]) -> Result<Vec<f64>> {
        let raw = self.predict_raw(x)?;
        match (self.loss, self.outputs()) {
            (Loss::Squared, _) => Ok(raw),
            (Loss::Logistic, 1) => Ok(raw.into_iter().map(sigmoid).collect()),
            _ => Err(Error::Probe("multiclass model: use predict_proba".into())),
        }
    }

    /// Class probabilities per row (classification models only).
    pub fn predict_proba(&self, x: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let raw = self.predict_raw(x)?;
        match (self.loss, self.outputs()) {
            (Loss::Squared, _) => Err(Error::Probe("regression model has no class probabilities".into())),
            (Loss::Logistic, 1) => Ok(raw
                .into_iter()
                .map(|m| {
                    let p = sigmoid(m);
                    vec![1.0 - p, p]
                })
                .collect()),
            (Loss::Logistic, k) => Ok(raw
                .chunks(k)
                .map(|row| {
                    let mut p = vec![0.0; k];
                    softmax_into(row, &mut p);
                    p
                })
                .collect()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<GbtModel> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn n_trees(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::metric_r2;
    use rand::Rng;

    fn cols(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|c| c.as_slice()).collect()
    }

    #[test]
    fn fits_a_line() {
        let x0: Vec<f64> = (0..500).map(|i| i as f64 / 50.0).collect();
        let y: Vec<f64> = x0.iter().map(|v| 3.0 * v).collect();
        let x = vec![x0];
        let m = fit(&GbtConfig::default(), &cols(&x), &y).unwrap();
        let pred = m.predict(&cols(&x)).unwrap();
        assert!(metric_r2(&y, &pred).unwrap() >= 0.99);
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constant_target_is_exact() {
        let x = vec![(0..100).map(|i| i as f64).collect::<Vec<_>>()];
        let y = vec![0.1 + 0.2; 100];
        let m = fit(&GbtConfig::default(), &cols(&x), &y).unwrap();
        assert!(m.rounds.is_empty());
        assert!(m.predict(&cols(&x)).unwrap().iter().all(|&p| p == y[0]));
    }

    #[test]
    fn too_few_rows() {
        let x = vec![vec![0.0; 39]];
        assert!(matches!(fit(&GbtConfig::default(), &cols(&x), &[0.0; 39]), Err(Error::Probe(_))));
    }

    #[test]
    fn deterministic_and_round_trips_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..3).map(|_| (0..300).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = (0..300).map(|r| (x[0][r] + x[1][r] > 1.0) as u8 as f64).collect();
        let cfg = GbtConfig::default().with_loss(Loss::Logistic);
        let a = fit(&cfg, &cols(&x), &y).unwrap();
        let b = fit(&cfg, &cols(&x), &y).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = GbtModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert!(a.train_loss.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn duplicate_column_is_inert() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..400).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..400).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..400).map(|r| a[r] * 2.0 + b[r] + rng.gen::<f64>() * 0.1).collect();
        let one = vec![a.clone(), b.clone()];
        let two = vec![a.clone(), b, a];
        let m1 = fit(&GbtConfig::default(), &cols(&one), &y).unwrap();
        let m2 = fit(&GbtConfig::default(), &cols(&two), &y).unwrap();
        assert_eq!(m1.train_loss, m2.train_loss);
        assert_eq!(m2.gains[2], 0.0);
    }

    #[test]
    fn missing_values_route() {
        // Signal lives entirely in missingness.
        let x0: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { f64::NAN } else { 1.0 }).collect();
        let y: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 5.0 } else { -5.0 }).collect();
        let x = vec![x0];
        let m = fit(&GbtConfig::default(), &cols(&x), &y).unwrap();
        let p = m.predict(&cols(&x)).unwrap();
        assert!(p[0] > 4.0 && p[1] < -4.0, "{} {}", p[0], p[1]);
    }

    #[test]
    fn multiclass_softmax() {
        let x0: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..300).map(|i| (i / 100) as f64).collect();
        let x = vec![x0];
        let cfg = GbtConfig::default().with_loss(Loss::Logistic);
        let m = fit(&cfg, &cols(&x), &y).unwrap();
        let p = m.predict_proba(&cols(&x)).unwrap();
        assert_eq!(p[0].len(), 3);
        assert!(p[50][0] > 0.9 && p[150][1] > 0.9 && p[250][2] > 0.9);
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn row_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..200).map(|_| (rng.gen::<f64>() * 50.0).round()).collect();
        let y: Vec<f64> = a.iter().map(|v| v.sin()).collect();
        let perm: Vec<usize> = sample(&mut rng, 200, 200).into_vec();
        let ap: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let q = vec![(0..60).map(|i| i as f64 - 5.0).collect::<Vec<_>>()];
        let m1 = fit(&GbtConfig::default(), &[&a], &y).unwrap();
        let m2 = fit(&GbtConfig::default(), &[&ap], &yp).unwrap();
        let p1 = m1.predict(&cols(&q)).unwrap();
        let p2 = m2.predict(&cols(&q)).unwrap();
        for (u, v) in p1.iter().zip(&p2) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
