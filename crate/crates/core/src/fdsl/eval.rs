//! Feature evaluation.
//!
//! Each aggregator first narrows the sequence to its window (a suffix of the
//! events, anchored at the sequence's last event), then keeps the events
//! whose predicate is true under three-valued logic: a comparison against a
//! missing value is unknown and unknown events are dropped. Missing values of
//! the aggregated field itself are skipped. Every degenerate case and every
//! non-finite result is reported as missing (`NaN` in matrices).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ast::{AggFn, ArithOp, CmpOp, FieldReq, UnaryFn, Window};
use super::compile::{CompiledFeature, Node, RAgg, RPred};
use crate::dataset::{Dataset, EventSequence, MISSING_CATEGORY, SECONDS_PER_DAY};

/// Column-major feature values; `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, n_rows: usize) -> Self {
        assert_eq!(names.len(), columns.len(), "one name per column");
        assert!(columns.iter().all(|c| c.len() == n_rows), "ragged feature matrix");
        FeatureMatrix {
            names,
            columns,
            n_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn missing_mask(&self) -> Vec<Vec<bool>> {
        self.columns
            .iter()
            .map(|c| c.iter().map(|v| v.is_nan()).collect())
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Bitwise comparison, so missing cells compare equal.
    pub fn bit_identical(&self, other: &FeatureMatrix) -> bool {
        self.names == other.names
            && self.n_rows == other.n_rows
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

#[derive(Default)]
struct Scratch {
    sel: Vec<usize>,
    vals: Vec<f64>,
    times: Vec<f64>,
    cats: Vec<u32>,
}

fn missing(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

fn cmp(op: CmpOp, a: f64, b: f64) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    }
}

fn test(p: &RPred, seq: &EventSequence, i: usize) -> Option<bool> {
    match p {
        RPred::Num { field, op, value } => {
            let x = seq.numeric(*field).expect("compiled against schema")[i];
            (!x.is_nan()).then(|| cmp(*op, x, *value))
        }
        RPred::Cat { field, negate, id } => {
            let c = seq.categorical(*field).expect("compiled against schema")[i];
            (c != MISSING_CATEGORY).then_some((c == *id) != *negate)
        }
        RPred::InCat { field, ids } => {
            let c = seq.categorical(*field).expect("compiled against schema")[i];
            (c != MISSING_CATEGORY).then(|| ids.contains(&c))
        }
        RPred::And(a, b) => match (test(a, seq, i), test(b, seq, i)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        },
        RPred::Or(a, b) => match (test(a, seq, i), test(b, seq, i)) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        },
        RPred::Not(a) => test(a, seq, i).map(|b| !b),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn pstd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn agg_value(a: &RAgg, seq: &EventSequence, s: &mut Scratch) -> f64 {
    let n = seq.len();
    let ts = &seq.timestamps;
    let anchor = ts.last().copied().unwrap_or(f64::NAN);
    let start = match a.window {
        Window::All => 0,
        Window::LastDays(k) => {
            let limit = k * SECONDS_PER_DAY;
            ts.partition_point(|&t| anchor - t > limit)
        }
        Window::LastEvents(k) => n.saturating_sub(k as usize),
    };
    s.sel.clear();
    match &a.pred {
        None => s.sel.extend(start..n),
        Some(p) => s.sel.extend((start..n).filter(|&i| test(p, seq, i) == Some(true))),
    }
    let sel = &s.sel;

    match a.func.field_req() {
        FieldReq::None => {
            if a.func == AggFn::Count {
                return sel.len() as f64;
            }
            s.times.clear();
            s.times.extend(sel.iter().map(|&i| ts[i]));
            return temporal(a.func, &s.times, anchor, &mut s.vals);
        }
        FieldReq::Categorical => {
            let col = seq.categorical(a.field.expect("field")).expect("categorical");
            s.cats.clear();
            s.cats
                .extend(sel.iter().map(|&i| col[i]).filter(|&c| c != MISSING_CATEGORY));
            return categorical(a.func, &mut s.cats);
        }
        FieldReq::Numeric => {}
    }

    let col = seq.numeric(a.field.expect("field")).expect("numeric");
    s.vals.clear();
    s.times.clear();
    for &i in sel {
        if !col[i].is_nan() {
            s.vals.push(col[i]);
            s.times.push(ts[i]);
        }
    }
    let xs = &mut s.vals;
    if xs.is_empty() {
        return f64::NAN;
    }
    let v = match a.func {
        AggFn::Sum => xs.iter().sum(),
        AggFn::Mean => mean(xs),
        AggFn::Std => pstd(xs),
        AggFn::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
        AggFn::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggFn::Median => {
            xs.sort_by(f64::total_cmp);
            let m = xs.len() / 2;
            if xs.len() % 2 == 1 {
                xs[m]
            } else {
                (xs[m - 1] + xs[m]) / 2.0
            }
        }
        AggFn::Ewma => {
            let h = a.halflife_days;
            let mut num = 0.0;
            let mut den = 0.0;
            for (x, t) in xs.iter().zip(&s.times) {
                let w = (-(anchor - t) / SECONDS_PER_DAY / h).exp2();
                num += w * x;
                den += w;
            }
            num / den
        }
        AggFn::Autocorr => {
            let lag = a.lag as usize;
            if xs.len() <= lag {
                return f64::NAN;
            }
            let cur = &xs[lag..];
            let prev = &xs[..xs.len() - lag];
            let (mc, mp) = (mean(cur), mean(prev));
            let (mut cov, mut vc, mut vp) = (0.0, 0.0, 0.0);
            for (c, p) in cur.iter().zip(prev) {
                cov += (c - mc) * (p - mp);
                vc += (c - mc) * (c - mc);
                vp += (p - mp) * (p - mp);
            }
            if vc == 0.0 || vp == 0.0 {
                return f64::NAN;
            }
            cov / (vc * vp).sqrt()
        }
        AggFn::TrendPerDay => {
            if xs.len() < 2 {
                return f64::NAN;
            }
            for t in s.times.iter_mut() {
                *t /= SECONDS_PER_DAY;
            }
            let (mt, mx) = (mean(&s.times), mean(xs));
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (x, t) in xs.iter().zip(&s.times) {
                sxy += (t - mt) * (x - mx);
                sxx += (t - mt) * (t - mt);
            }
            if sxx == 0.0 {
                return f64::NAN;
            }
            sxy / sxx
        }
        other => unreachable!("{} is not a numeric aggregator", other.name()),
    };
    missing(v)
}

fn temporal(func: AggFn, ts: &[f64], anchor: f64, gaps: &mut Vec<f64>) -> f64 {
    let n = ts.len();
    match func {
        AggFn::RecencyDays => match ts.last() {
            Some(t) => missing((anchor - t) / SECONDS_PER_DAY),
            None => f64::NAN,
        },
        _ if n < 2 => f64::NAN,
        AggFn::SpanDays => missing((ts[n - 1] - ts[0]) / SECONDS_PER_DAY),
        _ => {
            gaps.clear();
            gaps.extend(ts.windows(2).map(|w| (w[1] - w[0]) / SECONDS_PER_DAY));
            let mu = mean(gaps);
            let sigma = pstd(gaps);
            missing(match func {
                AggFn::MeanIntereventDays => mu,
                AggFn::StdIntereventDays => sigma,
                AggFn::Burstiness => {
                    if sigma + mu == 0.0 {
                        0.0
                    } else {
                        (sigma - mu) / (sigma + mu)
                    }
                }
                other => unreachable!("{} is not temporal", other.name()),
            })
        }
    }
}

/// Category counts in ascending id order.
fn counts(cats: &mut [u32]) -> impl Iterator<Item = usize> + '_ {
    cats.sort_unstable();
    cats.chunk_by(|a, b| a == b).map(|run| run.len())
}

fn categorical(func: AggFn, cats: &mut [u32]) -> f64 {
    let n = cats.len();
    if func == AggFn::Nunique {
        return counts(cats).count() as f64;
    }
    if n == 0 {
        return f64::NAN;
    }
    let total = n as f64;
    let v = match func {
        AggFn::Entropy => counts(cats)
            .map(|c| {
                let p = c as f64 / total;
                -p * p.ln()
            })
            .sum::<f64>(),
        AggFn::Hhi => counts(cats)
            .map(|c| {
                let p = c as f64 / total;
                p * p
            })
            .sum::<f64>(),
        other => unreachable!("{} is not categorical", other.name()),
    };
    missing(v)
}

fn node_value(node: &Node, slots: &[f64]) -> f64 {
    match node {
        Node::Slot(i) => slots[*i],
        Node::Const(v) => *v,
        Node::Arith(op, l, r) => {
            let (a, b) = (node_value(l, slots), node_value(r, slots));
            if a.is_nan() || b.is_nan() {
                return f64::NAN;
            }
            missing(match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div if b == 0.0 => f64::NAN,
                ArithOp::Div => a / b,
            })
        }
        Node::Unary(f, x) => {
            let x = node_value(x, slots);
            if x.is_nan() {
                return f64::NAN;
            }
            missing(match f {
                UnaryFn::Log1p => x.ln_1p(),
                UnaryFn::Abs => x.abs(),
                UnaryFn::Sqrt => x.sqrt(),
                UnaryFn::Clip { lo, hi } => x.clamp(*lo, *hi),
            })
        }
    }
}

fn eval_raw(f: &CompiledFeature, seq: &EventSequence, s: &mut Scratch, slots: &mut Vec<f64>) -> f64 {
    slots.clear();
    for a in &f.aggs {
        let v = agg_value(a, seq, s);
        slots.push(v);
    }
    node_value(&f.root, slots)
}

/// Evaluates one feature on one sequence; `None` means missing.
pub fn evaluate_feature(feature: &CompiledFeature, seq: &EventSequence) -> Option<f64> {
    let v = eval_raw(feature, seq, &mut Scratch::default(), &mut Vec::new());
    (!v.is_nan()).then_some(v)
}

/// Evaluates every feature on every sequence of the dataset, in parallel over
/// sequences within the current rayon pool.
pub fn evaluate_batch(features: &[CompiledFeature], dataset: &Dataset) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = dataset
        .sequences()
        .par_iter()
        .map_init(
            || (Scratch::default(), Vec::new()),
            |(s, slots), seq| features.iter().map(|f| eval_raw(f, seq, s, slots)).collect(),
        )
        .collect();
    let n = rows.len();
    let columns = (0..features.len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    FeatureMatrix::new(features.iter().map(|f| f.text.clone()).collect(), columns, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::{schema, sequence};
    use crate::fdsl::compile_text;

    fn eval(text: &str, seq: &EventSequence) -> Option<f64> {
        evaluate_feature(&compile_text(text, &schema()).unwrap(), seq)
    }

    const DAY: f64 = SECONDS_PER_DAY;

    #[test]
    fn table_examples() {
        let s = sequence("a", &[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(eval("hhi(mcc)", &s), Some(0.5));
        let s = sequence("a", &[0.0, 15.0 * DAY], &[0, 0], &[1.0, 1.0]);
        assert_eq!(eval("span_days()", &s), Some(15.0));
        let s = sequence("a", &[0.0, 1.0, 2.0, 3.0, 4.0], &[0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(eval("autocorr(amount, lag=1)", &s), Some(1.0));
    }

    #[test]
    fn empty_selection_semantics() {
        let s = sequence("a", &[0.0, DAY], &[0, 0], &[1.0, 2.0]);
        let none = "where mcc == \"6011\"";
        assert_eq!(eval(&format!("count({none})"), &s), Some(0.0));
        assert_eq!(eval(&format!("nunique(mcc {none})"), &s), Some(0.0));
        for f in ["sum", "mean", "std", "min", "max", "median", "ewma"] {
            assert_eq!(eval(&format!("{f}(amount {none})"), &s), None, "{f}");
        }
        for f in ["entropy", "hhi"] {
            assert_eq!(eval(&format!("{f}(mcc {none})"), &s), None, "{f}");
        }
        assert_eq!(eval(&format!("recency_days({none})"), &s), None);
        assert_eq!(eval("span_days(window=last_events(1))", &s), None);
        assert_eq!(eval("mean_interevent_days(window=last_events(1))", &s), None);
        assert_eq!(eval("trend_per_day(amount, window=last_events(1))", &s), None);
        assert_eq!(eval("autocorr(amount, lag=2)", &s), None);
        let empty = sequence("e", &[], &[], &[]);
        assert_eq!(eval("count()", &empty), Some(0.0));
        assert_eq!(eval("recency_days()", &empty), None);
    }

    #[test]
    fn aggregator_values() {
        let s = sequence(
            "a",
            &[0.0, DAY, 3.0 * DAY, 7.0 * DAY],
            &[0, 1, 1, 2],
            &[2.0, 4.0, 4.0, 6.0],
        );
        assert_eq!(eval("sum(amount)", &s), Some(16.0));
        assert_eq!(eval("mean(amount)", &s), Some(4.0));
        assert_eq!(eval("std(amount)", &s), Some(2f64.sqrt()));
        assert_eq!(eval("median(amount)", &s), Some(4.0));
        assert_eq!(eval("min(amount) + max(amount)", &s), Some(8.0));
        assert_eq!(eval("nunique(mcc)", &s), Some(3.0));
        let h = -(0.25f64 * 0.25f64.ln() * 2.0 + 0.5 * 0.5f64.ln());
        assert!((eval("entropy(mcc)", &s).unwrap() - h).abs() < 1e-15);
        assert_eq!(eval("mean_interevent_days()", &s), Some(7.0 / 3.0));
        assert_eq!(eval("recency_days(where mcc == \"5812\")", &s), Some(4.0));
        assert_eq!(eval("count(window=last_days(4))", &s), Some(2.0));
        assert_eq!(eval("count(window=last_days(6))", &s), Some(3.0));
        assert_eq!(eval("count(window=last_events(3))", &s), Some(3.0));
        // Weights: 2^-1 for day 0, 1 for day 7 under halflife 7.
        let w = eval("ewma(amount where mcc in [\"5411\", \"6011\"], halflife_days=7)", &s).unwrap();
        assert!((w - (0.5 * 2.0 + 6.0) / 1.5).abs() < 1e-12);
        // Even gaps have zero dispersion.
        let even = sequence("b", &[0.0, DAY, 2.0 * DAY], &[0; 3], &[1.0, 3.0, 5.0]);
        assert_eq!(eval("burstiness()", &even), Some(-1.0));
        assert_eq!(eval("trend_per_day(amount)", &even), Some(2.0));
        let same = sequence("c", &[5.0, 5.0], &[0; 2], &[1.0, 3.0]);
        assert_eq!(eval("burstiness()", &same), Some(0.0));
        assert_eq!(eval("trend_per_day(amount)", &same), None);
        assert_eq!(eval("std(amount, window=last_events(1))", &s), Some(0.0));
    }

    #[test]
    fn arithmetic_and_missing() {
        let s = sequence("a", &[0.0, 1.0], &[0, 1], &[0.0, f64::NAN]);
        assert_eq!(eval("mean(amount)", &s), Some(0.0));
        assert_eq!(eval("count() / mean(amount)", &s), None);
        assert_eq!(eval("log1p(-1 * count())", &s), None);
        assert_eq!(eval("sqrt(-1 * count())", &s), None);
        assert_eq!(eval("clip(count(), lo=0, hi=1)", &s), Some(1.0));
        // Missing amount makes the comparison unknown, so the event is dropped
        // under both the predicate and its negation.
        assert_eq!(eval("count(where amount >= 0)", &s), Some(1.0));
        assert_eq!(eval("count(where not amount >= 0)", &s), Some(0.0));
        assert_eq!(eval("count(where amount >= 0 or mcc == \"5812\")", &s), Some(2.0));
    }

    #[test]
    fn batch_shape_and_names() {
        let ds = Dataset::new(
            schema(),
            vec![
                sequence("b", &[0.0], &[0], &[1.0]),
                sequence("a", &[0.0, 1.0], &[0, 1], &[1.0, 2.0]),
                sequence("c", &[], &[], &[]),
            ],
        )
        .unwrap();
        let fs: Vec<_> = ["count( )", "mean(amount)"]
            .iter()
            .map(|t| compile_text(t, &schema()).unwrap())
            .collect();
        let m = evaluate_batch(&fs, &ds);
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.names, vec!["count()", "mean(amount)"]);
        assert_eq!(m.columns[0], vec![2.0, 1.0, 0.0]);
        assert_eq!(m.missing_mask()[1], vec![false, false, true]);
    }
}
