//! Deliberately naive interpreter for feature expressions.
//!
//! Works on decoded event records (category strings, optional numbers) and
//! rebuilds every selection from scratch, so it shares no code path with the
//! columnar evaluator.

use std::collections::BTreeMap;

use eafd::dataset::{Column, EventSchema, EventSequence, MISSING_CATEGORY, SECONDS_PER_DAY};
use eafd::fdsl::{Agg, AggFn, ArithOp, CmpOp, FeatureExpr, Literal, Predicate, UnaryFn, Window};

#[derive(Debug, Clone)]
pub struct Event {
    pub t: f64,
    pub num: BTreeMap<String, Option<f64>>,
    pub cat: BTreeMap<String, Option<String>>,
}

pub fn decode(seq: &EventSequence, schema: &EventSchema) -> Vec<Event> {
    (0..seq.timestamps.len())
        .map(|i| {
            let mut e = Event {
                t: seq.timestamps[i],
                num: BTreeMap::new(),
                cat: BTreeMap::new(),
            };
            for (f, col) in schema.fields.iter().zip(&seq.columns) {
                match col {
                    Column::Numeric(v) => {
                        e.num.insert(f.name.clone(), if v[i].is_nan() { None } else { Some(v[i]) });
                    }
                    Column::Categorical(v) => {
                        let s = if v[i] == MISSING_CATEGORY {
                            None
                        } else {
                            Some(schema.vocabulary(&f.name)[v[i] as usize].clone())
                        };
                        e.cat.insert(f.name.clone(), s);
                    }
                }
            }
            e
        })
        .collect()
}

fn finite(v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

/// Kleene three-valued predicate; `None` is unknown.
fn holds(p: &Predicate, e: &Event) -> Option<bool> {
    match p {
        Predicate::Cmp { field, op, value } => match value {
            Literal::Num(c) => {
                let x = (*e.num.get(field)?)?;
                Some(match op {
                    CmpOp::Eq => x == *c,
                    CmpOp::Ne => x != *c,
                    CmpOp::Lt => x < *c,
                    CmpOp::Le => x <= *c,
                    CmpOp::Gt => x > *c,
                    CmpOp::Ge => x >= *c,
                })
            }
            Literal::Str(s) => {
                let x = e.cat.get(field)?.as_ref()?;
                match op {
                    CmpOp::Eq => Some(x == s),
                    CmpOp::Ne => Some(x != s),
                    _ => panic!("ordering on a category"),
                }
            }
        },
        Predicate::In { field, values } => {
            let x = e.cat.get(field)?.as_ref()?;
            Some(values.contains(x))
        }
        Predicate::And(a, b) => {
            let (a, b) = (holds(a, e), holds(b, e));
            if a == Some(false) || b == Some(false) {
                Some(false)
            } else if a == Some(true) && b == Some(true) {
                Some(true)
            } else {
                None
            }
        }
        Predicate::Or(a, b) => {
            let (a, b) = (holds(a, e), holds(b, e));
            if a == Some(true) || b == Some(true) {
                Some(true)
            } else if a == Some(false) && b == Some(false) {
                Some(false)
            } else {
                None
            }
        }
        Predicate::Not(a) => holds(a, e).map(|b| !b),
    }
}

fn select<'a>(agg: &Agg, events: &'a [Event]) -> Vec<&'a Event> {
    let n = events.len();
    let anchor = events.last().map(|e| e.t);
    let mut out = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let in_window = match agg.window {
            Window::All => true,
            Window::LastDays(k) => anchor.unwrap() - e.t <= k * SECONDS_PER_DAY,
            Window::LastEvents(k) => i + (k as usize) >= n,
        };
        let matches = match &agg.predicate {
            None => true,
            Some(p) => holds(p, e) == Some(true),
        };
        if in_window && matches {
            out.push(e);
        }
    }
    out
}

fn avg(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = avg(v);
    let mut s = 0.0;
    for x in v {
        s += (x - m) * (x - m);
    }
    (s / v.len() as f64).sqrt()
}

fn aggregate(agg: &Agg, events: &[Event]) -> Option<f64> {
    let sel = select(agg, events);
    let anchor = events.last().map(|e| e.t);
    let days = |a: f64, b: f64| (a - b) / SECONDS_PER_DAY;
    match agg.func {
        AggFn::Count => return Some(sel.len() as f64),
        AggFn::RecencyDays => return finite(days(anchor?, sel.last()?.t)),
        AggFn::SpanDays => {
            if sel.len() < 2 {
                return None;
            }
            return finite(days(sel[sel.len() - 1].t, sel[0].t));
        }
        AggFn::MeanIntereventDays | AggFn::StdIntereventDays | AggFn::Burstiness => {
            if sel.len() < 2 {
                return None;
            }
            let gaps: Vec<f64> = (1..sel.len()).map(|i| days(sel[i].t, sel[i - 1].t)).collect();
            let (mu, sd) = (avg(&gaps), pop_std(&gaps));
            return finite(match agg.func {
                AggFn::MeanIntereventDays => mu,
                AggFn::StdIntereventDays => sd,
                _ if sd + mu == 0.0 => 0.0,
                _ => (sd - mu) / (sd + mu),
            });
        }
        AggFn::Nunique | AggFn::Entropy | AggFn::Hhi => {
            let field = agg.field.as_ref().unwrap();
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            let mut total = 0usize;
            for e in &sel {
                if let Some(c) = &e.cat[field] {
                    *counts.entry(c.as_str()).or_default() += 1;
                    total += 1;
                }
            }
            if agg.func == AggFn::Nunique {
                return Some(counts.len() as f64);
            }
            if total == 0 {
                return None;
            }
            let mut v = 0.0;
            for &c in counts.values() {
                let p = c as f64 / total as f64;
                v += if agg.func == AggFn::Entropy { -p * p.ln() } else { p * p };
            }
            return finite(v);
        }
        _ => {}
    }

    let field = agg.field.as_ref().unwrap();
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for e in &sel {
        if let Some(x) = e.num[field] {
            xs.push(x);
            ts.push(e.t);
        }
    }
    if xs.is_empty() {
        return None;
    }
    let v = match agg.func {
        AggFn::Sum => xs.iter().sum(),
        AggFn::Mean => avg(&xs),
        AggFn::Std => pop_std(&xs),
        AggFn::Min => xs.iter().cloned().fold(f64::INFINITY, f64::min),
        AggFn::Max => xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        AggFn::Median => {
            let mut s = xs.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = s.len();
            if k % 2 == 1 {
                s[k / 2]
            } else {
                (s[k / 2 - 1] + s[k / 2]) / 2.0
            }
        }
        AggFn::Ewma => {
            let h = agg.halflife_days.unwrap();
            let (mut num, mut den) = (0.0, 0.0);
            for (x, t) in xs.iter().zip(&ts) {
                let w = 0.5f64.powf(days(anchor.unwrap(), *t) / h);
                num += w * x;
                den += w;
            }
            num / den
        }
        AggFn::Autocorr => {
            let lag = agg.lag.unwrap() as usize;
            if xs.len() <= lag {
                return None;
            }
            let a: Vec<f64> = xs[lag..].to_vec();
            let b: Vec<f64> = xs[..xs.len() - lag].to_vec();
            let (ma, mb) = (avg(&a), avg(&b));
            let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
            for i in 0..a.len() {
                cov += (a[i] - ma) * (b[i] - mb);
                va += (a[i] - ma) * (a[i] - ma);
                vb += (b[i] - mb) * (b[i] - mb);
            }
            if va == 0.0 || vb == 0.0 {
                return None;
            }
            cov / (va * vb).sqrt()
        }
        AggFn::TrendPerDay => {
            if xs.len() < 2 {
                return None;
            }
            let d: Vec<f64> = ts.iter().map(|t| t / SECONDS_PER_DAY).collect();
            let (md, mx) = (avg(&d), avg(&xs));
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for i in 0..d.len() {
                sxy += (d[i] - md) * (xs[i] - mx);
                sxx += (d[i] - md) * (d[i] - md);
            }
            if sxx == 0.0 {
                return None;
            }
            sxy / sxx
        }
        _ => unreachable!(),
    };
    finite(v)
}

/// Value of `expr` on one decoded sequence; `None` is missing.
pub fn evaluate(expr: &FeatureExpr, events: &[Event]) -> Option<f64> {
    match expr {
        FeatureExpr::Const(c) => Some(*c),
        FeatureExpr::Agg(a) => aggregate(a, events),
        FeatureExpr::Arith { op, lhs, rhs } => {
            let a = evaluate(lhs, events);
            let b = evaluate(rhs, events);
            let (a, b) = (a?, b?);
            finite(match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div => {
                    if b == 0.0 {
                        return None;
                    }
                    a / b
                }
            })
        }
        FeatureExpr::Unary { func, arg } => {
            let x = evaluate(arg, events)?;
            finite(match func {
                UnaryFn::Log1p => x.ln_1p(),
                UnaryFn::Abs => x.abs(),
                UnaryFn::Sqrt => x.sqrt(),
                UnaryFn::Clip { lo, hi } => x.max(*lo).min(*hi),
            })
        }
    }
}
