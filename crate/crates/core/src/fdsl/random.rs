//! Random well-typed feature expressions, for round-trip harnesses and the
//! random-search baseline generator.

use rand::seq::SliceRandom;
use rand::Rng;

use super::ast::*;
use crate::dataset::{EventSchema, FieldKind};

fn number<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(-5i32..=50) as f64,
        1 => (rng.gen_range(-1000.0..1000.0f64) * 100.0).round() / 100.0,
        2 => rng.gen_range(-1e6..1e6),
        _ => rng.gen::<f64>() * 10f64.powi(rng.gen_range(-30..30)),
    }
}

fn positive<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..3) {
        0 => rng.gen_range(1..=365) as f64,
        1 => rng.gen_range(0.5..90.0),
        _ => 0.25 * rng.gen_range(1..=40) as f64,
    }
}

fn fields_of(schema: &EventSchema, kind: FieldKind) -> Vec<&str> {
    schema
        .fields
        .iter()
        .filter(|f| f.kind == kind)
        .filter(|f| kind == FieldKind::Numeric || !schema.vocabulary(&f.name).is_empty())
        .map(|f| f.name.as_str())
        .collect()
}

fn predicate<R: Rng>(rng: &mut R, schema: &EventSchema, depth: u32) -> Option<Predicate> {
    if depth > 0 && rng.gen_bool(0.35) {
        let a = predicate(rng, schema, depth - 1)?;
        return Some(match rng.gen_range(0..3) {
            0 => Predicate::Not(Box::new(a)),
            1 => Predicate::And(Box::new(a), Box::new(predicate(rng, schema, depth - 1)?)),
            _ => Predicate::Or(Box::new(a), Box::new(predicate(rng, schema, depth - 1)?)),
        });
    }
    let cats = fields_of(schema, FieldKind::Categorical);
    let nums = fields_of(schema, FieldKind::Numeric);
    let use_cat = !cats.is_empty() && (nums.is_empty() || rng.gen_bool(0.6));
    if use_cat {
        let field = *cats.choose(rng)?;
        let vocab = schema.vocabulary(field);
        if rng.gen_bool(0.3) {
            let k = rng.gen_range(1..=vocab.len().min(3));
            let values = vocab.choose_multiple(rng, k).cloned().collect();
            Some(Predicate::In {
                field: field.to_string(),
                values,
            })
        } else {
            Some(Predicate::Cmp {
                field: field.to_string(),
                op: if rng.gen_bool(0.7) { CmpOp::Eq } else { CmpOp::Ne },
                value: Literal::Str(vocab.choose(rng)?.clone()),
            })
        }
    } else {
        let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];
        Some(Predicate::Cmp {
            field: (*nums.choose(rng)?).to_string(),
            op: *ops.choose(rng)?,
            value: Literal::Num(number(rng)),
        })
    }
}

/// A random aggregator call valid under `schema`.
pub fn random_agg<R: Rng>(rng: &mut R, schema: &EventSchema) -> Agg {
    let cats = fields_of(schema, FieldKind::Categorical);
    let nums = fields_of(schema, FieldKind::Numeric);
    loop {
        let func = *AggFn::ALL.choose(rng).expect("roster");
        let mut agg = Agg::new(func);
        match func.field_req() {
            FieldReq::None => {}
            FieldReq::Numeric => match nums.choose(rng) {
                Some(f) => agg.field = Some(f.to_string()),
                None => continue,
            },
            FieldReq::Categorical => match cats.choose(rng) {
                Some(f) => agg.field = Some(f.to_string()),
                None => continue,
            },
        }
        if agg.lag.is_some() {
            agg.lag = Some(rng.gen_range(1..=4));
        }
        if agg.halflife_days.is_some() && rng.gen_bool(0.5) {
            agg.halflife_days = Some(positive(rng));
        }
        agg.window = match rng.gen_range(0..4) {
            0 => Window::LastDays(positive(rng)),
            1 => Window::LastEvents(rng.gen_range(1..=100)),
            _ => Window::All,
        };
        if rng.gen_bool(0.4) {
            agg.predicate = predicate(rng, schema, 2);
        }
        return agg;
    }
}

/// A random expression tree of at most `depth` combinator levels.
pub fn random_expr<R: Rng>(rng: &mut R, schema: &EventSchema, depth: u32) -> FeatureExpr {
    if depth == 0 || rng.gen_bool(0.4) {
        return FeatureExpr::Agg(random_agg(rng, schema));
    }
    match rng.gen_range(0..5) {
        0 => {
            let func = match rng.gen_range(0..4) {
                0 => UnaryFn::Log1p,
                1 => UnaryFn::Abs,
                2 => UnaryFn::Sqrt,
                _ => {
                    let (a, b) = (number(rng), number(rng));
                    UnaryFn::Clip {
                        lo: a.min(b),
                        hi: a.max(b),
                    }
                }
            };
            FeatureExpr::Unary {
                func,
                arg: Box::new(random_expr(rng, schema, depth - 1)),
            }
        }
        _ => {
            let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]
                .choose(rng)
                .expect("ops");
            let lhs = random_expr(rng, schema, depth - 1);
            let rhs = if rng.gen_bool(0.2) {
                FeatureExpr::Const(number(rng))
            } else {
                random_expr(rng, schema, depth - 1)
            };
            if rng.gen_bool(0.15) {
                FeatureExpr::arith(op, FeatureExpr::Const(number(rng)), lhs)
            } else {
                FeatureExpr::arith(op, lhs, rhs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::schema;
    use crate::fdsl::{canonical_print, compile, parse};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_ten_thousand() {
        let s = schema();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let e = random_expr(&mut rng, &s, 3);
            let text = canonical_print(&e);
            let back = parse(&text).unwrap_or_else(|d| panic!("{text}: {d}"));
            assert_eq!(back, e, "{text}");
            assert_eq!(canonical_print(&back), text);
            compile(&e, &s).unwrap_or_else(|d| panic!("{text}: {d}"));
        }
    }
}
