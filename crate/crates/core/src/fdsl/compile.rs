use serde::{Deserialize, Serialize};

use super::ast::*;
use super::diag::{DiagCode, Diagnostic};
use super::parser::{nearest, parse};
use super::print::canonical_print;
use super::tag::{tag_category, Category};
use crate::dataset::{EventSchema, FieldKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RPred {
    Num { field: usize, op: CmpOp, value: f64 },
    Cat { field: usize, negate: bool, id: u32 },
    InCat { field: usize, ids: Vec<u32> },
    And(Box<RPred>, Box<RPred>),
    Or(Box<RPred>, Box<RPred>),
    Not(Box<RPred>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RAgg {
    pub func: AggFn,
    pub field: Option<usize>,
    pub lag: u32,
    pub halflife_days: f64,
    pub window: Window,
    pub pred: Option<RPred>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Slot(usize),
    Const(f64),
    Arith(ArithOp, Box<Node>, Box<Node>),
    Unary(UnaryFn, Box<Node>),
}

/// A type-checked feature bound to a schema: canonical text, evaluation
/// program and category tag.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledFeature {
    pub text: String,
    pub expr: FeatureExpr,
    pub category: Category,
    pub(crate) aggs: Vec<RAgg>,
    pub(crate) root: Node,
}

/// Entry of a feature list file: `{name, dsl, category?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub dsl: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

struct Checker<'a> {
    schema: &'a EventSchema,
    source: Option<&'a str>,
    aggs: Vec<RAgg>,
}

impl Checker<'_> {
    /// Best-effort byte offset of `needle` in the source text.
    fn locate(&self, needle: &str) -> usize {
        self.source.and_then(|s| s.find(needle)).unwrap_or(0)
    }

    fn field(&self, name: &str) -> Result<(usize, FieldKind), Diagnostic> {
        match self.schema.field(name) {
            Some((i, spec)) => Ok((i, spec.kind)),
            None => {
                let mut msg = format!("unknown field `{name}`");
                if let Some(s) = nearest(name, self.schema.field_names()) {
                    msg.push_str(&format!("; did you mean `{s}`?"));
                }
                let fields: Vec<&str> = self.schema.field_names().collect();
                Err(Diagnostic::new(DiagCode::UnknownField, self.locate(name), msg)
                    .expecting(&fields))
            }
        }
    }

    fn category(&self, field: &str, value: &str) -> Result<u32, Diagnostic> {
        self.schema.category_id(field, value).ok_or_else(|| {
            let vocab = self.schema.vocabulary(field);
            let mut msg = format!("field `{field}` has no category \"{value}\"");
            if let Some(s) = nearest(value, vocab.iter().map(String::as_str)) {
                msg.push_str(&format!("; did you mean \"{s}\"?"));
            }
            Diagnostic::new(DiagCode::UnknownCategory, self.locate(value), msg)
        })
    }

    fn pred(&self, p: &Predicate) -> Result<RPred, Diagnostic> {
        Ok(match p {
            Predicate::Cmp { field, op, value } => {
                let (fi, kind) = self.field(field)?;
                match (kind, value) {
                    (FieldKind::Numeric, Literal::Num(v)) => RPred::Num {
                        field: fi,
                        op: *op,
                        value: *v,
                    },
                    (FieldKind::Categorical, Literal::Str(s)) => match op {
                        CmpOp::Eq | CmpOp::Ne => RPred::Cat {
                            field: fi,
                            negate: *op == CmpOp::Ne,
                            id: self.category(field, s)?,
                        },
                        _ => {
                            return Err(Diagnostic::new(
                                DiagCode::Type,
                                self.locate(field),
                                format!("categorical field `{field}` only supports ==, != and in"),
                            ))
                        }
                    },
                    (FieldKind::Numeric, Literal::Str(_)) => {
                        return Err(Diagnostic::new(
                            DiagCode::Type,
                            self.locate(field),
                            format!("numeric field `{field}` compared with a string"),
                        ))
                    }
                    (FieldKind::Categorical, Literal::Num(v)) => {
                        return Err(Diagnostic::new(
                            DiagCode::Type,
                            self.locate(field),
                            format!(
                                "categorical field `{field}` compared with a number; quote it as \"{v}\""
                            ),
                        ))
                    }
                }
            }
            Predicate::In { field, values } => {
                let (fi, kind) = self.field(field)?;
                if kind != FieldKind::Categorical {
                    return Err(Diagnostic::new(
                        DiagCode::Type,
                        self.locate(field),
                        format!("`in` requires a categorical field, `{field}` is numeric"),
                    ));
                }
                RPred::InCat {
                    field: fi,
                    ids: values
                        .iter()
                        .map(|v| self.category(field, v))
                        .collect::<Result<_, _>>()?,
                }
            }
            Predicate::And(a, b) => RPred::And(Box::new(self.pred(a)?), Box::new(self.pred(b)?)),
            Predicate::Or(a, b) => RPred::Or(Box::new(self.pred(a)?), Box::new(self.pred(b)?)),
            Predicate::Not(a) => RPred::Not(Box::new(self.pred(a)?)),
        })
    }

    fn agg(&mut self, a: &Agg) -> Result<usize, Diagnostic> {
        let name = a.func.name();
        let field = match (a.func.field_req(), &a.field) {
            (FieldReq::None, None) => None,
            (FieldReq::None, Some(f)) => {
                return Err(Diagnostic::new(
                    DiagCode::Type,
                    self.locate(f),
                    format!("`{name}` takes no field (got `{f}`); filter with `where` instead"),
                ))
            }
            (req, None) => {
                return Err(Diagnostic::new(
                    DiagCode::Type,
                    self.locate(name),
                    format!(
                        "`{name}` requires a {} field",
                        if req == FieldReq::Numeric { "numeric" } else { "categorical" }
                    ),
                ))
            }
            (req, Some(f)) => {
                let (fi, kind) = self.field(f)?;
                let ok = matches!(
                    (req, kind),
                    (FieldReq::Numeric, FieldKind::Numeric)
                        | (FieldReq::Categorical, FieldKind::Categorical)
                );
                if !ok {
                    return Err(Diagnostic::new(
                        DiagCode::Type,
                        self.locate(f),
                        format!(
                            "`{name}` takes a {} field but `{f}` is {}",
                            if req == FieldReq::Numeric { "numeric" } else { "categorical" },
                            if kind == FieldKind::Numeric { "numeric" } else { "categorical" }
                        ),
                    ));
                }
                Some(fi)
            }
        };
        match a.window {
            Window::LastDays(k) if !(k > 0.0 && k.is_finite()) => {
                return Err(Diagnostic::new(DiagCode::Type, self.locate("last_days"), "last_days window must be positive"))
            }
            Window::LastEvents(0) => {
                return Err(Diagnostic::new(DiagCode::Type, self.locate("last_events"), "last_events window must be positive"))
            }
            _ => {}
        }
        let lag = match (a.func, a.lag) {
            (AggFn::Autocorr, Some(l)) if l >= 1 => l,
            (AggFn::Autocorr, _) => {
                return Err(Diagnostic::new(DiagCode::Type, self.locate("lag"), "autocorr requires lag >= 1"))
            }
            (_, None) => 0,
            (_, Some(_)) => {
                return Err(Diagnostic::new(DiagCode::Type, self.locate("lag"), format!("`{name}` does not take `lag`")))
            }
        };
        let halflife_days = match (a.func, a.halflife_days) {
            (AggFn::Ewma, Some(h)) if h > 0.0 && h.is_finite() => h,
            (AggFn::Ewma, _) => {
                return Err(Diagnostic::new(DiagCode::Type, self.locate("halflife_days"), "ewma requires halflife_days > 0"))
            }
            (_, None) => 0.0,
            (_, Some(_)) => {
                return Err(Diagnostic::new(
                    DiagCode::Type,
                    self.locate("halflife_days"),
                    format!("`{name}` does not take `halflife_days`"),
                ))
            }
        };
        let pred = a.predicate.as_ref().map(|p| self.pred(p)).transpose()?;
        self.aggs.push(RAgg {
            func: a.func,
            field,
            lag,
            halflife_days,
            window: a.window,
            pred,
        });
        Ok(self.aggs.len() - 1)
    }

    fn node(&mut self, e: &FeatureExpr) -> Result<Node, Diagnostic> {
        Ok(match e {
            FeatureExpr::Agg(a) => Node::Slot(self.agg(a)?),
            FeatureExpr::Const(v) => {
                if !v.is_finite() {
                    return Err(Diagnostic::new(DiagCode::Type, 0, "constants must be finite"));
                }
                Node::Const(*v)
            }
            FeatureExpr::Arith { op, lhs, rhs } => {
                Node::Arith(*op, Box::new(self.node(lhs)?), Box::new(self.node(rhs)?))
            }
            FeatureExpr::Unary { func, arg } => {
                if let UnaryFn::Clip { lo, hi } = func {
                    if !(lo <= hi) {
                        return Err(Diagnostic::new(DiagCode::Type, self.locate("clip"), "clip requires lo <= hi"));
                    }
                }
                Node::Unary(*func, Box::new(self.node(arg)?))
            }
        })
    }
}

fn check(expr: FeatureExpr, schema: &EventSchema, source: Option<&str>) -> Result<CompiledFeature, Diagnostic> {
    let mut c = Checker {
        schema,
        source,
        aggs: Vec::new(),
    };
    let root = c.node(&expr)?;
    if c.aggs.is_empty() {
        return Err(Diagnostic::new(
            DiagCode::Type,
            0,
            "a feature must contain at least one aggregator",
        ));
    }
    Ok(CompiledFeature {
        text: canonical_print(&expr),
        category: tag_category(&expr, schema),
        aggs: c.aggs,
        root,
        expr,
    })
}

/// Type-checks an AST against a schema.
pub fn compile(expr: &FeatureExpr, schema: &EventSchema) -> Result<CompiledFeature, Diagnostic> {
    check(expr.clone(), schema, None)
}

/// Parses and type-checks feature text; diagnostics point into `text`.
pub fn compile_text(text: &str, schema: &EventSchema) -> Result<CompiledFeature, Diagnostic> {
    check(parse(text)?, schema, Some(text))
}

/// Compiles a feature list, honouring explicit category overrides.
pub fn compile_specs(specs: &[FeatureSpec], schema: &EventSchema) -> Result<Vec<CompiledFeature>, Diagnostic> {
    specs
        .iter()
        .map(|s| {
            let mut cf = compile_text(&s.dsl, schema)?;
            if let Some(c) = s.category {
                cf.category = c;
            }
            Ok(cf)
        })
        .collect()
}

impl CompiledFeature {
    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            name: self.text.clone(),
            dsl: self.text.clone(),
            category: Some(self.category),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::schema;

    #[test]
    fn unknown_field_suggests_nearest() {
        let d = compile_text("hhi(mccc)", &schema()).unwrap_err();
        assert_eq!(d.code, DiagCode::UnknownField);
        assert!(d.message.contains("did you mean `mcc`"), "{}", d.message);
        assert_eq!(d.offset, 4);
    }

    #[test]
    fn field_kinds_checked() {
        let s = schema();
        assert_eq!(compile_text("mean(mcc)", &s).unwrap_err().code, DiagCode::Type);
        assert_eq!(compile_text("hhi(amount)", &s).unwrap_err().code, DiagCode::Type);
        assert_eq!(compile_text("mean()", &s).unwrap_err().code, DiagCode::Type);
        assert_eq!(compile_text("count(amount)", &s).unwrap_err().code, DiagCode::Type);
        assert_eq!(
            compile_text("count(where mcc > \"5411\")", &s).unwrap_err().code,
            DiagCode::Type
        );
        assert_eq!(compile_text("count(where amount == \"x\")", &s).unwrap_err().code, DiagCode::Type);
        assert_eq!(
            compile_text("count(where mcc == \"9999\")", &s).unwrap_err().code,
            DiagCode::UnknownCategory
        );
        assert_eq!(compile_text("1 + 2", &s).unwrap_err().code, DiagCode::Type);
        assert!(compile_text("mean(amount where mcc in [\"5411\", \"5812\"]) / 2", &s).is_ok());
    }
}
