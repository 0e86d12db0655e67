use std::fmt;

/// Aggregator roster. Each aggregator reduces the events selected by its
/// window and predicate to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFn {
    Count,
    Sum,
    Mean,
    Std,
    Min,
    Max,
    Median,
    Nunique,
    Entropy,
    Hhi,
    SpanDays,
    RecencyDays,
    MeanIntereventDays,
    StdIntereventDays,
    Burstiness,
    Ewma,
    Autocorr,
    TrendPerDay,
}

/// What kind of field an aggregator takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldReq {
    None,
    Numeric,
    Categorical,
}

impl AggFn {
    pub const ALL: [AggFn; 18] = [
        AggFn::Count,
        AggFn::Sum,
        AggFn::Mean,
        AggFn::Std,
        AggFn::Min,
        AggFn::Max,
        AggFn::Median,
        AggFn::Nunique,
        AggFn::Entropy,
        AggFn::Hhi,
        AggFn::SpanDays,
        AggFn::RecencyDays,
        AggFn::MeanIntereventDays,
        AggFn::StdIntereventDays,
        AggFn::Burstiness,
        AggFn::Ewma,
        AggFn::Autocorr,
        AggFn::TrendPerDay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Mean => "mean",
            AggFn::Std => "std",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Median => "median",
            AggFn::Nunique => "nunique",
            AggFn::Entropy => "entropy",
            AggFn::Hhi => "hhi",
            AggFn::SpanDays => "span_days",
            AggFn::RecencyDays => "recency_days",
            AggFn::MeanIntereventDays => "mean_interevent_days",
            AggFn::StdIntereventDays => "std_interevent_days",
            AggFn::Burstiness => "burstiness",
            AggFn::Ewma => "ewma",
            AggFn::Autocorr => "autocorr",
            AggFn::TrendPerDay => "trend_per_day",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFn> {
        AggFn::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn field_req(self) -> FieldReq {
        match self {
            AggFn::Count
            | AggFn::SpanDays
            | AggFn::RecencyDays
            | AggFn::MeanIntereventDays
            | AggFn::StdIntereventDays
            | AggFn::Burstiness => FieldReq::None,
            AggFn::Nunique | AggFn::Entropy | AggFn::Hhi => FieldReq::Categorical,
            _ => FieldReq::Numeric,
        }
    }

    /// Aggregators that only look at event times.
    pub fn is_temporal(self) -> bool {
        matches!(
            self,
            AggFn::SpanDays
                | AggFn::RecencyDays
                | AggFn::MeanIntereventDays
                | AggFn::StdIntereventDays
                | AggFn::Burstiness
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    All,
    LastDays(f64),
    LastEvents(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Str(String),
    Num(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Cmp {
        field: String,
        op: CmpOp,
        value: Literal,
    },
    In {
        field: String,
        values: Vec<String>,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

/// One aggregator application. `lag` is set for `autocorr` and
/// `halflife_days` for `ewma`; both are `None` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Agg {
    pub func: AggFn,
    pub field: Option<String>,
    pub lag: Option<u32>,
    pub halflife_days: Option<f64>,
    pub window: Window,
    pub predicate: Option<Predicate>,
}

impl Agg {
    pub fn new(func: AggFn) -> Self {
        Agg {
            func,
            field: None,
            lag: (func == AggFn::Autocorr).then_some(DEFAULT_LAG),
            halflife_days: (func == AggFn::Ewma).then_some(DEFAULT_HALFLIFE_DAYS),
            window: Window::All,
            predicate: None,
        }
    }

    pub fn on(mut self, field: &str) -> Self {
        self.field = Some(field.to_string());
        self
    }
}

pub const DEFAULT_LAG: u32 = 1;
pub const DEFAULT_HALFLIFE_DAYS: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Log1p,
    Abs,
    Sqrt,
    Clip { lo: f64, hi: f64 },
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Log1p => "log1p",
            UnaryFn::Abs => "abs",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Clip { .. } => "clip",
        }
    }
}

/// Typed AST of one candidate feature; evaluates to one scalar per sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExpr {
    Agg(Agg),
    Arith {
        op: ArithOp,
        lhs: Box<FeatureExpr>,
        rhs: Box<FeatureExpr>,
    },
    Unary {
        func: UnaryFn,
        arg: Box<FeatureExpr>,
    },
    Const(f64),
}

impl FeatureExpr {
    pub fn arith(op: ArithOp, lhs: FeatureExpr, rhs: FeatureExpr) -> Self {
        FeatureExpr::Arith {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Visits every aggregator in left-to-right order.
    pub fn aggs(&self) -> Vec<&Agg> {
        fn walk<'a>(e: &'a FeatureExpr, out: &mut Vec<&'a Agg>) {
            match e {
                FeatureExpr::Agg(a) => out.push(a),
                FeatureExpr::Arith { lhs, rhs, .. } => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
                FeatureExpr::Unary { arg, .. } => walk(arg, out),
                FeatureExpr::Const(_) => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

impl Predicate {
    pub fn fields(&self) -> Vec<&str> {
        match self {
            Predicate::Cmp { field, .. } | Predicate::In { field, .. } => vec![field.as_str()],
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                let mut v = a.fields();
                v.extend(b.fields());
                v
            }
            Predicate::Not(a) => a.fields(),
        }
    }
}

impl fmt::Display for FeatureExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print::canonical_print(self))
    }
}
