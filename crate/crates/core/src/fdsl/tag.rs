use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ast::{Agg, AggFn, FeatureExpr, Window};
use crate::dataset::{EventSchema, FieldKind};

/// Coarse feature family used in distribution reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Amount,
    Categories,
    Time,
    Activity,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Amount,
        Category::Categories,
        Category::Time,
        Category::Activity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Amount => "Amount",
            Category::Categories => "Categories",
            Category::Time => "Time",
            Category::Activity => "Activity",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

fn is_time_agg(a: &Agg) -> bool {
    a.func.is_temporal()
        || matches!(a.func, AggFn::TrendPerDay | AggFn::Ewma)
        || (a.func == AggFn::Count && a.window != Window::All)
}

/// Assigns a category with precedence Amount > Categories > Time > Activity.
///
/// Fields named in predicates count as references. Unknown field names are
/// ignored.
pub fn tag_category(expr: &FeatureExpr, schema: &EventSchema) -> Category {
    let aggs = expr.aggs();
    let mut amount = false;
    let mut categorical = false;
    for a in &aggs {
        let pred_fields = a.predicate.iter().flat_map(|p| p.fields());
        for name in a.field.as_deref().into_iter().chain(pred_fields) {
            if let Some((_, spec)) = schema.field(name) {
                amount |= spec.is_amount();
                categorical |= spec.kind == FieldKind::Categorical;
            }
        }
    }
    if amount {
        Category::Amount
    } else if categorical {
        Category::Categories
    } else if !aggs.is_empty() && aggs.iter().all(|a| is_time_agg(a)) {
        Category::Time
    } else {
        Category::Activity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::schema;
    use crate::fdsl::parse;

    fn tag(text: &str) -> Category {
        tag_category(&parse(text).unwrap(), &schema())
    }

    #[test]
    fn rule_table() {
        assert_eq!(tag("mean(amount)"), Category::Amount);
        assert_eq!(tag("entropy(mcc)"), Category::Categories);
        assert_eq!(tag("count(window=last_days(30))"), Category::Time);
        assert_eq!(tag("count()"), Category::Activity);
        assert_eq!(tag("count(where mcc == \"5411\")"), Category::Categories);
        assert_eq!(tag("sum(amount where mcc == \"5411\")"), Category::Amount);
        assert_eq!(tag("span_days() / count()"), Category::Activity);
        assert_eq!(tag("burstiness() + recency_days()"), Category::Time);
    }

    #[test]
    fn parses_names() {
        assert_eq!("categories".parse::<Category>().unwrap(), Category::Categories);
        assert!("x".parse::<Category>().is_err());
    }
}
