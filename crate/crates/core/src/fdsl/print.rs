use super::ast::*;

/// Number formatting that round-trips through the lexer: plain decimal when
/// short, exponent form otherwise.
pub(crate) fn fmt_num(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 24 {
        plain
    } else {
        format!("{v:?}")
    }
}

fn fmt_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn fmt_window(w: Window) -> String {
    match w {
        Window::All => "all".into(),
        Window::LastDays(k) => format!("last_days({})", fmt_num(k)),
        Window::LastEvents(k) => format!("last_events({k})"),
    }
}

fn pred_prec(p: &Predicate) -> u8 {
    match p {
        Predicate::Or(..) => 1,
        Predicate::And(..) => 2,
        _ => 3,
    }
}

fn print_pred(p: &Predicate, out: &mut String) {
    let wrap = |child: &Predicate, min: u8, out: &mut String| {
        if pred_prec(child) < min {
            out.push('(');
            print_pred(child, out);
            out.push(')');
        } else {
            print_pred(child, out);
        }
    };
    match p {
        Predicate::Cmp { field, op, value } => {
            out.push_str(field);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            match value {
                Literal::Str(s) => out.push_str(&fmt_str(s)),
                Literal::Num(v) => out.push_str(&fmt_num(*v)),
            }
        }
        Predicate::In { field, values } => {
            out.push_str(field);
            out.push_str(" in [");
            let items: Vec<String> = values.iter().map(|v| fmt_str(v)).collect();
            out.push_str(&items.join(", "));
            out.push(']');
        }
        Predicate::And(a, b) => {
            wrap(a, 2, out);
            out.push_str(" and ");
            wrap(b, 3, out);
        }
        Predicate::Or(a, b) => {
            wrap(a, 1, out);
            out.push_str(" or ");
            wrap(b, 2, out);
        }
        Predicate::Not(a) => {
            out.push_str("not ");
            wrap(a, 3, out);
        }
    }
}

fn print_agg(a: &Agg, out: &mut String) {
    out.push_str(a.func.name());
    out.push('(');
    let mut parts: Vec<String> = Vec::new();
    let mut head = String::new();
    if let Some(f) = &a.field {
        head.push_str(f);
    }
    if let Some(p) = &a.predicate {
        if !head.is_empty() {
            head.push(' ');
        }
        head.push_str("where ");
        print_pred(p, &mut head);
    }
    if !head.is_empty() {
        parts.push(head);
    }
    if let Some(h) = a.halflife_days {
        parts.push(format!("halflife_days={}", fmt_num(h)));
    }
    if let Some(l) = a.lag {
        parts.push(format!("lag={l}"));
    }
    if a.window != Window::All {
        parts.push(format!("window={}", fmt_window(a.window)));
    }
    out.push_str(&parts.join(", "));
    out.push(')');
}

fn expr_prec(e: &FeatureExpr) -> u8 {
    match e {
        FeatureExpr::Arith { op, .. } => op.precedence(),
        _ => 3,
    }
}

fn print_expr(e: &FeatureExpr, out: &mut String) {
    match e {
        FeatureExpr::Const(v) => out.push_str(&fmt_num(*v)),
        FeatureExpr::Agg(a) => print_agg(a, out),
        FeatureExpr::Unary { func, arg } => {
            out.push_str(func.name());
            out.push('(');
            print_expr(arg, out);
            if let UnaryFn::Clip { lo, hi } = func {
                out.push_str(&format!(", lo={}, hi={}", fmt_num(*lo), fmt_num(*hi)));
            }
            out.push(')');
        }
        FeatureExpr::Arith { op, lhs, rhs } => {
            let p = op.precedence();
            // Left-associative: the right child needs parentheses at equal precedence.
            let paren = |child: &FeatureExpr, strict: bool, out: &mut String| {
                let cp = expr_prec(child);
                if cp < p || (strict && cp == p) {
                    out.push('(');
                    print_expr(child, out);
                    out.push(')');
                } else {
                    print_expr(child, out);
                }
            };
            paren(lhs, false, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            paren(rhs, true, out);
        }
    }
}

/// Canonical text of an expression; this string is the feature's identity.
pub fn canonical_print(e: &FeatureExpr) -> String {
    let mut out = String::new();
    print_expr(e, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn canon(s: &str) -> String {
        canonical_print(&parse(s).unwrap())
    }

    #[test]
    fn normalizes_whitespace() {
        assert_eq!(canon("count( window = last_days( 30 ) )"), "count(window=last_days(30))");
    }

    #[test]
    fn parameter_order_normalized() {
        assert_eq!(
            canon("ewma(amount, window=last_events(5), halflife_days=3.5)"),
            "ewma(amount, halflife_days=3.5, window=last_events(5))"
        );
        assert_eq!(canon("count(window=all)"), "count()");
    }

    #[test]
    fn fixed_point() {
        for s in [
            r#"mean(amount where mcc == "5411")/mean(amount)"#,
            "a(1)".replace("a(1)", "1 - (2 - 3)").as_str(),
            r#"count(where (mcc == "a" or mcc == "b") and not (amount < 3 and amount > -1.5e-3))"#,
            "clip(log1p(sum(amount)), lo=-1, hi=1e30) * -2",
            "-mean(amount)",
        ] {
            let once = canon(s);
            assert_eq!(canon(&once), once);
        }
    }

    #[test]
    fn string_escapes() {
        let s = canon(r#"count(where mcc in ["a\"b", "c\\d"])"#);
        assert_eq!(s, r#"count(where mcc in ["a\"b", "c\\d"])"#);
    }

    #[test]
    fn associativity_preserved() {
        assert_eq!(canon("1 - (2 - 3)"), "1 - (2 - 3)");
        assert_eq!(canon("(1 - 2) - 3"), "1 - 2 - 3");
        assert_eq!(canon("(1 + 2) * 3"), "(1 + 2) * 3");
    }
}
