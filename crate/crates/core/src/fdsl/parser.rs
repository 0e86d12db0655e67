//! Recursive-descent parser for the feature language.
//!
//! ```text
//! expr      = term { ("+" | "-") term } ;
//! term      = factor { ("*" | "/") factor } ;
//! factor    = NUMBER | "-" factor | "(" expr ")" | call ;
//! call      = unary_fn "(" expr [ "," "lo" "=" NUMBER "," "hi" "=" NUMBER ] ")"
//!           | AGG "(" [ FIELD ] [ "where" pred ] { "," param } ")" ;
//! param     = "window" "=" window | "lag" "=" INT | "halflife_days" "=" NUMBER ;
//! window    = "all" | "last_days" "(" NUMBER ")" | "last_events" "(" INT ")" ;
//! pred      = conj { "or" conj } ;
//! conj      = neg { "and" neg } ;
//! neg       = "not" neg | "(" pred ")" | FIELD CMP literal | FIELD "in" "[" STRING { "," STRING } "]" ;
//! literal   = STRING | [ "-" ] NUMBER ;
//! ```

use super::ast::*;
use super::diag::{DiagCode, Diagnostic};
use super::lexer::{lex, Tok, Token};

const KEYWORDS: [&str; 5] = ["where", "and", "or", "not", "in"];
const UNARY_FNS: [&str; 4] = ["log1p", "abs", "sqrt", "clip"];

/// Parses feature text into an AST. Field names are not checked here; see
/// [`super::compile`].
pub fn parse(text: &str) -> Result<FeatureExpr, Diagnostic> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    p.expect(Tok::Eof, &["operator", "end of input"])?;
    Ok(e)
}

/// Closest name within edit distance 2, for "did you mean" hints.
pub(crate) fn nearest<'a>(name: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(name, c), c))
        .filter(|(d, _)| *d <= 2)
        .min_by_key(|(d, c)| (*d, *c))
        .map(|(_, c)| c)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)].tok
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].offset
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> Diagnostic {
        Diagnostic::new(
            DiagCode::Syntax,
            self.offset(),
            format!("unexpected {}", self.peek().describe()),
        )
        .expecting(expected)
    }

    fn expect(&mut self, tok: Tok, expected: &[&str]) -> Result<(), Diagnostic> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expr(&mut self) -> Result<FeatureExpr, Diagnostic> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = FeatureExpr::arith(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<FeatureExpr, Diagnostic> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = FeatureExpr::arith(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<FeatureExpr, Diagnostic> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(FeatureExpr::Const(v))
            }
            Tok::Minus => {
                self.bump();
                if let Tok::Num(v) = *self.peek() {
                    self.bump();
                    return Ok(FeatureExpr::Const(-v));
                }
                let inner = self.factor()?;
                Ok(FeatureExpr::arith(ArithOp::Mul, FeatureExpr::Const(-1.0), inner))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, &["`)`", "operator"])?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.bump();
                if *self.peek() != Tok::LParen {
                    return Err(Diagnostic::new(
                        DiagCode::Syntax,
                        at,
                        format!("bare identifier `{name}`; fields must be wrapped in an aggregator such as `mean({name})`"),
                    )
                    .expecting(&["`(`"]));
                }
                self.bump();
                if UNARY_FNS.contains(&name.as_str()) {
                    self.unary_call(&name, at)
                } else if let Some(func) = AggFn::from_name(&name) {
                    self.agg_call(func)
                } else {
                    let mut msg = format!("unknown aggregator `{name}`");
                    let names = AggFn::ALL.iter().map(|a| a.name()).chain(UNARY_FNS);
                    if let Some(s) = nearest(&name, names) {
                        msg.push_str(&format!("; did you mean `{s}`?"));
                    }
                    Err(Diagnostic::new(DiagCode::UnknownAggregator, at, msg))
                }
            }
            _ => Err(self.unexpected(&["number", "`(`", "aggregator"])),
        }
    }

    fn signed_number(&mut self) -> Result<f64, Diagnostic> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected(&["number"])),
        }
    }

    fn unary_call(&mut self, name: &str, at: usize) -> Result<FeatureExpr, Diagnostic> {
        let arg = self.expr()?;
        let func = match name {
            "log1p" => UnaryFn::Log1p,
            "abs" => UnaryFn::Abs,
            "sqrt" => UnaryFn::Sqrt,
            _ => {
                let (mut lo, mut hi) = (None, None);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    let key_at = self.offset();
                    let key = match self.bump() {
                        Tok::Ident(k) if k == "lo" || k == "hi" => k,
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected(&["`lo`", "`hi`"]));
                        }
                    };
                    self.expect(Tok::Assign, &["`=`"])?;
                    let v = self.signed_number()?;
                    let slot = if key == "lo" { &mut lo } else { &mut hi };
                    if slot.replace(v).is_some() {
                        return Err(Diagnostic::new(
                            DiagCode::Syntax,
                            key_at,
                            format!("parameter `{key}` given twice"),
                        ));
                    }
                }
                match (lo, hi) {
                    (Some(lo), Some(hi)) if lo <= hi => UnaryFn::Clip { lo, hi },
                    (Some(_), Some(_)) => {
                        return Err(Diagnostic::new(DiagCode::Type, at, "clip requires lo <= hi"))
                    }
                    _ => {
                        return Err(Diagnostic::new(
                            DiagCode::Syntax,
                            self.offset(),
                            "clip requires both `lo=` and `hi=`",
                        )
                        .expecting(&["`,`"]))
                    }
                }
            }
        };
        self.expect(Tok::RParen, &["`)`", "operator"])?;
        Ok(FeatureExpr::Unary {
            func,
            arg: Box::new(arg),
        })
    }

    fn agg_call(&mut self, func: AggFn) -> Result<FeatureExpr, Diagnostic> {
        let mut agg = Agg {
            func,
            field: None,
            lag: None,
            halflife_days: None,
            window: Window::All,
            predicate: None,
        };
        let mut window_set = false;
        let mut need_comma = false;
        if let Tok::Ident(name) = self.peek().clone() {
            if !KEYWORDS.contains(&name.as_str()) && *self.peek2() != Tok::Assign {
                self.bump();
                agg.field = Some(name);
                need_comma = true;
            }
        }
        if self.is_kw("where") {
            self.bump();
            agg.predicate = Some(self.pred()?);
            need_comma = true;
        }
        loop {
            match self.peek() {
                Tok::RParen => {
                    self.bump();
                    break;
                }
                Tok::Comma if need_comma => {
                    self.bump();
                }
                Tok::Ident(_) if !need_comma => {}
                _ if need_comma => return Err(self.unexpected(&["`,`", "`)`"])),
                _ => return Err(self.unexpected(&["field", "`where`", "parameter", "`)`"])),
            }
            need_comma = true;
            let key_at = self.offset();
            let key = match self.bump() {
                Tok::Ident(k) => k,
                _ => {
                    self.pos -= 1;
                    return Err(self.unexpected(&["parameter name"]));
                }
            };
            self.expect(Tok::Assign, &["`=`"])?;
            let dup = || {
                Diagnostic::new(DiagCode::Syntax, key_at, format!("parameter `{key}` given twice"))
            };
            let not_accepted = |key: &str| {
                Diagnostic::new(
                    DiagCode::Type,
                    key_at,
                    format!("`{}` does not take parameter `{key}`", func.name()),
                )
            };
            match key.as_str() {
                "window" => {
                    if window_set {
                        return Err(dup());
                    }
                    window_set = true;
                    agg.window = self.window()?;
                }
                "lag" => {
                    if func != AggFn::Autocorr {
                        return Err(not_accepted("lag"));
                    }
                    if agg.lag.is_some() {
                        return Err(dup());
                    }
                    let v = self.signed_number()?;
                    if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                        return Err(Diagnostic::new(
                            DiagCode::Type,
                            key_at,
                            format!("lag must be an integer >= 1, got {v}"),
                        ));
                    }
                    agg.lag = Some(v as u32);
                }
                "halflife_days" => {
                    if func != AggFn::Ewma {
                        return Err(not_accepted("halflife_days"));
                    }
                    if agg.halflife_days.is_some() {
                        return Err(dup());
                    }
                    let v = self.signed_number()?;
                    if v <= 0.0 {
                        return Err(Diagnostic::new(
                            DiagCode::Type,
                            key_at,
                            format!("halflife_days must be positive, got {v}"),
                        ));
                    }
                    agg.halflife_days = Some(v);
                }
                other => {
                    let mut msg = format!("unknown parameter `{other}`");
                    if let Some(s) = nearest(other, ["window", "lag", "halflife_days"]) {
                        msg.push_str(&format!("; did you mean `{s}`?"));
                    }
                    return Err(Diagnostic::new(DiagCode::Syntax, key_at, msg)
                        .expecting(&["window", "lag", "halflife_days"]));
                }
            }
        }
        if func == AggFn::Autocorr && agg.lag.is_none() {
            agg.lag = Some(DEFAULT_LAG);
        }
        if func == AggFn::Ewma && agg.halflife_days.is_none() {
            agg.halflife_days = Some(DEFAULT_HALFLIFE_DAYS);
        }
        Ok(FeatureExpr::Agg(agg))
    }

    fn window(&mut self) -> Result<Window, Diagnostic> {
        let at = self.offset();
        let kind = match self.peek() {
            Tok::Ident(k) => k.clone(),
            _ => return Err(self.unexpected(&["all", "last_days", "last_events"])),
        };
        self.bump();
        if kind == "all" {
            return Ok(Window::All);
        }
        if kind != "last_days" && kind != "last_events" {
            let mut msg = format!("unknown window `{kind}`");
            if let Some(s) = nearest(&kind, ["all", "last_days", "last_events"]) {
                msg.push_str(&format!("; did you mean `{s}`?"));
            }
            return Err(Diagnostic::new(DiagCode::Syntax, at, msg)
                .expecting(&["all", "last_days", "last_events"]));
        }
        self.expect(Tok::LParen, &["`(`"])?;
        let v = self.signed_number()?;
        self.expect(Tok::RParen, &["`)`"])?;
        if kind == "last_days" {
            if v <= 0.0 {
                return Err(Diagnostic::new(
                    DiagCode::Type,
                    at,
                    format!("last_days window must be positive, got {v}"),
                ));
            }
            Ok(Window::LastDays(v))
        } else {
            if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(Diagnostic::new(
                    DiagCode::Type,
                    at,
                    format!("last_events window must be a positive integer, got {v}"),
                ));
            }
            Ok(Window::LastEvents(v as u32))
        }
    }

    fn pred(&mut self) -> Result<Predicate, Diagnostic> {
        let mut lhs = self.conj()?;
        while self.is_kw("or") {
            self.bump();
            let rhs = self.conj()?;
            lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Predicate, Diagnostic> {
        let mut lhs = self.neg()?;
        while self.is_kw("and") {
            self.bump();
            let rhs = self.neg()?;
            lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn neg(&mut self) -> Result<Predicate, Diagnostic> {
        if self.is_kw("not") {
            self.bump();
            return Ok(Predicate::Not(Box::new(self.neg()?)));
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let p = self.pred()?;
            self.expect(Tok::RParen, &["`)`", "`and`", "`or`"])?;
            return Ok(p);
        }
        let field = match self.peek() {
            Tok::Ident(f) if !KEYWORDS.contains(&f.as_str()) => f.clone(),
            _ => return Err(self.unexpected(&["field", "`not`", "`(`"])),
        };
        self.bump();
        if self.is_kw("in") {
            self.bump();
            self.expect(Tok::LBracket, &["`[`"])?;
            let mut values = Vec::new();
            loop {
                match self.bump() {
                    Tok::Str(s) => values.push(s),
                    _ => {
                        self.pos -= 1;
                        return Err(self.unexpected(&["string"]));
                    }
                }
                match self.bump() {
                    Tok::Comma => continue,
                    Tok::RBracket => break,
                    _ => {
                        self.pos -= 1;
                        return Err(self.unexpected(&["`,`", "`]`"]));
                    }
                }
            }
            return Ok(Predicate::In { field, values });
        }
        let op = match *self.peek() {
            Tok::Cmp(op) => op,
            _ => return Err(self.unexpected(&["comparison", "`in`"])),
        };
        self.bump();
        let value = match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Literal::Str(s)
            }
            Tok::Num(_) | Tok::Minus => Literal::Num(self.signed_number()?),
            _ => return Err(self.unexpected(&["string", "number"])),
        };
        Ok(Predicate::Cmp { field, op, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windowed_count() {
        let e = parse("count(window=last_days(30))").unwrap();
        let mut a = Agg::new(AggFn::Count);
        a.window = Window::LastDays(30.0);
        assert_eq!(e, FeatureExpr::Agg(a));
    }

    #[test]
    fn hhi_on_field() {
        let e = parse("hhi(mcc)").unwrap();
        assert_eq!(e, FeatureExpr::Agg(Agg::new(AggFn::Hhi).on("mcc")));
    }

    #[test]
    fn ratio_with_predicate() {
        let e = parse(r#"mean(amount where mcc == "5411")/mean(amount)"#).unwrap();
        let FeatureExpr::Arith { op, lhs, rhs } = e else { panic!() };
        assert_eq!(op, ArithOp::Div);
        let FeatureExpr::Agg(l) = *lhs else { panic!() };
        assert_eq!(
            l.predicate,
            Some(Predicate::Cmp {
                field: "mcc".into(),
                op: CmpOp::Eq,
                value: Literal::Str("5411".into())
            })
        );
        assert_eq!(*rhs, FeatureExpr::Agg(Agg::new(AggFn::Mean).on("amount")));
    }

    #[test]
    fn error_codes_are_distinct() {
        assert_eq!(parse("count(window=last_days(30)").unwrap_err().code, DiagCode::Syntax);
        assert_eq!(parse("count() $").unwrap_err().code, DiagCode::Lexical);
        assert_eq!(parse("cnt()").unwrap_err().code, DiagCode::UnknownAggregator);
        assert_eq!(parse("count(window=last_days(-3))").unwrap_err().code, DiagCode::Type);
        assert_eq!(parse("autocorr(amount, lag=0)").unwrap_err().code, DiagCode::Type);
    }

    #[test]
    fn diagnostic_carries_offset_and_expected() {
        let d = parse("count(window=last_days(30)").unwrap_err();
        assert_eq!(d.offset, 26);
        assert!(!d.expected.is_empty());
        let d = parse("mean(amount) +").unwrap_err();
        assert_eq!(d.offset, 14);
    }

    #[test]
    fn unknown_aggregator_suggests() {
        let d = parse("entropi(mcc)").unwrap_err();
        assert!(d.message.contains("`entropy`"), "{}", d.message);
    }

    #[test]
    fn defaults_filled() {
        let FeatureExpr::Agg(a) = parse("autocorr(amount)").unwrap() else { panic!() };
        assert_eq!(a.lag, Some(1));
        let FeatureExpr::Agg(a) = parse("ewma(amount)").unwrap() else { panic!() };
        assert_eq!(a.halflife_days, Some(DEFAULT_HALFLIFE_DAYS));
    }

    #[test]
    fn predicate_precedence() {
        let FeatureExpr::Agg(a) =
            parse(r#"count(where not mcc == "a" or mcc == "b" and amount > -2)"#).unwrap()
        else {
            panic!()
        };
        let Some(Predicate::Or(l, r)) = a.predicate else { panic!() };
        assert!(matches!(*l, Predicate::Not(_)));
        assert!(matches!(*r, Predicate::And(_, _)));
    }
}
