//! JSON AST for expressions and sign conditions.
//!
//! Node kinds are tagged with `"kind"`; rational constants travel as
//! numerator/denominator strings so exactness survives the trip. Variables
//! are 1-based on the wire (`x1` is `{"kind":"var","index":1}`).

use num::bigint::BigInt;
use num::rational::BigRational;
use num::Zero;
use serde_json::{json, Map, Value};
use std::str::FromStr;

use super::{Const, Expr, ScalarExpr, SemiCondition, SignOp};

/// Schema violation with a JSON-pointer-style location.
#[derive(Clone, Debug, thiserror::Error, PartialEq)]
#[error("{pointer}: {message}")]
pub struct ParseError {
    pub pointer: String,
    pub message: String,
}

impl ParseError {
    pub fn new(pointer: &str, message: impl Into<String>) -> Self {
        ParseError {
            pointer: pointer.to_string(),
            message: message.into(),
        }
    }
}

pub fn expr_to_json(e: &ScalarExpr) -> Value {
    match e.node() {
        Expr::Const(Const::Rational(r)) => json!({
            "kind": "const",
            "num": r.numer().to_string(),
            "den": r.denom().to_string(),
        }),
        Expr::Const(Const::Irrational(v)) => json!({"kind": "irrational", "value": v.0}),
        Expr::Var(i) => json!({"kind": "var", "index": i + 1}),
        Expr::Sum(items) => json!({
            "kind": "sum",
            "terms": items.iter().map(expr_to_json).collect::<Vec<_>>(),
        }),
        Expr::Prod(items) => json!({
            "kind": "prod",
            "factors": items.iter().map(expr_to_json).collect::<Vec<_>>(),
        }),
        Expr::Quot(a, b) => json!({
            "kind": "quot",
            "num": expr_to_json(a),
            "den": expr_to_json(b),
        }),
        Expr::Pow(b, k) => json!({"kind": "pow", "base": expr_to_json(b), "exp": k}),
        Expr::Root(a, n) => json!({"kind": "root", "arg": expr_to_json(a), "degree": n}),
        Expr::Abs(a) => json!({"kind": "abs", "arg": expr_to_json(a)}),
        Expr::Min(a, b) => json!({"kind": "min", "lhs": expr_to_json(a), "rhs": expr_to_json(b)}),
        Expr::Max(a, b) => json!({"kind": "max", "lhs": expr_to_json(a), "rhs": expr_to_json(b)}),
        Expr::Piecewise(branches) => json!({
            "kind": "piecewise",
            "branches": branches
                .iter()
                .map(|(c, v)| json!({"cond": cond_to_json(c), "value": expr_to_json(v)}))
                .collect::<Vec<_>>(),
        }),
        Expr::Log(a, cert) => json!({
            "kind": "log",
            "arg": expr_to_json(a),
            "cert": cond_to_json(cert),
        }),
    }
}

pub fn cond_to_json(c: &SemiCondition) -> Value {
    match c {
        SemiCondition::True => json!({"kind": "true"}),
        SemiCondition::False => json!({"kind": "false"}),
        SemiCondition::Atom(op, e) => json!({
            "kind": "atom",
            "op": op_name(*op),
            "expr": expr_to_json(e),
        }),
        SemiCondition::And(items) => json!({
            "kind": "all",
            "items": items.iter().map(cond_to_json).collect::<Vec<_>>(),
        }),
        SemiCondition::Or(items) => json!({
            "kind": "any",
            "items": items.iter().map(cond_to_json).collect::<Vec<_>>(),
        }),
    }
}

fn op_name(op: SignOp) -> &'static str {
    match op {
        SignOp::Gt => "gt",
        SignOp::Ge => "ge",
        SignOp::Eq => "eq",
        SignOp::Ne => "ne",
        SignOp::Lt => "lt",
        SignOp::Le => "le",
    }
}

fn op_from_name(name: &str, at: &str) -> Result<SignOp, ParseError> {
    Ok(match name {
        "gt" => SignOp::Gt,
        "ge" => SignOp::Ge,
        "eq" => SignOp::Eq,
        "ne" => SignOp::Ne,
        "lt" => SignOp::Lt,
        "le" => SignOp::Le,
        other => {
            return Err(ParseError::new(
                at,
                format!("unknown sign op `{other}` (expected gt/ge/eq/ne/lt/le)"),
            ))
        }
    })
}

fn obj<'v>(v: &'v Value, at: &str) -> Result<&'v Map<String, Value>, ParseError> {
    v.as_object()
        .ok_or_else(|| ParseError::new(at, "expected a JSON object"))
}

fn field<'v>(m: &'v Map<String, Value>, key: &str, at: &str) -> Result<&'v Value, ParseError> {
    m.get(key)
        .ok_or_else(|| ParseError::new(at, format!("missing field `{key}`")))
}

fn str_field<'v>(m: &'v Map<String, Value>, key: &str, at: &str) -> Result<&'v str, ParseError> {
    field(m, key, at)?
        .as_str()
        .ok_or_else(|| ParseError::new(at, format!("field `{key}` must be a string")))
}

fn bigint(s: &str, at: &str) -> Result<BigInt, ParseError> {
    BigInt::from_str(s).map_err(|_| ParseError::new(at, format!("not an integer: `{s}`")))
}

pub fn expr_from_json(v: &Value, at: &str) -> Result<ScalarExpr, ParseError> {
    let m = obj(v, at)?;
    let kind = str_field(m, "kind", at)?;
    match kind {
        "const" => {
            let num = bigint(str_field(m, "num", at)?, at)?;
            let den = bigint(str_field(m, "den", at)?, at)?;
            if den.is_zero() {
                return Err(ParseError::new(at, "zero denominator"));
            }
            Ok(ScalarExpr::rational(BigRational::new(num, den)))
        }
        "irrational" => {
            let val = field(m, "value", at)?
                .as_f64()
                .ok_or_else(|| ParseError::new(at, "field `value` must be a number"))?;
            Ok(ScalarExpr::irrational(val))
        }
        "var" => {
            let idx = field(m, "index", at)?
                .as_u64()
                .ok_or_else(|| ParseError::new(at, "field `index` must be a positive integer"))?;
            if idx == 0 {
                return Err(ParseError::new(at, "variable indices are 1-based"));
            }
            Ok(ScalarExpr::var(idx as usize - 1))
        }
        "sum" => {
            let terms = array_field(m, "terms", at)?;
            let parsed = terms
                .iter()
                .enumerate()
                .map(|(i, t)| expr_from_json(t, &format!("{at}/terms/{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ScalarExpr::sum(parsed))
        }
        "prod" => {
            let factors = array_field(m, "factors", at)?;
            let parsed = factors
                .iter()
                .enumerate()
                .map(|(i, t)| expr_from_json(t, &format!("{at}/factors/{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ScalarExpr::prod(parsed))
        }
        "quot" => {
            let num = expr_from_json(field(m, "num", at)?, &format!("{at}/num"))?;
            let den = expr_from_json(field(m, "den", at)?, &format!("{at}/den"))?;
            Ok(num.div(&den))
        }
        "pow" => {
            let base = expr_from_json(field(m, "base", at)?, &format!("{at}/base"))?;
            let exp = field(m, "exp", at)?
                .as_i64()
                .ok_or_else(|| ParseError::new(at, "field `exp` must be an integer"))?;
            let exp = i32::try_from(exp)
                .map_err(|_| ParseError::new(at, "exponent out of range"))?;
            Ok(base.pow(exp))
        }
        "root" => {
            let arg = expr_from_json(field(m, "arg", at)?, &format!("{at}/arg"))?;
            let degree = field(m, "degree", at)?
                .as_u64()
                .filter(|d| *d >= 2)
                .ok_or_else(|| ParseError::new(at, "field `degree` must be an integer >= 2"))?;
            Ok(arg.root(degree as u32))
        }
        "abs" => Ok(expr_from_json(field(m, "arg", at)?, &format!("{at}/arg"))?.abs()),
        "min" | "max" => {
            let lhs = expr_from_json(field(m, "lhs", at)?, &format!("{at}/lhs"))?;
            let rhs = expr_from_json(field(m, "rhs", at)?, &format!("{at}/rhs"))?;
            Ok(if kind == "min" {
                lhs.min_with(&rhs)
            } else {
                lhs.max_with(&rhs)
            })
        }
        "piecewise" => {
            let branches = array_field(m, "branches", at)?;
            let parsed = branches
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let bat = format!("{at}/branches/{i}");
                    let bm = obj(b, &bat)?;
                    let cond = cond_from_json(field(bm, "cond", &bat)?, &format!("{bat}/cond"))?;
                    let value =
                        expr_from_json(field(bm, "value", &bat)?, &format!("{bat}/value"))?;
                    Ok((cond, value))
                })
                .collect::<Result<Vec<_>, ParseError>>()?;
            Ok(ScalarExpr::piecewise(parsed))
        }
        "log" => {
            let arg = expr_from_json(field(m, "arg", at)?, &format!("{at}/arg"))?;
            let cert = match m.get("cert") {
                Some(c) => cond_from_json(c, &format!("{at}/cert"))?,
                None => SemiCondition::atom(SignOp::Gt, arg.clone()),
            };
            ScalarExpr::log_certified(&arg, cert)
                .map_err(|e| ParseError::new(at, e.to_string()))
        }
        other => Err(ParseError::new(at, format!("unknown node kind `{other}`"))),
    }
}

fn array_field<'v>(
    m: &'v Map<String, Value>,
    key: &str,
    at: &str,
) -> Result<&'v Vec<Value>, ParseError> {
    field(m, key, at)?
        .as_array()
        .ok_or_else(|| ParseError::new(at, format!("field `{key}` must be an array")))
}

pub fn cond_from_json(v: &Value, at: &str) -> Result<SemiCondition, ParseError> {
    let m = obj(v, at)?;
    let kind = str_field(m, "kind", at)?;
    match kind {
        "true" => Ok(SemiCondition::True),
        "false" => Ok(SemiCondition::False),
        "atom" => {
            let op = op_from_name(str_field(m, "op", at)?, at)?;
            let e = expr_from_json(field(m, "expr", at)?, &format!("{at}/expr"))?;
            Ok(SemiCondition::Atom(op, e))
        }
        "all" | "any" => {
            let items = array_field(m, "items", at)?
                .iter()
                .enumerate()
                .map(|(i, c)| cond_from_json(c, &format!("{at}/items/{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(if kind == "all" {
                SemiCondition::and(items)
            } else {
                SemiCondition::or(items)
            })
        }
        other => Err(ParseError::new(at, format!("unknown condition kind `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_leaf() -> impl Strategy<Value = ScalarExpr> + Clone {
        prop_oneof![
            (-20i64..20, 1i64..9).prop_map(|(n, d)| ScalarExpr::frac(n, d)),
            (0usize..3).prop_map(ScalarExpr::var),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = ScalarExpr> {
        arb_leaf().prop_recursive(4, 32, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(ScalarExpr::sum),
                prop::collection::vec(inner.clone(), 2..4).prop_map(ScalarExpr::prod),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.div(&b)),
                (inner.clone(), -3i32..4).prop_map(|(a, k)| a.pow(k)),
                inner.clone().prop_map(|a| a.abs()),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.min_with(&b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.max_with(&b)),
                inner
                    .clone()
                    .prop_map(|a| a.pow(2).add(&ScalarExpr::int(1)).sqrt()),
                // logs stay over log-free arguments
                arb_leaf().prop_map(|a| {
                    ScalarExpr::log(&a.pow(2).add(&ScalarExpr::int(1))).unwrap()
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn json_round_trip(e in arb_expr()) {
            let v = expr_to_json(&e);
            let back = expr_from_json(&v, "").unwrap();
            prop_assert_eq!(back, e);
        }
    }

    #[test]
    fn unknown_kind_reports_location() {
        let v = serde_json::json!({"kind": "sum", "terms": [{"kind": "mystery"}]});
        let err = expr_from_json(&v, "/forms/0").unwrap_err();
        assert_eq!(err.pointer, "/forms/0/terms/0");
    }
}
