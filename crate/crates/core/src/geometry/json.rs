//! Region JSON: recursive ribbon lists with `"point"` leaves.

use serde_json::{json, Value};

use crate::expr::{cond_from_json, cond_to_json, expr_from_json, expr_to_json, ParseError};

use super::{Bound, Region, Ribbon};

pub fn region_to_json(r: &Region) -> Value {
    if r.is_point() {
        return json!("point");
    }
    json!({
        "dim": r.dim(),
        "ribbons": r
            .ribbons()
            .iter()
            .map(|rb| {
                let mut obj = serde_json::Map::new();
                obj.insert("base".into(), region_to_json(rb.base()));
                obj.insert("lower".into(), bound_to_json(rb.lower()));
                obj.insert("upper".into(), bound_to_json(rb.upper()));
                if let Some(c) = rb.constraint() {
                    obj.insert("constraint".into(), cond_to_json(c));
                }
                if let Some(p) = rb.declared_regularity {
                    obj.insert("regularity".into(), json!(p));
                }
                Value::Object(obj)
            })
            .collect::<Vec<_>>(),
    })
}

fn bound_to_json(b: &Bound) -> Value {
    match b {
        Bound::NegInf => json!("-inf"),
        Bound::PosInf => json!("+inf"),
        Bound::Finite(e) => expr_to_json(e),
    }
}

pub fn region_from_json(v: &Value, at: &str) -> Result<Region, ParseError> {
    if let Some(s) = v.as_str() {
        if s == "point" {
            return Ok(Region::point());
        }
        return Err(ParseError::new(at, format!("unknown region literal `{s}`")));
    }
    let m = v
        .as_object()
        .ok_or_else(|| ParseError::new(at, "expected a region object or \"point\""))?;
    let dim = m
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| ParseError::new(at, "missing integer field `dim`"))? as usize;
    if dim == 0 {
        // A 0-dimensional object form is allowed for the empty region.
        let ribbons = m.get("ribbons").and_then(Value::as_array);
        return match ribbons {
            Some(rs) if rs.is_empty() => Ok(Region::empty(0)),
            _ => Err(ParseError::new(
                at,
                "dimension 0 regions are \"point\" or have empty `ribbons`",
            )),
        };
    }
    let ribbons = m
        .get("ribbons")
        .and_then(Value::as_array)
        .ok_or_else(|| ParseError::new(at, "missing array field `ribbons`"))?;
    let mut out = Vec::with_capacity(ribbons.len());
    for (i, rv) in ribbons.iter().enumerate() {
        let rat = format!("{at}/ribbons/{i}");
        let rm = rv
            .as_object()
            .ok_or_else(|| ParseError::new(&rat, "expected a ribbon object"))?;
        let base_v = rm
            .get("base")
            .ok_or_else(|| ParseError::new(&rat, "missing field `base`"))?;
        let base = region_from_json(base_v, &format!("{rat}/base"))?;
        if base.dim() != dim - 1 {
            return Err(ParseError::new(
                &rat,
                format!(
                    "base has dimension {} but the ribbon needs {}",
                    base.dim(),
                    dim - 1
                ),
            ));
        }
        let lower = bound_from_json(
            rm.get("lower")
                .ok_or_else(|| ParseError::new(&rat, "missing field `lower`"))?,
            &format!("{rat}/lower"),
            true,
        )?;
        let upper = bound_from_json(
            rm.get("upper")
                .ok_or_else(|| ParseError::new(&rat, "missing field `upper`"))?,
            &format!("{rat}/upper"),
            false,
        )?;
        let mut ribbon = Ribbon::new(base, lower, upper);
        if let Some(cv) = rm.get("constraint") {
            ribbon = ribbon.with_constraint(cond_from_json(cv, &format!("{rat}/constraint"))?);
        }
        if let Some(p) = rm.get("regularity").and_then(Value::as_u64) {
            ribbon.declared_regularity = Some(p as u32);
        }
        out.push(ribbon);
    }
    Ok(Region::from_ribbons(dim, out))
}

fn bound_from_json(v: &Value, at: &str, is_lower: bool) -> Result<Bound, ParseError> {
    if let Some(s) = v.as_str() {
        return match s {
            "-inf" => Ok(Bound::NegInf),
            "+inf" | "inf" => Ok(Bound::PosInf),
            other => Err(ParseError::new(
                at,
                format!("unknown bound literal `{other}` (use -inf/+inf)"),
            )),
        };
    }
    let e = expr_from_json(v, at)?;
    let _ = is_lower;
    Ok(Bound::Finite(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr;

    #[test]
    fn round_trip_interval_union() {
        let r = Region::from_ribbons(
            1,
            vec![Ribbon::interval(0.0, 1.0), Ribbon::interval(2.0, 3.0)],
        );
        let v = region_to_json(&r);
        let back = region_from_json(&v, "").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn round_trip_with_expression_bounds() {
        let upper = ScalarExpr::int(4).sub(&ScalarExpr::var(0).pow(2)).sqrt();
        let r = Region::single(Ribbon::new(
            Region::interval(-2.0, 2.0),
            Bound::Finite(ScalarExpr::int(0)),
            Bound::Finite(upper),
        ));
        let back = region_from_json(&region_to_json(&r), "").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn base_dimension_mismatch_is_reported() {
        let v = serde_json::json!({
            "dim": 2,
            "ribbons": [{"base": "point", "lower": "-inf", "upper": "+inf"}],
        });
        let err = region_from_json(&v, "/space").unwrap_err();
        assert!(err.pointer.starts_with("/space/ribbons/0"));
    }
}
