//! Form JSON: `{n, k, q, region, coeffs, zone?, derivative?}` with
//! multi-index keys as 1-based comma strings (the empty string for k = 0).

use serde_json::{json, Map, Value};

use crate::expr::{cond_from_json, cond_to_json, expr_from_json, expr_to_json, ParseError, Zone};
use crate::geometry::{region_from_json, region_to_json};

use super::{MultiIndex, ZonedForm};

pub fn form_to_json(f: &ZonedForm) -> Value {
    let mut coeffs = Map::new();
    for (idx, c) in f.coeffs() {
        coeffs.insert(idx.to_string(), expr_to_json(c));
    }
    let mut obj = Map::new();
    obj.insert("n".into(), json!(f.dim()));
    obj.insert("k".into(), json!(f.degree()));
    obj.insert("q".into(), json!(f.regularity()));
    obj.insert("region".into(), region_to_json(f.region()));
    obj.insert("coeffs".into(), Value::Object(coeffs));
    if let Some(z) = f.zone() {
        obj.insert("zone".into(), cond_to_json(&z.condition));
    }
    if let Some(d) = f.cached_derivative() {
        obj.insert("derivative".into(), form_to_json(d));
    }
    Value::Object(obj)
}

fn multi_index_from_key(key: &str, degree: usize, at: &str) -> Result<MultiIndex, ParseError> {
    if key.is_empty() {
        if degree != 0 {
            return Err(ParseError::new(
                at,
                "empty multi-index key on a form of positive degree",
            ));
        }
        return Ok(MultiIndex::empty());
    }
    let mut indices = Vec::new();
    for part in key.split(',') {
        let v: usize = part
            .trim()
            .parse()
            .map_err(|_| ParseError::new(at, format!("bad multi-index component `{part}`")))?;
        if v == 0 {
            return Err(ParseError::new(at, "multi-index components are 1-based"));
        }
        indices.push(v - 1);
    }
    MultiIndex::new(indices).ok_or_else(|| {
        ParseError::new(at, format!("multi-index `{key}` is not strictly increasing"))
    })
}

pub fn form_from_json(v: &Value, at: &str) -> Result<ZonedForm, ParseError> {
    let m = v
        .as_object()
        .ok_or_else(|| ParseError::new(at, "expected a form object"))?;
    let get_usize = |key: &str| -> Result<usize, ParseError> {
        m.get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| ParseError::new(at, format!("missing integer field `{key}`")))
    };
    let n = get_usize("n")?;
    let k = get_usize("k")?;
    let q = get_usize("q")? as u32;
    let region = region_from_json(
        m.get("region")
            .ok_or_else(|| ParseError::new(at, "missing field `region`"))?,
        &format!("{at}/region"),
    )?;
    if region.dim() != n {
        return Err(ParseError::new(
            at,
            format!("region dimension {} does not match n = {}", region.dim(), n),
        ));
    }
    let coeffs_v = m
        .get("coeffs")
        .and_then(Value::as_object)
        .ok_or_else(|| ParseError::new(at, "missing object field `coeffs`"))?;
    let mut coeffs = Vec::new();
    for (key, cv) in coeffs_v {
        let cat = format!("{at}/coeffs/{key}");
        let idx = multi_index_from_key(key, k, &cat)?;
        coeffs.push((idx, expr_from_json(cv, &cat)?));
    }
    let mut form = ZonedForm::new(n, k, q, region.clone(), coeffs)
        .map_err(|e| ParseError::new(at, e.to_string()))?;
    if let Some(zv) = m.get("zone") {
        let cond = cond_from_json(zv, &format!("{at}/zone"))?;
        form = form.with_zone(Zone::new(n, cond, region));
    }
    if let Some(dv) = m.get("derivative") {
        let eta = form_from_json(dv, &format!("{at}/derivative"))?;
        form = form.with_derivative(eta);
    }
    Ok(form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr;
    use crate::geometry::Region;

    #[test]
    fn round_trip_angular_form() {
        let x = ScalarExpr::var(0);
        let y = ScalarExpr::var(1);
        let r2 = x.pow(2).add(&y.pow(2));
        let f = ZonedForm::new(
            2,
            1,
            0,
            Region::full_space(2),
            vec![
                (MultiIndex::single(0), y.neg().div(&r2)),
                (MultiIndex::single(1), x.div(&r2)),
            ],
        )
        .unwrap();
        let v = form_to_json(&f);
        let back = form_from_json(&v, "").unwrap();
        assert_eq!(back.coeffs(), f.coeffs());
        assert_eq!(back.degree(), 1);
    }

    #[test]
    fn bad_multi_index_is_located() {
        let v = json!({
            "n": 2, "k": 1, "q": 0,
            "region": region_to_json(&Region::full_space(2)),
            "coeffs": {"2,1": {"kind": "var", "index": 1}},
        });
        let err = form_from_json(&v, "/forms/0").unwrap_err();
        assert!(err.pointer.contains("/coeffs/2,1"));
    }
}
