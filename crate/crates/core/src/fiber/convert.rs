//! Conversion of expression coefficients into the integrand class.
//!
//! On a seam-free piece of the fiber, kinked nodes (`|.|`, `min`, `max`,
//! piecewise) have decided branches; the decision is made by evaluating at
//! probe points of the piece (the seam machinery supplies probes whose
//! fiber coordinates lie inside one interval). Undecidable signs surface as
//! unsupported integrands rather than guesses.

use crate::expr::{Expr, ScalarExpr};

use super::logpoly::{expr_as_poly, self_certificate, LogPolyIntegrand, PolyT, RatT};
use super::FiberError;

/// Probe points (full coordinates, fiber included) of one seam-free piece.
#[derive(Clone, Debug)]
pub struct Probes {
    pub t_index: usize,
    pub points: Vec<Vec<f64>>,
}

impl Probes {
    /// Consistent strict sign at every probe, if any.
    pub fn sign_of(&self, e: &ScalarExpr) -> Option<i8> {
        let mut sign = 0i8;
        let mut seen = false;
        for p in &self.points {
            let v = e.eval(p).ok()?;
            let s = if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                return None;
            };
            if seen && s != sign {
                return None;
            }
            sign = s;
            seen = true;
        }
        if seen {
            Some(sign)
        } else {
            None
        }
    }

    fn cond_at_all(&self, c: &crate::expr::SemiCondition) -> Option<bool> {
        let mut out = None;
        for p in &self.points {
            let v = c.holds_at(p).ok()?;
            match out {
                None => out = Some(v),
                Some(prev) if prev != v => return None,
                _ => {}
            }
        }
        out
    }
}

pub fn convert(
    e: &ScalarExpr,
    probes: &Probes,
) -> Result<LogPolyIntegrand, FiberError> {
    let t = probes.t_index;
    if !e.depends_on(t) {
        return Ok(LogPolyIntegrand::constant(e.clone()));
    }
    match e.node() {
        Expr::Var(i) if *i == t => Ok(LogPolyIntegrand::rational(RatT::from_poly(PolyT::t()))),
        Expr::Var(_) | Expr::Const(_) => unreachable!("t-free leaves are handled above"),
        Expr::Sum(items) => {
            let mut acc = LogPolyIntegrand::zero();
            for item in items {
                acc = acc.add(&convert(item, probes)?);
            }
            Ok(acc)
        }
        Expr::Prod(items) => {
            let mut acc = LogPolyIntegrand::constant(ScalarExpr::int(1));
            for item in items {
                acc = acc.mul(&convert(item, probes)?)?;
            }
            Ok(acc)
        }
        Expr::Quot(a, b) => {
            let num = convert(a, probes)?;
            let den = pure_rational(&convert(b, probes)?, "a denominator")?;
            num.div_rational(&den)
        }
        Expr::Pow(b, k) => {
            let base = convert(b, probes)?;
            if *k >= 0 {
                let mut acc = LogPolyIntegrand::constant(ScalarExpr::int(1));
                for _ in 0..*k {
                    acc = acc.mul(&base)?;
                }
                Ok(acc)
            } else {
                let rb = pure_rational(&base, "a negative power base")?;
                let mut acc = RatT::from_poly(PolyT::one());
                for _ in 0..k.unsigned_abs() {
                    acc = acc.div(&rb)?;
                }
                Ok(LogPolyIntegrand::rational(acc))
            }
        }
        Expr::Root(_, _) => Err(FiberError::unsupported(
            "root of a fiber-dependent argument",
        )),
        Expr::Log(arg, _) => {
            // log(p/q) = log|p| - log|q| on the whole definedness domain
            // (p/q > 0 forces matching signs); signed arguments are kept
            // only when the part is base-free and its probed sign is a
            // genuine proof.
            let lp = convert(arg, probes)?;
            let rat = pure_rational(&lp, "a log argument")?;
            let mut out = LogPolyIntegrand::zero();
            out = out.add(&LogPolyIntegrand::log_term(log_arg_for(&rat.num, probes)?));
            if !rat.den.is_constant() || !rat.den.coeff(0).is_one_literal() {
                out = out.add(&LogPolyIntegrand::log_term(log_arg_for(&rat.den, probes)?).neg());
            }
            Ok(out)
        }
        Expr::Abs(a) => {
            // Exact factorization first: a sampled sign is only a proof when
            // the argument depends on the fiber variable alone (its roots
            // are seams, so the sign is constant on the piece). For
            // base-dependent arguments the sampled shortcut could commit to
            // a branch that flips elsewhere over the base.
            if depends_on_base(a, t) {
                if let Some((content, primitive)) = poly_content_split(a, probes) {
                    // |C(x) p(t)| = |C(x)| * (sign p) p(t)
                    let s = probes.sign_of(&primitive.to_expr(t)).ok_or_else(|| {
                        FiberError::unsupported(
                            "absolute value with unresolved sign on the working piece",
                        )
                    })?;
                    let coeff = LogPolyIntegrand::constant(content.abs().normalized());
                    let dep = signed(&primitive, s);
                    return coeff.mul(&LogPolyIntegrand::rational(RatT::from_poly(dep)));
                }
            }
            match probes.sign_of(a) {
                Some(s) => convert(&apply_sign(a, s), probes),
                None => {
                    let (tfree, tdep) = split_t_factors(a, t);
                    match probes.sign_of(&tdep) {
                        Some(s) => {
                            let coeff = LogPolyIntegrand::constant(tfree.abs());
                            coeff.mul(&convert(&apply_sign(&tdep, s), probes)?)
                        }
                        None => Err(FiberError::unsupported(
                            "absolute value with unresolved sign on the working piece",
                        )),
                    }
                }
            }
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            let is_min = matches!(e.node(), Expr::Min(..));
            let d = a.sub(b).normalized();
            // min(0, C p) / max(0, C p): the exact factorization moves the
            // kink into a base coefficient and must win over sampled signs
            // whenever the comparison depends on the base (see Abs above).
            let (zero_side, other) = if a.is_zero_literal() {
                (true, b)
            } else if b.is_zero_literal() {
                (true, a)
            } else {
                (false, a)
            };
            if zero_side && depends_on_base(other, t) {
                if let Some((content, primitive)) = poly_content_split(other, probes) {
                    if let Some(s) = probes.sign_of(&primitive.to_expr(t)) {
                        let dep = signed(&primitive, s);
                        let signed_content =
                            if s > 0 { content } else { content.neg().normalized() };
                        let kinked = if is_min {
                            ScalarExpr::int(0).min_with(&signed_content)
                        } else {
                            ScalarExpr::int(0).max_with(&signed_content)
                        };
                        let coeff = LogPolyIntegrand::constant(kinked.normalized());
                        return coeff
                            .mul(&LogPolyIntegrand::rational(RatT::from_poly(dep)));
                    }
                }
            }
            if let Some(s) = probes.sign_of(&d) {
                let pick_a = (s < 0) == is_min;
                return convert(if pick_a { a } else { b }, probes);
            }
            if zero_side {
                let (tfree, tdep) = split_t_factors(other, t);
                if let Some(s) = probes.sign_of(&tdep) {
                    let signed_dep = apply_sign(&tdep, s);
                    let signed_free = if s > 0 { tfree.clone() } else { tfree.neg() };
                    let kinked = if is_min {
                        ScalarExpr::int(0).min_with(&signed_free)
                    } else {
                        ScalarExpr::int(0).max_with(&signed_free)
                    };
                    let coeff = LogPolyIntegrand::constant(kinked.normalized());
                    return coeff.mul(&convert(&signed_dep, probes)?);
                }
            }
            Err(FiberError::unsupported(
                "min/max with unresolved comparison on the working piece",
            ))
        }
        Expr::Piecewise(branches) => {
            for (cond, val) in branches {
                match probes.cond_at_all(cond) {
                    Some(true) => return convert(val, probes),
                    Some(false) => continue,
                    None => {
                        return Err(FiberError::unsupported(
                            "piecewise branch selection is ambiguous on the working piece",
                        ))
                    }
                }
            }
            Err(FiberError::unsupported(
                "no piecewise branch matches the working piece",
            ))
        }
    }
}

fn pure_rational(lp: &LogPolyIntegrand, what: &str) -> Result<RatT, FiberError> {
    let (rat, logs) = lp.split_rational();
    if logs.is_empty() {
        Ok(rat)
    } else {
        Err(FiberError::unsupported(format!(
            "{what} carries a logarithm of the fiber variable"
        )))
    }
}

fn log_arg_for(
    p: &PolyT,
    probes: &Probes,
) -> Result<super::logpoly::LogArg, FiberError> {
    use super::logpoly::LogArg;
    let base_free = (0..=p.degree().unwrap_or(0)).all(|j| p.coeff(j).max_var().is_none());
    if base_free {
        let s = resolve_sign_poly(p, probes)?;
        let signed_poly = if s < 0 { p.neg() } else { p.clone() };
        let cert = self_certificate(&signed_poly, probes.t_index);
        return Ok(LogArg::plain(signed_poly, cert));
    }
    Ok(LogArg::absolute(p.clone(), probes.t_index))
}

fn resolve_sign_poly(p: &PolyT, probes: &Probes) -> Result<i8, FiberError> {
    if let Some(d) = p.degree() {
        if d == 0 {
            // sign decided by the base coefficient where possible
            if let Some(r) = p.coeff(0).normalized().as_rational() {
                use num::Signed;
                if r.is_positive() {
                    return Ok(1);
                }
                if r.is_negative() {
                    return Ok(-1);
                }
            }
        }
    }
    probes
        .sign_of(&p.to_expr(probes.t_index))
        .ok_or_else(|| {
            FiberError::unsupported("sign of a log argument is unresolved on the working piece")
        })
}

fn signed(p: &PolyT, sign: i8) -> PolyT {
    if sign >= 0 {
        p.clone()
    } else {
        p.neg()
    }
}

fn apply_sign(e: &ScalarExpr, sign: i8) -> ScalarExpr {
    if sign >= 0 {
        e.clone()
    } else {
        e.neg().normalized()
    }
}

/// Does the expression involve any variable other than the fiber one?
fn depends_on_base(e: &ScalarExpr, t: usize) -> bool {
    match e.max_var() {
        None => false,
        Some(m) => (0..=m).any(|i| i != t && e.depends_on(i)),
    }
}

/// Write a t-polynomial expression as `content(x) * p(t)` with `p` having
/// fiber-free *constant ratios* to its leading coefficient, i.e. a genuine
/// one-variable polynomial scaled by a base function. Returns `None` when
/// the coefficients are not proportional.
fn poly_content_split(e: &ScalarExpr, probes: &Probes) -> Option<(ScalarExpr, PolyT)> {
    let t = probes.t_index;
    let poly = expr_as_poly(&e.normalized(), t)?;
    let deg = poly.degree()?;
    if deg == 0 {
        return None;
    }
    // content = first nonzero coefficient
    let mut content = None;
    for j in 0..=deg {
        let c = poly.coeff(j);
        if !c.is_zero_symbolic() {
            content = Some((j, c));
            break;
        }
    }
    let (_, content) = content?;
    let mut ratios = Vec::with_capacity(deg + 1);
    for j in 0..=deg {
        let cj = poly.coeff(j);
        let direct = cj.div(&content).normalized();
        if direct.is_const() || direct.is_zero_literal() {
            ratios.push(direct);
            continue;
        }
        // Trial ratio from the probes, certified by the symbolic zero test.
        let ratio = constant_ratio(&cj, &content, probes)?;
        ratios.push(ratio);
    }
    Some((content, PolyT::from_coeffs(ratios)))
}

/// `a / b` as an exact rational constant: sample the ratio, snap it to a
/// small rational, and verify `a - ratio * b = 0` symbolically.
fn constant_ratio(a: &ScalarExpr, b: &ScalarExpr, probes: &Probes) -> Option<ScalarExpr> {
    let mut candidate: Option<f64> = None;
    for p in &probes.points {
        let (va, vb) = (a.eval(p).ok()?, b.eval(p).ok()?);
        if vb.abs() < 1e-12 {
            return None;
        }
        let r = va / vb;
        match candidate {
            None => candidate = Some(r),
            Some(prev) if (prev - r).abs() > 1e-9 * (1.0 + prev.abs()) => return None,
            _ => {}
        }
    }
    let r = candidate?;
    for den in 1..=64i64 {
        let num = (r * den as f64).round();
        if num.abs() < 1e9 && (num / den as f64 - r).abs() < 1e-9 {
            let ratio = ScalarExpr::frac(num as i64, den);
            if a.sub(&ratio.mul(b)).is_zero_symbolic() {
                return Some(ratio.normalized());
            }
        }
    }
    None
}

/// Split a product into (fiber-free part, fiber-dependent part).
fn split_t_factors(e: &ScalarExpr, t: usize) -> (ScalarExpr, ScalarExpr) {
    match e.node() {
        Expr::Prod(items) => {
            let (mut free, mut dep) = (Vec::new(), Vec::new());
            for f in items {
                if f.depends_on(t) {
                    dep.push(f.clone());
                } else {
                    free.push(f.clone());
                }
            }
            (ScalarExpr::prod(free), ScalarExpr::prod(dep))
        }
        _ => {
            if e.depends_on(t) {
                (ScalarExpr::int(1), e.clone())
            } else {
                (e.clone(), ScalarExpr::int(1))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probes_1d(ts: &[f64]) -> Probes {
        Probes {
            t_index: 0,
            points: ts.iter().map(|t| vec![*t]).collect(),
        }
    }

    #[test]
    fn rational_conversion_round_trips() {
        let t = ScalarExpr::var(0);
        let e = t
            .pow(2)
            .add(&ScalarExpr::int(1))
            .div(&t.sub(&ScalarExpr::int(2)));
        let probes = probes_1d(&[0.1, 0.5]);
        let lp = convert(&e, &probes).unwrap();
        let back = lp.to_expr(0);
        for tv in [0.1, 0.7, -3.0] {
            let a = e.eval(&[tv]).unwrap();
            let b = back.eval(&[tv]).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn abs_resolves_on_positive_piece() {
        let t = ScalarExpr::var(0);
        let e = t.abs();
        let lp = convert(&e, &probes_1d(&[0.2, 0.8])).unwrap();
        assert_eq!(lp.to_expr(0), t.normalized());
        let ln = convert(&e, &probes_1d(&[-0.2, -0.8])).unwrap();
        assert_eq!(ln.to_expr(0), t.neg().normalized());
        assert!(convert(&e, &probes_1d(&[-0.5, 0.5])).is_err());
    }

    #[test]
    fn max_with_mixed_sign_pulls_fiber_factor() {
        // max(0, (1 - t) * (x - 1/2)) with t in (0, 1): the fiber factor
        // (1 - t) is positive, so the kink moves into the base coefficient.
        let t = ScalarExpr::var(1);
        let x = ScalarExpr::var(0);
        let arg = ScalarExpr::int(1)
            .sub(&t)
            .mul(&x.sub(&ScalarExpr::frac(1, 2)));
        let e = ScalarExpr::int(0).max_with(&arg);
        let probes = Probes {
            t_index: 1,
            points: vec![vec![0.2, 0.3], vec![0.9, 0.6]],
        };
        let lp = convert(&e, &probes).unwrap();
        let back = lp.to_expr(1);
        for (xv, tv) in [(0.2, 0.3), (0.9, 0.4), (0.7, 0.99)] {
            let a = e.eval(&[xv, tv]).unwrap();
            let b = back.eval(&[xv, tv]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_of_rational_splits_with_signs() {
        // log(t / (1 - t)) on (0, 1)
        let t = ScalarExpr::var(0);
        let arg = t.div(&ScalarExpr::int(1).sub(&t));
        let e = ScalarExpr::log(&arg).unwrap();
        let lp = convert(&e, &probes_1d(&[0.3, 0.6])).unwrap();
        let back = lp.to_expr(0);
        for tv in [0.25, 0.5, 0.75] {
            let a = e.eval(&[tv]).unwrap();
            let b = back.eval(&[tv]).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}
