//! Seam decomposition of the fiber line and anchored fiber integrals.
//!
//! Kink and pole loci of the fiber variable are collected from the
//! expression tree (piecewise conditions, |.|/min/max arguments,
//! denominators, root and log arguments) and solved for t, giving graph
//! functions `c_1 < ... < c_m` of the base point. Between consecutive
//! graphs the integrand converts to the closed integrand class; the
//! antiderivatives are chained continuously across the seams and anchored
//! to vanish at t = 0. Callers may supply the seam list explicitly; the
//! collected one is a heuristic and is flagged as such.

use std::collections::BTreeSet;

use crate::expr::{Expr, ScalarExpr, SemiCondition, SignOp};
use crate::geometry::Region;
use crate::sample::Sampler;

use super::antiderivative::antiderivative;
use super::convert::{convert, Probes};
use super::logpoly::{expr_as_poly, PolyT};
use super::FiberError;

/// Assembled fiber antiderivative `G(x, t)` with `G(x, 0) = 0`.
#[derive(Clone, Debug)]
pub struct FiberIntegral {
    pub anchored: ScalarExpr,
    pub seams: Vec<ScalarExpr>,
    pub heuristic_seams: bool,
}

#[derive(Clone, Debug)]
pub struct QOpts {
    pub seed: u64,
    pub base_probes: usize,
    /// Explicit seam graphs (functions of the base variables); overrides
    /// the tree-collection heuristic.
    pub seams: Option<Vec<ScalarExpr>>,
}

impl Default for QOpts {
    fn default() -> Self {
        QOpts {
            seed: 0,
            base_probes: 4,
            seams: None,
        }
    }
}

impl QOpts {
    pub fn seeded(seed: u64) -> Self {
        QOpts {
            seed,
            ..QOpts::default()
        }
    }
}

/// Collect candidate seam graphs (t-roots of kink loci) from the tree.
pub fn collect_seams(e: &ScalarExpr, t_index: usize) -> Result<Vec<ScalarExpr>, FiberError> {
    let mut out = BTreeSet::new();
    walk(&e.normalized(), t_index, &mut out)?;
    Ok(out.into_iter().collect())
}

fn walk(
    e: &ScalarExpr,
    t: usize,
    out: &mut BTreeSet<ScalarExpr>,
) -> Result<(), FiberError> {
    match e.node() {
        Expr::Const(_) | Expr::Var(_) => Ok(()),
        Expr::Sum(items) | Expr::Prod(items) => {
            items.iter().try_for_each(|i| walk(i, t, out))
        }
        Expr::Quot(a, b) => {
            walk(a, t, out)?;
            push_roots(b, t, out)?;
            walk(b, t, out)
        }
        Expr::Pow(b, k) => {
            if *k < 0 {
                push_roots(b, t, out)?;
            }
            walk(b, t, out)
        }
        Expr::Root(a, _) | Expr::Log(a, _) => {
            push_roots(a, t, out)?;
            walk(a, t, out)
        }
        Expr::Abs(a) => {
            push_roots(a, t, out)?;
            walk(a, t, out)
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            push_roots(&a.sub(b), t, out)?;
            walk(a, t, out)?;
            walk(b, t, out)
        }
        Expr::Piecewise(branches) => {
            for (cond, val) in branches {
                push_cond_roots(cond, t, out)?;
                walk(val, t, out)?;
            }
            Ok(())
        }
    }
}

fn push_cond_roots(
    c: &SemiCondition,
    t: usize,
    out: &mut BTreeSet<ScalarExpr>,
) -> Result<(), FiberError> {
    match c {
        SemiCondition::True | SemiCondition::False => Ok(()),
        SemiCondition::Atom(_, e) => push_roots(e, t, out),
        SemiCondition::And(items) | SemiCondition::Or(items) => {
            items.iter().try_for_each(|c| push_cond_roots(c, t, out))
        }
    }
}

/// t-roots of a locus expression, when it is polynomial of degree <= 2 in t.
fn push_roots(
    e: &ScalarExpr,
    t: usize,
    out: &mut BTreeSet<ScalarExpr>,
) -> Result<(), FiberError> {
    if !e.depends_on(t) {
        return Ok(());
    }
    let poly = match expr_as_poly(&e.normalized(), t) {
        Some(p) => p,
        // Rational loci contribute through their numerator/denominator,
        // which the walk visits separately; anything else is out of reach.
        None => match e.node() {
            Expr::Quot(..) | Expr::Prod(..) | Expr::Sum(..) => return Ok(()),
            _ => {
                return Err(FiberError::unsupported(
                    "kink locus is not polynomial in the fiber variable",
                ))
            }
        },
    };
    for root in poly_roots(&poly) {
        let root = root.normalized();
        if !root.is_log_free() {
            return Err(FiberError::unsupported(
                "seam graph involves a logarithm (outside the sign-condition class)",
            ));
        }
        out.insert(root);
    }
    Ok(())
}

/// Real-root candidates of a degree <= 2 polynomial in t; candidates whose
/// discriminant turns out negative at a base point simply fail to evaluate
/// there and are ignored pointwise.
fn poly_roots(p: &PolyT) -> Vec<ScalarExpr> {
    match p.degree() {
        None | Some(0) => Vec::new(),
        Some(1) => vec![p.coeff(0).neg().div(&p.coeff(1))],
        Some(2) => {
            let (a, b, c) = (p.coeff(2), p.coeff(1), p.coeff(0));
            let disc = b
                .pow(2)
                .sub(&ScalarExpr::int(4).mul(&a).mul(&c))
                .normalized();
            if let Some(r) = disc.as_rational() {
                use num::Signed;
                if r.is_negative() {
                    return Vec::new();
                }
            }
            if disc.is_zero_symbolic() {
                return vec![b.neg().div(&ScalarExpr::int(2).mul(&a))];
            }
            let sq = disc.sqrt();
            let two_a = ScalarExpr::int(2).mul(&a);
            vec![
                b.neg().add(&sq).div(&two_a),
                b.neg().sub(&sq).div(&two_a),
            ]
        }
        _ => Vec::new(),
    }
}

struct SeamLayout {
    /// Seams ordered along the fiber, with values per base probe.
    seams: Vec<(ScalarExpr, Vec<f64>)>,
    base_points: Vec<Vec<f64>>,
}

fn layout_seams(
    candidates: Vec<ScalarExpr>,
    base: &Region,
    opts: &QOpts,
) -> Result<SeamLayout, FiberError> {
    let mut sampler = Sampler::for_task(opts.seed, "fiber-seams");
    let base_points = base
        .sample_points(&mut sampler, opts.base_probes.max(2), 128)
        .map_err(FiberError::Sampling)?;

    // Keep seams that evaluate at every probe (a seam of partial domain
    // splits the base; out of scope for the heuristic).
    let mut evaluated: Vec<(ScalarExpr, Vec<f64>)> = Vec::new();
    'seam: for c in candidates {
        let mut vals = Vec::new();
        for p in &base_points {
            match c.eval(p) {
                Ok(v) if v.is_finite() => vals.push(v),
                _ => continue 'seam,
            }
        }
        evaluated.push((c, vals));
    }

    // Merge coincident seams; reject ambiguous near-coincidences.
    let mut merged: Vec<(ScalarExpr, Vec<f64>)> = Vec::new();
    'cand: for (c, vals) in evaluated {
        for (mc, mvals) in &merged {
            let close = vals
                .iter()
                .zip(mvals)
                .all(|(a, b)| (a - b).abs() < 1e-9 * (1.0 + a.abs().max(b.abs())));
            if close {
                if mc.normalized() == c.normalized() {
                    continue 'cand;
                }
                continue 'cand; // coincident graphs: one copy suffices
            }
        }
        merged.push((c, vals));
    }

    // Order along the fiber; the order must be probe-independent.
    merged.sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap());
    for probe in 0..base_points.len() {
        for w in merged.windows(2) {
            if w[0].1[probe] >= w[1].1[probe] {
                return Err(FiberError::unsupported(
                    "seam graphs cross over the sampled base points",
                ));
            }
        }
    }
    Ok(SeamLayout {
        seams: merged,
        base_points,
    })
}

/// Anchored fiber integral of one coefficient on `base x R`.
pub fn fiber_integral(
    coeff: &ScalarExpr,
    t_index: usize,
    base: &Region,
    opts: &QOpts,
) -> Result<FiberIntegral, FiberError> {
    let (candidates, heuristic) = match &opts.seams {
        Some(user) => (user.clone(), false),
        None => (collect_seams(coeff, t_index)?, true),
    };
    let layout = layout_seams(candidates, base, opts)?;
    let m = layout.seams.len();

    // Interval probes: two fiber values per base probe, inside each piece.
    let interval_probes = |j: usize| -> Probes {
        let mut points = Vec::new();
        for (pi, bp) in layout.base_points.iter().enumerate() {
            let lo = if j == 0 {
                None
            } else {
                Some(layout.seams[j - 1].1[pi])
            };
            let hi = if j == m { None } else { Some(layout.seams[j].1[pi]) };
            let ts = match (lo, hi) {
                (Some(a), Some(b)) => vec![a + (b - a) / 3.0, a + 2.0 * (b - a) / 3.0],
                (Some(a), None) => vec![a + 0.5, a + 2.0],
                (None, Some(b)) => vec![b - 0.5, b - 2.0],
                (None, None) => vec![-1.0, 1.0],
            };
            for t in ts {
                let mut full = bp.clone();
                full.push(t);
                points.push(full);
            }
        }
        Probes { t_index, points }
    };

    // Antiderivative per piece.
    let mut pieces: Vec<ScalarExpr> = Vec::new();
    for j in 0..=m {
        let probes = interval_probes(j);
        let lp = convert(&coeff.normalized(), &probes)?;
        let g = antiderivative(&lp, &probes)?;
        pieces.push(g.to_expr(t_index));
    }

    // Anchor: the piece whose closure contains 0 starts at 0.
    let zero_interval = |pi: usize| -> usize {
        let mut j = 0;
        while j < m && layout.seams[j].1[pi] < -1e-12 {
            j += 1;
        }
        // A seam exactly at 0 puts the anchor in the piece above it.
        if j < m && layout.seams[j].1[pi].abs() <= 1e-12 {
            j + 1
        } else {
            j
        }
    };
    let j0 = zero_interval(0);
    for pi in 1..layout.base_points.len() {
        if zero_interval(pi) != j0 {
            return Err(FiberError::unsupported(
                "the fiber origin falls in different pieces over the sampled base",
            ));
        }
    }

    let zero = ScalarExpr::int(0);
    let mut constants: Vec<Option<ScalarExpr>> = vec![None; m + 1];
    let k0 = anchor_value(&pieces[j0], t_index, &layout.base_points)?;
    constants[j0] = Some(k0);

    // Chain continuity constants outward from the anchor piece.
    for j in j0..m {
        let seam = layout.seams[j].0.clone();
        let prev = constants[j].clone().unwrap();
        let left = pieces[j]
            .substitute_var(t_index, &seam)
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
        let right = pieces[j + 1]
            .substitute_var(t_index, &seam)
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
        let k = prev.add(&left).sub(&right).normalized();
        validate_at(&k, &layout.base_points)?;
        constants[j + 1] = Some(k);
    }
    for j in (0..j0).rev() {
        let seam = layout.seams[j].0.clone();
        let next = constants[j + 1].clone().unwrap();
        let left = pieces[j]
            .substitute_var(t_index, &seam)
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
        let right = pieces[j + 1]
            .substitute_var(t_index, &seam)
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
        let k = next.add(&right).sub(&left).normalized();
        validate_at(&k, &layout.base_points)?;
        constants[j] = Some(k);
    }

    let anchored = if m == 0 {
        pieces[0].add(constants[0].as_ref().unwrap_or(&zero)).normalized()
    } else {
        let t = ScalarExpr::var(t_index);
        let mut branches = Vec::new();
        for (j, piece) in pieces.iter().enumerate() {
            let expr = piece.add(constants[j].as_ref().unwrap()).normalized();
            let cond = if j == 0 {
                SemiCondition::atom(SignOp::Le, t.sub(&layout.seams[0].0))
            } else if j == m {
                SemiCondition::atom(SignOp::Ge, t.sub(&layout.seams[m - 1].0))
            } else {
                SemiCondition::and(vec![
                    SemiCondition::atom(SignOp::Ge, t.sub(&layout.seams[j - 1].0)),
                    SemiCondition::atom(SignOp::Le, t.sub(&layout.seams[j].0)),
                ])
            };
            branches.push((cond, expr));
        }
        ScalarExpr::piecewise(branches).normalized()
    };
    anchored
        .validate_constructible()
        .map_err(|e| FiberError::unsupported(e.to_string()))?;
    Ok(FiberIntegral {
        anchored,
        seams: layout.seams.into_iter().map(|(c, _)| c).collect(),
        heuristic_seams: heuristic,
    })
}

/// Definite fiber integral `int_{a(x)}^{b(x)} coeff dt` as a base
/// expression. Seams strictly between the bounds split the integral; seams
/// strictly outside (at every probe) are ignored; a seam crossing a bound
/// is unsupported. No anchoring at the origin is involved, so the bounds
/// may sit anywhere relative to the seam layout.
pub fn bounded_fiber_integral(
    coeff: &ScalarExpr,
    t_index: usize,
    base: &Region,
    lower: &ScalarExpr,
    upper: &ScalarExpr,
    opts: &QOpts,
) -> Result<FiberIntegral, FiberError> {
    let (candidates, heuristic) = match &opts.seams {
        Some(user) => (user.clone(), false),
        None => (collect_seams(coeff, t_index)?, true),
    };
    let mut sampler = Sampler::for_task(opts.seed, "fiber-bounded");
    let base_points = base
        .sample_points(&mut sampler, opts.base_probes.max(2), 128)
        .map_err(FiberError::Sampling)?;
    let eval_all = |e: &ScalarExpr| -> Result<Vec<f64>, FiberError> {
        base_points
            .iter()
            .map(|p| {
                e.eval(p).map_err(|err| {
                    FiberError::unsupported(format!("bound undefined on the base: {err}"))
                })
            })
            .collect()
    };
    let lo_vals = eval_all(lower)?;
    let hi_vals = eval_all(upper)?;

    // classify seams relative to the integration window
    let mut inside: Vec<(ScalarExpr, Vec<f64>)> = Vec::new();
    'seam: for c in candidates {
        let mut vals = Vec::new();
        let mut side: Option<bool> = None; // Some(true) = inside
        for (pi, p) in base_points.iter().enumerate() {
            let v = match c.eval(p) {
                Ok(v) if v.is_finite() => v,
                _ => continue 'seam,
            };
            let margin = 1e-10 * (1.0 + v.abs());
            let is_inside = v > lo_vals[pi] + margin && v < hi_vals[pi] - margin;
            let is_outside = v < lo_vals[pi] - margin || v > hi_vals[pi] + margin;
            let this = if is_inside {
                true
            } else if is_outside {
                false
            } else {
                // the seam grazes a bound: treat as outside (the integrand
                // is continuous up to the bound on the open window)
                false
            };
            match side {
                None => side = Some(this),
                Some(prev) if prev != this => {
                    return Err(FiberError::unsupported(
                        "a seam graph crosses an integration bound over the sampled base",
                    ))
                }
                _ => {}
            }
            vals.push(v);
        }
        if side == Some(true) {
            inside.push((c, vals));
        }
    }
    inside.sort_by(|a, b| a.1[0].partial_cmp(&b.1[0]).unwrap());
    for probe in 0..base_points.len() {
        for w in inside.windows(2) {
            if w[0].1[probe] >= w[1].1[probe] {
                return Err(FiberError::unsupported(
                    "seam graphs cross over the sampled base points",
                ));
            }
        }
    }

    // piece endpoints: lower, seams..., upper
    let m = inside.len();
    let mut total = ScalarExpr::int(0);
    for j in 0..=m {
        let lo_expr = if j == 0 { lower.clone() } else { inside[j - 1].0.clone() };
        let hi_expr = if j == m { upper.clone() } else { inside[j].0.clone() };
        // probes inside this piece
        let mut points = Vec::new();
        for (pi, bp) in base_points.iter().enumerate() {
            let lo = if j == 0 { lo_vals[pi] } else { inside[j - 1].1[pi] };
            let hi = if j == m { hi_vals[pi] } else { inside[j].1[pi] };
            for frac in [1.0 / 3.0, 2.0 / 3.0] {
                let mut full = bp.clone();
                full.push(lo + (hi - lo) * frac);
                points.push(full);
            }
        }
        let probes = Probes { t_index, points };
        let lp = convert(&coeff.normalized(), &probes)?;
        let g = antiderivative(&lp, &probes)?.to_expr(t_index);
        let at_hi = g
            .substitute_var(t_index, &hi_expr)
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
        let at_lo = g
            .substitute_var(t_index, &lo_expr)
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
        total = total.add(&at_hi.sub(&at_lo));
    }
    let total = total.normalized();
    validate_at(&total, &base_points)?;
    total
        .validate_constructible()
        .map_err(|e| FiberError::unsupported(e.to_string()))?;
    Ok(FiberIntegral {
        anchored: total,
        seams: inside.into_iter().map(|(c, _)| c).collect(),
        heuristic_seams: heuristic,
    })
}

/// `-G(x, 0)` when the substitution makes sense; a sampled-zero limit
/// otherwise (log-type antiderivatives vanish at 0 only in the limit).
fn anchor_value(
    piece: &ScalarExpr,
    t_index: usize,
    base_points: &[Vec<f64>],
) -> Result<ScalarExpr, FiberError> {
    let at_zero = piece
        .substitute_var(t_index, &ScalarExpr::int(0))
        .map_err(|e| FiberError::unsupported(e.to_string()))?
        .normalized();
    if validate_at(&at_zero, base_points).is_ok() {
        return Ok(at_zero.neg().normalized());
    }
    // Limit fallback: accept an anchor of zero if G(x, t) -> 0 as t -> 0.
    for bp in base_points {
        for side in [1.0, -1.0] {
            let mut vals = Vec::new();
            for k in 4..7 {
                let mut full = bp.clone();
                full.push(side * 0.1f64.powi(k));
                if let Ok(v) = piece.eval(&full) {
                    vals.push(v);
                }
            }
            if let Some(last) = vals.last() {
                if last.abs() > 1e-6 {
                    return Err(FiberError::unsupported(
                        "fiber antiderivative has no expressible value at t = 0",
                    ));
                }
            }
        }
    }
    Ok(ScalarExpr::int(0))
}

fn validate_at(e: &ScalarExpr, base_points: &[Vec<f64>]) -> Result<(), FiberError> {
    for p in base_points {
        match e.eval(p) {
            Ok(v) if v.is_finite() => {}
            _ => {
                return Err(FiberError::unsupported(
                    "fiber integral diverges across a singular seam",
                ))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> ScalarExpr {
        ScalarExpr::var(0)
    }

    fn t() -> ScalarExpr {
        ScalarExpr::var(1)
    }

    #[test]
    fn spline_seam_is_collected() {
        // max(0, t)^2 in the fiber: seam at t = 0.
        let e = ScalarExpr::int(0).max_with(&t()).pow(2);
        let seams = collect_seams(&e, 1).unwrap();
        assert_eq!(seams, vec![ScalarExpr::int(0).normalized()]);
    }

    #[test]
    fn shifted_kink_seam() {
        // |t - x| kinks along the graph t = x.
        let e = t().sub(&x()).abs();
        let seams = collect_seams(&e, 1).unwrap();
        assert_eq!(seams, vec![x().normalized()]);
    }

    #[test]
    fn integral_of_spline_is_c1() {
        // int_0^t max(0,u)^2 du = max(0,t)^3 / 3
        let e = ScalarExpr::int(0).max_with(&t()).pow(2);
        let base = Region::interval(-1.0, 1.0);
        let g = fiber_integral(&e, 1, &base, &QOpts::seeded(1)).unwrap();
        for tv in [-2.0, -0.5, 0.0, 0.5, 2.0] {
            let got = g.anchored.eval(&[0.3, tv]).unwrap();
            let want = if tv > 0.0 { tv * tv * tv / 3.0 } else { 0.0 };
            assert!((got - want).abs() < 1e-12, "t={tv}: {got} vs {want}");
        }
    }

    #[test]
    fn integral_across_symbolic_seam() {
        // int_0^t |u - x| du for x > 0, checked numerically
        let e = t().sub(&x()).abs();
        let base = Region::interval(0.25, 0.75);
        let g = fiber_integral(&e, 1, &base, &QOpts::seeded(2)).unwrap();
        let xv = 0.5;
        let anti = |t: f64| -> f64 {
            // exact: piecewise integral of |u - x|
            if t <= xv {
                (xv * xv - (xv - t) * (xv - t)) / 2.0
            } else {
                xv * xv / 2.0 + (t - xv) * (t - xv) / 2.0
            }
        };
        for tv in [-1.0, 0.0, 0.3, 0.5, 0.9, 2.0] {
            let got = g.anchored.eval(&[xv, tv]).unwrap();
            assert!((got - anti(tv)).abs() < 1e-12, "t={tv}");
        }
    }

    #[test]
    fn pole_inside_range_is_rejected() {
        // int_0^t du/u diverges at the origin.
        let e = ScalarExpr::int(1).div(&t());
        let base = Region::interval(0.0, 1.0);
        let err = fiber_integral(&e, 1, &base, &QOpts::seeded(3)).unwrap_err();
        assert!(matches!(err, FiberError::Unsupported { .. }), "{err:?}");
    }

    #[test]
    fn user_seams_override_heuristic() {
        let e = ScalarExpr::int(0).max_with(&t());
        let base = Region::interval(-1.0, 1.0);
        let opts = QOpts {
            seams: Some(vec![ScalarExpr::int(0)]),
            ..QOpts::seeded(4)
        };
        let g = fiber_integral(&e, 1, &base, &opts).unwrap();
        assert!(!g.heuristic_seams);
        assert!((g.anchored.eval(&[0.0, 2.0]).unwrap() - 2.0).abs() < 1e-12);
    }
}
