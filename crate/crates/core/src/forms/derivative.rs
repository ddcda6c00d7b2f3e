//! Zone exterior derivative and its continuous extension.
//!
//! `raw_d` differentiates coefficientwise on a C^1-zone. `extended_d` then
//! looks for a continuous constructible extension of that zone derivative
//! to the whole region: piecewise conditions are closed onto the seams,
//! and continuity is decided by sampled directional limits at seam points.
//! Membership of the input in the regularity-q complex additionally needs
//! the extension to be C^q; that is checked (to sampled order min(q, 2))
//! and reported rather than silently assumed.

use std::collections::BTreeSet;

use crate::expr::{
    differentiate, smoothness_condition, Expr, ScalarExpr, SemiCondition, SignOp, Zone,
};
use crate::geometry::Region;
use crate::sample::Sampler;

use super::{MultiIndex, ZonedForm};

/// Componentwise exterior derivative on the common C^1-zone.
pub fn raw_d(omega: &ZonedForm) -> ZonedForm {
    let n = omega.dim();
    let mut coeffs: Vec<(MultiIndex, ScalarExpr)> = Vec::new();
    let mut zone_parts: Vec<SemiCondition> = Vec::new();
    for (idx, a) in omega.coeffs() {
        zone_parts.push(smoothness_condition(a));
        for i in 0..n {
            if let Some((full, sign)) = idx.wedge_insert(i) {
                let (da, _) = differentiate(a, i);
                if da.is_zero_literal() {
                    continue;
                }
                let signed = if sign < 0 { da.neg().normalized() } else { da };
                coeffs.push((full, signed));
            }
        }
    }
    if let Some(z) = omega.zone() {
        zone_parts.push(z.condition.clone());
    }
    let zone = Zone::new(
        n,
        SemiCondition::and(zone_parts).normalized(),
        omega.region().clone(),
    );
    ZonedForm::new(
        n,
        omega.degree() + 1,
        omega.regularity().saturating_sub(1),
        omega.region().clone(),
        coeffs,
    )
    .expect("derivative keeps the shape")
    .with_zone(zone)
}

#[derive(Clone, Debug)]
pub struct ExtendOpts {
    pub seed: u64,
    /// Seam points sampled per seam locus.
    pub boundary_points: usize,
    /// Approach directions per seam point.
    pub directions: usize,
    pub tol: f64,
}

impl Default for ExtendOpts {
    fn default() -> Self {
        ExtendOpts {
            seed: 0,
            boundary_points: 32,
            directions: 8,
            tol: 1e-7,
        }
    }
}

impl ExtendOpts {
    pub fn seeded(seed: u64) -> Self {
        ExtendOpts {
            seed,
            ..ExtendOpts::default()
        }
    }
}

/// How the extension was certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verification {
    /// The zone derivative already was a total expression and no seam locus
    /// meets the region: nothing to extend.
    Symbolic,
    /// An extension was constructed, but continuity across the seams was
    /// only sampled. Treat membership claims accordingly.
    Sampled,
}

/// Is the extension as smooth as the form's regularity tag demands?
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularityVerdict {
    /// C^q-ness verified up to sampled differentiation order min(q, 2).
    VerifiedCq,
    /// The extension is continuous but fails C^q at the stated order: the
    /// input is not a member of the regularity-q complex.
    ContinuousNotCq { failing_order: u32 },
}

#[derive(Clone, Debug)]
pub struct DExtension {
    pub eta: ZonedForm,
    pub verification: Verification,
    pub regularity: RegularityVerdict,
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum DerivativeError {
    #[error("zone derivative does not extend continuously at {point:?}: {detail}")]
    NoExtension { point: Vec<f64>, detail: String },
    #[error("sampling failed while checking the extension: {0}")]
    Sampling(String),
}

/// Extended derivative: compute the zone derivative, close its piecewise
/// seams, and certify continuity on the whole region.
pub fn extended_d(omega: &ZonedForm, opts: &ExtendOpts) -> Result<DExtension, DerivativeError> {
    let eta_raw = raw_d(omega);
    let region = omega.region().clone();

    // Candidate extension: close strict piecewise conditions so seams get a
    // value; normalization may already collapse branches that agree.
    let mut closure_changed = false;
    let eta = eta_raw.map_coeffs(|_, c| {
        let closed = close_strict_conditions(c).normalized();
        if closed != c.normalized() {
            closure_changed = true;
        }
        closed
    });

    // Seam loci: zero sets of the zone-condition atoms.
    let mut seam_exprs: BTreeSet<ScalarExpr> = BTreeSet::new();
    if let Some(z) = eta_raw.zone() {
        collect_atom_exprs(&z.condition, &mut seam_exprs);
    }
    for c in eta_raw.coeffs().values() {
        collect_atom_exprs(&smoothness_condition(c), &mut seam_exprs);
    }

    let mut sampler = Sampler::for_task(opts.seed, "extended-d-seams");
    let mut any_seam_point = false;
    for seam in &seam_exprs {
        let points = seam_points(seam, &region, &mut sampler, opts.boundary_points);
        for p in points {
            any_seam_point = true;
            check_continuity_at(&eta, &eta_raw, &p, opts, &mut sampler)?;
        }
    }

    let verification = if !closure_changed && !any_seam_point {
        Verification::Symbolic
    } else {
        Verification::Sampled
    };

    let regularity = certify_regularity(&eta, omega.regularity(), &region, opts);

    let zone = eta_raw.zone().cloned().unwrap_or_else(|| Zone::full(omega.dim()));
    Ok(DExtension {
        eta: eta.with_zone(zone),
        verification,
        regularity,
    })
}

/// Convenience: extended derivative attached to the input form.
pub fn with_extended_d(
    omega: &ZonedForm,
    opts: &ExtendOpts,
) -> Result<(ZonedForm, DExtension), DerivativeError> {
    let ext = extended_d(omega, opts)?;
    Ok((omega.clone().with_derivative(ext.eta.clone()), ext))
}

fn collect_atom_exprs(c: &SemiCondition, out: &mut BTreeSet<ScalarExpr>) {
    match c {
        SemiCondition::True | SemiCondition::False => {}
        SemiCondition::Atom(_, e) => {
            let n = e.normalized();
            if !n.is_const() {
                out.insert(n);
            }
        }
        SemiCondition::And(items) | SemiCondition::Or(items) => {
            items.iter().for_each(|c| collect_atom_exprs(c, out))
        }
    }
}

/// Close strict branch conditions (Gt -> Ge, Lt -> Le) through the tree so
/// the candidate is defined on the seams.
fn close_strict_conditions(e: &ScalarExpr) -> ScalarExpr {
    match e.node() {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Sum(items) => {
            ScalarExpr::sum(items.iter().map(close_strict_conditions).collect())
        }
        Expr::Prod(items) => {
            ScalarExpr::prod(items.iter().map(close_strict_conditions).collect())
        }
        Expr::Quot(a, b) => close_strict_conditions(a).div(&close_strict_conditions(b)),
        Expr::Pow(a, k) => close_strict_conditions(a).pow(*k),
        Expr::Root(a, n) => close_strict_conditions(a).root(*n),
        Expr::Abs(a) => close_strict_conditions(a).abs(),
        Expr::Min(a, b) => close_strict_conditions(a).min_with(&close_strict_conditions(b)),
        Expr::Max(a, b) => close_strict_conditions(a).max_with(&close_strict_conditions(b)),
        Expr::Piecewise(branches) => ScalarExpr::piecewise(
            branches
                .iter()
                .map(|(c, v)| (close_cond(c), close_strict_conditions(v)))
                .collect(),
        ),
        Expr::Log(..) => e.clone(),
    }
}

fn close_cond(c: &SemiCondition) -> SemiCondition {
    match c {
        SemiCondition::True | SemiCondition::False => c.clone(),
        SemiCondition::Atom(SignOp::Gt, e) => SemiCondition::Atom(SignOp::Ge, e.clone()),
        SemiCondition::Atom(SignOp::Lt, e) => SemiCondition::Atom(SignOp::Le, e.clone()),
        SemiCondition::Atom(op, e) => SemiCondition::Atom(*op, e.clone()),
        SemiCondition::And(items) => SemiCondition::and(items.iter().map(close_cond).collect()),
        SemiCondition::Or(items) => SemiCondition::or(items.iter().map(close_cond).collect()),
    }
}

/// Points of `{seam = 0}` inside the region, found by probing for sign
/// changes along sampled segments and bisecting.
pub(crate) fn seam_points(
    seam: &ScalarExpr,
    region: &Region,
    sampler: &mut Sampler,
    count: usize,
) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let budget = count * 16;
    let mut attempts = 0;
    while out.len() < count && attempts < budget {
        attempts += 1;
        let (p, q) = match (
            region.sample_point(sampler, 32),
            region.sample_point(sampler, 32),
        ) {
            (Ok(p), Ok(q)) => (p, q),
            _ => break,
        };
        let (vp, vq) = match (seam.eval(&p), seam.eval(&q)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        if vp == 0.0 {
            out.push(p);
            continue;
        }
        if vp * vq >= 0.0 {
            continue;
        }
        // Bisect the segment [p, q] for the zero of the seam expression.
        let (mut lo, mut hi, mut vlo) = (p, q, vp);
        for _ in 0..80 {
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let vm = match seam.eval(&mid) {
                Ok(v) => v,
                Err(_) => break,
            };
            if vm == 0.0 || (hi.iter().zip(&lo).map(|(a, b)| (a - b).abs()).sum::<f64>()) < 1e-13 {
                lo = mid;
                break;
            }
            if vlo * vm < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                vlo = vm;
            }
        }
        if region.contains(&lo).unwrap_or(false) || region.contains(&hi).unwrap_or(false) {
            out.push(lo);
        }
    }
    out
}

/// Directional limits of the zone derivative at a seam point must agree
/// with each other and with the candidate's value there.
fn check_continuity_at(
    candidate: &ZonedForm,
    raw: &ZonedForm,
    p: &[f64],
    opts: &ExtendOpts,
    sampler: &mut Sampler,
) -> Result<(), DerivativeError> {
    let n = candidate.dim();
    let region = candidate.region();
    let zone_cond = raw.zone().map(|z| z.condition.clone());
    let indices: Vec<MultiIndex> = candidate.coeffs().keys().cloned().collect();
    for idx in indices {
        let coeff = candidate.coeff(&idx);
        let mut limits: Vec<f64> = Vec::new();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            for sgn in [1.0, -1.0] {
                let mut d = vec![0.0; n];
                d[i] = sgn;
                dirs.push(d);
            }
        }
        while dirs.len() < 2 * n + opts.directions {
            dirs.push(sampler.direction(n));
        }
        for d in &dirs {
            let mut values = Vec::new();
            for j in 0..3 {
                let delta = 1e-3 * 0.1f64.powi(j);
                let x: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + delta * b).collect();
                if !region.contains(&x).unwrap_or(false) {
                    continue;
                }
                if let Some(zc) = &zone_cond {
                    if !zc.holds_at(&x).unwrap_or(false) {
                        continue;
                    }
                }
                if let Ok(v) = coeff.eval(&x) {
                    values.push(v);
                }
            }
            if values.len() == 3 {
                // Differences must shrink as the step does; failure to
                // shrink is a diverging (or oscillating) approach.
                let d01 = (values[1] - values[0]).abs();
                let d12 = (values[2] - values[1]).abs();
                let scale = 1f64.max(values[2].abs());
                if d12 > 0.9 * d01 && d12 > 1e2 * opts.tol * scale {
                    return Err(DerivativeError::NoExtension {
                        point: p.to_vec(),
                        detail: format!(
                            "zone derivative of component {} diverges along a seam approach",
                            idx
                        ),
                    });
                }
                // One step of Richardson extrapolation at shrink ratio 10:
                // exact for approaches with a Lipschitz leading term.
                limits.push(values[2] + (values[2] - values[1]) / 9.0);
            } else if values.len() == 2 {
                limits.push(values[1]);
            }
        }
        if limits.len() < 2 {
            continue;
        }
        let lo = limits.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = limits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = 1f64.max(lo.abs()).max(hi.abs());
        if hi - lo > opts.tol * scale {
            return Err(DerivativeError::NoExtension {
                point: p.to_vec(),
                detail: format!(
                    "directional limits of component {} disagree ({} vs {})",
                    idx, lo, hi
                ),
            });
        }
        let target = 0.5 * (lo + hi);
        match coeff.eval(p) {
            Ok(v) if (v - target).abs() <= 1e2 * opts.tol * scale => {}
            Ok(v) => {
                return Err(DerivativeError::NoExtension {
                    point: p.to_vec(),
                    detail: format!(
                        "candidate value {} of component {} misses the limit {}",
                        v, idx, target
                    ),
                })
            }
            Err(e) => {
                return Err(DerivativeError::NoExtension {
                    point: p.to_vec(),
                    detail: format!("candidate undefined at the seam: {}", e),
                })
            }
        }
    }
    Ok(())
}

/// Sampled C^q certification of the extension, order by order up to
/// min(q, 2). Never upgrades: a pass is still only sampled knowledge.
fn certify_regularity(
    eta: &ZonedForm,
    q: u32,
    region: &Region,
    opts: &ExtendOpts,
) -> RegularityVerdict {
    if q == 0 {
        return RegularityVerdict::VerifiedCq;
    }
    let n = eta.dim();
    let max_order = q.min(2);
    let mut layer: Vec<ScalarExpr> = eta.coeffs().values().cloned().collect();
    for order in 1..=max_order {
        let mut next = Vec::new();
        for c in &layer {
            for i in 0..n {
                let (dc, _) = differentiate(c, i);
                if dc.is_zero_literal() {
                    continue;
                }
                if !derivative_extends(&dc, region, opts, order) {
                    return RegularityVerdict::ContinuousNotCq {
                        failing_order: order,
                    };
                }
                next.push(dc);
            }
        }
        layer = next;
    }
    RegularityVerdict::VerifiedCq
}

fn derivative_extends(dc: &ScalarExpr, region: &Region, opts: &ExtendOpts, order: u32) -> bool {
    let mut seams = BTreeSet::new();
    collect_atom_exprs(&smoothness_condition(dc), &mut seams);
    let mut sampler = Sampler::for_task(opts.seed, &format!("cq-order-{order}"));
    for seam in &seams {
        for p in seam_points(seam, region, &mut sampler, opts.boundary_points.min(8)) {
            // Two-sided limits along each axis must agree.
            let n = region.dim();
            for i in 0..n {
                let mut sides = Vec::new();
                for sgn in [1.0, -1.0] {
                    let mut vals = Vec::new();
                    for j in 1..4 {
                        let delta = sgn * 1e-4 * 0.1f64.powi(j);
                        let mut x = p.clone();
                        x[i] += delta;
                        if !region.contains(&x).unwrap_or(false) {
                            continue;
                        }
                        if let Ok(v) = dc.eval(&x) {
                            vals.push(v);
                        }
                    }
                    if let Some(v) = vals.last() {
                        sides.push(*v);
                    }
                }
                if sides.len() == 2 {
                    let scale = 1f64.max(sides[0].abs()).max(sides[1].abs());
                    if (sides[0] - sides[1]).abs() > 1e-3 * scale {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::EqOpts;
    use crate::forms::equal_forms;

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    fn spline(q: u32) -> ScalarExpr {
        // max(0, x1)^{q+1}
        ScalarExpr::int(0).max_with(&x(0)).pow(q as i32 + 1)
    }

    #[test]
    fn d_of_x1_dx2_is_volume_form() {
        let region = Region::full_space(2);
        let omega = ZonedForm::new(
            2,
            1,
            1,
            region,
            vec![(MultiIndex::single(1), x(0))],
        )
        .unwrap();
        let d = raw_d(&omega);
        assert_eq!(
            d.coeff(&MultiIndex::pair(0, 1).unwrap()),
            ScalarExpr::int(1).normalized()
        );
    }

    #[test]
    fn log_coefficient_derivative() {
        // d(log(x1) dx2) = (1/x1) dx1^dx2 on x1 > 0.
        let region = Region::single(crate::geometry::Ribbon::new(
            Region::interval(0.0, 10.0),
            crate::geometry::Bound::NegInf,
            crate::geometry::Bound::PosInf,
        ));
        // region: base x1 in (0,10), fiber x2 free
        let omega = ZonedForm::new(
            2,
            1,
            0,
            region.clone(),
            vec![(MultiIndex::single(1), ScalarExpr::log(&x(0)).unwrap())],
        )
        .unwrap();
        let ext = extended_d(&omega, &ExtendOpts::default()).unwrap();
        let expected = ZonedForm::new(
            2,
            2,
            0,
            region.clone(),
            vec![(
                MultiIndex::pair(0, 1).unwrap(),
                ScalarExpr::int(1).div(&x(0)),
            )],
        )
        .unwrap();
        assert_eq!(
            equal_forms(&ext.eta, &expected, &region, &EqOpts::seeded(1)).unwrap(),
            crate::expr::EqVerdict::SymbolicEqual
        );
    }

    #[test]
    fn angular_form_is_closed_symbolically() {
        // (x1 dx2 - x2 dx1) / (x1^2 + x2^2) away from the origin.
        let r2 = x(0).pow(2).add(&x(1).pow(2));
        let region = Region::full_space(2);
        let omega = ZonedForm::new(
            2,
            1,
            0,
            region,
            vec![
                (MultiIndex::single(0), x(1).neg().div(&r2)),
                (MultiIndex::single(1), x(0).div(&r2)),
            ],
        )
        .unwrap();
        let d = raw_d(&omega);
        assert!(d.is_zero(), "angular form derivative should cancel, got {:?}", d.coeffs());
    }

    #[test]
    fn spline_dx1_extends_to_zero() {
        // omega = max(0,x1)^{q+1} dx1 has zone derivative 0, which extends.
        let region = Region::full_space(2);
        for q in 1..=2 {
            let omega = ZonedForm::new(
                2,
                1,
                q,
                region.clone(),
                vec![(MultiIndex::single(0), spline(q))],
            )
            .unwrap();
            let ext = extended_d(&omega, &ExtendOpts::default()).unwrap();
            assert!(ext.eta.is_zero());
            assert_eq!(ext.regularity, RegularityVerdict::VerifiedCq);
        }
    }

    #[test]
    fn spline_dx2_is_continuous_but_not_c1_at_q1() {
        // omega = max(0,x1)^2 dx2 at q=1: the extension 2*max(0,x1) dx1^dx2
        // exists and is continuous, but is not C^1 across x1 = 0.
        let region = Region::open_box(&[(-1.0, 1.0), (-1.0, 1.0)]);
        let omega = ZonedForm::new(
            2,
            1,
            1,
            region.clone(),
            vec![(MultiIndex::single(1), spline(1))],
        )
        .unwrap();
        let ext = extended_d(&omega, &ExtendOpts::default()).unwrap();
        // the C^0 extension exists and equals 2*max(0,x1)
        let expected = ZonedForm::new(
            2,
            2,
            0,
            region.clone(),
            vec![(
                MultiIndex::pair(0, 1).unwrap(),
                ScalarExpr::int(2).mul(&ScalarExpr::int(0).max_with(&x(0))),
            )],
        )
        .unwrap();
        assert!(equal_forms(&ext.eta, &expected, &region, &EqOpts::seeded(3))
            .unwrap()
            .is_equal());
        assert_eq!(
            ext.regularity,
            RegularityVerdict::ContinuousNotCq { failing_order: 1 }
        );
    }

    #[test]
    fn absolute_value_slope_does_not_extend() {
        // d|x1| flips sign across 0: no continuous extension on a region
        // straddling the seam.
        let region = Region::open_box(&[(-1.0, 1.0)]);
        let omega = ZonedForm::scalar(1, 0, region, x(0).abs());
        let err = extended_d(&omega, &ExtendOpts::default()).unwrap_err();
        assert!(matches!(err, DerivativeError::NoExtension { .. }));
    }

    #[test]
    fn polynomial_case_is_symbolic() {
        let region = Region::full_space(2);
        let omega = ZonedForm::new(
            2,
            1,
            1,
            region,
            vec![(MultiIndex::single(1), x(0).pow(3).add(&x(1)))],
        )
        .unwrap();
        let ext = extended_d(&omega, &ExtendOpts::default()).unwrap();
        assert_eq!(ext.verification, Verification::Symbolic);
    }

    #[test]
    fn double_extension_vanishes_on_spline() {
        let region = Region::open_box(&[(-1.0, 1.0), (-1.0, 1.0)]);
        let omega = ZonedForm::new(
            2,
            1,
            0,
            region.clone(),
            vec![(MultiIndex::single(1), spline(2))],
        )
        .unwrap();
        let (_, ext) = with_extended_d(&omega, &ExtendOpts::default()).unwrap();
        let again = extended_d(&ext.eta, &ExtendOpts::default()).unwrap();
        assert!(again.eta.is_zero());
    }
}
