//! Fiber integration on `X x R` and the homotopy operators.
//!
//! The decomposition writes `omega = omega' + dt ^ omega''` with the fiber
//! variable as the last coordinate and `omega''` extracted dt-first (the
//! coefficient of `dx^J ^ dt` contributes `(-1)^{|J|}` to `omega''`). With
//! the operators
//!
//! ```text
//! Q_k(omega)   = (-1)^k     * int_0^t omega'' du            (form on X x R)
//! Q_a^b(omega) = (-1)^{k-1} * int_{a(x)}^{b(x)} omega'' du  (form on X)
//! ```
//!
//! the chain identities hold exactly in the stated orientations:
//!
//! ```text
//! D Q_k(omega) - Q_{k+1}(D omega) = (-1)^k (omega - pi* s* omega)
//! d Q_a^b(omega) - Q_a^b(d omega) = (-1)^k (s_a* omega - s_b* omega)
//! ```
//!
//! Integration here is symbolic: coefficients convert to the closed
//! integrand class piece by piece between seam graphs, so outputs are again
//! constructible and the identities can be checked by normalization, not
//! just numerics.

mod antiderivative;
mod convert;
mod logpoly;
mod seams;

pub use antiderivative::{antiderivative, integrate_rational};
pub use convert::{convert, Probes};
pub use logpoly::{expr_as_poly, LogPolyIntegrand, LogTerm, PolyT, RatT};
pub use seams::{bounded_fiber_integral, collect_seams, fiber_integral, FiberIntegral, QOpts};

use crate::expr::{differentiate, EqOpts, EqVerdict, ScalarExpr, SemiCondition, SignOp, Zone};
use crate::forms::{equal_forms, raw_d, MultiIndex, ZonedForm};
use crate::geometry::Region;
use crate::sample::{Sampler, SamplingError};

#[derive(Clone, Debug, thiserror::Error)]
pub enum FiberError {
    #[error("unsupported integrand: {detail}")]
    Unsupported { detail: String },
    #[error("integration bounds cross (a >= b) at sampled base point {at:?}")]
    BoundsCrossing { at: Vec<f64> },
    #[error("the form's region is not presented as base x fiber (one unconstrained ribbon)")]
    NotAProductRegion,
    #[error("sampling failed: {0}")]
    Sampling(#[from] SamplingError),
}

impl FiberError {
    pub(crate) fn unsupported(detail: impl Into<String>) -> FiberError {
        FiberError::Unsupported {
            detail: detail.into(),
        }
    }
}

/// `omega = omega' + dt ^ omega''`, reassembling exactly.
#[derive(Clone, Debug)]
pub struct FiberDecomposition {
    /// Terms without dt (degree k on X x R).
    pub base_part: ZonedForm,
    /// dt-first coefficients (degree k-1 on X x R).
    pub fiber_part: ZonedForm,
    pub t_index: usize,
}

pub fn fiber_decompose(omega: &ZonedForm) -> FiberDecomposition {
    let n = omega.dim();
    let t = n - 1;
    let k = omega.degree();
    let mut base = Vec::new();
    let mut fiber = Vec::new();
    for (idx, a) in omega.coeffs() {
        match idx.extract(t) {
            None => base.push((idx.clone(), a.clone())),
            Some((rest, sign)) => {
                let c = if sign < 0 { a.neg().normalized() } else { a.clone() };
                fiber.push((rest, c));
            }
        }
    }
    let base_part = ZonedForm::new(n, k, omega.regularity(), omega.region().clone(), base)
        .expect("decomposition keeps the shape");
    let fiber_part = ZonedForm::new(
        n,
        k.saturating_sub(1),
        omega.regularity(),
        omega.region().clone(),
        fiber,
    )
    .expect("decomposition keeps the shape");
    FiberDecomposition {
        base_part,
        fiber_part,
        t_index: t,
    }
}

impl FiberDecomposition {
    /// `omega' + dt ^ omega''`, coefficientwise exact.
    pub fn reassemble(&self) -> ZonedForm {
        let mut coeffs: Vec<(MultiIndex, ScalarExpr)> = self
            .base_part
            .coeffs()
            .iter()
            .map(|(i, c)| (i.clone(), c.clone()))
            .collect();
        for (idx, c) in self.fiber_part.coeffs() {
            let (full, sign) = idx
                .wedge_insert(self.t_index)
                .expect("fiber part has no dt");
            let signed = if sign < 0 { c.neg().normalized() } else { c.clone() };
            coeffs.push((full, signed));
        }
        ZonedForm::new(
            self.base_part.dim(),
            self.base_part.degree(),
            self.base_part.regularity(),
            self.base_part.region().clone(),
            coeffs,
        )
        .expect("reassembly keeps the shape")
    }
}

/// Base region of a `base x fiber` product presentation.
pub fn base_of_product(region: &Region) -> Result<Region, FiberError> {
    match region.ribbons() {
        [only] if only.constraint().is_none() => Ok(only.base().clone()),
        _ => Err(FiberError::NotAProductRegion),
    }
}

/// Result of a homotopy operator, with the seam provenance flag.
#[derive(Clone, Debug)]
pub struct QResult {
    pub form: ZonedForm,
    /// At least one coefficient used tree-collected (heuristic) seams.
    pub heuristic_seams: bool,
}

/// `Q_k(omega) = (-1)^k int_0^t omega'' du`, a (k-1)-form on `X x R`.
pub fn q_operator(omega: &ZonedForm, opts: &QOpts) -> Result<QResult, FiberError> {
    let deco = fiber_decompose(omega);
    let base = base_of_product(omega.region())?;
    let k = omega.degree();
    let sign = if k % 2 == 0 { 1 } else { -1 };
    let mut coeffs = Vec::new();
    let mut heuristic = false;
    let mut seam_atoms: Vec<SemiCondition> = Vec::new();
    let t_var = ScalarExpr::var(deco.t_index);
    for (idx, c) in deco.fiber_part.coeffs() {
        let integral = fiber_integral(c, deco.t_index, &base, opts)?;
        heuristic |= integral.heuristic_seams && !integral.seams.is_empty();
        for seam in &integral.seams {
            seam_atoms.push(SemiCondition::atom(SignOp::Ne, t_var.sub(seam)));
        }
        let signed = if sign < 0 {
            integral.anchored.neg().normalized()
        } else {
            integral.anchored
        };
        coeffs.push((idx.clone(), signed));
    }
    let mut form = ZonedForm::new(
        omega.dim(),
        k.saturating_sub(1),
        omega.regularity(),
        omega.region().clone(),
        coeffs,
    )
    .expect("homotopy operator keeps the shape");
    let mut zone_parts = seam_atoms;
    if let Some(z) = omega.zone() {
        zone_parts.push(z.condition.clone());
    }
    form = form.with_zone(Zone::new(
        omega.dim(),
        SemiCondition::and(zone_parts).normalized(),
        omega.region().clone(),
    ));
    for (_, c) in form.coeffs() {
        c.validate_constructible()
            .map_err(|e| FiberError::unsupported(e.to_string()))?;
    }
    Ok(QResult {
        form,
        heuristic_seams: heuristic,
    })
}

/// `Q_a^b(omega) = (-1)^{k-1} int_{a(x)}^{b(x)} omega'' du`, a (k-1)-form
/// on the base.
pub fn q_bounds(
    omega: &ZonedForm,
    lower: &ScalarExpr,
    upper: &ScalarExpr,
    opts: &QOpts,
) -> Result<QResult, FiberError> {
    let deco = fiber_decompose(omega);
    let base = base_of_product(omega.region())?;
    let k = omega.degree();
    let sign = if (k + 1) % 2 == 0 { 1 } else { -1 };

    // a < b, sampled.
    let mut sampler = Sampler::for_task(opts.seed, "q-bounds");
    if let Ok(points) = base.sample_points(&mut sampler, 16, 64) {
        for p in points {
            if let (Ok(av), Ok(bv)) = (lower.eval(&p), upper.eval(&p)) {
                if av >= bv {
                    return Err(FiberError::BoundsCrossing { at: p });
                }
            }
        }
    }

    let mut coeffs = Vec::new();
    let mut heuristic = false;
    for (idx, c) in deco.fiber_part.coeffs() {
        let integral = bounded_fiber_integral(c, deco.t_index, &base, lower, upper, opts)?;
        heuristic |= integral.heuristic_seams && !integral.seams.is_empty();
        let mut value = integral.anchored;
        if sign < 0 {
            value = value.neg().normalized();
        }
        coeffs.push((idx.clone(), value));
    }
    let form = ZonedForm::new(
        base.dim(),
        k.saturating_sub(1),
        omega.regularity(),
        base,
        coeffs,
    )
    .expect("bounded operator keeps the shape");
    Ok(QResult {
        form,
        heuristic_seams: heuristic,
    })
}

/// Derivative restricted to a set of variables, as a (k+1)-form.
fn partial_d(omega: &ZonedForm, vars: &[usize]) -> ZonedForm {
    let mut coeffs = Vec::new();
    for (idx, a) in omega.coeffs() {
        for &i in vars {
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
    ZonedForm::new(
        omega.dim(),
        omega.degree() + 1,
        omega.regularity().saturating_sub(1),
        omega.region().clone(),
        coeffs,
    )
    .expect("partial derivative keeps the shape")
}

/// `pi* s* omega`: coefficients of the dt-free part frozen at t = 0,
/// viewed again on `X x R`.
pub fn pi_star_s_star(omega: &ZonedForm) -> Result<ZonedForm, FiberError> {
    let deco = fiber_decompose(omega);
    let zero = ScalarExpr::int(0);
    let mut coeffs = Vec::new();
    for (idx, a) in deco.base_part.coeffs() {
        let frozen = a
            .substitute_var(deco.t_index, &zero)
            .map_err(|e| FiberError::unsupported(e.to_string()))?
            .normalized();
        coeffs.push((idx.clone(), frozen));
    }
    Ok(ZonedForm::new(
        omega.dim(),
        omega.degree(),
        omega.regularity(),
        omega.region().clone(),
        coeffs,
    )
    .expect("section pullback keeps the shape"))
}

/// Residual report of the chain homotopy identity
/// `D Q_k(omega) - Q_{k+1}(D omega) = (-1)^k (omega - pi* s* omega)`,
/// with the three computational sub-identities that add up to it.
#[derive(Clone, Debug)]
pub struct HomotopyIdentityReport {
    pub main: EqVerdict,
    /// `-Q(d_t omega') = (-1)^k (omega' - pi* s* omega')`
    pub base_part: EqVerdict,
    /// `d_t Q(omega) = (-1)^k (omega - omega')`
    pub fiber_time: EqVerdict,
    /// `d_x Q(omega) = Q(D(dt-part))`
    pub fiber_space: EqVerdict,
    /// Largest sampled absolute residual of the main identity.
    pub max_residual: f64,
    pub heuristic_seams: bool,
}

impl HomotopyIdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.main.is_equal()
            && self.base_part.is_equal()
            && self.fiber_time.is_equal()
            && self.fiber_space.is_equal()
            && self.max_residual <= tol
    }
}

pub fn homotopy_identity_check(
    omega: &ZonedForm,
    opts: &QOpts,
    eq: &EqOpts,
) -> Result<HomotopyIdentityReport, FiberError> {
    let n = omega.dim();
    let t = n - 1;
    let k = omega.degree();
    let region = omega.region().clone();
    let sign_k = if k % 2 == 0 { 1 } else { -1 };
    let signed = |f: &ZonedForm| -> ZonedForm {
        if sign_k < 0 {
            f.negate()
        } else {
            f.clone()
        }
    };

    let deco = fiber_decompose(omega);
    let dt_part = deco.reassemble().sub(&deco.base_part);
    let pis = pi_star_s_star(omega)?;

    let q_omega = q_operator(omega, opts)?;
    let d_omega = raw_d(omega);
    let q_d_omega = q_operator(&d_omega, opts)?;
    let dq = raw_d(&q_omega.form);

    let main_lhs = dq.sub(&q_d_omega.form);
    let main_rhs = signed(&omega.sub(&pis));
    let residual = main_lhs.sub(&main_rhs);
    let zero_k = ZonedForm::zero(n, k, omega.regularity(), region.clone());
    let main = equal_forms(&residual, &zero_k, &region, eq)?;

    // Sub-identity 1: the dt-free part against the section pullback.
    let x_vars: Vec<usize> = (0..t).collect();
    let dt_of_base = partial_d(&deco.base_part, &[t]);
    let q_dt_base = q_operator(&dt_of_base, opts)?;
    let s1 = q_dt_base
        .form
        .negate()
        .sub(&signed(&deco.base_part.sub(&pi_star_s_star(&deco.base_part)?)));
    let base_part = equal_forms(&s1, &zero_k, &region, eq)?;

    // Sub-identity 2: the time derivative of Q returns the dt-part.
    let s2 = partial_d(&q_omega.form, &[t]).sub(&signed(&dt_part));
    let fiber_time = equal_forms(&s2, &zero_k, &region, eq)?;

    // Sub-identity 3: space derivatives commute with the fiber integral.
    let d_dt_part = raw_d(&dt_part);
    let q_d_dt = q_operator(&d_dt_part, opts)?;
    let s3 = partial_d(&q_omega.form, &x_vars).sub(&q_d_dt.form);
    let fiber_space = equal_forms(&s3, &zero_k, &region, eq)?;

    // Max sampled residual of the main identity.
    let mut sampler = Sampler::for_task(eq.seed, "homotopy-identity-residual");
    let mut max_residual: f64 = 0.0;
    if let Ok(points) = region.sample_points(&mut sampler, eq.samples, 64) {
        for p in points {
            for idx in residual.coeffs().keys() {
                if let Ok(v) = residual.eval_coeff(idx, &p) {
                    max_residual = max_residual.max(v.abs());
                }
            }
        }
    }

    Ok(HomotopyIdentityReport {
        main,
        base_part,
        fiber_time,
        fiber_space,
        max_residual,
        heuristic_seams: q_omega.heuristic_seams || q_d_omega.heuristic_seams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::product_with_line;

    fn x() -> ScalarExpr {
        ScalarExpr::var(0)
    }

    fn t() -> ScalarExpr {
        ScalarExpr::var(1)
    }

    fn line_product() -> Region {
        product_with_line(&Region::interval(-1.0, 1.0))
    }

    fn form1(coeffs: Vec<(MultiIndex, ScalarExpr)>, q: u32) -> ZonedForm {
        ZonedForm::new(2, 1, q, line_product(), coeffs).unwrap()
    }

    #[test]
    fn decomposition_signs_and_reassembly() {
        // omega = b dx1 ^ dt decomposes with omega'' = -b dx1.
        let b = t().mul(&x());
        let omega = ZonedForm::new(
            2,
            2,
            0,
            line_product(),
            vec![(MultiIndex::pair(0, 1).unwrap(), b.clone())],
        )
        .unwrap();
        let deco = fiber_decompose(&omega);
        assert_eq!(
            deco.fiber_part.coeff(&MultiIndex::single(0)),
            b.neg().normalized()
        );
        assert_eq!(deco.reassemble().coeffs(), omega.coeffs());
    }

    #[test]
    fn q_of_dt_is_minus_t() {
        // Q_1(dt) = (-1)^1 int_0^t 1 = -t under the fixed orientation.
        let omega = form1(vec![(MultiIndex::single(1), ScalarExpr::int(1))], 0);
        let q = q_operator(&omega, &QOpts::seeded(1)).unwrap();
        assert_eq!(q.form.coeff(&MultiIndex::empty()), t().neg().normalized());
    }

    #[test]
    fn q_of_t_dt_wedge_dx_matches_orientation() {
        // Q_2(t dt ^ dx1) = +(t^2/2) dx1.
        let omega = ZonedForm::new(
            2,
            2,
            0,
            line_product(),
            // t dt ^ dx1 = -t dx1 ^ dt in increasing-index storage
            vec![(MultiIndex::pair(0, 1).unwrap(), t().neg())],
        )
        .unwrap();
        let q = q_operator(&omega, &QOpts::seeded(2)).unwrap();
        assert_eq!(
            q.form.coeff(&MultiIndex::single(0)),
            t().pow(2).mul(&ScalarExpr::frac(1, 2)).normalized()
        );
    }

    #[test]
    fn q_kills_projection_pullbacks() {
        // No dt component: Q = 0.
        let omega = form1(vec![(MultiIndex::single(0), x().pow(3))], 1);
        let q = q_operator(&omega, &QOpts::seeded(3)).unwrap();
        assert!(q.form.is_zero());
    }

    #[test]
    fn chain_identity_on_t_dx() {
        let omega = form1(vec![(MultiIndex::single(0), t())], 1);
        let report =
            homotopy_identity_check(&omega, &QOpts::seeded(4), &EqOpts::seeded(4)).unwrap();
        assert_eq!(report.main, EqVerdict::SymbolicEqual, "{report:?}");
        assert!(report.holds(1e-9));
    }

    #[test]
    fn chain_identity_on_spline_seam() {
        // q = 0 spline with a seam at t = 0.
        let omega = form1(
            vec![(
                MultiIndex::single(0),
                ScalarExpr::int(0).max_with(&t()).pow(2),
            )],
            0,
        );
        let report =
            homotopy_identity_check(&omega, &QOpts::seeded(5), &EqOpts::seeded(5)).unwrap();
        assert!(report.holds(1e-9), "{report:?}");
        assert!(report.heuristic_seams);
    }

    #[test]
    fn q_bounds_examples() {
        // omega = dt, a = 0, b = 1: the constant 1.
        let omega = form1(vec![(MultiIndex::single(1), ScalarExpr::int(1))], 0);
        let q = q_bounds(
            &omega,
            &ScalarExpr::int(0),
            &ScalarExpr::int(1),
            &QOpts::seeded(6),
        )
        .unwrap();
        assert_eq!(
            q.form.coeff(&MultiIndex::empty()),
            ScalarExpr::int(1).normalized()
        );

        // omega = t dt over a = 0, b = x1: x1^2 / 2.
        let base_x = Region::interval(0.0, 1.0);
        let omega = ZonedForm::new(
            2,
            1,
            0,
            product_with_line(&base_x),
            vec![(MultiIndex::single(1), t())],
        )
        .unwrap();
        let q = q_bounds(&omega, &ScalarExpr::int(0), &x(), &QOpts::seeded(6)).unwrap();
        assert_eq!(
            q.form.coeff(&MultiIndex::empty()),
            x().pow(2).mul(&ScalarExpr::frac(1, 2)).normalized()
        );
    }

    #[test]
    fn q_bounds_additivity() {
        // Q_0^c + Q_c^b = Q_0^b on samples.
        let omega = ZonedForm::new(
            2,
            1,
            0,
            product_with_line(&Region::interval(0.0, 1.0)),
            vec![(MultiIndex::single(1), t().pow(2).add(&x()))],
        )
        .unwrap();
        let c = ScalarExpr::frac(1, 3);
        let b = x().add(&ScalarExpr::int(1));
        let opts = QOpts::seeded(7);
        let q0c = q_bounds(&omega, &ScalarExpr::int(0), &c, &opts).unwrap().form;
        let qcb = q_bounds(&omega, &c, &b, &opts).unwrap().form;
        let q0b = q_bounds(&omega, &ScalarExpr::int(0), &b, &opts).unwrap().form;
        let sum = q0c.add(&qcb);
        let verdict = equal_forms(&sum, &q0b, &Region::interval(0.0, 1.0), &EqOpts::seeded(7))
            .unwrap();
        assert!(verdict.is_equal(), "{verdict:?}");
    }

    #[test]
    fn q_bounds_rejects_crossing() {
        let omega = form1(vec![(MultiIndex::single(1), ScalarExpr::int(1))], 0);
        let err = q_bounds(
            &omega,
            &ScalarExpr::int(1),
            &ScalarExpr::int(0),
            &QOpts::seeded(8),
        );
        assert!(matches!(err, Err(FiberError::BoundsCrossing { .. })));
    }

    #[test]
    fn section_lemma_residual_vanishes() {
        // d Q_a^b(omega) - Q_a^b(d omega) = (-1)^k (s_a* omega - s_b* omega)
        // for omega = (x + t^2) dt on (0,1) x R with a = 0, b = x.
        let base = Region::interval(0.1, 0.9);
        let omega = ZonedForm::new(
            2,
            1,
            0,
            product_with_line(&base),
            vec![(MultiIndex::single(1), x().add(&t().pow(2)))],
        )
        .unwrap();
        let a = ScalarExpr::int(0);
        let b = x();
        let opts = QOpts::seeded(9);
        let qab = q_bounds(&omega, &a, &b, &opts).unwrap().form;
        let d_omega = raw_d(&omega);
        let q_d = q_bounds(&d_omega, &a, &b, &opts).unwrap().form;
        let lhs = raw_d(&qab).sub(&q_d);
        // s_c* omega for omega = f dt: f(x, c(x)) dc.
        let s_pull = |bound: &ScalarExpr| -> ZonedForm {
            let deco = fiber_decompose(&omega);
            let f = deco.fiber_part.coeff(&MultiIndex::empty());
            let fc = f.substitute_var(1, bound).unwrap();
            let (db, _) = differentiate(bound, 0);
            ZonedForm::new(
                1,
                1,
                0,
                base.clone(),
                vec![(MultiIndex::single(0), fc.mul(&db).normalized())],
            )
            .unwrap()
        };
        // k = 1: the right side is -(s_a* - s_b*).
        let rhs = s_pull(&a).sub(&s_pull(&b)).negate();
        let verdict = equal_forms(&lhs, &rhs, &base, &EqOpts::seeded(9)).unwrap();
        assert!(verdict.is_equal(), "{verdict:?}");
    }
}
