//! Primitives of closed forms by recursive fiber integration.
//!
//! One descent step over a ribbon `V -> W` with interior section `c` uses
//! the affine fiber contraction `H(x', x_n, t) = (x', (1-t) x_n + t c(x'))`
//! (the time interval [0, 1] of the smoothed contraction suffices for
//! integration, and the affine form keeps integrands inside the closed
//! class). For closed `omega`,
//!
//! ```text
//! omega = pi*(psi* omega) + D[ (-1)^k Q_0^1(H* omega) ],
//! ```
//!
//! so a primitive on `V` is `pi* mu + (-1)^k Q_0^1(H* omega)` with `mu` a
//! primitive of `psi* omega` on the base. On a cell (a single-ribbon tower)
//! the recursion bottoms out at the point, which is the constructive
//! Poincare lemma.

use crate::expr::{EqOpts, ScalarExpr};
use crate::fiber::{q_bounds, FiberError, QOpts};
use crate::forms::{pullback, PullbackError, SmoothMap, ZonedForm};
use crate::geometry::{default_section, product_with_line, Region, Ribbon};

#[derive(Clone, Debug, thiserror::Error)]
pub enum PrimitiveError {
    #[error("primitives need degree >= 1, got a {0}-form")]
    DegreeZero(usize),
    #[error("the region is not a cell (single-ribbon tower)")]
    NotACell,
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Pullback(#[from] PullbackError),
}

/// One fiber-descent step over a ribbon.
pub struct FiberDescent {
    /// `psi* omega`, a closed k-form on the base.
    pub base_form: ZonedForm,
    /// `(-1)^k Q_0^1(H* omega)`, a (k-1)-form on the ribbon.
    pub fiber_term: ZonedForm,
    /// The projection `V -> W`.
    pub projection: SmoothMap,
}

pub fn fiber_descent(
    omega: &ZonedForm,
    ribbon: &Ribbon,
    section: Option<ScalarExpr>,
    qopts: &QOpts,
    eq: &EqOpts,
) -> Result<FiberDescent, PrimitiveError> {
    let n = ribbon.dim();
    let k = omega.degree();
    let region = Region::single(ribbon.clone());
    let c = section.unwrap_or_else(|| default_section(ribbon));

    // H: V x R -> V, affine in the fiber coordinate.
    let t = ScalarExpr::var(n);
    let one_minus = ScalarExpr::int(1).sub(&t);
    let mut components: Vec<ScalarExpr> = (0..n - 1).map(ScalarExpr::var).collect();
    components.push(
        one_minus
            .mul(&ScalarExpr::var(n - 1))
            .add(&t.mul(&c))
            .normalized(),
    );
    let h = SmoothMap::new(n + 1, n, components, product_with_line(&region));
    let h_omega = pullback(&h, omega, eq)?;
    let q01 = q_bounds(&h_omega, &ScalarExpr::int(0), &ScalarExpr::int(1), qopts)?;
    let fiber_term = if k % 2 == 0 {
        q01.form
    } else {
        q01.form.negate()
    };

    // psi: W -> V and the induced form on the base.
    let base = ribbon.base().clone();
    let mut section_components: Vec<ScalarExpr> = (0..n - 1).map(ScalarExpr::var).collect();
    section_components.push(c);
    let psi = SmoothMap::new(n - 1, n, section_components, base);
    let base_form = pullback(&psi, omega, eq)?;

    let projection = SmoothMap::new(
        n,
        n - 1,
        (0..n - 1).map(ScalarExpr::var).collect(),
        region,
    );
    Ok(FiberDescent {
        base_form,
        fiber_term,
        projection,
    })
}

/// Primitive of a closed k-form (k >= 1) on a cell presented as a
/// single-ribbon tower: returns `lambda` with `D lambda = omega` (checked
/// by the caller via `equal_forms(raw_d(lambda), omega, ...)`).
pub fn poincare_primitive(
    omega: &ZonedForm,
    qopts: &QOpts,
    eq: &EqOpts,
) -> Result<ZonedForm, PrimitiveError> {
    let k = omega.degree();
    if k == 0 {
        return Err(PrimitiveError::DegreeZero(0));
    }
    let region = omega.region();
    let n = region.dim();
    if k > n || omega.is_zero() {
        return Ok(ZonedForm::zero(n, k - 1, omega.regularity(), region.clone()));
    }
    let ribbon = match region.ribbons() {
        [only] => only.clone(),
        _ => {
            if region.is_point() {
                return Ok(ZonedForm::zero(0, k - 1, omega.regularity(), Region::point()));
            }
            return Err(PrimitiveError::NotACell);
        }
    };
    let descent = fiber_descent(omega, &ribbon, None, qopts, eq)?;
    let mu = poincare_primitive(&descent.base_form, qopts, eq)?;
    let pulled = pullback(&descent.projection, &mu, eq)?;
    Ok(pulled.add(&descent.fiber_term))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::EqVerdict;
    use crate::forms::{equal_forms, raw_d, MultiIndex};

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    fn check_primitive(omega: &ZonedForm) -> ZonedForm {
        let lambda = poincare_primitive(omega, &QOpts::seeded(3), &EqOpts::seeded(3)).unwrap();
        let verdict = equal_forms(&raw_d(&lambda), omega, omega.region(), &EqOpts::seeded(3))
            .unwrap();
        assert!(verdict.is_equal(), "D(primitive) != omega: {verdict:?}");
        lambda
    }

    #[test]
    fn primitive_of_dx_on_square() {
        let cell = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let omega = ZonedForm::new(
            2,
            1,
            1,
            cell,
            vec![(MultiIndex::single(0), ScalarExpr::int(1))],
        )
        .unwrap();
        let lambda = check_primitive(&omega);
        // lambda = x1 + const
        let v1 = lambda.coeff(&MultiIndex::empty()).eval(&[0.7, 0.3]).unwrap();
        let v0 = lambda.coeff(&MultiIndex::empty()).eval(&[0.2, 0.3]).unwrap();
        assert!((v1 - v0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn primitive_of_closed_mixed_form() {
        // omega = x2 dx1 + x1 dx2 = d(x1 x2)
        let cell = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let omega = ZonedForm::new(
            2,
            1,
            1,
            cell,
            vec![
                (MultiIndex::single(0), x(1)),
                (MultiIndex::single(1), x(0)),
            ],
        )
        .unwrap();
        check_primitive(&omega);
    }

    #[test]
    fn primitive_of_spline_form() {
        // omega = 2 max(0, x1 - 1/2)^2 dx1 on (0,1): C^1 spline integrand
        let cell = Region::interval(0.0, 1.0);
        let spline = ScalarExpr::int(2).mul(
            &ScalarExpr::int(0)
                .max_with(&x(0).sub(&ScalarExpr::frac(1, 2)))
                .pow(2),
        );
        let omega = ZonedForm::new(
            1,
            1,
            1,
            cell,
            vec![(MultiIndex::single(0), spline)],
        )
        .unwrap();
        let lambda = check_primitive(&omega);
        // the primitive is the C^2 spline (x - 1/2)^3 * 2/3 on the right piece
        let f = lambda.coeff(&MultiIndex::empty());
        let right = f.eval(&[0.9]).unwrap() - f.eval(&[0.5]).unwrap();
        assert!((right - 2.0 / 3.0 * 0.4f64.powi(3)).abs() < 1e-10);
        let left = f.eval(&[0.4]).unwrap() - f.eval(&[0.1]).unwrap();
        assert!(left.abs() < 1e-12);
    }

    #[test]
    fn primitive_of_reciprocal_is_logarithmic() {
        // omega = dx/x on (0,1): the constructible primitive log-and-friends
        let cell = Region::interval(0.0, 1.0);
        let omega = ZonedForm::new(
            1,
            1,
            0,
            cell,
            vec![(MultiIndex::single(0), ScalarExpr::int(1).div(&x(0)))],
        )
        .unwrap();
        let lambda = check_primitive(&omega);
        // lambda(x) - lambda(y) = log(x / y)
        let f = lambda.coeff(&MultiIndex::empty());
        let diff = f.eval(&[0.8]).unwrap() - f.eval(&[0.2]).unwrap();
        assert!((diff - 4f64.ln()).abs() < 1e-12, "got {diff}");
        // and the primitive genuinely contains a logarithm
        assert!(!f.is_log_free());
    }

    #[test]
    fn two_form_primitive_on_cube() {
        // omega = dx1 ^ dx2 on I^2: a primitive is x1 dx2 (up to exact terms)
        let cell = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let omega = ZonedForm::new(
            2,
            2,
            1,
            cell,
            vec![(MultiIndex::pair(0, 1).unwrap(), ScalarExpr::int(1))],
        )
        .unwrap();
        check_primitive(&omega);
    }

    #[test]
    fn non_cell_is_rejected() {
        let two = Region::from_ribbons(
            1,
            vec![
                crate::geometry::Ribbon::interval(0.0, 1.0),
                crate::geometry::Ribbon::interval(2.0, 3.0),
            ],
        );
        let omega = ZonedForm::new(
            1,
            1,
            0,
            two,
            vec![(MultiIndex::single(0), ScalarExpr::int(1))],
        )
        .unwrap();
        assert!(matches!(
            poincare_primitive(&omega, &QOpts::seeded(1), &EqOpts::seeded(1)),
            Err(PrimitiveError::NotACell)
        ));
    }
}
