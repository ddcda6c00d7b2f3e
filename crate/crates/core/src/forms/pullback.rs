//! Pullback of forms along definable maps.
//!
//! `f*(a dx^J) = (a o f) * sum_I det(Jacobian rows J, columns I) dx^I`,
//! with the determinant expanded symbolically (degrees at desk scale are
//! small). The result's zone is the preimage of the input's zone
//! intersected with the map's own C^1 locus.

use crate::expr::{EqOpts, ScalarExpr, SemiCondition, Zone};
use crate::sample::SamplingError;

use super::{equal_forms, raw_d, MultiIndex, SmoothMap, ZonedForm};

#[derive(Clone, Debug, thiserror::Error)]
pub enum PullbackError {
    #[error("map targets dimension {map_target} but the form lives in dimension {form_dim}")]
    DimensionMismatch { map_target: usize, form_dim: usize },
    #[error("substitution left the supported class: {0}")]
    GrammarOverflow(crate::expr::GrammarError),
    #[error("pulled-back cached derivative failed the compatibility check at {witness:?}")]
    DerivativeIncompatible { witness: Vec<f64> },
    #[error("sampling failed during the compatibility check: {0}")]
    Sampling(#[from] SamplingError),
}

/// Pull a form back along a map. When the form carries a cached derivative,
/// the derivative is pulled back too and re-certified by sampled comparison
/// with the derivative of the pullback.
pub fn pullback(
    map: &SmoothMap,
    omega: &ZonedForm,
    eq: &EqOpts,
) -> Result<ZonedForm, PullbackError> {
    if map.target_dim() != omega.dim() {
        return Err(PullbackError::DimensionMismatch {
            map_target: map.target_dim(),
            form_dim: omega.dim(),
        });
    }
    let m = map.source_dim();
    let k = omega.degree();

    let mut out: Vec<(MultiIndex, ScalarExpr)> = Vec::new();
    for (idx, a) in omega.coeffs() {
        let composed = a
            .substitute(map.components())
            .map_err(PullbackError::GrammarOverflow)?;
        if k == 0 {
            out.push((MultiIndex::empty(), composed));
            continue;
        }
        for target in increasing_indices(m, k) {
            let det = jacobian_minor(map, idx.indices(), &target);
            if det.is_zero_symbolic() {
                continue;
            }
            let idx_i = MultiIndex::new(target.clone()).expect("increasing by construction");
            out.push((idx_i, composed.mul(&det).normalized()));
        }
    }

    let mut result = ZonedForm::new(
        m,
        k.min(m + 1),
        omega.regularity(),
        map.source().clone(),
        if k > m { Vec::new() } else { out },
    )
    .expect("pullback keeps the shape");

    // Zone: preimage of the input zone under the map, inside the map's own
    // smooth locus.
    let mut zone_cond = map.c1_condition();
    if let Some(z) = omega.zone() {
        let pulled = z
            .condition
            .substitute(map.components())
            .map_err(PullbackError::GrammarOverflow)?;
        zone_cond = SemiCondition::and(vec![zone_cond, pulled]);
    }
    result = result.with_zone(Zone::new(m, zone_cond.normalized(), map.source().clone()));

    if let Some(eta) = omega.cached_derivative() {
        let pulled_eta = pullback(map, eta, eq)?;
        let check = equal_forms(&raw_d(&result), &pulled_eta, map.source(), eq)?;
        match check {
            crate::expr::EqVerdict::Distinct { witness } => {
                return Err(PullbackError::DerivativeIncompatible { witness })
            }
            _ => {
                result = result.with_derivative(pulled_eta);
            }
        }
    }
    Ok(result)
}

/// All strictly increasing k-tuples in 0..m.
pub fn increasing_indices(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k > m {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + m - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Determinant of the Jacobian submatrix (rows = target components,
/// columns = source variables) by Laplace expansion along the first row.
fn jacobian_minor(map: &SmoothMap, rows: &[usize], cols: &[usize]) -> ScalarExpr {
    let entries: Vec<Vec<ScalarExpr>> = rows
        .iter()
        .map(|&j| cols.iter().map(|&i| map.jacobian_entry(j, i)).collect())
        .collect();
    det_expand(&entries).normalized()
}

fn det_expand(m: &[Vec<ScalarExpr>]) -> ScalarExpr {
    let n = m.len();
    if n == 0 {
        return ScalarExpr::int(1);
    }
    if n == 1 {
        return m[0][0].clone();
    }
    let mut terms = Vec::with_capacity(n);
    for (j, pivot) in m[0].iter().enumerate() {
        if pivot.is_zero_symbolic() {
            continue;
        }
        let minor: Vec<Vec<ScalarExpr>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter_map(|(c, e)| (c != j).then(|| e.clone()))
                    .collect()
            })
            .collect();
        let sub = det_expand(&minor);
        let term = pivot.mul(&sub);
        terms.push(if j % 2 == 0 { term } else { term.neg() });
    }
    ScalarExpr::sum(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::EqVerdict;
    use crate::geometry::Region;

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    fn angular_form(region: Region) -> ZonedForm {
        let r2 = x(0).pow(2).add(&x(1).pow(2));
        ZonedForm::new(
            2,
            1,
            0,
            region,
            vec![
                (MultiIndex::single(0), x(1).neg().div(&r2)),
                (MultiIndex::single(1), x(0).div(&r2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_pullback_is_identity() {
        let region = Region::full_space(2);
        let omega = angular_form(region.clone());
        let id = SmoothMap::identity(region.clone());
        let back = pullback(&id, &omega, &EqOpts::seeded(1)).unwrap();
        assert_eq!(
            equal_forms(&back, &omega, &Region::open_box(&[(1.0, 2.0), (1.0, 2.0)]), &EqOpts::seeded(1))
                .unwrap(),
            EqVerdict::SymbolicEqual
        );
    }

    #[test]
    fn rational_circle_map_pulls_angular_form_to_cauchy_kernel() {
        // t -> ((1 - t^2)/(1 + t^2), 2t/(1 + t^2)) traces the unit circle;
        // the angular form pulls back to 2 dt / (1 + t^2).
        let t = x(0);
        let denom = ScalarExpr::int(1).add(&t.pow(2));
        let map = SmoothMap::new(
            1,
            2,
            vec![
                ScalarExpr::int(1).sub(&t.pow(2)).div(&denom),
                ScalarExpr::int(2).mul(&t).div(&denom),
            ],
            Region::interval(0.0, 1.0),
        );
        let omega = angular_form(Region::full_space(2));
        let pulled = pullback(&map, &omega, &EqOpts::seeded(2)).unwrap();
        let expected = ZonedForm::new(
            1,
            1,
            0,
            Region::interval(0.0, 1.0),
            vec![(MultiIndex::single(0), ScalarExpr::int(2).div(&denom))],
        )
        .unwrap();
        let verdict = equal_forms(&pulled, &expected, &Region::interval(0.0, 1.0), &EqOpts::seeded(2))
            .unwrap();
        assert!(verdict.is_equal(), "got {:?}", verdict);
    }

    #[test]
    fn zero_section_kills_dt() {
        // s: x -> (x, 0) pulls a(x, t) dt back to 0.
        let region = Region::full_space(1);
        let s = SmoothMap::new(
            1,
            2,
            vec![x(0), ScalarExpr::int(0)],
            region.clone(),
        );
        let omega = ZonedForm::new(
            2,
            1,
            0,
            Region::full_space(2),
            vec![(MultiIndex::single(1), x(0).add(&x(1).pow(2)))],
        )
        .unwrap();
        let pulled = pullback(&s, &omega, &EqOpts::seeded(3)).unwrap();
        assert!(pulled.is_zero());
    }

    #[test]
    fn functoriality_on_samples() {
        // (g o f)* agrees with f* o g*.
        let region = Region::interval(0.1, 0.9);
        let f = SmoothMap::new(1, 2, vec![x(0), x(0).pow(2)], region.clone());
        let g = SmoothMap::new(
            2,
            2,
            vec![x(0).mul(&x(1)), x(0).add(&x(1))],
            Region::full_space(2),
        );
        let omega = ZonedForm::new(
            2,
            1,
            0,
            Region::full_space(2),
            vec![
                (MultiIndex::single(0), x(1)),
                (MultiIndex::single(1), x(0).pow(2)),
            ],
        )
        .unwrap();
        let gf = g.compose(&f).unwrap();
        let lhs = pullback(&gf, &omega, &EqOpts::seeded(4)).unwrap();
        let rhs = pullback(&f, &pullback(&g, &omega, &EqOpts::seeded(4)).unwrap(), &EqOpts::seeded(4))
            .unwrap();
        assert!(equal_forms(&lhs, &rhs, &region, &EqOpts::seeded(4))
            .unwrap()
            .is_equal());
    }

    #[test]
    fn log_of_uncertified_component_overflows() {
        // log(x1) pulled back along x -> -x^2 leaves the class.
        let omega = ZonedForm::scalar(
            1,
            0,
            Region::interval(0.0, 1.0),
            ScalarExpr::log(&x(0)).unwrap(),
        );
        let map = SmoothMap::new(
            1,
            1,
            vec![x(0).pow(2).neg()],
            Region::interval(0.0, 1.0),
        );
        // Substitution itself stays in the grammar (log of a log-free
        // expression), so this pullback succeeds structurally; evaluation
        // then reports the domain violation.
        let pulled = pullback(&map, &omega, &EqOpts::seeded(5));
        match pulled {
            Ok(form) => {
                let c = form.coeff(&MultiIndex::empty());
                assert!(c.eval(&[0.5]).is_err());
            }
            Err(PullbackError::GrammarOverflow(_)) => {}
            Err(other) => panic!("unexpected error {:?}", other),
        }
    }
}
