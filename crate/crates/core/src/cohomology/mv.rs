//! The two-set gluing machinery: the short exact splitting and the
//! connecting representative.
//!
//! For a cover `{U1, U2}` the restriction maps are
//! `Phi(omega) = (omega|U1, omega|U2)` and
//! `Psi(omega1, omega2) = omega2|I - omega1|I` on the overlap `I`. A form
//! `eta` on `I` splits as `eta2 = f1 eta` extended by zero across
//! `U2 - U1` (and symmetrically `eta1 = f2 eta`), so that
//! `Psi(-eta1, eta2) = eta`. For closed `eta` the connecting representative
//! is the glue of `D(eta2)` on `U2` with `-D(eta1)` on `U1`; the two agree
//! on the overlap because `D(eta1) + D(eta2) = D(eta) = 0` there.

use crate::expr::{EqOpts, ScalarExpr, SemiCondition};
use crate::forms::{equal_forms, raw_d, MultiIndex, ZonedForm};
use crate::geometry::Region;
use crate::sample::Sampler;

use super::partition::PartitionOfUnity;

#[derive(Clone, Debug, thiserror::Error)]
pub enum MvError {
    #[error("the partition must cover exactly two sets, got {0}")]
    NotTwoSets(usize),
    #[error("zero-extension is discontinuous across the glue seam near {point:?} (component {component}, jump {jump:.3e})")]
    GlueDiscontinuity {
        point: Vec<f64>,
        component: String,
        jump: f64,
    },
    #[error("splitting does not reassemble: Psi(split) != eta ({0:?})")]
    SplitMismatch(crate::expr::EqVerdict),
    #[error("sampling failed: {0}")]
    Sampling(#[from] crate::sample::SamplingError),
    #[error(transparent)]
    Form(#[from] crate::forms::FormError),
}

/// Multiply a form's coefficients by a scalar function and extend by zero
/// outside `inside` (first-match piecewise with a catch-all zero branch).
fn scaled_zero_extension(
    eta: &ZonedForm,
    factor: &ScalarExpr,
    inside: &SemiCondition,
    target: &Region,
) -> ZonedForm {
    let coeffs: Vec<(MultiIndex, ScalarExpr)> = eta
        .coeffs()
        .iter()
        .map(|(idx, c)| {
            let value = factor.mul(c).normalized();
            let glued = ScalarExpr::piecewise(vec![
                (inside.clone(), value),
                (SemiCondition::True, ScalarExpr::int(0)),
            ]);
            (idx.clone(), glued)
        })
        .collect();
    ZonedForm::new(
        eta.dim(),
        eta.degree(),
        eta.regularity(),
        target.clone(),
        coeffs,
    )
    .expect("zero extension keeps the shape")
}

/// Split a form on the overlap into pieces supported in the cover sets:
/// returns `(eta1 on U1, eta2 on U2)` with `eta1|I + eta2|I = eta`.
pub fn mv_split(
    eta: &ZonedForm,
    partition: &PartitionOfUnity,
    overlap: &Region,
    opts: &MvOpts,
) -> Result<(ZonedForm, ZonedForm), MvError> {
    if partition.cover.len() != 2 {
        return Err(MvError::NotTwoSets(partition.cover.len()));
    }
    let (u1, u2) = (&partition.cover[0], &partition.cover[1]);
    let cond_u1 = u1.membership_condition();
    let cond_u2 = u2.membership_condition();
    let eta2 = scaled_zero_extension(eta, &partition.functions[0], &cond_u1, u2);
    let eta1 = scaled_zero_extension(eta, &partition.functions[1], &cond_u2, u1);

    // Continuity of the zero extensions across the glue seams.
    check_glue_continuity(&eta2, overlap, u2, opts)?;
    check_glue_continuity(&eta1, overlap, u1, opts)?;

    // Psi(-eta1, eta2) = eta on the overlap.
    let mut sampler = Sampler::for_task(opts.seed, "mv-split-reassembly");
    let reassembled = eta2
        .restrict(overlap, &mut sampler)?
        .add(&eta1.restrict(overlap, &mut sampler)?);
    let verdict = equal_forms(&reassembled, eta, overlap, &opts.eq)?;
    if !verdict.is_equal() {
        return Err(MvError::SplitMismatch(verdict));
    }
    Ok((eta1, eta2))
}

#[derive(Clone, Debug)]
pub struct MvOpts {
    pub seed: u64,
    pub eq: EqOpts,
    pub seam_points: usize,
    pub tol: f64,
}

impl Default for MvOpts {
    fn default() -> Self {
        MvOpts {
            seed: 0,
            eq: EqOpts::default(),
            seam_points: 16,
            tol: 1e-6,
        }
    }
}

impl MvOpts {
    pub fn seeded(seed: u64) -> Self {
        MvOpts {
            seed,
            eq: EqOpts::seeded(seed),
            ..MvOpts::default()
        }
    }
}

/// A zero-extended form must tend to zero at the seam where its inside
/// condition switches off (sampled directional limits).
fn check_glue_continuity(
    form: &ZonedForm,
    overlap: &Region,
    home: &Region,
    opts: &MvOpts,
) -> Result<(), MvError> {
    let mut sampler = Sampler::for_task(opts.seed, "mv-glue-seam");
    // Seam locus: boundary of the overlap inside the home set. Probe pairs
    // (p in overlap, q in home - overlap) and bisect on membership.
    let mut checked = 0;
    let mut attempts = 0;
    while checked < opts.seam_points && attempts < opts.seam_points * 16 {
        attempts += 1;
        let (p, q) = match (
            overlap.sample_point(&mut sampler, 32),
            home.sample_point(&mut sampler, 32),
        ) {
            (Ok(p), Ok(q)) => (p, q),
            _ => break,
        };
        if overlap.contains(&q).unwrap_or(true) {
            continue;
        }
        // bisect the segment for the membership flip
        let (mut lo, mut hi) = (p, q);
        for _ in 0..60 {
            let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            if overlap.contains(&mid).unwrap_or(false) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        checked += 1;
        // approach the seam from inside the overlap: values must tend to 0
        for (idx, c) in form.coeffs() {
            let mut vals = Vec::new();
            for lambda in [1e-2, 1e-3, 1e-4] {
                let x: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(a, b)| b + (a - b) * lambda)
                    .collect();
                if !overlap.contains(&x).unwrap_or(false) {
                    continue;
                }
                if let Ok(v) = c.eval(&x) {
                    vals.push(v);
                }
            }
            if let Some(last) = vals.last() {
                if last.abs() > opts.tol {
                    return Err(MvError::GlueDiscontinuity {
                        point: hi,
                        component: idx.to_string(),
                        jump: *last,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Connecting representative of a closed form on the overlap: the glue of
/// `D(eta2)` on `U2` with `-D(eta1)` on `U1`, a closed form on the union.
pub fn mv_connecting(
    eta: &ZonedForm,
    partition: &PartitionOfUnity,
    overlap: &Region,
    union: &Region,
    opts: &MvOpts,
) -> Result<ZonedForm, MvError> {
    let (eta1, eta2) = mv_split(eta, partition, overlap, opts)?;
    let d2 = raw_d(&eta2);
    let d1 = raw_d(&eta1);
    let cond_u2 = partition.cover[1].membership_condition();
    let coeffs: Vec<(MultiIndex, ScalarExpr)> = d2
        .coeffs()
        .keys()
        .chain(d1.coeffs().keys())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|idx| {
            let on_u2 = d2.coeff(idx);
            let on_u1 = d1.coeff(idx).neg().normalized();
            let glued = if on_u2 == on_u1 {
                on_u2
            } else {
                ScalarExpr::piecewise(vec![
                    (cond_u2.clone(), on_u2),
                    (SemiCondition::True, on_u1),
                ])
            };
            (idx.clone(), glued)
        })
        .collect();
    let form = ZonedForm::new(
        eta.dim(),
        eta.degree() + 1,
        eta.regularity(),
        union.clone(),
        coeffs,
    )?;
    Ok(form)
}

#[cfg(test)]
mod tests {
    use super::super::partition::{partition_of_unity, PartitionOpts};
    use super::*;
    use crate::expr::EqVerdict;

    #[test]
    fn interval_split_recovers_constant() {
        // cover (0,3) = (0,2) u (1,3); eta = 1 on (1,2).
        let u1 = Region::interval(0.0, 2.0);
        let u2 = Region::interval(1.0, 3.0);
        let overlap = Region::interval(1.0, 2.0);
        let p = partition_of_unity(&[u1, u2], 1, &PartitionOpts::default()).unwrap();
        let eta = ZonedForm::scalar(1, 0, overlap.clone(), ScalarExpr::int(1));
        let (eta1, eta2) = mv_split(&eta, &p, &overlap, &MvOpts::seeded(1)).unwrap();
        // eta2 extends by zero beyond the overlap: it vanishes near 3
        assert_eq!(
            eta2.coeff(&MultiIndex::empty()).eval(&[2.5]).unwrap(),
            0.0
        );
        // and the two pieces sum to 1 on the overlap
        let v = eta1.coeff(&MultiIndex::empty()).eval(&[1.5]).unwrap()
            + eta2.coeff(&MultiIndex::empty()).eval(&[1.5]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_of_zero_is_zero() {
        let u1 = Region::interval(0.0, 2.0);
        let u2 = Region::interval(1.0, 3.0);
        let overlap = Region::interval(1.0, 2.0);
        let p = partition_of_unity(&[u1, u2], 1, &PartitionOpts::default()).unwrap();
        let eta = ZonedForm::zero(1, 0, 0, overlap.clone());
        let (eta1, eta2) = mv_split(&eta, &p, &overlap, &MvOpts::seeded(2)).unwrap();
        assert!(eta1.is_zero() && eta2.is_zero());
    }

    #[test]
    fn connecting_of_exact_form_has_zero_periods() {
        // Interval cover: H^1 of an interval vanishes, so the connecting
        // representative of any 0-form is exact; over the (trivial) cycle
        // set there is nothing to pair with, but the form must be closed.
        let u1 = Region::interval(0.0, 2.0);
        let u2 = Region::interval(1.0, 3.0);
        let overlap = Region::interval(1.0, 2.0);
        let union = Region::from_ribbons(
            1,
            vec![
                crate::geometry::Ribbon::interval(0.0, 2.0),
                crate::geometry::Ribbon::interval(1.0, 3.0),
            ],
        );
        let p = partition_of_unity(
            &[u1, u2],
            1,
            &PartitionOpts::default(),
        )
        .unwrap();
        let eta = ZonedForm::scalar(1, 0, overlap.clone(), ScalarExpr::var(0));
        let theta = mv_connecting(&eta, &p, &overlap, &union, &MvOpts::seeded(3)).unwrap();
        assert_eq!(theta.degree(), 1);
        // closed: raw derivative vanishes on samples
        let d = raw_d(&theta);
        let verdict = equal_forms(
            &d,
            &ZonedForm::zero(1, 2, 0, union.clone()),
            &union,
            &EqOpts::seeded(3),
        )
        .unwrap();
        assert!(verdict.is_equal());
        // and D(eta2) = -D(eta1) on the overlap by construction: theta is
        // well-defined there (sampled through the piecewise glue)
        let mid = theta.coeff(&MultiIndex::single(0)).eval(&[1.5]);
        assert!(mid.is_ok());
        let _ = matches!(EqVerdict::SymbolicEqual, EqVerdict::SymbolicEqual);
    }
}
