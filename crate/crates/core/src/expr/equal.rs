//! Semi-decided equality of expressions over a region.
//!
//! Normal forms are compared first; on mismatch the expressions are
//! compared at seeded sample points of the region. Expressions carrying
//! tagged irrational literals never earn a symbolic verdict.

use crate::geometry::Region;
use crate::sample::{Sampler, SamplingError};

use super::ScalarExpr;

#[derive(Clone, Debug, PartialEq)]
pub enum EqVerdict {
    SymbolicEqual,
    NumericEqual { tol: f64, samples: usize },
    Distinct { witness: Vec<f64> },
}

impl EqVerdict {
    pub fn is_equal(&self) -> bool {
        !matches!(self, EqVerdict::Distinct { .. })
    }
}

#[derive(Clone, Debug)]
pub struct EqOpts {
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for EqOpts {
    fn default() -> Self {
        EqOpts {
            tol: 1e-9,
            samples: 64,
            seed: 0,
        }
    }
}

impl EqOpts {
    pub fn seeded(seed: u64) -> Self {
        EqOpts {
            seed,
            ..EqOpts::default()
        }
    }
}

/// Compare two expressions on a region where both are defined on a dense
/// subset. Sample points where either side is undefined are skipped and do
/// not count toward the sample quota.
pub fn equal(
    e1: &ScalarExpr,
    e2: &ScalarExpr,
    region: &Region,
    opts: &EqOpts,
) -> Result<EqVerdict, SamplingError> {
    let n1 = e1.normalized();
    let n2 = e2.normalized();
    if n1 == n2 {
        return Ok(if n1.contains_irrational() {
            // Identical trees, but the tagged floats stand in for values we
            // cannot certify; report the honest weaker verdict.
            EqVerdict::NumericEqual {
                tol: opts.tol,
                samples: 0,
            }
        } else {
            EqVerdict::SymbolicEqual
        });
    }

    let mut sampler = Sampler::for_task(opts.seed, "expr-equal");
    let budget = opts.samples * 64;
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < opts.samples && attempts < budget {
        attempts += 1;
        let p = match region.sample_point(&mut sampler, 64) {
            Ok(p) => p,
            Err(e) => {
                return Err(SamplingError {
                    context: format!("equality sampling: {}", e.context),
                    attempts,
                })
            }
        };
        let (v1, v2) = match (n1.eval(&p), n2.eval(&p)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        let scale = 1f64.max(v1.abs()).max(v2.abs());
        if (v1 - v2).abs() > opts.tol * scale {
            return Ok(EqVerdict::Distinct { witness: p });
        }
        accepted += 1;
    }
    if accepted == 0 {
        return Err(SamplingError {
            context: "equality sampling found no point where both sides are defined".into(),
            attempts,
        });
    }
    Ok(EqVerdict::NumericEqual {
        tol: opts.tol,
        samples: accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::differentiate;

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    #[test]
    fn expanded_binomial_is_symbolic() {
        let lhs = x(0).add(&ScalarExpr::int(1)).pow(2);
        let rhs = x(0)
            .pow(2)
            .add(&ScalarExpr::int(2).mul(&x(0)))
            .add(&ScalarExpr::int(1));
        let v = equal(&lhs, &rhs, &Region::full_space(1), &EqOpts::seeded(1)).unwrap();
        assert_eq!(v, EqVerdict::SymbolicEqual);
    }

    #[test]
    fn log_derivative_matches_reciprocal_symbolically() {
        let (d, _) = differentiate(&ScalarExpr::log(&x(0)).unwrap(), 0);
        let v = equal(
            &d,
            &ScalarExpr::int(1).div(&x(0)),
            &Region::interval(0.0, 1.0),
            &EqOpts::seeded(2),
        )
        .unwrap();
        assert_eq!(v, EqVerdict::SymbolicEqual);
    }

    #[test]
    fn distinct_functions_yield_witness() {
        let v = equal(
            &x(0),
            &x(0).pow(2),
            &Region::interval(0.0, 1.0),
            &EqOpts::seeded(3),
        )
        .unwrap();
        match v {
            EqVerdict::Distinct { witness } => {
                assert!(witness[0] > 0.0 && witness[0] < 1.0);
            }
            other => panic!("expected distinct, got {:?}", other),
        }
    }

    #[test]
    fn verdicts_are_reflexive_and_symmetric_at_fixed_seed() {
        let a = x(0).mul(&x(0).abs());
        let b = x(0).pow(2); // distinct on (-1, 1)
        let opts = EqOpts::seeded(17);
        let region = Region::interval(-1.0, 1.0);
        assert_eq!(
            equal(&a, &a, &region, &opts).unwrap(),
            EqVerdict::SymbolicEqual
        );
        let ab = equal(&a, &b, &region, &opts).unwrap();
        let ba = equal(&b, &a, &region, &opts).unwrap();
        assert_eq!(ab.is_equal(), ba.is_equal());
        if let (EqVerdict::Distinct { witness: w1 }, EqVerdict::Distinct { witness: w2 }) = (ab, ba)
        {
            assert_eq!(w1, w2);
        }
    }

    #[test]
    fn irrational_tags_cap_the_verdict() {
        let a = ScalarExpr::irrational(std::f64::consts::PI).mul(&x(0));
        let v = equal(&a, &a, &Region::interval(0.0, 1.0), &EqOpts::seeded(4)).unwrap();
        assert!(matches!(v, EqVerdict::NumericEqual { .. }));
    }

    #[test]
    fn empty_region_reports_sampling_error() {
        let v = equal(
            &x(0),
            &x(0).pow(2),
            &Region::empty(1),
            &EqOpts::seeded(5),
        );
        assert!(v.is_err());
    }
}
