//! Symbolic antiderivatives in the fiber variable.
//!
//! Rational parts integrate by polynomial division and partial fractions
//! over roots expressible in the expression grammar (denominator degree at
//! most 2 after content extraction, or a logarithmic-derivative numerator).
//! Log-bearing parts integrate by parts, with the `r = c s'/s` shortcut
//! that closes the `log^2` cases. Everything else is an unsupported
//! integrand error.

use crate::expr::ScalarExpr;
use num::Signed;

use super::convert::Probes;
use super::logpoly::{self_certificate, LogArg, LogPolyIntegrand, LogTerm, PolyT, RatT};
use super::FiberError;

const MAX_PARTS_DEPTH: u32 = 4;

/// Antiderivative with respect to the fiber variable; the integration
/// constant is not fixed here (callers anchor it).
pub fn antiderivative(
    f: &LogPolyIntegrand,
    probes: &Probes,
) -> Result<LogPolyIntegrand, FiberError> {
    antiderivative_depth(f, probes, MAX_PARTS_DEPTH)
}

fn antiderivative_depth(
    f: &LogPolyIntegrand,
    probes: &Probes,
    depth: u32,
) -> Result<LogPolyIntegrand, FiberError> {
    if depth == 0 {
        return Err(FiberError::unsupported(
            "integration by parts does not terminate for this integrand",
        ));
    }
    let mut out = LogPolyIntegrand::zero();
    for term in &f.terms {
        let piece = if term.power == 0 || term.log.is_none() {
            integrate_rational(&term.rat, probes)?
        } else {
            integrate_log_term(term, probes, depth)?
        };
        out = out.add(&piece);
    }
    Ok(out)
}

fn integrate_log_term(
    term: &LogTerm,
    probes: &Probes,
    depth: u32,
) -> Result<LogPolyIntegrand, FiberError> {
    let arg = term.log.clone().expect("log term");
    let m = term.power;
    let s_prime = arg.poly.derivative();
    let log_factor = LogPolyIntegrand::log_term(arg.clone());

    // Shortcut: r = c * s'/s integrates to c log^{m+1}(s) / (m + 1);
    // d log|s| = s'/s as well, so the absolute case is identical.
    if let Some(c) = ratio_constant(&term.rat, &RatT {
        num: s_prime.clone(),
        den: arg.poly.clone(),
    }) {
        if m + 1 > 2 {
            return Err(FiberError::unsupported(
                "antiderivative needs a log power above 2",
            ));
        }
        let coeff = c.div(&ScalarExpr::int(i64::from(m) + 1)).normalized();
        return Ok(LogPolyIntegrand {
            terms: vec![LogTerm {
                rat: RatT::from_poly(PolyT::constant(coeff)),
                log: Some(arg),
                power: m + 1,
            }],
        });
    }

    // Integration by parts: int r log^m s = R log^m s - m int R (s'/s) log^{m-1} s.
    let r_anti = integrate_rational(&term.rat, probes)?;
    let mut result = r_anti.clone();
    for _ in 0..m {
        result = result.mul(&log_factor)?;
    }
    let s_over = RatT {
        num: s_prime,
        den: arg.poly.clone(),
    };
    let mut residue = r_anti.mul(&LogPolyIntegrand::rational(s_over))?;
    if m >= 2 {
        residue = residue.mul(&log_factor)?;
    }
    let residue = residue.mul(&LogPolyIntegrand::constant(ScalarExpr::int(i64::from(m))))?;
    let integrated_residue = antiderivative_depth(&residue, probes, depth - 1)?;
    Ok(result.add(&integrated_residue.neg()))
}

/// `num_rat / den_rat` when it is constant in the fiber variable.
fn ratio_constant(a: &RatT, b: &RatT) -> Option<ScalarExpr> {
    // a / b = (a.num * b.den) / (a.den * b.num)
    let num = a.num.mul(&b.den);
    let den = a.den.mul(&b.num);
    if den.is_zero() {
        return None;
    }
    let (q, r) = num.divmod(&den).ok()?;
    if r.is_zero() && q.is_constant() && !q.is_zero() {
        Some(q.coeff(0))
    } else {
        None
    }
}

/// Partial-fraction integration of a rational function of t.
pub fn integrate_rational(
    rat: &RatT,
    probes: &Probes,
) -> Result<LogPolyIntegrand, FiberError> {
    if rat.is_zero() {
        return Ok(LogPolyIntegrand::zero());
    }
    // Constant denominators: plain polynomial integration.
    if rat.den.is_constant() {
        let scale = ScalarExpr::int(1).div(&rat.den.coeff(0)).normalized();
        let p = rat.num.antiderivative().scale(&scale);
        return Ok(LogPolyIntegrand::rational(RatT::from_poly(p)));
    }
    let (poly_part, proper) = rat.num.divmod(&rat.den)?;
    let mut out =
        LogPolyIntegrand::rational(RatT::from_poly(poly_part.antiderivative()));
    if proper.is_zero() {
        return Ok(out);
    }

    if let Some(roots) = factor_roots(&rat.den, probes) {
        out = out.add(&integrate_by_partial_fractions(
            &proper, &rat.den, &roots, probes,
        )?);
        return Ok(out);
    }

    // Logarithmic-derivative reduction for unfactorable denominators:
    // p/q = c q'/q + rest/q with deg rest < deg p.
    let q_prime = rat.den.derivative();
    if let (Some(dp), Some(dq)) = (proper.degree(), q_prime.degree()) {
        if dp == dq {
            let c = proper
                .coeff(dp)
                .div(&q_prime.coeff(dq))
                .normalized();
            let rest = proper.sub(&q_prime.scale(&c));
            let base_free = (0..=rat
                .den
                .degree()
                .unwrap_or(0))
                .all(|j| rat.den.coeff(j).max_var().is_none());
            let arg = match probes
                .sign_of(&rat.den.to_expr(probes.t_index))
                .filter(|_| base_free)
            {
                Some(sign) => {
                    let s = if sign >= 0 { rat.den.clone() } else { rat.den.neg() };
                    let cert = self_certificate(&s, probes.t_index);
                    LogArg::plain(s, cert)
                }
                None => LogArg::absolute(rat.den.clone(), probes.t_index),
            };
            out = out.add(&LogPolyIntegrand {
                terms: vec![LogTerm {
                    rat: RatT::from_poly(PolyT::constant(c)),
                    log: Some(arg),
                    power: 1,
                }],
            });
            if rest.is_zero() {
                return Ok(out);
            }
            return Err(FiberError::unsupported(
                "denominator does not factor over the expression grammar",
            ));
        }
    }
    Err(FiberError::unsupported(
        "denominator does not factor over the expression grammar",
    ))
}

/// Roots with multiplicities of a denominator of degree <= 2 (after its
/// fiber-free content), expressed in the grammar; `None` when irreducible
/// over it.
fn factor_roots(q: &PolyT, probes: &Probes) -> Option<Vec<(ScalarExpr, u32)>> {
    match q.degree()? {
        0 => Some(Vec::new()),
        1 => {
            let root = q.coeff(0).neg().div(&q.coeff(1)).normalized();
            Some(vec![(root, 1)])
        }
        2 => {
            let (a, b, c) = (q.coeff(2), q.coeff(1), q.coeff(0));
            let disc = b
                .pow(2)
                .sub(&ScalarExpr::int(4).mul(&a).mul(&c))
                .normalized();
            if disc.is_zero_symbolic() {
                let root = b.neg().div(&ScalarExpr::int(2).mul(&a)).normalized();
                return Some(vec![(root, 2)]);
            }
            let sqrt_disc = if let Some(r) = disc.as_rational() {
                if r.is_negative() {
                    return None;
                }
                ScalarExpr::rational(r.clone()).sqrt().normalized()
            } else {
                // Symbolic discriminant: accept only a sampled-positive one.
                match probes.sign_of(&disc) {
                    Some(1) => disc.sqrt(),
                    _ => return None,
                }
            };
            let two_a = ScalarExpr::int(2).mul(&a);
            let r1 = b.neg().add(&sqrt_disc).div(&two_a).normalized();
            let r2 = b.neg().sub(&sqrt_disc).div(&two_a).normalized();
            if r1 == r2 {
                Some(vec![(r1, 2)])
            } else {
                Some(vec![(r1, 1), (r2, 1)])
            }
        }
        _ => None,
    }
}

fn integrate_by_partial_fractions(
    num: &PolyT,
    den: &PolyT,
    roots: &[(ScalarExpr, u32)],
    probes: &Probes,
) -> Result<LogPolyIntegrand, FiberError> {
    let lead = den.leading().cloned().unwrap_or_else(|| ScalarExpr::int(1));
    let mut out = LogPolyIntegrand::zero();
    for (i, (alpha, mult)) in roots.iter().enumerate() {
        // h_i(t) = num(t) / (lead * prod_{l != i} (t - alpha_l)^{m_l})
        let mut others = PolyT::constant(lead.clone());
        for (l, (beta, ml)) in roots.iter().enumerate() {
            if l == i {
                continue;
            }
            let factor = PolyT::t().sub(&PolyT::constant(beta.clone()));
            for _ in 0..*ml {
                others = others.mul(&factor);
            }
        }
        let mut h = RatT {
            num: num.clone(),
            den: others,
        };
        // coefficients A_{i, m}, A_{i, m-1}, ... via derivatives at alpha
        let mut factorial = 1i64;
        for d in 0..*mult {
            let j = mult - d; // pole order of this summand
            let a_ij = h
                .eval_at(alpha)
                .div(&ScalarExpr::int(factorial))
                .normalized();
            if !a_ij.is_zero_symbolic() {
                if j == 1 {
                    // A log|t - alpha|: a probed sign is only a proof when
                    // the pole is a constant (then the piece pins its side);
                    // base-dependent poles keep the absolute value, whose
                    // derivative is the same s'/s.
                    let linear = PolyT::t().sub(&PolyT::constant(alpha.clone()));
                    let base_free = alpha.max_var().is_none();
                    let probed = if base_free {
                        probes.sign_of(&linear.to_expr(probes.t_index))
                    } else {
                        None
                    };
                    let arg = match probed {
                        Some(sign) => {
                            let s = if sign >= 0 { linear } else { linear.neg() };
                            let cert = self_certificate(&s, probes.t_index);
                            LogArg::plain(s, cert)
                        }
                        None => LogArg::absolute(linear, probes.t_index),
                    };
                    out = out.add(&LogPolyIntegrand {
                        terms: vec![LogTerm {
                            rat: RatT::from_poly(PolyT::constant(a_ij)),
                            log: Some(arg),
                            power: 1,
                        }],
                    });
                } else {
                    // A / (t-alpha)^j integrates to -A / ((j-1)(t-alpha)^{j-1})
                    let coeff = a_ij
                        .neg()
                        .div(&ScalarExpr::int(i64::from(j) - 1))
                        .normalized();
                    let mut den_pow = PolyT::one();
                    let linear = PolyT::t().sub(&PolyT::constant(alpha.clone()));
                    for _ in 0..(j - 1) {
                        den_pow = den_pow.mul(&linear);
                    }
                    out = out.add(&LogPolyIntegrand::rational(RatT {
                        num: PolyT::constant(coeff),
                        den: den_pow,
                    }));
                }
            }
            factorial *= i64::from(d + 1);
            h = h.derivative();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::convert::convert;
    use super::*;
    use crate::expr::differentiate;

    fn probes_1d(ts: &[f64]) -> Probes {
        Probes {
            t_index: 0,
            points: ts.iter().map(|t| vec![*t]).collect(),
        }
    }

    fn check_roundtrip(e: &ScalarExpr, probes: &Probes, sample_ts: &[f64]) {
        let lp = convert(e, probes).unwrap();
        let anti = antiderivative(&lp, probes).unwrap();
        let g = anti.to_expr(probes.t_index);
        let (dg, _) = differentiate(&g, probes.t_index);
        for &tv in sample_ts {
            let a = e.eval(&[tv]).unwrap();
            let b = dg.eval(&[tv]).unwrap();
            assert!(
                (a - b).abs() < 1e-9 * (1.0 + a.abs()),
                "d/dt of antiderivative mismatches: {} vs {} at t={} for {}",
                b,
                a,
                tv,
                e
            );
        }
    }

    #[test]
    fn polynomial_antiderivative() {
        // t -> t^2/2
        let t = ScalarExpr::var(0);
        let probes = probes_1d(&[0.5]);
        let lp = convert(&t, &probes).unwrap();
        let anti = antiderivative(&lp, &probes).unwrap();
        assert_eq!(
            anti.to_expr(0),
            t.pow(2).mul(&ScalarExpr::frac(1, 2)).normalized()
        );
    }

    #[test]
    fn reciprocal_gives_log() {
        // 1/t on t > 0 -> log t
        let t = ScalarExpr::var(0);
        let e = ScalarExpr::int(1).div(&t);
        let probes = probes_1d(&[0.5, 2.0]);
        let lp = convert(&e, &probes).unwrap();
        let anti = antiderivative(&lp, &probes).unwrap();
        let g = anti.to_expr(0);
        assert_eq!(g, ScalarExpr::log(&t).unwrap().normalized());
    }

    #[test]
    fn log_integrates_by_parts() {
        // log t -> t log t - t, checked by differentiating back
        let t = ScalarExpr::var(0);
        let e = ScalarExpr::log(&t).unwrap();
        check_roundtrip(&e, &probes_1d(&[0.5, 1.5]), &[0.3, 0.9, 2.5]);
    }

    #[test]
    fn rational_with_symbolic_pole() {
        // 1/(t - x) for x outside the piece
        let t = ScalarExpr::var(1);
        let x = ScalarExpr::var(0);
        let e = ScalarExpr::int(1).div(&t.sub(&x));
        let probes = Probes {
            t_index: 1,
            points: vec![vec![2.0, 0.3], vec![3.0, 0.6]],
        };
        let lp = convert(&e, &probes).unwrap();
        let anti = antiderivative(&lp, &probes).unwrap();
        let g = anti.to_expr(1);
        let (dg, _) = differentiate(&g, 1);
        for (xv, tv) in [(2.0, 0.2), (5.0, 0.9)] {
            let a = e.eval(&[xv, tv]).unwrap();
            let b = dg.eval(&[xv, tv]).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn double_pole_integrates_rationally() {
        // 1/(t-1)^2 -> -1/(t-1)
        let t = ScalarExpr::var(0);
        let e = ScalarExpr::int(1).div(&t.sub(&ScalarExpr::int(1)).pow(2));
        check_roundtrip(&e, &probes_1d(&[0.2, 0.5]), &[0.1, 0.4]);
    }

    #[test]
    fn log_derivative_shortcut_closes_log_squared() {
        // (1/t) log t -> log^2(t) / 2
        let t = ScalarExpr::var(0);
        let e = ScalarExpr::log(&t).unwrap().div(&t);
        check_roundtrip(&e, &probes_1d(&[0.5, 1.5]), &[0.4, 1.2, 3.0]);
    }

    #[test]
    fn irreducible_quadratic_with_log_derivative_numerator() {
        // 2t/(1+t^2) -> log(1+t^2)
        let t = ScalarExpr::var(0);
        let e = ScalarExpr::int(2)
            .mul(&t)
            .div(&ScalarExpr::int(1).add(&t.pow(2)));
        check_roundtrip(&e, &probes_1d(&[0.5, 1.5]), &[0.0, 1.0, -2.0]);
    }

    #[test]
    fn cauchy_kernel_is_unsupported() {
        // 1/(1+t^2) has no antiderivative in the class
        let t = ScalarExpr::var(0);
        let e = ScalarExpr::int(1).div(&ScalarExpr::int(1).add(&t.pow(2)));
        let probes = probes_1d(&[0.5]);
        let lp = convert(&e, &probes).unwrap();
        assert!(antiderivative(&lp, &probes).is_err());
    }

    #[test]
    fn t_log_t_matches_known_form() {
        // t log t -> t^2/2 log t - t^2/4
        let t = ScalarExpr::var(0);
        let e = t.mul(&ScalarExpr::log(&t).unwrap());
        check_roundtrip(&e, &probes_1d(&[0.5, 2.0]), &[0.3, 1.7]);
    }

    #[test]
    fn quadratic_with_distinct_symbolic_roots() {
        // 1/((t - x)(t + x)) with x probe-positive
        let t = ScalarExpr::var(1);
        let x = ScalarExpr::var(0);
        let e = ScalarExpr::int(1).div(&t.sub(&x).mul(&t.add(&x)));
        let probes = Probes {
            t_index: 1,
            points: vec![vec![3.0, 0.5], vec![4.0, 1.0]],
        };
        let lp = convert(&e, &probes).unwrap();
        let anti = antiderivative(&lp, &probes).unwrap();
        let g = anti.to_expr(1);
        let (dg, _) = differentiate(&g, 1);
        for (xv, tv) in [(3.0, 0.4), (5.0, 2.0)] {
            let a = e.eval(&[xv, tv]).unwrap();
            let b = dg.eval(&[xv, tv]).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
