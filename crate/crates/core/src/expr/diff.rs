//! Partial differentiation with zone tracking.
//!
//! Every node rule returns an expression inside the supported class, so the
//! class is closed under differentiation. Nodes that are merely continuous
//! (`|.|`, `min`, `max`, piecewise seams, root branch points) shrink the
//! returned zone instead of raising errors: the derivative is valid on the
//! dense open set where all node-level smoothness conditions hold.

use super::{Expr, ScalarExpr, SemiCondition, SignOp, Zone};
use crate::geometry::Region;

/// Partial derivative with respect to `x_{i+1}` together with the zone on
/// which the formula is valid.
pub fn differentiate(e: &ScalarExpr, i: usize) -> (ScalarExpr, Zone) {
    let raw = partial(e, i);
    let dim = e.max_var().map_or(0, |m| m + 1).max(i + 1);
    let zone = Zone::new(
        dim,
        smoothness_condition(e).normalized(),
        Region::full_space(dim),
    );
    (raw.normalized(), zone)
}

/// Zone on which `e` is continuously differentiable inside `reference`,
/// as the conjunction of per-node smoothness conditions. Conservative:
/// seams of piecewise nodes are excluded even where branches agree to
/// first order.
pub fn c1_zone(e: &ScalarExpr, reference: &Region) -> Zone {
    Zone::new(
        reference.dim(),
        smoothness_condition(e).normalized(),
        reference.clone(),
    )
}

/// Conjunction of the conditions under which every node of `e` is C^1.
pub fn smoothness_condition(e: &ScalarExpr) -> SemiCondition {
    let mut parts = Vec::new();
    collect_smoothness(e, &mut parts);
    SemiCondition::and(parts)
}

fn collect_smoothness(e: &ScalarExpr, out: &mut Vec<SemiCondition>) {
    match e.node() {
        Expr::Const(_) | Expr::Var(_) => {}
        Expr::Sum(items) | Expr::Prod(items) => {
            items.iter().for_each(|t| collect_smoothness(t, out))
        }
        Expr::Quot(a, b) => {
            out.push(SemiCondition::atom(SignOp::Ne, b.clone()));
            collect_smoothness(a, out);
            collect_smoothness(b, out);
        }
        Expr::Pow(b, k) => {
            if *k < 0 {
                out.push(SemiCondition::atom(SignOp::Ne, b.clone()));
            }
            collect_smoothness(b, out);
        }
        Expr::Root(a, _) => {
            // The principal root is C^1 only where the argument is positive.
            out.push(SemiCondition::atom(SignOp::Gt, a.clone()));
            collect_smoothness(a, out);
        }
        Expr::Abs(a) => {
            out.push(SemiCondition::atom(SignOp::Ne, a.clone()));
            collect_smoothness(a, out);
        }
        Expr::Min(a, b) | Expr::Max(a, b) => {
            out.push(SemiCondition::atom(SignOp::Ne, a.sub(b)));
            collect_smoothness(a, out);
            collect_smoothness(b, out);
        }
        Expr::Piecewise(branches) => {
            for (cond, val) in branches {
                collect_seam_atoms(cond, out);
                collect_smoothness(val, out);
            }
        }
        Expr::Log(a, _) => {
            out.push(SemiCondition::atom(SignOp::Gt, a.clone()));
            collect_smoothness(a, out);
        }
    }
}

fn collect_seam_atoms(cond: &SemiCondition, out: &mut Vec<SemiCondition>) {
    match cond {
        SemiCondition::True | SemiCondition::False => {}
        SemiCondition::Atom(_, e) => out.push(SemiCondition::atom(SignOp::Ne, e.clone())),
        SemiCondition::And(items) | SemiCondition::Or(items) => {
            items.iter().for_each(|c| collect_seam_atoms(c, out))
        }
    }
}

/// Raw (un-normalized) partial derivative.
pub(crate) fn partial(e: &ScalarExpr, i: usize) -> ScalarExpr {
    match e.node() {
        Expr::Const(_) => ScalarExpr::int(0),
        Expr::Var(j) => ScalarExpr::int(if *j == i { 1 } else { 0 }),
        Expr::Sum(items) => ScalarExpr::sum(items.iter().map(|t| partial(t, i)).collect()),
        Expr::Prod(items) => {
            let mut terms = Vec::with_capacity(items.len());
            for (j, f) in items.iter().enumerate() {
                let mut factors: Vec<ScalarExpr> = Vec::with_capacity(items.len());
                factors.push(partial(f, i));
                for (l, g) in items.iter().enumerate() {
                    if l != j {
                        factors.push(g.clone());
                    }
                }
                terms.push(ScalarExpr::prod(factors));
            }
            ScalarExpr::sum(terms)
        }
        Expr::Quot(f, g) => {
            let num = partial(f, i)
                .mul(g)
                .sub(&f.mul(&partial(g, i)));
            num.div(&g.pow(2))
        }
        Expr::Pow(f, k) => ScalarExpr::int(i64::from(*k))
            .mul(&f.pow(k - 1))
            .mul(&partial(f, i)),
        Expr::Root(f, n) => {
            // d f^{1/n} = f' / (n * root(f)^{n-1})
            let den = ScalarExpr::int(i64::from(*n)).mul(&f.root(*n).pow(*n as i32 - 1));
            partial(f, i).div(&den)
        }
        Expr::Abs(f) => {
            let df = partial(f, i);
            ScalarExpr::piecewise(vec![
                (SemiCondition::atom(SignOp::Gt, f.clone()), df.clone()),
                (SemiCondition::atom(SignOp::Lt, f.clone()), df.neg()),
            ])
        }
        Expr::Min(a, b) => {
            let d = a.sub(b);
            ScalarExpr::piecewise(vec![
                (SemiCondition::atom(SignOp::Lt, d.clone()), partial(a, i)),
                (SemiCondition::atom(SignOp::Gt, d), partial(b, i)),
            ])
        }
        Expr::Max(a, b) => {
            let d = a.sub(b);
            ScalarExpr::piecewise(vec![
                (SemiCondition::atom(SignOp::Gt, d.clone()), partial(a, i)),
                (SemiCondition::atom(SignOp::Lt, d), partial(b, i)),
            ])
        }
        Expr::Piecewise(branches) => ScalarExpr::piecewise(
            branches
                .iter()
                .map(|(c, v)| (c.clone(), partial(v, i)))
                .collect(),
        ),
        Expr::Log(f, _) => partial(f, i).div(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    #[test]
    fn log_derivative_is_reciprocal() {
        let e = ScalarExpr::log(&x(0)).unwrap();
        let (d, zone) = differentiate(&e, 0);
        assert_eq!(d, ScalarExpr::int(1).div(&x(0)).normalized());
        // zone excludes x1 <= 0
        assert!(zone.condition.holds_at(&[2.0]).unwrap());
        assert!(!zone.condition.holds_at(&[-1.0]).unwrap());
    }

    #[test]
    fn constant_derivative_is_zero_on_full_space() {
        let (d, zone) = differentiate(&ScalarExpr::frac(7, 3), 2);
        assert!(d.is_zero_literal());
        assert_eq!(zone.condition, SemiCondition::True);
    }

    #[test]
    fn spline_derivative_splits_at_kink() {
        // d/dx max(0, x)^2 = {2x on x>0; 0 on x<0}, zone x != 0.
        let e = ScalarExpr::int(0).max_with(&x(0)).pow(2);
        let (d, zone) = differentiate(&e, 0);
        assert_eq!(d.eval(&[3.0]).unwrap(), 6.0);
        assert_eq!(d.eval(&[-3.0]).unwrap(), 0.0);
        assert!(d.eval(&[0.0]).is_err());
        assert!(!zone.condition.holds_at(&[0.0]).unwrap());
        assert!(zone.condition.holds_at(&[0.5]).unwrap());
    }

    #[test]
    fn derivative_stays_in_grammar() {
        let e = x(0)
            .abs()
            .mul(&ScalarExpr::log(&x(0).pow(2).add(&ScalarExpr::int(1))).unwrap())
            .div(&x(1).sqrt());
        let (d, _) = differentiate(&e, 0);
        d.validate_constructible().unwrap();
        let (d2, _) = differentiate(&d, 1);
        d2.validate_constructible().unwrap();
    }

    #[test]
    fn conservative_zone_for_smooth_spline() {
        // max(0,x)^2 is C^1 everywhere but the node rule stays conservative.
        let e = ScalarExpr::int(0).max_with(&x(0)).pow(2);
        let z = c1_zone(&e, &Region::full_space(1));
        assert!(!z.condition.holds_at(&[0.0]).unwrap());
    }
}
