//! Integrands of the fiber variable: finite sums of `r(t) * log(s(t))^m`
//! with `r` rational and `s` polynomial in `t` over expression coefficients
//! in the base variables, `m <= 2`.
//!
//! This class is deliberately smaller than the full constructible one: it
//! is exactly what stays symbolically closed under the antiderivatives the
//! homotopy operators need. Anything outside it is reported as an
//! unsupported integrand, never silently approximated.

use crate::expr::{Expr, ScalarExpr, SemiCondition, SignOp};

use super::FiberError;

/// Polynomial in the fiber variable; `coeffs[j]` multiplies `t^j` and is
/// free of the fiber variable.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyT {
    coeffs: Vec<ScalarExpr>,
}

impl PolyT {
    pub fn zero() -> PolyT {
        PolyT { coeffs: Vec::new() }
    }

    pub fn constant(e: ScalarExpr) -> PolyT {
        let n = e.normalized();
        if n.is_zero_literal() {
            PolyT::zero()
        } else {
            PolyT { coeffs: vec![n] }
        }
    }

    pub fn one() -> PolyT {
        PolyT::constant(ScalarExpr::int(1))
    }

    pub fn t() -> PolyT {
        PolyT {
            coeffs: vec![ScalarExpr::int(0), ScalarExpr::int(1)],
        }
    }

    pub fn from_coeffs(coeffs: Vec<ScalarExpr>) -> PolyT {
        let mut p = PolyT { coeffs };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while let Some(last) = self.coeffs.last() {
            if last.is_zero_symbolic() {
                self.coeffs.pop();
            } else {
                break;
            }
        }
        for c in &mut self.coeffs {
            *c = c.normalized();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, j: usize) -> ScalarExpr {
        self.coeffs
            .get(j)
            .cloned()
            .unwrap_or_else(|| ScalarExpr::int(0))
    }

    pub fn leading(&self) -> Option<&ScalarExpr> {
        self.coeffs.last()
    }

    pub fn add(&self, other: &PolyT) -> PolyT {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|j| self.coeff(j).add(&other.coeff(j)).normalized())
            .collect();
        PolyT::from_coeffs(coeffs)
    }

    pub fn neg(&self) -> PolyT {
        PolyT::from_coeffs(self.coeffs.iter().map(|c| c.neg().normalized()).collect())
    }

    pub fn sub(&self, other: &PolyT) -> PolyT {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &PolyT) -> PolyT {
        if self.is_zero() || other.is_zero() {
            return PolyT::zero();
        }
        let mut coeffs =
            vec![ScalarExpr::int(0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].add(&a.mul(b));
            }
        }
        PolyT::from_coeffs(coeffs)
    }

    pub fn scale(&self, c: &ScalarExpr) -> PolyT {
        PolyT::from_coeffs(self.coeffs.iter().map(|a| a.mul(c).normalized()).collect())
    }

    /// Quotient and remainder by a nonzero divisor (division by the leading
    /// coefficient builds quotient expressions; fine off its zero locus).
    pub fn divmod(&self, den: &PolyT) -> Result<(PolyT, PolyT), FiberError> {
        let dd = den
            .degree()
            .ok_or_else(|| FiberError::unsupported("division by the zero polynomial"))?;
        let lead = den.leading().unwrap().clone();
        let mut quo = vec![ScalarExpr::int(0); self.coeffs.len().saturating_sub(dd)];
        let mut rem = self.clone();
        while let Some(rd) = rem.degree() {
            if rd < dd {
                break;
            }
            let factor = rem.coeff(rd).div(&lead).normalized();
            quo[rd - dd] = factor.clone();
            let mut shifted = vec![ScalarExpr::int(0); rd - dd];
            shifted.extend(den.coeffs.iter().map(|c| c.mul(&factor)));
            rem = rem.sub(&PolyT::from_coeffs(shifted));
            if rem.degree().map_or(true, |d| d < rd) {
                continue;
            }
            // Leading term failed to cancel symbolically; force it.
            let mut forced = rem.coeffs.clone();
            forced.truncate(rd);
            rem = PolyT::from_coeffs(forced);
        }
        Ok((PolyT::from_coeffs(quo), rem))
    }

    /// d/dt.
    pub fn derivative(&self) -> PolyT {
        if self.coeffs.len() <= 1 {
            return PolyT::zero();
        }
        PolyT::from_coeffs(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(j, c)| ScalarExpr::int(j as i64 + 1).mul(c).normalized())
                .collect(),
        )
    }

    /// Antiderivative in t with zero constant term.
    pub fn antiderivative(&self) -> PolyT {
        if self.is_zero() {
            return PolyT::zero();
        }
        let mut coeffs = vec![ScalarExpr::int(0)];
        for (j, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c.div(&ScalarExpr::int(j as i64 + 1)).normalized());
        }
        PolyT::from_coeffs(coeffs)
    }

    /// Substitute an expression for t.
    pub fn eval_at(&self, t: &ScalarExpr) -> ScalarExpr {
        let mut acc = ScalarExpr::int(0);
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(t).add(c);
        }
        acc.normalized()
    }

    /// Render with t as the variable of the given index.
    pub fn to_expr(&self, t_index: usize) -> ScalarExpr {
        self.eval_at(&ScalarExpr::var(t_index))
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }
}

/// Rational function of the fiber variable.
#[derive(Clone, Debug, PartialEq)]
pub struct RatT {
    pub num: PolyT,
    pub den: PolyT,
}

impl RatT {
    pub fn from_poly(p: PolyT) -> RatT {
        RatT {
            num: p,
            den: PolyT::one(),
        }
    }

    pub fn zero() -> RatT {
        RatT::from_poly(PolyT::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn add(&self, other: &RatT) -> RatT {
        if self.den == other.den {
            return RatT {
                num: self.num.add(&other.num),
                den: self.den.clone(),
            };
        }
        RatT {
            num: self
                .num
                .mul(&other.den)
                .add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
    }

    pub fn neg(&self) -> RatT {
        RatT {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, other: &RatT) -> RatT {
        RatT {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
    }

    pub fn div(&self, other: &RatT) -> Result<RatT, FiberError> {
        if other.num.is_zero() {
            return Err(FiberError::unsupported("division by a zero integrand"));
        }
        Ok(RatT {
            num: self.num.mul(&other.den),
            den: self.den.mul(&other.num),
        })
    }

    pub fn derivative(&self) -> RatT {
        if self.den.is_constant() {
            let mut r = RatT::from_poly(self.num.derivative());
            if !self.den.is_zero() {
                r.num = r.num.scale(&ScalarExpr::int(1).div(&self.den.coeff(0)));
            }
            return r;
        }
        RatT {
            num: self
                .num
                .derivative()
                .mul(&self.den)
                .sub(&self.num.mul(&self.den.derivative())),
            den: self.den.mul(&self.den),
        }
    }

    pub fn to_expr(&self, t_index: usize) -> ScalarExpr {
        let n = self.num.to_expr(t_index);
        if self.den.is_constant() {
            match self.den.degree() {
                None => n, // 0/0 cannot occur: constructors reject zero dens
                Some(_) => n.div(&self.den.coeff(0)).normalized(),
            }
        } else {
            n.div(&self.den.to_expr(t_index)).normalized()
        }
    }

    pub fn eval_at(&self, t: &ScalarExpr) -> ScalarExpr {
        self.num
            .eval_at(t)
            .div(&self.den.eval_at(t))
            .normalized()
    }
}

/// Logarithm argument: a polynomial, optionally under an absolute value
/// (for antiderivatives valid on either side of the zero locus), with the
/// domain on which positivity is asserted.
#[derive(Clone, Debug)]
pub struct LogArg {
    pub poly: PolyT,
    pub absolute: bool,
    pub cert: SemiCondition,
}

impl LogArg {
    pub fn plain(poly: PolyT, cert: SemiCondition) -> LogArg {
        LogArg {
            poly,
            absolute: false,
            cert,
        }
    }

    pub fn absolute(poly: PolyT, t_index: usize) -> LogArg {
        let expr = poly.to_expr(t_index).abs();
        LogArg {
            poly,
            absolute: true,
            cert: SemiCondition::atom(SignOp::Gt, expr),
        }
    }

    pub fn to_expr(&self, t_index: usize) -> ScalarExpr {
        let base = self.poly.to_expr(t_index);
        if self.absolute {
            base.abs()
        } else {
            base
        }
    }
}

/// One summand `rat * log(s)^power` (`power = 0` means no log factor).
#[derive(Clone, Debug)]
pub struct LogTerm {
    pub rat: RatT,
    pub log: Option<LogArg>,
    pub power: u8,
}

impl LogTerm {
    fn rational(rat: RatT) -> LogTerm {
        LogTerm {
            rat,
            log: None,
            power: 0,
        }
    }

    pub fn to_expr(&self, t_index: usize) -> ScalarExpr {
        let r = self.rat.to_expr(t_index);
        match (&self.log, self.power) {
            (None, _) | (_, 0) => r,
            (Some(arg), m) => {
                let log = ScalarExpr::log_certified(&arg.to_expr(t_index), arg.cert.clone())
                    .expect("log argument is log-free by construction");
                let logm = if m == 1 { log } else { log.pow(i32::from(m)) };
                r.mul(&logm).normalized()
            }
        }
    }
}

/// Finite sum of log terms: the supported integrand class.
#[derive(Clone, Debug, Default)]
pub struct LogPolyIntegrand {
    pub terms: Vec<LogTerm>,
}

impl LogPolyIntegrand {
    pub fn zero() -> Self {
        LogPolyIntegrand::default()
    }

    pub fn rational(rat: RatT) -> Self {
        if rat.is_zero() {
            return Self::zero();
        }
        LogPolyIntegrand {
            terms: vec![LogTerm::rational(rat)],
        }
    }

    pub fn constant(e: ScalarExpr) -> Self {
        Self::rational(RatT::from_poly(PolyT::constant(e)))
    }

    pub fn log_of(s: PolyT, cert: SemiCondition) -> Self {
        Self::log_term(LogArg::plain(s, cert))
    }

    pub fn log_term(arg: LogArg) -> Self {
        LogPolyIntegrand {
            terms: vec![LogTerm {
                rat: RatT::from_poly(PolyT::one()),
                log: Some(arg),
                power: 1,
            }],
        }
    }

    pub fn add(&self, other: &LogPolyIntegrand) -> LogPolyIntegrand {
        let mut terms = self.terms.clone();
        'outer: for t in &other.terms {
            for existing in &mut terms {
                if existing.power == t.power && same_log(&existing.log, &t.log) {
                    existing.rat = existing.rat.add(&t.rat);
                    continue 'outer;
                }
            }
            terms.push(t.clone());
        }
        terms.retain(|t| !t.rat.is_zero());
        LogPolyIntegrand { terms }
    }

    pub fn neg(&self) -> LogPolyIntegrand {
        LogPolyIntegrand {
            terms: self
                .terms
                .iter()
                .map(|t| LogTerm {
                    rat: t.rat.neg(),
                    log: t.log.clone(),
                    power: t.power,
                })
                .collect(),
        }
    }

    pub fn mul(&self, other: &LogPolyIntegrand) -> Result<LogPolyIntegrand, FiberError> {
        let mut out = LogPolyIntegrand::zero();
        for a in &self.terms {
            for b in &other.terms {
                let rat = a.rat.mul(&b.rat);
                let (log, power) = match (&a.log, a.power, &b.log, b.power) {
                    (None, _, None, _) => (None, 0),
                    (Some(l), m, None, _) | (None, _, Some(l), m) => (Some(l.clone()), m),
                    (Some(la), ma, Some(lb), mb) => {
                        if same_log(&Some(la.clone()), &Some(lb.clone())) {
                            let m = ma + mb;
                            if m > 2 {
                                return Err(FiberError::unsupported(
                                    "log power above 2 in a product of integrands",
                                ));
                            }
                            (Some(la.clone()), m)
                        } else {
                            return Err(FiberError::unsupported(
                                "product of logarithms with different arguments",
                            ));
                        }
                    }
                };
                out = out.add(&LogPolyIntegrand {
                    terms: vec![LogTerm { rat, log, power }],
                });
            }
        }
        Ok(out)
    }

    /// Divide by a purely rational integrand.
    pub fn div_rational(&self, den: &RatT) -> Result<LogPolyIntegrand, FiberError> {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.rat = t.rat.div(den)?;
        }
        Ok(out)
    }

    /// The purely rational part and the log-bearing remainder.
    pub fn split_rational(&self) -> (RatT, Vec<LogTerm>) {
        let mut rat = RatT::zero();
        let mut logs = Vec::new();
        for t in &self.terms {
            if t.power == 0 || t.log.is_none() {
                rat = rat.add(&t.rat);
            } else {
                logs.push(t.clone());
            }
        }
        (rat, logs)
    }

    pub fn to_expr(&self, t_index: usize) -> ScalarExpr {
        if self.terms.is_empty() {
            return ScalarExpr::int(0);
        }
        ScalarExpr::sum(self.terms.iter().map(|t| t.to_expr(t_index)).collect()).normalized()
    }
}

fn same_log(a: &Option<LogArg>, b: &Option<LogArg>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(la), Some(lb)) => la.poly == lb.poly && la.absolute == lb.absolute,
        _ => false,
    }
}

/// Positivity certificate for a polynomial known positive on the working
/// interval: the assertion itself, recorded on the expression.
pub fn self_certificate(s: &PolyT, t_index: usize) -> SemiCondition {
    SemiCondition::atom(SignOp::Gt, s.to_expr(t_index))
}

/// Interpret an expression as a polynomial in the fiber variable; `None`
/// when it is not polynomial in `t`.
pub fn expr_as_poly(e: &ScalarExpr, t_index: usize) -> Option<PolyT> {
    if !e.depends_on(t_index) {
        return Some(PolyT::constant(e.clone()));
    }
    match e.node() {
        Expr::Var(i) if *i == t_index => Some(PolyT::t()),
        Expr::Sum(items) => {
            let mut acc = PolyT::zero();
            for item in items {
                acc = acc.add(&expr_as_poly(item, t_index)?);
            }
            Some(acc)
        }
        Expr::Prod(items) => {
            let mut acc = PolyT::one();
            for item in items {
                acc = acc.mul(&expr_as_poly(item, t_index)?);
            }
            Some(acc)
        }
        Expr::Pow(b, k) if *k >= 0 => {
            let base = expr_as_poly(b, t_index)?;
            let mut acc = PolyT::one();
            for _ in 0..*k {
                acc = acc.mul(&base);
            }
            Some(acc)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> ScalarExpr {
        ScalarExpr::var(0)
    }

    #[test]
    fn divmod_recovers_factors() {
        // (t - x)(t + 1) / (t - x) = t + 1 rem 0
        let t = PolyT::t();
        let a = t.sub(&PolyT::constant(x()));
        let b = t.add(&PolyT::one());
        let prod = a.mul(&b);
        let (q, r) = prod.divmod(&a).unwrap();
        assert!(r.is_zero(), "remainder {:?}", r);
        assert_eq!(q, b);
    }

    #[test]
    fn expr_poly_round_trip() {
        // x * t^2 - 3t + 1 in variable index 1
        let e = x()
            .mul(&ScalarExpr::var(1).pow(2))
            .sub(&ScalarExpr::int(3).mul(&ScalarExpr::var(1)))
            .add(&ScalarExpr::int(1));
        let p = expr_as_poly(&e, 1).unwrap();
        assert_eq!(p.degree(), Some(2));
        assert_eq!(p.to_expr(1).normalized(), e.normalized());
    }

    #[test]
    fn non_polynomial_is_rejected() {
        let e = ScalarExpr::int(1).div(&ScalarExpr::var(1));
        assert!(expr_as_poly(&e, 1).is_none());
        let r = ScalarExpr::var(1).abs();
        assert!(expr_as_poly(&r, 1).is_none());
    }

    #[test]
    fn poly_antiderivative_then_derivative() {
        let p = PolyT::from_coeffs(vec![x(), ScalarExpr::int(2), ScalarExpr::int(3)]);
        let ad = p.antiderivative();
        assert_eq!(ad.derivative(), p);
    }
}
