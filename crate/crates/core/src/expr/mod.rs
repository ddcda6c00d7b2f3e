//! Symbolic kernel for constructible scalar functions.
//!
//! An expression denotes a real-valued function of `x_1..x_n` built from
//! exact rational constants, field operations, integer powers, principal
//! roots of sign-certified arguments, `|.|`, `min`, `max`, finite piecewise
//! definitions over sign conditions, and logarithms of positive log-free
//! subexpressions. Logarithms never nest: every `log` argument is a
//! semialgebraic-core expression, so the whole tree is a finite sum of
//! finite products of core functions and logs of positive core functions.
//!
//! Expressions are immutable and cheaply clonable (`Arc`-shared). The
//! canonical form produced by [`ScalarExpr::normalized`] is cached
//! write-once per node, so repeated normalization is free and expressions
//! can be shared across threads.

mod diff;
mod equal;
mod json;
mod normalize;

pub use diff::{c1_zone, differentiate, smoothness_condition};
pub use equal::{equal, EqOpts, EqVerdict};
pub use json::{cond_from_json, cond_to_json, expr_from_json, expr_to_json, ParseError};

use std::fmt;
use std::sync::{Arc, OnceLock};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use ordered_float::OrderedFloat;

use crate::geometry::Region;

/// A numeric literal: exact rational, or a tagged float that poisons
/// exactness (anything derived from it can only be compared numerically).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Const {
    Rational(BigRational),
    Irrational(OrderedFloat<f64>),
}

impl Const {
    pub fn to_f64(&self) -> f64 {
        match self {
            Const::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Const::Irrational(v) => v.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Const::Rational(r) => r.is_zero(),
            Const::Irrational(v) => v.0 == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Const::Rational(r) => r.is_one(),
            Const::Irrational(v) => v.0 == 1.0,
        }
    }
}

/// Sign comparison against zero used by [`SemiCondition`] atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignOp {
    Gt,
    Ge,
    Eq,
    Ne,
    Lt,
    Le,
}

impl SignOp {
    pub fn negated(self) -> SignOp {
        match self {
            SignOp::Gt => SignOp::Le,
            SignOp::Ge => SignOp::Lt,
            SignOp::Eq => SignOp::Ne,
            SignOp::Ne => SignOp::Eq,
            SignOp::Lt => SignOp::Ge,
            SignOp::Le => SignOp::Gt,
        }
    }

    pub fn holds(self, v: f64) -> bool {
        match self {
            SignOp::Gt => v > 0.0,
            SignOp::Ge => v >= 0.0,
            SignOp::Eq => v == 0.0,
            SignOp::Ne => v != 0.0,
            SignOp::Lt => v < 0.0,
            SignOp::Le => v <= 0.0,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            SignOp::Gt => ">",
            SignOp::Ge => ">=",
            SignOp::Eq => "=",
            SignOp::Ne => "!=",
            SignOp::Lt => "<",
            SignOp::Le => "<=",
        }
    }
}

/// Finite boolean combination of sign conditions on log-free expressions.
///
/// Closed under conjunction, disjunction and negation; membership is total
/// wherever every atom's expression is defined.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SemiCondition {
    True,
    False,
    Atom(SignOp, ScalarExpr),
    And(Vec<SemiCondition>),
    Or(Vec<SemiCondition>),
}

impl SemiCondition {
    pub fn atom(op: SignOp, e: ScalarExpr) -> Self {
        SemiCondition::Atom(op, e)
    }

    pub fn and(items: Vec<SemiCondition>) -> Self {
        let mut flat = Vec::new();
        for c in items {
            match c {
                SemiCondition::True => {}
                SemiCondition::False => return SemiCondition::False,
                SemiCondition::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => SemiCondition::True,
            1 => flat.pop().unwrap(),
            _ => SemiCondition::And(flat),
        }
    }

    pub fn or(items: Vec<SemiCondition>) -> Self {
        let mut flat = Vec::new();
        for c in items {
            match c {
                SemiCondition::False => {}
                SemiCondition::True => return SemiCondition::True,
                SemiCondition::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => SemiCondition::False,
            1 => flat.pop().unwrap(),
            _ => SemiCondition::Or(flat),
        }
    }

    pub fn negated(&self) -> SemiCondition {
        match self {
            SemiCondition::True => SemiCondition::False,
            SemiCondition::False => SemiCondition::True,
            SemiCondition::Atom(op, e) => SemiCondition::Atom(op.negated(), e.clone()),
            SemiCondition::And(items) => {
                SemiCondition::or(items.iter().map(|c| c.negated()).collect())
            }
            SemiCondition::Or(items) => {
                SemiCondition::and(items.iter().map(|c| c.negated()).collect())
            }
        }
    }

    /// Total membership test at a point (errors only where an atom's
    /// expression is undefined).
    pub fn holds_at(&self, x: &[f64]) -> Result<bool, DomainError> {
        match self {
            SemiCondition::True => Ok(true),
            SemiCondition::False => Ok(false),
            SemiCondition::Atom(op, e) => Ok(op.holds(e.eval(x)?)),
            SemiCondition::And(items) => {
                for c in items {
                    if !c.holds_at(x)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            SemiCondition::Or(items) => {
                for c in items {
                    if c.holds_at(x)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    /// Substitute variables in every atom.
    pub fn substitute(&self, subs: &[ScalarExpr]) -> Result<SemiCondition, GrammarError> {
        Ok(match self {
            SemiCondition::True => SemiCondition::True,
            SemiCondition::False => SemiCondition::False,
            SemiCondition::Atom(op, e) => SemiCondition::Atom(*op, e.substitute(subs)?),
            SemiCondition::And(items) => SemiCondition::and(
                items
                    .iter()
                    .map(|c| c.substitute(subs))
                    .collect::<Result<_, _>>()?,
            ),
            SemiCondition::Or(items) => SemiCondition::or(
                items
                    .iter()
                    .map(|c| c.substitute(subs))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    pub fn normalized(&self) -> SemiCondition {
        match self {
            SemiCondition::True => SemiCondition::True,
            SemiCondition::False => SemiCondition::False,
            SemiCondition::Atom(op, e) => {
                let ne = e.normalized();
                // Fold constant atoms.
                if let Expr::Const(c) = ne.node() {
                    return if op.holds(c.to_f64()) {
                        SemiCondition::True
                    } else {
                        SemiCondition::False
                    };
                }
                SemiCondition::Atom(*op, ne)
            }
            SemiCondition::And(items) => {
                SemiCondition::and(items.iter().map(|c| c.normalized()).collect())
            }
            SemiCondition::Or(items) => {
                SemiCondition::or(items.iter().map(|c| c.normalized()).collect())
            }
        }
    }

    /// Atoms of a pure conjunction (`True` gives the empty list); `None`
    /// when the condition contains a disjunction.
    pub fn conjunction_atoms(&self) -> Option<Vec<(SignOp, ScalarExpr)>> {
        match self {
            SemiCondition::True => Some(Vec::new()),
            SemiCondition::Atom(op, e) => Some(vec![(*op, e.clone())]),
            SemiCondition::And(items) => {
                let mut out = Vec::new();
                for c in items {
                    out.extend(c.conjunction_atoms()?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            SemiCondition::True | SemiCondition::False => None,
            SemiCondition::Atom(_, e) => e.max_var(),
            SemiCondition::And(items) | SemiCondition::Or(items) => {
                items.iter().filter_map(|c| c.max_var()).max()
            }
        }
    }
}

impl fmt::Display for SemiCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemiCondition::True => write!(f, "true"),
            SemiCondition::False => write!(f, "false"),
            SemiCondition::Atom(op, e) => write!(f, "{} {} 0", e, op.symbol()),
            SemiCondition::And(items) => {
                let parts: Vec<String> = items.iter().map(|c| format!("({})", c)).collect();
                write!(f, "{}", parts.join(" & "))
            }
            SemiCondition::Or(items) => {
                let parts: Vec<String> = items.iter().map(|c| format!("({})", c)).collect();
                write!(f, "{}", parts.join(" | "))
            }
        }
    }
}

/// Expression tree node. Children are [`ScalarExpr`] so shared subtrees keep
/// their own normal-form caches.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Const),
    /// 0-based variable index (displayed 1-based as `x1`, `x2`, ...).
    Var(usize),
    Sum(Vec<ScalarExpr>),
    Prod(Vec<ScalarExpr>),
    Quot(ScalarExpr, ScalarExpr),
    /// Integer power; negative exponents require a nonzero base at eval time.
    Pow(ScalarExpr, i32),
    /// Principal n-th root (n >= 2) of an argument asserted nonnegative on
    /// its certificate domain.
    Root(ScalarExpr, u32),
    Abs(ScalarExpr),
    Min(ScalarExpr, ScalarExpr),
    Max(ScalarExpr, ScalarExpr),
    /// First branch whose condition holds; undefined outside the union.
    Piecewise(Vec<(SemiCondition, ScalarExpr)>),
    /// Natural logarithm of a log-free argument, with the domain on which
    /// positivity is asserted.
    Log(ScalarExpr, SemiCondition),
}

/// Shared, immutable constructible expression with a write-once normal-form
/// cache.
#[derive(Clone)]
pub struct ScalarExpr {
    node: Arc<Expr>,
    normal: Arc<OnceLock<ScalarExpr>>,
}

impl PartialEq for ScalarExpr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.node, &other.node) || self.node == other.node
    }
}
impl Eq for ScalarExpr {}
impl PartialOrd for ScalarExpr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ScalarExpr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.node.cmp(&other.node)
    }
}
impl std::hash::Hash for ScalarExpr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.node.hash(state)
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr({})", self)
    }
}

/// Evaluation failure at a point, identifying the offending node.
#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("log of nonpositive value {value} in `{node}`")]
    LogNonpositive { node: String, value: f64 },
    #[error("division by zero in `{node}`")]
    DivisionByZero { node: String },
    #[error("root of negative value {value} in `{node}`")]
    RootOfNegative { node: String, value: f64 },
    #[error("no piecewise branch matched in `{node}`")]
    NoBranch { node: String },
    #[error("variable x{} out of range (point has dimension {dim})", index + 1)]
    VarOutOfRange { index: usize, dim: usize },
}

/// Structural failure: an operation left the supported expression class.
#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum GrammarError {
    #[error("log applied to a non-log-free subexpression in `{node}`")]
    NestedLog { node: String },
    #[error("substitution produced an out-of-grammar expression: {reason}")]
    Overflow { reason: String },
    #[error("variable x{} has no substitute (map has {provided} components)", index + 1)]
    MissingSubstitute { index: usize, provided: usize },
}

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl ScalarExpr {
    fn new(node: Expr) -> Self {
        ScalarExpr {
            node: Arc::new(node),
            normal: Arc::new(OnceLock::new()),
        }
    }

    pub fn node(&self) -> &Expr {
        &self.node
    }

    // ---- constructors ----

    pub fn rational(r: BigRational) -> Self {
        ScalarExpr::new(Expr::Const(Const::Rational(r)))
    }

    pub fn int(n: i64) -> Self {
        ScalarExpr::rational(big(n))
    }

    pub fn frac(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator literal");
        ScalarExpr::rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Tagged non-rational literal; poisons exactness downstream.
    pub fn irrational(v: f64) -> Self {
        ScalarExpr::new(Expr::Const(Const::Irrational(OrderedFloat(v))))
    }

    /// Variable `x_{i+1}` (0-based index).
    pub fn var(i: usize) -> Self {
        ScalarExpr::new(Expr::Var(i))
    }

    pub fn sum(terms: Vec<ScalarExpr>) -> Self {
        match terms.len() {
            0 => ScalarExpr::int(0),
            1 => terms.into_iter().next().unwrap(),
            _ => ScalarExpr::new(Expr::Sum(terms)),
        }
    }

    pub fn prod(factors: Vec<ScalarExpr>) -> Self {
        match factors.len() {
            0 => ScalarExpr::int(1),
            1 => factors.into_iter().next().unwrap(),
            _ => ScalarExpr::new(Expr::Prod(factors)),
        }
    }

    pub fn add(&self, other: &ScalarExpr) -> Self {
        ScalarExpr::sum(vec![self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &ScalarExpr) -> Self {
        ScalarExpr::sum(vec![self.clone(), other.neg()])
    }

    pub fn mul(&self, other: &ScalarExpr) -> Self {
        ScalarExpr::prod(vec![self.clone(), other.clone()])
    }

    pub fn neg(&self) -> Self {
        ScalarExpr::prod(vec![ScalarExpr::int(-1), self.clone()])
    }

    pub fn div(&self, den: &ScalarExpr) -> Self {
        ScalarExpr::new(Expr::Quot(self.clone(), den.clone()))
    }

    pub fn pow(&self, k: i32) -> Self {
        ScalarExpr::new(Expr::Pow(self.clone(), k))
    }

    pub fn root(&self, degree: u32) -> Self {
        assert!(degree >= 2, "root degree must be >= 2");
        ScalarExpr::new(Expr::Root(self.clone(), degree))
    }

    pub fn sqrt(&self) -> Self {
        self.root(2)
    }

    pub fn abs(&self) -> Self {
        ScalarExpr::new(Expr::Abs(self.clone()))
    }

    pub fn min_with(&self, other: &ScalarExpr) -> Self {
        ScalarExpr::new(Expr::Min(self.clone(), other.clone()))
    }

    pub fn max_with(&self, other: &ScalarExpr) -> Self {
        ScalarExpr::new(Expr::Max(self.clone(), other.clone()))
    }

    pub fn piecewise(branches: Vec<(SemiCondition, ScalarExpr)>) -> Self {
        ScalarExpr::new(Expr::Piecewise(branches))
    }

    /// `log(arg)` with the default certificate `arg > 0`.
    pub fn log(arg: &ScalarExpr) -> Result<Self, GrammarError> {
        let cert = SemiCondition::atom(SignOp::Gt, arg.clone());
        ScalarExpr::log_certified(arg, cert)
    }

    /// `log(arg)` with an explicit positivity certificate. The argument must
    /// be log-free (constructible functions never nest logarithms).
    pub fn log_certified(arg: &ScalarExpr, cert: SemiCondition) -> Result<Self, GrammarError> {
        if !arg.is_log_free() {
            return Err(GrammarError::NestedLog {
                node: arg.to_string(),
            });
        }
        Ok(ScalarExpr::new(Expr::Log(arg.clone(), cert)))
    }

    // ---- structure ----

    pub fn is_const(&self) -> bool {
        matches!(self.node(), Expr::Const(_))
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self.node() {
            Expr::Const(Const::Rational(r)) => Some(r),
            _ => None,
        }
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self.node(), Expr::Const(c) if c.is_zero())
    }

    pub fn is_one_literal(&self) -> bool {
        matches!(self.node(), Expr::Const(c) if c.is_one())
    }

    /// Largest variable index appearing in the tree.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Sum(items) | Expr::Prod(items) => items.iter().filter_map(|e| e.max_var()).max(),
            Expr::Quot(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => a.max_var().max(b.max_var()),
            Expr::Pow(e, _) | Expr::Root(e, _) | Expr::Abs(e) => e.max_var(),
            Expr::Piecewise(branches) => branches
                .iter()
                .filter_map(|(c, e)| c.max_var().max(e.max_var()))
                .max(),
            Expr::Log(e, cert) => e.max_var().max(cert.max_var()),
        }
    }

    pub fn depends_on(&self, i: usize) -> bool {
        match self.node() {
            Expr::Const(_) => false,
            Expr::Var(j) => *j == i,
            Expr::Sum(items) | Expr::Prod(items) => items.iter().any(|e| e.depends_on(i)),
            Expr::Quot(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.depends_on(i) || b.depends_on(i)
            }
            Expr::Pow(e, _) | Expr::Root(e, _) | Expr::Abs(e) => e.depends_on(i),
            Expr::Piecewise(branches) => branches.iter().any(|(c, e)| {
                e.depends_on(i)
                    || cond_depends_on(c, i)
            }),
            Expr::Log(e, cert) => e.depends_on(i) || cond_depends_on(cert, i),
        }
    }

    pub fn is_log_free(&self) -> bool {
        match self.node() {
            Expr::Log(..) => false,
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Sum(items) | Expr::Prod(items) => items.iter().all(|e| e.is_log_free()),
            Expr::Quot(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.is_log_free() && b.is_log_free()
            }
            Expr::Pow(e, _) | Expr::Root(e, _) | Expr::Abs(e) => e.is_log_free(),
            Expr::Piecewise(branches) => branches.iter().all(|(_, e)| e.is_log_free()),
        }
    }

    pub fn contains_irrational(&self) -> bool {
        match self.node() {
            Expr::Const(Const::Irrational(_)) => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Sum(items) | Expr::Prod(items) => items.iter().any(|e| e.contains_irrational()),
            Expr::Quot(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.contains_irrational() || b.contains_irrational()
            }
            Expr::Pow(e, _) | Expr::Root(e, _) | Expr::Abs(e) | Expr::Log(e, _) => {
                e.contains_irrational()
            }
            Expr::Piecewise(branches) => branches.iter().any(|(_, e)| e.contains_irrational()),
        }
    }

    /// Checks the class invariant: logs only over log-free arguments.
    pub fn validate_constructible(&self) -> Result<(), GrammarError> {
        match self.node() {
            Expr::Log(arg, _) => {
                if !arg.is_log_free() {
                    return Err(GrammarError::NestedLog {
                        node: arg.to_string(),
                    });
                }
                arg.validate_constructible()
            }
            Expr::Const(_) | Expr::Var(_) => Ok(()),
            Expr::Sum(items) | Expr::Prod(items) => {
                items.iter().try_for_each(|e| e.validate_constructible())
            }
            Expr::Quot(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.validate_constructible()?;
                b.validate_constructible()
            }
            Expr::Pow(e, _) | Expr::Root(e, _) | Expr::Abs(e) => e.validate_constructible(),
            Expr::Piecewise(branches) => branches
                .iter()
                .try_for_each(|(_, e)| e.validate_constructible()),
        }
    }

    // ---- evaluation ----

    /// Evaluate at a point. Deterministic; errors identify the offending
    /// node and never approximate outside the definedness domain.
    pub fn eval(&self, x: &[f64]) -> Result<f64, DomainError> {
        match self.node() {
            Expr::Const(c) => Ok(c.to_f64()),
            Expr::Var(i) => x.get(*i).copied().ok_or(DomainError::VarOutOfRange {
                index: *i,
                dim: x.len(),
            }),
            Expr::Sum(items) => {
                let mut acc = 0.0;
                for e in items {
                    acc += e.eval(x)?;
                }
                Ok(acc)
            }
            Expr::Prod(items) => {
                let mut acc = 1.0;
                for e in items {
                    acc *= e.eval(x)?;
                }
                Ok(acc)
            }
            Expr::Quot(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(DomainError::DivisionByZero {
                        node: self.to_string(),
                    });
                }
                Ok(a.eval(x)? / den)
            }
            Expr::Pow(e, k) => {
                let v = e.eval(x)?;
                if *k < 0 && v == 0.0 {
                    return Err(DomainError::DivisionByZero {
                        node: self.to_string(),
                    });
                }
                Ok(v.powi(*k))
            }
            Expr::Root(e, n) => {
                let v = e.eval(x)?;
                if v < 0.0 {
                    return Err(DomainError::RootOfNegative {
                        node: self.to_string(),
                        value: v,
                    });
                }
                Ok(v.powf(1.0 / f64::from(*n)))
            }
            Expr::Abs(e) => Ok(e.eval(x)?.abs()),
            Expr::Min(a, b) => Ok(a.eval(x)?.min(b.eval(x)?)),
            Expr::Max(a, b) => Ok(a.eval(x)?.max(b.eval(x)?)),
            Expr::Piecewise(branches) => {
                for (cond, e) in branches {
                    if cond.holds_at(x)? {
                        return e.eval(x);
                    }
                }
                Err(DomainError::NoBranch {
                    node: self.to_string(),
                })
            }
            Expr::Log(e, _) => {
                let v = e.eval(x)?;
                if v <= 0.0 {
                    return Err(DomainError::LogNonpositive {
                        node: self.to_string(),
                        value: v,
                    });
                }
                Ok(v.ln())
            }
        }
    }

    /// Exact-rational fast path: `Some(value)` when the expression and the
    /// point are rational all the way down, `None` when an irrational
    /// constant, imperfect root, or nontrivial log blocks exactness.
    pub fn eval_exact(&self, x: &[BigRational]) -> Result<Option<BigRational>, DomainError> {
        match self.node() {
            Expr::Const(Const::Rational(r)) => Ok(Some(r.clone())),
            Expr::Const(Const::Irrational(_)) => Ok(None),
            Expr::Var(i) => match x.get(*i) {
                Some(v) => Ok(Some(v.clone())),
                None => Err(DomainError::VarOutOfRange {
                    index: *i,
                    dim: x.len(),
                }),
            },
            Expr::Sum(items) => {
                let mut acc = BigRational::zero();
                for e in items {
                    match e.eval_exact(x)? {
                        Some(v) => acc += v,
                        None => return Ok(None),
                    }
                }
                Ok(Some(acc))
            }
            Expr::Prod(items) => {
                let mut acc = BigRational::one();
                for e in items {
                    match e.eval_exact(x)? {
                        Some(v) => acc *= v,
                        None => return Ok(None),
                    }
                }
                Ok(Some(acc))
            }
            Expr::Quot(a, b) => {
                let den = match b.eval_exact(x)? {
                    Some(v) => v,
                    None => return Ok(None),
                };
                if den.is_zero() {
                    return Err(DomainError::DivisionByZero {
                        node: self.to_string(),
                    });
                }
                Ok(a.eval_exact(x)?.map(|num| num / den))
            }
            Expr::Pow(e, k) => {
                let v = match e.eval_exact(x)? {
                    Some(v) => v,
                    None => return Ok(None),
                };
                if *k < 0 && v.is_zero() {
                    return Err(DomainError::DivisionByZero {
                        node: self.to_string(),
                    });
                }
                Ok(Some(rational_powi(&v, *k)))
            }
            Expr::Root(e, n) => {
                let v = match e.eval_exact(x)? {
                    Some(v) => v,
                    None => return Ok(None),
                };
                if v.is_negative() {
                    return Err(DomainError::RootOfNegative {
                        node: self.to_string(),
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
                Ok(rational_nth_root(&v, *n))
            }
            Expr::Abs(e) => Ok(e.eval_exact(x)?.map(|v| v.abs())),
            Expr::Min(a, b) => Ok(match (a.eval_exact(x)?, b.eval_exact(x)?) {
                (Some(u), Some(v)) => Some(u.min(v)),
                _ => None,
            }),
            Expr::Max(a, b) => Ok(match (a.eval_exact(x)?, b.eval_exact(x)?) {
                (Some(u), Some(v)) => Some(u.max(v)),
                _ => None,
            }),
            Expr::Piecewise(branches) => {
                for (cond, e) in branches {
                    match cond_holds_exact(cond, x)? {
                        Some(true) => return e.eval_exact(x),
                        Some(false) => continue,
                        None => return Ok(None),
                    }
                }
                Err(DomainError::NoBranch {
                    node: self.to_string(),
                })
            }
            Expr::Log(e, _) => {
                let v = match e.eval_exact(x)? {
                    Some(v) => v,
                    None => return Ok(None),
                };
                if !v.is_positive() {
                    return Err(DomainError::LogNonpositive {
                        node: self.to_string(),
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
                if v.is_one() {
                    Ok(Some(BigRational::zero()))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Replace `x_{i+1}` by `subs[i]` everywhere (log certificates
    /// included). Fails when the result leaves the supported class.
    pub fn substitute(&self, subs: &[ScalarExpr]) -> Result<ScalarExpr, GrammarError> {
        let out = match self.node() {
            Expr::Const(_) => self.clone(),
            Expr::Var(i) => subs
                .get(*i)
                .cloned()
                .ok_or(GrammarError::MissingSubstitute {
                    index: *i,
                    provided: subs.len(),
                })?,
            Expr::Sum(items) => ScalarExpr::sum(
                items
                    .iter()
                    .map(|e| e.substitute(subs))
                    .collect::<Result<_, _>>()?,
            ),
            Expr::Prod(items) => ScalarExpr::prod(
                items
                    .iter()
                    .map(|e| e.substitute(subs))
                    .collect::<Result<_, _>>()?,
            ),
            Expr::Quot(a, b) => a.substitute(subs)?.div(&b.substitute(subs)?),
            Expr::Pow(e, k) => e.substitute(subs)?.pow(*k),
            Expr::Root(e, n) => e.substitute(subs)?.root(*n),
            Expr::Abs(e) => e.substitute(subs)?.abs(),
            Expr::Min(a, b) => a.substitute(subs)?.min_with(&b.substitute(subs)?),
            Expr::Max(a, b) => a.substitute(subs)?.max_with(&b.substitute(subs)?),
            Expr::Piecewise(branches) => ScalarExpr::piecewise(
                branches
                    .iter()
                    .map(|(c, e)| Ok((c.substitute(subs)?, e.substitute(subs)?)))
                    .collect::<Result<Vec<_>, GrammarError>>()?,
            ),
            Expr::Log(arg, cert) => {
                let arg = arg.substitute(subs)?;
                if !arg.is_log_free() {
                    return Err(GrammarError::Overflow {
                        reason: format!("substitution produced log of `{}`", arg),
                    });
                }
                ScalarExpr::log_certified(&arg, cert.substitute(subs)?)?
            }
        };
        Ok(out)
    }

    /// Substitute a single variable, leaving the others in place.
    pub fn substitute_var(&self, idx: usize, repl: &ScalarExpr) -> Result<ScalarExpr, GrammarError> {
        let n = self.max_var().map_or(0, |m| m + 1).max(idx + 1);
        let subs: Vec<ScalarExpr> = (0..n)
            .map(|i| if i == idx { repl.clone() } else { ScalarExpr::var(i) })
            .collect();
        self.substitute(&subs)
    }
}

fn cond_depends_on(c: &SemiCondition, i: usize) -> bool {
    match c {
        SemiCondition::True | SemiCondition::False => false,
        SemiCondition::Atom(_, e) => e.depends_on(i),
        SemiCondition::And(items) | SemiCondition::Or(items) => {
            items.iter().any(|c| cond_depends_on(c, i))
        }
    }
}

fn cond_holds_exact(c: &SemiCondition, x: &[BigRational]) -> Result<Option<bool>, DomainError> {
    match c {
        SemiCondition::True => Ok(Some(true)),
        SemiCondition::False => Ok(Some(false)),
        SemiCondition::Atom(op, e) => Ok(e.eval_exact(x)?.map(|v| {
            let s = if v.is_zero() {
                0.0
            } else if v.is_positive() {
                1.0
            } else {
                -1.0
            };
            op.holds(s)
        })),
        SemiCondition::And(items) => {
            let mut all = true;
            for c in items {
                match cond_holds_exact(c, x)? {
                    Some(true) => {}
                    Some(false) => all = false,
                    None => return Ok(None),
                }
            }
            Ok(Some(all))
        }
        SemiCondition::Or(items) => {
            let mut any = false;
            for c in items {
                match cond_holds_exact(c, x)? {
                    Some(true) => any = true,
                    Some(false) => {}
                    None => return Ok(None),
                }
            }
            Ok(Some(any))
        }
    }
}

pub(crate) fn rational_powi(v: &BigRational, k: i32) -> BigRational {
    if k == 0 {
        return BigRational::one();
    }
    let mut acc = BigRational::one();
    let base = if k > 0 { v.clone() } else { v.recip() };
    for _ in 0..k.unsigned_abs() {
        acc *= &base;
    }
    acc
}

/// Exact n-th root of a nonnegative rational, when it is rational.
pub(crate) fn rational_nth_root(v: &BigRational, n: u32) -> Option<BigRational> {
    if v.is_zero() {
        return Some(BigRational::zero());
    }
    let num = v.numer().nth_root(n);
    let den = v.denom().nth_root(n);
    let candidate = BigRational::new(num, den);
    if rational_powi(&candidate, n as i32) == *v {
        Some(candidate)
    } else {
        None
    }
}

/// Dense-open locus on which an expression is continuously differentiable,
/// inside a declared reference region.
#[derive(Clone, Debug, PartialEq)]
pub struct Zone {
    pub dim: usize,
    pub condition: SemiCondition,
    pub reference: Region,
}

impl Zone {
    pub fn full(dim: usize) -> Self {
        Zone {
            dim,
            condition: SemiCondition::True,
            reference: Region::full_space(dim),
        }
    }

    pub fn new(dim: usize, condition: SemiCondition, reference: Region) -> Self {
        Zone {
            dim,
            condition,
            reference,
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, DomainError> {
        Ok(self.reference.contains(x)? && self.condition.holds_at(x)?)
    }

    pub fn intersect(&self, other: &SemiCondition) -> Zone {
        Zone {
            dim: self.dim,
            condition: SemiCondition::and(vec![self.condition.clone(), other.clone()]),
            reference: self.reference.clone(),
        }
    }
}

// ---- display ----

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Expr::Const(Const::Rational(r)) => {
                if r.denom().is_one() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Expr::Const(Const::Irrational(v)) => write!(f, "~{}", v.0),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Sum(items) => {
                let parts: Vec<String> = items.iter().map(|e| e.to_string()).collect();
                write!(f, "({})", parts.join(" + "))
            }
            Expr::Prod(items) => {
                let parts: Vec<String> = items.iter().map(|e| e.to_string()).collect();
                write!(f, "({})", parts.join("*"))
            }
            Expr::Quot(a, b) => write!(f, "({}/{})", a, b),
            Expr::Pow(e, k) => write!(f, "{}^{}", e, k),
            Expr::Root(e, 2) => write!(f, "sqrt({})", e),
            Expr::Root(e, n) => write!(f, "root[{}]({})", n, e),
            Expr::Abs(e) => write!(f, "|{}|", e),
            Expr::Min(a, b) => write!(f, "min({}, {})", a, b),
            Expr::Max(a, b) => write!(f, "max({}, {})", a, b),
            Expr::Piecewise(branches) => {
                let parts: Vec<String> = branches
                    .iter()
                    .map(|(c, e)| format!("{} if {}", e, c))
                    .collect();
                write!(f, "{{{}}}", parts.join("; "))
            }
            Expr::Log(e, _) => write!(f, "log({})", e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_rational_point_is_exact() {
        // 3*x^2 - 2*x^3 at 1/2 is exactly 1/2.
        let x = ScalarExpr::var(0);
        let e = ScalarExpr::int(3)
            .mul(&x.pow(2))
            .add(&ScalarExpr::int(-2).mul(&x.pow(3)));
        assert_eq!(e.eval(&[0.5]).unwrap(), 0.5);
        let exact = e.eval_exact(&[BigRational::new(1.into(), 2.into())]).unwrap();
        assert_eq!(exact, Some(BigRational::new(1.into(), 2.into())));
    }

    #[test]
    fn eval_odd_rational_map_at_origin() {
        // x / sqrt(1 + x^2) at 0.
        let x = ScalarExpr::var(0);
        let e = x.div(&ScalarExpr::int(1).add(&x.pow(2)).sqrt());
        assert_eq!(e.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_log_one_is_zero() {
        let e = ScalarExpr::log(&ScalarExpr::var(0)).unwrap();
        assert_eq!(e.eval(&[1.0]).unwrap(), 0.0);
        assert_eq!(
            e.eval_exact(&[BigRational::one()]).unwrap(),
            Some(BigRational::zero())
        );
    }

    #[test]
    fn domain_errors_identify_node() {
        let e = ScalarExpr::log(&ScalarExpr::var(0)).unwrap();
        match e.eval(&[-1.0]) {
            Err(DomainError::LogNonpositive { value, .. }) => assert_eq!(value, -1.0),
            other => panic!("expected log domain error, got {:?}", other),
        }
        let q = ScalarExpr::int(1).div(&ScalarExpr::var(0));
        assert!(matches!(
            q.eval(&[0.0]),
            Err(DomainError::DivisionByZero { .. })
        ));
        let r = ScalarExpr::var(0).sqrt();
        assert!(matches!(
            r.eval(&[-2.0]),
            Err(DomainError::RootOfNegative { .. })
        ));
    }

    #[test]
    fn substitute_rewrites_certificates() {
        let e = ScalarExpr::log(&ScalarExpr::var(0)).unwrap();
        let sub = e.substitute(&[ScalarExpr::var(1).pow(2)]).unwrap();
        // log(x2^2): the certificate must now mention x2.
        assert!(sub.depends_on(1));
        assert!(!sub.depends_on(0));
    }

    #[test]
    fn nested_log_rejected() {
        let inner = ScalarExpr::log(&ScalarExpr::var(0)).unwrap();
        assert!(ScalarExpr::log(&inner).is_err());
    }

    #[test]
    fn exact_root_of_perfect_power() {
        let e = ScalarExpr::int(4).sqrt();
        assert_eq!(e.eval_exact(&[]).unwrap(), Some(big(2)));
        let f = ScalarExpr::int(2).sqrt();
        assert_eq!(f.eval_exact(&[]).unwrap(), None);
        assert!((f.eval(&[]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
