//! Canonical form for constructible expressions.
//!
//! The normal form flattens sums and products, distributes products and
//! small integer powers over sums (bounded expansion), collects rational
//! coefficients and like terms, merges quotients over syntactically equal
//! denominators, cancels shared factors between numerator and denominator,
//! and splits logarithms of products whose factors carry positivity
//! certificates. It is idempotent and eval-preserving wherever the input is
//! defined; like every computer-algebra normal form over a partial function
//! class, it may enlarge the definedness domain (`f/f` becomes `1`).
//!
//! Piecewise branches are normalized under the branch condition: sign
//! information from a conjunctive guard resolves `|.|`, `min`, `max`, and
//! nested branch conditions (`max(0, x1)` under `x1 > 0` becomes `x1`).

use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

use super::{rational_powi, Const, Expr, ScalarExpr, SemiCondition, SignOp};

/// Hard cap on distributive expansion; above it a power of a sum is kept
/// opaque rather than multiplied out.
const MAX_EXPANSION_TERMS: usize = 4096;

impl ScalarExpr {
    /// Canonical form, cached write-once per node. Idempotent:
    /// `e.normalized().normalized() == e.normalized()`.
    pub fn normalized(&self) -> ScalarExpr {
        self.normal
            .get_or_init(|| norm(self, &Guard::default()))
            .clone()
    }

    /// Does the canonical form collapse to the literal zero?
    pub fn is_zero_symbolic(&self) -> bool {
        self.normalized().is_zero_literal()
    }
}

/// Conjunctive sign context used inside piecewise branches.
#[derive(Default, Clone)]
pub(crate) struct Guard {
    atoms: Vec<(SignOp, ScalarExpr)>,
}

impl Guard {
    fn extended(&self, cond: &SemiCondition) -> Guard {
        let mut g = self.clone();
        if let Some(atoms) = cond.conjunction_atoms() {
            for (op, e) in atoms {
                g.atoms.push((op, norm(&e, &Guard::default())));
            }
        }
        g
    }

    fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Strongest sign relation known for a normalized expression.
    fn sign_of(&self, e: &ScalarExpr) -> Option<SignOp> {
        if self.atoms.is_empty() {
            return None;
        }
        let neg = norm(&e.neg(), &Guard::default());
        let mut found: Option<SignOp> = None;
        for (op, a) in &self.atoms {
            let hit = if a == e {
                Some(*op)
            } else if *a == neg {
                Some(flip(*op))
            } else {
                None
            };
            if let Some(op) = hit {
                found = Some(match found {
                    None => op,
                    Some(prev) => stronger(prev, op),
                });
            }
        }
        found
    }
}

fn flip(op: SignOp) -> SignOp {
    match op {
        SignOp::Gt => SignOp::Lt,
        SignOp::Ge => SignOp::Le,
        SignOp::Lt => SignOp::Gt,
        SignOp::Le => SignOp::Ge,
        SignOp::Eq => SignOp::Eq,
        SignOp::Ne => SignOp::Ne,
    }
}

fn rank(op: SignOp) -> u8 {
    match op {
        SignOp::Eq | SignOp::Gt | SignOp::Lt => 2,
        SignOp::Ge | SignOp::Le | SignOp::Ne => 1,
    }
}

fn stronger(a: SignOp, b: SignOp) -> SignOp {
    // Combine two facts about the same expression; prefer the sharper one.
    // (Gt, Ne) etc. carry no extra refinement we exploit.
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Does knowledge `k` decide query `q` about the same expression?
fn implies(k: SignOp, q: SignOp) -> Option<bool> {
    use SignOp::*;
    match (k, q) {
        (Gt, Gt) | (Gt, Ge) | (Gt, Ne) => Some(true),
        (Gt, Eq) | (Gt, Lt) | (Gt, Le) => Some(false),
        (Lt, Lt) | (Lt, Le) | (Lt, Ne) => Some(true),
        (Lt, Eq) | (Lt, Gt) | (Lt, Ge) => Some(false),
        (Eq, Eq) | (Eq, Ge) | (Eq, Le) => Some(true),
        (Eq, Gt) | (Eq, Lt) | (Eq, Ne) => Some(false),
        (Ge, Ge) => Some(true),
        (Ge, Lt) => Some(false),
        (Le, Le) => Some(true),
        (Le, Gt) => Some(false),
        (Ne, Ne) => Some(true),
        (Ne, Eq) => Some(false),
        _ => None,
    }
}

// ---- numeric coefficients (rational unless poisoned by a tagged float) ----

#[derive(Clone, Debug, PartialEq)]
enum Coeff {
    Rat(BigRational),
    Irr(f64),
}

impl Coeff {
    fn one() -> Coeff {
        Coeff::Rat(BigRational::one())
    }
    fn zero() -> Coeff {
        Coeff::Rat(BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        match self {
            Coeff::Rat(r) => r.is_zero(),
            Coeff::Irr(v) => *v == 0.0,
        }
    }
    fn is_one(&self) -> bool {
        match self {
            Coeff::Rat(r) => r.is_one(),
            Coeff::Irr(v) => *v == 1.0,
        }
    }
    fn to_f64(&self) -> f64 {
        match self {
            Coeff::Rat(r) => r.to_f64().unwrap_or(f64::NAN),
            Coeff::Irr(v) => *v,
        }
    }
    fn add(&self, other: &Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Rat(a), Coeff::Rat(b)) => Coeff::Rat(a + b),
            _ => Coeff::Irr(self.to_f64() + other.to_f64()),
        }
    }
    fn mul(&self, other: &Coeff) -> Coeff {
        match (self, other) {
            (Coeff::Rat(a), Coeff::Rat(b)) => Coeff::Rat(a * b),
            _ => Coeff::Irr(self.to_f64() * other.to_f64()),
        }
    }
    fn recip(&self) -> Coeff {
        match self {
            Coeff::Rat(r) => Coeff::Rat(r.recip()),
            Coeff::Irr(v) => Coeff::Irr(1.0 / v),
        }
    }
    fn from_const(c: &Const) -> Coeff {
        match c {
            Const::Rational(r) => Coeff::Rat(r.clone()),
            Const::Irrational(v) => Coeff::Irr(v.0),
        }
    }
    fn to_expr(&self) -> ScalarExpr {
        match self {
            Coeff::Rat(r) => ScalarExpr::rational(r.clone()),
            Coeff::Irr(v) => ScalarExpr::irrational(*v),
        }
    }
}

// ---- main recursion ----

pub(crate) fn norm(e: &ScalarExpr, guard: &Guard) -> ScalarExpr {
    // Reuse the context-free cache when it is already populated.
    if guard.is_empty() {
        if let Some(n) = e.normal.get() {
            return n.clone();
        }
    }
    let out = match e.node() {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Sum(items) => norm_sum(items.iter().map(|t| norm(t, guard)).collect()),
        Expr::Prod(items) => norm_prod(items.iter().map(|t| norm(t, guard)).collect()),
        Expr::Quot(a, b) => norm_quot(norm(a, guard), norm(b, guard)),
        Expr::Pow(b, k) => norm_pow(norm(b, guard), *k),
        Expr::Root(a, n) => norm_root(norm(a, guard), *n),
        Expr::Abs(a) => norm_abs(norm(a, guard), guard),
        Expr::Min(a, b) => norm_minmax(norm(a, guard), norm(b, guard), true, guard),
        Expr::Max(a, b) => norm_minmax(norm(a, guard), norm(b, guard), false, guard),
        Expr::Piecewise(branches) => norm_piecewise(branches, guard),
        Expr::Log(arg, cert) => norm_log(norm(arg, guard), cert.normalized()),
    };
    out
}

// A term is `coeff * core` with the core free of leading constants.
fn split_coeff(e: &ScalarExpr) -> (Coeff, ScalarExpr) {
    match e.node() {
        Expr::Const(c) => (Coeff::from_const(c), ScalarExpr::int(1)),
        Expr::Prod(items) => {
            let mut coeff = Coeff::one();
            let mut rest = Vec::new();
            for f in items {
                match f.node() {
                    Expr::Const(c) => coeff = coeff.mul(&Coeff::from_const(c)),
                    _ => rest.push(f.clone()),
                }
            }
            (coeff, ScalarExpr::prod(rest))
        }
        _ => (Coeff::one(), e.clone()),
    }
}

fn term_from(coeff: Coeff, core: ScalarExpr) -> Option<ScalarExpr> {
    if coeff.is_zero() {
        return None;
    }
    if core.is_one_literal() {
        return Some(coeff.to_expr());
    }
    if coeff.is_one() {
        return Some(core);
    }
    // Coefficients of quotient cores belong in the numerator.
    if let Expr::Quot(a, b) = core.node() {
        return Some(norm_quot(
            norm_prod(vec![coeff.to_expr(), a.clone()]),
            b.clone(),
        ));
    }
    let mut factors = vec![coeff.to_expr()];
    match core.node() {
        Expr::Prod(items) => factors.extend(items.iter().cloned()),
        _ => factors.push(core),
    }
    Some(ScalarExpr::new_normal_unchecked(Expr::Prod(factors)))
}

impl ScalarExpr {
    // Internal: wrap an already-canonical node without re-deriving anything.
    fn new_normal_unchecked(node: Expr) -> ScalarExpr {
        ScalarExpr {
            node: std::sync::Arc::new(node),
            normal: std::sync::Arc::new(std::sync::OnceLock::new()),
        }
    }
}

/// Distribute the first piecewise element of `items` over its branches,
/// rebuilding with `rebuild` on each branch. Returns `None` when no
/// piecewise element occurs.
fn distribute_piecewise(
    items: &[ScalarExpr],
    rebuild: impl Fn(Vec<ScalarExpr>) -> ScalarExpr,
) -> Option<ScalarExpr> {
    let pos = items
        .iter()
        .position(|e| matches!(e.node(), Expr::Piecewise(_)))?;
    let branches = match items[pos].node() {
        Expr::Piecewise(bs) => bs.clone(),
        _ => unreachable!(),
    };
    let rebuilt: Vec<(SemiCondition, ScalarExpr)> = branches
        .into_iter()
        .map(|(c, v)| {
            let mut parts: Vec<ScalarExpr> = items.to_vec();
            parts[pos] = v;
            (c, rebuild(parts))
        })
        .collect();
    Some(norm(
        &ScalarExpr::piecewise(rebuilt),
        &Guard::default(),
    ))
}

/// Sum of already-normalized terms.
fn norm_sum(terms: Vec<ScalarExpr>) -> ScalarExpr {
    if let Some(out) = distribute_piecewise(&terms, norm_sum) {
        return out;
    }
    // Flatten, then merge quotient terms sharing a denominator.
    let mut plain: Vec<ScalarExpr> = Vec::new();
    let mut by_den: BTreeMap<ScalarExpr, Vec<ScalarExpr>> = BTreeMap::new();
    let mut stack = terms;
    stack.reverse();
    while let Some(t) = stack.pop() {
        match t.node() {
            Expr::Sum(items) => {
                for it in items.iter().rev() {
                    stack.push(it.clone());
                }
            }
            Expr::Quot(num, den) => by_den.entry(den.clone()).or_default().push(num.clone()),
            Expr::Prod(items) => {
                // coeff * quot lifts the coeff into the numerator
                let mut den = None;
                let mut rest = Vec::new();
                for f in items {
                    if let Expr::Quot(a, b) = f.node() {
                        if den.is_none() {
                            den = Some(b.clone());
                            rest.push(a.clone());
                            continue;
                        }
                    }
                    rest.push(f.clone());
                }
                match den {
                    Some(d) => by_den.entry(d).or_default().push(norm_prod(rest)),
                    None => plain.push(t),
                }
            }
            _ => plain.push(t),
        }
    }
    for (den, nums) in by_den {
        let merged = norm_quot(norm_sum(nums), den);
        match merged.node() {
            Expr::Sum(items) => plain.extend(items.iter().cloned()),
            _ => plain.push(merged),
        }
    }

    // Collect like terms.
    let mut coeffs: BTreeMap<ScalarExpr, Coeff> = BTreeMap::new();
    let mut const_acc = Coeff::zero();
    for t in plain {
        let (c, core) = split_coeff(&t);
        if core.is_one_literal() {
            const_acc = const_acc.add(&c);
        } else {
            let entry = coeffs.entry(core).or_insert_with(Coeff::zero);
            *entry = entry.add(&c);
        }
    }
    let mut out: Vec<ScalarExpr> = Vec::new();
    if !const_acc.is_zero() {
        out.push(const_acc.to_expr());
    }
    for (core, c) in coeffs {
        if let Some(t) = term_from(c, core) {
            out.push(t);
        }
    }
    match out.len() {
        0 => ScalarExpr::int(0),
        1 => out.pop().unwrap(),
        _ => ScalarExpr::new_normal_unchecked(Expr::Sum(out)),
    }
}

/// Product of already-normalized factors.
fn norm_prod(factors: Vec<ScalarExpr>) -> ScalarExpr {
    if let Some(out) = distribute_piecewise(&factors, norm_prod) {
        return out;
    }
    // Flatten; lift quotients; split off the numeric coefficient.
    let mut coeff = Coeff::one();
    let mut nums: Vec<ScalarExpr> = Vec::new();
    let mut dens: Vec<ScalarExpr> = Vec::new();
    let mut stack = factors;
    stack.reverse();
    while let Some(f) = stack.pop() {
        match f.node() {
            Expr::Prod(items) => {
                for it in items.iter().rev() {
                    stack.push(it.clone());
                }
            }
            Expr::Const(c) => coeff = coeff.mul(&Coeff::from_const(c)),
            Expr::Quot(a, b) => {
                stack.push(a.clone());
                dens.push(b.clone());
            }
            _ => nums.push(f.clone()),
        }
    }
    if !dens.is_empty() {
        let num = norm_prod(
            std::iter::once(coeff.to_expr())
                .chain(nums)
                .collect::<Vec<_>>(),
        );
        return norm_quot(num, norm_prod(dens));
    }
    if coeff.is_zero() {
        return ScalarExpr::int(0);
    }

    // Distribute over sum factors (bounded).
    if nums.iter().any(|f| matches!(f.node(), Expr::Sum(_))) {
        let mut size = 1usize;
        for f in &nums {
            let k = match f.node() {
                Expr::Sum(items) => items.len(),
                _ => 1,
            };
            size = size.saturating_mul(k);
        }
        if size <= MAX_EXPANSION_TERMS {
            let mut expanded: Vec<Vec<ScalarExpr>> = vec![vec![coeff.to_expr()]];
            for f in &nums {
                let choices: Vec<ScalarExpr> = match f.node() {
                    Expr::Sum(items) => items.to_vec(),
                    _ => vec![f.clone()],
                };
                let mut next = Vec::with_capacity(expanded.len() * choices.len());
                for partial in &expanded {
                    for c in &choices {
                        let mut p = partial.clone();
                        p.push(c.clone());
                        next.push(p);
                    }
                }
                expanded = next;
            }
            return norm_sum(expanded.into_iter().map(norm_prod).collect());
        }
    }

    // Group equal bases into integer powers.
    let mut powers: BTreeMap<ScalarExpr, i64> = BTreeMap::new();
    for f in nums {
        let (base, k) = match f.node() {
            Expr::Pow(b, k) => (b.clone(), i64::from(*k)),
            _ => (f, 1),
        };
        *powers.entry(base).or_insert(0) += k;
    }
    let mut out: Vec<ScalarExpr> = Vec::new();
    let mut den: Vec<ScalarExpr> = Vec::new();
    for (base, k) in powers {
        if k == 0 {
            continue;
        }
        let target = if k > 0 { &mut out } else { &mut den };
        let mag = k.unsigned_abs() as i32;
        if mag == 1 {
            target.push(base);
        } else {
            target.push(norm_pow(base, mag));
        }
    }
    if !den.is_empty() {
        let num = norm_prod(
            std::iter::once(coeff.to_expr())
                .chain(out)
                .collect::<Vec<_>>(),
        );
        return norm_quot(num, norm_prod(den));
    }
    if out.is_empty() {
        return coeff.to_expr();
    }
    if coeff.is_one() && out.len() == 1 {
        return out.pop().unwrap();
    }
    let mut factors = Vec::new();
    if !coeff.is_one() {
        factors.push(coeff.to_expr());
    }
    factors.extend(out);
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        ScalarExpr::new_normal_unchecked(Expr::Prod(factors))
    }
}

/// Quotient of already-normalized parts.
fn norm_quot(num: ScalarExpr, den: ScalarExpr) -> ScalarExpr {
    if num.is_zero_literal() {
        return ScalarExpr::int(0);
    }
    // Constant denominators fold into the numerator.
    if let Expr::Const(c) = den.node() {
        if !c.is_zero() {
            return norm_prod(vec![Coeff::from_const(c).recip().to_expr(), num]);
        }
        // Division by literal zero: keep the node; evaluation reports it.
        return ScalarExpr::new_normal_unchecked(Expr::Quot(num, den));
    }
    // Flatten nested quotients: (a/b)/(c/d) = (a*d)/(b*c).
    let (mut n_num, mut n_den) = (vec![], vec![]);
    match num.node() {
        Expr::Quot(a, b) => {
            n_num.push(a.clone());
            n_den.push(b.clone());
        }
        _ => n_num.push(num.clone()),
    }
    match den.node() {
        Expr::Quot(a, b) => {
            n_den.push(a.clone());
            n_num.push(b.clone());
        }
        _ => n_den.push(den.clone()),
    }
    if n_num.len() + n_den.len() > 2 {
        return norm_quot(norm_prod(n_num), norm_prod(n_den));
    }

    // Cancel shared factors (syntactic, after normalization).
    let (nc, ncore) = split_coeff(&num);
    let (dc, dcore) = split_coeff(&den);
    let mut nf = factor_multiset(&ncore);
    let mut df = factor_multiset(&dcore);
    let mut cancelled = false;
    for (base, dk) in df.iter_mut() {
        if let Some(nk) = nf.get_mut(base) {
            let common = (*nk).min(*dk);
            if common > 0 {
                *nk -= common;
                *dk -= common;
                cancelled = true;
            }
        }
    }
    let coeff = nc.mul(&dc.recip());
    let num2 = rebuild_factors(Coeff::one(), &nf);
    let den2 = rebuild_factors(Coeff::one(), &df);
    if den2.is_one_literal() {
        return norm_prod(vec![coeff.to_expr(), num2]);
    }
    if cancelled {
        // Re-enter with the reduced parts.
        return norm_quot(norm_prod(vec![coeff.to_expr(), num2]), den2);
    }
    // Canonical sign: negative rational coefficients live in the numerator.
    let num_final = norm_prod(vec![coeff.to_expr(), num2]);
    ScalarExpr::new_normal_unchecked(Expr::Quot(num_final, den2))
}

fn factor_multiset(e: &ScalarExpr) -> BTreeMap<ScalarExpr, u32> {
    let mut map = BTreeMap::new();
    let mut add = |f: &ScalarExpr| match f.node() {
        Expr::Pow(b, k) if *k > 0 => {
            *map.entry(b.clone()).or_insert(0) += *k as u32;
        }
        _ => {
            *map.entry(f.clone()).or_insert(0) += 1;
        }
    };
    match e.node() {
        Expr::Prod(items) => items.iter().for_each(&mut add),
        Expr::Const(c) if c.is_one() => {}
        _ => add(e),
    }
    map
}

fn rebuild_factors(coeff: Coeff, factors: &BTreeMap<ScalarExpr, u32>) -> ScalarExpr {
    let mut fs = Vec::new();
    if !coeff.is_one() {
        fs.push(coeff.to_expr());
    }
    for (base, k) in factors {
        match k {
            0 => {}
            1 => fs.push(base.clone()),
            _ => fs.push(norm_pow(base.clone(), *k as i32)),
        }
    }
    match fs.len() {
        0 => ScalarExpr::int(1),
        1 => fs.pop().unwrap(),
        _ => norm_prod(fs),
    }
}

/// Integer power of an already-normalized base.
fn norm_pow(base: ScalarExpr, k: i32) -> ScalarExpr {
    if k == 0 {
        return ScalarExpr::int(1);
    }
    if k == 1 {
        return base;
    }
    if k < 0 {
        return norm_quot(ScalarExpr::int(1), norm_pow(base, -k));
    }
    match base.node() {
        Expr::Const(Const::Rational(r)) => ScalarExpr::rational(rational_powi(r, k)),
        Expr::Const(Const::Irrational(v)) => ScalarExpr::irrational(v.0.powi(k)),
        Expr::Pow(b, j) => norm_pow(b.clone(), j.saturating_mul(k)),
        Expr::Prod(items) => norm_prod(items.iter().map(|f| norm_pow(f.clone(), k)).collect()),
        Expr::Quot(a, b) => norm_quot(norm_pow(a.clone(), k), norm_pow(b.clone(), k)),
        Expr::Abs(e) if k % 2 == 0 => norm_pow(e.clone(), k),
        Expr::Root(e, n) if k as u32 % *n == 0 => {
            let q = k as u32 / n;
            norm_pow(e.clone(), q as i32)
        }
        Expr::Sum(items) => {
            let mut size = 1usize;
            for _ in 0..k {
                size = size.saturating_mul(items.len());
            }
            if size <= MAX_EXPANSION_TERMS {
                norm_prod(vec![base.clone(); k as usize])
            } else {
                ScalarExpr::new_normal_unchecked(Expr::Pow(base, k))
            }
        }
        _ => ScalarExpr::new_normal_unchecked(Expr::Pow(base, k)),
    }
}

fn norm_root(arg: ScalarExpr, n: u32) -> ScalarExpr {
    if n == 1 {
        return arg;
    }
    match arg.node() {
        Expr::Const(Const::Rational(r)) if !r.is_negative() => {
            match super::rational_nth_root(r, n) {
                Some(v) => ScalarExpr::rational(v),
                None => ScalarExpr::new_normal_unchecked(Expr::Root(arg, n)),
            }
        }
        Expr::Const(Const::Irrational(v)) if v.0 >= 0.0 => {
            ScalarExpr::irrational(v.0.powf(1.0 / f64::from(n)))
        }
        Expr::Root(e, m) => norm_root(e.clone(), n * m),
        Expr::Pow(e, k) if *k > 0 && *k as u32 % n == 0 => {
            let q = (*k as u32 / n) as i32;
            if q % 2 == 0 {
                norm_pow(e.clone(), q)
            } else if n % 2 == 0 {
                norm_pow(norm_abs(e.clone(), &Guard::default()), q)
            } else {
                norm_pow(e.clone(), q)
            }
        }
        _ => ScalarExpr::new_normal_unchecked(Expr::Root(arg, n)),
    }
}

fn norm_abs(arg: ScalarExpr, guard: &Guard) -> ScalarExpr {
    if let Some(op) = guard.sign_of(&arg) {
        match op {
            SignOp::Gt | SignOp::Ge => return arg,
            SignOp::Lt | SignOp::Le => return norm_prod(vec![ScalarExpr::int(-1), arg]),
            SignOp::Eq => return ScalarExpr::int(0),
            SignOp::Ne => {}
        }
    }
    match arg.node() {
        Expr::Const(Const::Rational(r)) => ScalarExpr::rational(r.abs()),
        Expr::Const(Const::Irrational(v)) => ScalarExpr::irrational(v.0.abs()),
        Expr::Abs(e) => norm_abs(e.clone(), guard),
        Expr::Root(..) => arg,
        Expr::Pow(e, k) if k % 2 == 0 => norm_pow(e.clone(), *k),
        Expr::Pow(e, k) => norm_pow(norm_abs(e.clone(), guard), *k),
        Expr::Quot(a, b) => norm_quot(
            norm_abs(a.clone(), guard),
            norm_abs(b.clone(), guard),
        ),
        _ => {
            // Strip the numeric sign and pick the lexicographically smaller
            // of e and -e so that |e| and |-e| agree.
            let (c, core) = split_coeff(&arg);
            let abs_c = match c {
                Coeff::Rat(r) => Coeff::Rat(r.abs()),
                Coeff::Irr(v) => Coeff::Irr(v.abs()),
            };
            let neg_core = norm_prod(vec![ScalarExpr::int(-1), core.clone()]);
            let canon = if neg_core < core { neg_core } else { core };
            let inner = ScalarExpr::new_normal_unchecked(Expr::Abs(canon));
            norm_prod(vec![abs_c.to_expr(), inner])
        }
    }
}

fn norm_minmax(a: ScalarExpr, b: ScalarExpr, is_min: bool, guard: &Guard) -> ScalarExpr {
    if a == b {
        return a;
    }
    if let (Expr::Const(ca), Expr::Const(cb)) = (a.node(), b.node()) {
        let (va, vb) = (ca.to_f64(), cb.to_f64());
        let pick_a = if is_min { va <= vb } else { va >= vb };
        return if pick_a { a } else { b };
    }
    let diff = norm_sum(vec![a.clone(), norm_prod(vec![ScalarExpr::int(-1), b.clone()])]);
    if let Some(op) = guard.sign_of(&diff) {
        match (op, is_min) {
            (SignOp::Le | SignOp::Lt | SignOp::Eq, true) => return a,
            (SignOp::Ge | SignOp::Gt, true) => return b,
            (SignOp::Ge | SignOp::Gt | SignOp::Eq, false) => return a,
            (SignOp::Le | SignOp::Lt, false) => return b,
            _ => {}
        }
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if is_min {
        ScalarExpr::new_normal_unchecked(Expr::Min(lo, hi))
    } else {
        ScalarExpr::new_normal_unchecked(Expr::Max(lo, hi))
    }
}

fn norm_piecewise(branches: &[(SemiCondition, ScalarExpr)], guard: &Guard) -> ScalarExpr {
    let mut out: Vec<(SemiCondition, ScalarExpr)> = Vec::new();
    for (cond, e) in branches {
        let cond = resolve_cond(&cond.normalized(), guard);
        if cond == SemiCondition::False {
            continue;
        }
        let branch_guard = guard.extended(&cond);
        let ne = norm(e, &branch_guard);
        let stop = cond == SemiCondition::True;
        match out.last_mut() {
            Some((prev_cond, prev_e)) if *prev_e == ne => {
                *prev_cond = SemiCondition::or(vec![prev_cond.clone(), cond]);
            }
            _ => out.push((cond, ne)),
        }
        if stop {
            break;
        }
    }
    // A single surviving branch means every branch agreed (or only one
    // matched): drop the piecewise wrapper. Like `f/f -> 1`, this may
    // enlarge the definedness domain.
    if out.len() == 1 {
        return out.pop_value();
    }
    ScalarExpr::new_normal_unchecked(Expr::Piecewise(out))
}

trait PopValue {
    fn pop_value(self) -> ScalarExpr;
}
impl PopValue for Vec<(SemiCondition, ScalarExpr)> {
    fn pop_value(mut self) -> ScalarExpr {
        self.pop().unwrap().1
    }
}

/// Replace atoms decided by the guard.
fn resolve_cond(cond: &SemiCondition, guard: &Guard) -> SemiCondition {
    if guard.is_empty() {
        return cond.clone();
    }
    match cond {
        SemiCondition::True | SemiCondition::False => cond.clone(),
        SemiCondition::Atom(op, e) => {
            let ne = norm(e, &Guard::default());
            if let Some(known) = guard.sign_of(&ne) {
                if let Some(v) = implies(known, *op) {
                    return if v {
                        SemiCondition::True
                    } else {
                        SemiCondition::False
                    };
                }
            }
            SemiCondition::Atom(*op, ne)
        }
        SemiCondition::And(items) => {
            SemiCondition::and(items.iter().map(|c| resolve_cond(c, guard)).collect())
        }
        SemiCondition::Or(items) => {
            SemiCondition::or(items.iter().map(|c| resolve_cond(c, guard)).collect())
        }
    }
}

/// Log of a normalized, log-free argument. Splits over products, quotients
/// and powers when the certificate grants positivity of each base factor.
fn norm_log(arg: ScalarExpr, cert: SemiCondition) -> ScalarExpr {
    if arg.is_one_literal() {
        return ScalarExpr::int(0);
    }
    if let Expr::Const(Const::Irrational(v)) = arg.node() {
        if v.0 > 0.0 {
            return ScalarExpr::irrational(v.0.ln());
        }
    }
    let certified = |f: &ScalarExpr| -> bool {
        if let Expr::Const(Const::Rational(r)) = f.node() {
            return r.is_positive();
        }
        cert_grants_positive(&cert, f)
    };
    let split: Option<Vec<(ScalarExpr, i32)>> = match arg.node() {
        Expr::Prod(items) => {
            let mut parts = Vec::new();
            for f in items {
                let (b, k) = match f.node() {
                    Expr::Pow(b, k) => (b.clone(), *k),
                    _ => (f.clone(), 1),
                };
                parts.push((b, k));
            }
            Some(parts)
        }
        Expr::Quot(a, b) => {
            let mut parts = Vec::new();
            for f in flatten_prod(a) {
                parts.push(pow_split(&f, 1));
            }
            for f in flatten_prod(b) {
                parts.push(pow_split(&f, -1));
            }
            Some(parts)
        }
        Expr::Pow(b, k) => Some(vec![(b.clone(), *k)]),
        _ => None,
    };
    if let Some(parts) = split {
        if parts.len() > 1 || parts.iter().any(|(_, k)| *k != 1) {
            if parts.iter().all(|(b, _)| certified(b)) {
                let terms: Vec<ScalarExpr> = parts
                    .into_iter()
                    .map(|(b, k)| {
                        let lg = norm_log(b, cert.clone());
                        norm_prod(vec![ScalarExpr::int(i64::from(k)), lg])
                    })
                    .collect();
                return norm_sum(terms);
            }
        }
    }
    ScalarExpr::new_normal_unchecked(Expr::Log(arg, cert))
}

fn flatten_prod(e: &ScalarExpr) -> Vec<ScalarExpr> {
    match e.node() {
        Expr::Prod(items) => items.to_vec(),
        _ => vec![e.clone()],
    }
}

fn pow_split(e: &ScalarExpr, sign: i32) -> (ScalarExpr, i32) {
    match e.node() {
        Expr::Pow(b, k) => (b.clone(), k * sign),
        _ => (e.clone(), sign),
    }
}

fn cert_grants_positive(cert: &SemiCondition, f: &ScalarExpr) -> bool {
    match cert.conjunction_atoms() {
        Some(atoms) => atoms.iter().any(|(op, e)| {
            *op == SignOp::Gt && norm(e, &Guard::default()) == *f
        }),
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    fn x(i: usize) -> ScalarExpr {
        ScalarExpr::var(i)
    }

    #[test]
    fn like_terms_collect() {
        let e = x(0).add(&x(0));
        let n = e.normalized();
        assert_eq!(n, ScalarExpr::int(2).mul(&x(0)).normalized());
        assert_eq!(n.to_string(), "(2*x1)");
    }

    #[test]
    fn binomial_square_expands() {
        let lhs = x(0).add(&ScalarExpr::int(1)).pow(2);
        let rhs = x(0)
            .pow(2)
            .add(&ScalarExpr::int(2).mul(&x(0)))
            .add(&ScalarExpr::int(1));
        assert_eq!(lhs.normalized(), rhs.normalized());
    }

    #[test]
    fn quotient_of_equal_parts_cancels() {
        let r2 = x(0).pow(2).add(&x(1).pow(2));
        let e = r2.div(&r2);
        assert!(e.normalized().is_one_literal());
    }

    #[test]
    fn log_of_certified_product_splits() {
        let cert = SemiCondition::and(vec![
            SemiCondition::atom(SignOp::Gt, x(0)),
            SemiCondition::atom(SignOp::Gt, x(1)),
        ]);
        let e = ScalarExpr::log_certified(&x(0).mul(&x(1)), cert.clone()).unwrap();
        let want = ScalarExpr::log_certified(&x(0), cert.clone())
            .unwrap()
            .add(&ScalarExpr::log_certified(&x(1), cert).unwrap());
        assert_eq!(e.normalized(), want.normalized());
    }

    #[test]
    fn log_of_uncertified_product_stays() {
        let e = ScalarExpr::log_certified(
            &x(0).mul(&x(1)),
            SemiCondition::atom(SignOp::Gt, x(0).mul(&x(1))),
        )
        .unwrap();
        assert!(matches!(e.normalized().node(), Expr::Log(..)));
    }

    #[test]
    fn normalize_is_idempotent_on_samples() {
        let r2 = x(0).pow(2).add(&x(1).pow(2));
        let angular = x(0).div(&r2).sub(&x(1).neg().div(&r2));
        let cases = vec![
            x(0).add(&x(0)),
            x(0).max_with(&ScalarExpr::int(0)).pow(2),
            angular,
            x(0).abs().mul(&x(0).abs()),
            ScalarExpr::int(1).div(&x(0)).add(&ScalarExpr::int(2).div(&x(0))),
        ];
        for e in cases {
            let n1 = e.normalized();
            let n2 = n1.normalized();
            assert_eq!(n1, n2, "normalize not idempotent on {}", e);
        }
    }

    #[test]
    fn same_denominator_sums_merge() {
        let e = ScalarExpr::int(1)
            .div(&x(0))
            .add(&ScalarExpr::int(2).div(&x(0)));
        assert_eq!(e.normalized(), ScalarExpr::int(3).div(&x(0)).normalized());
    }

    #[test]
    fn abs_of_even_power_drops() {
        let e = x(0).pow(2).abs();
        assert_eq!(e.normalized(), x(0).pow(2).normalized());
    }

    #[test]
    fn guard_resolves_max_inside_piecewise() {
        // {x1 > 0 -> max(0, x1); x1 < 0 -> 7} normalizes the first branch to x1.
        let e = ScalarExpr::piecewise(vec![
            (
                SemiCondition::atom(SignOp::Gt, x(0)),
                ScalarExpr::int(0).max_with(&x(0)),
            ),
            (SemiCondition::atom(SignOp::Lt, x(0)), ScalarExpr::int(7)),
        ]);
        let n = e.normalized();
        match n.node() {
            Expr::Piecewise(branches) => {
                assert_eq!(branches[0].1, x(0));
            }
            other => panic!("expected piecewise, got {:?}", other),
        }
    }
}
