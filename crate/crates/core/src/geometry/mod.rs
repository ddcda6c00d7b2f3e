//! Ribbons, regions, and their intersection calculus.
//!
//! A ribbon in dimension n is an open set `{(x', x_n) : x' in base,
//! a(x') < x_n < b(x')}` over a recursively presented open base in
//! dimension n-1; a region is a finite union of ribbons (dimension 0 is the
//! singleton point). Ribbons are closed under intersection with bounds
//! `max(a1, a2) < min(b1, b2)`, which is what the cohomology engine's
//! induction consumes.
//!
//! Emptiness of intersections is decided heuristically by seeded sampling;
//! a symbolically nonempty but sample-missed piece would be kept, which is
//! sound for membership but can misreport ranks if the sampling budget is
//! inadequate. Callers that care (the engine) cross-check Betti numbers
//! against the cubical oracle.

mod homotopy;
mod json;

pub use homotopy::{
    contraction_homotopy, default_section, is_cell_tower, product_with_line, product_with_time,
    ribbon_base_homotopy, sigma_poly, time_interval_condition, Homotopy, HomotopyError,
    TIME_INTERVAL,
};
pub use json::{region_from_json, region_to_json};

use crate::expr::{DomainError, ScalarExpr, SemiCondition, SignOp};
use crate::sample::{Sampler, SamplingError};

/// One fiber bound of a ribbon.
#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    NegInf,
    Finite(ScalarExpr),
    PosInf,
}

impl Bound {
    pub fn as_expr(&self) -> Option<&ScalarExpr> {
        match self {
            Bound::Finite(e) => Some(e),
            _ => None,
        }
    }

    fn eval(&self, base_point: &[f64]) -> Result<Option<f64>, DomainError> {
        match self {
            Bound::NegInf | Bound::PosInf => Ok(None),
            Bound::Finite(e) => e.eval(base_point).map(Some),
        }
    }
}

/// Open set `{x' in base : constraint(x')} x (lower, upper)` fibered over
/// the last coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Ribbon {
    dim: usize,
    base: Region,
    lower: Bound,
    upper: Bound,
    /// Extra membership condition on the full ribbon coordinates
    /// (intersections produce base-variable conditions; any variable up to
    /// the ambient dimension is allowed).
    constraint: Option<SemiCondition>,
    /// Declared smoothness order of the bounds, when the caller knows it.
    pub declared_regularity: Option<u32>,
}

impl Ribbon {
    pub fn new(base: Region, lower: Bound, upper: Bound) -> Ribbon {
        let dim = base.dim() + 1;
        Ribbon {
            dim,
            base,
            lower,
            upper,
            constraint: None,
            declared_regularity: None,
        }
    }

    pub fn with_constraint(mut self, c: SemiCondition) -> Ribbon {
        self.constraint = match self.constraint.take() {
            Some(old) => Some(SemiCondition::and(vec![old, c])),
            None => Some(c),
        };
        if self.constraint == Some(SemiCondition::True) {
            self.constraint = None;
        }
        self
    }

    /// Interval ribbon over the 0-dimensional point.
    pub fn interval(lo: f64, hi: f64) -> Ribbon {
        fn lit(v: f64) -> ScalarExpr {
            // Interval fixtures use dyadic-friendly literals.
            ScalarExpr::rational(num::BigRational::from_float(v).expect("finite literal"))
        }
        Ribbon::new(Region::point(), Bound::Finite(lit(lo)), Bound::Finite(lit(hi)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> &Region {
        &self.base
    }

    pub fn lower(&self) -> &Bound {
        &self.lower
    }

    pub fn upper(&self) -> &Bound {
        &self.upper
    }

    pub fn constraint(&self) -> Option<&SemiCondition> {
        self.constraint.as_ref()
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, DomainError> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        let (base_pt, xn) = (&x[..self.dim - 1], x[self.dim - 1]);
        if !self.base.contains(base_pt)? {
            return Ok(false);
        }
        if let Some(c) = &self.constraint {
            if !c.holds_at(x)? {
                return Ok(false);
            }
        }
        if let Some(a) = self.lower.eval(base_pt)? {
            if xn <= a {
                return Ok(false);
            }
        }
        if let Some(b) = self.upper.eval(base_pt)? {
            if xn >= b {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// One sample attempt; `None` when the attempt left the set.
    fn try_sample(&self, s: &mut Sampler) -> Option<Vec<f64>> {
        let mut pt = self.base.try_sample(s)?;
        let a = self.lower.eval(&pt).ok()?;
        let b = self.upper.eval(&pt).ok()?;
        if let (Some(a), Some(b)) = (a, b) {
            if a >= b {
                return None;
            }
        }
        pt.push(s.in_bounds(a, b));
        if let Some(c) = &self.constraint {
            if !c.holds_at(&pt).ok()? {
                return None;
            }
        }
        Some(pt)
    }

    /// Membership condition as a sign condition on all `dim` coordinates.
    /// Total only where the bound expressions are; evaluation reports
    /// domain errors otherwise.
    pub fn membership_condition(&self) -> SemiCondition {
        let mut parts = vec![self.base.membership_condition()];
        if let Some(c) = &self.constraint {
            parts.push(c.clone());
        }
        let xn = ScalarExpr::var(self.dim - 1);
        if let Bound::Finite(a) = &self.lower {
            parts.push(SemiCondition::atom(SignOp::Gt, xn.sub(a)));
        }
        if let Bound::Finite(b) = &self.upper {
            parts.push(SemiCondition::atom(SignOp::Gt, b.sub(&xn)));
        }
        SemiCondition::and(parts)
    }

    pub fn has_infinite_bounds(&self) -> bool {
        !matches!(self.lower, Bound::Finite(_))
            || !matches!(self.upper, Bound::Finite(_))
            || self.base.has_infinite_bounds()
    }

    /// Sampled nonemptiness: the `a < b` invariant on at least one point.
    pub fn validate_nonempty(&self, s: &mut Sampler, budget: usize) -> bool {
        (0..budget).any(|_| self.try_sample(s).is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum RegionKind {
    /// The singleton of dimension 0.
    Point,
    Ribbons(Vec<Ribbon>),
}

/// Finite union of ribbons; the geometry the engine inducts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    dim: usize,
    kind: RegionKind,
}

impl Region {
    pub fn point() -> Region {
        Region {
            dim: 0,
            kind: RegionKind::Point,
        }
    }

    pub fn empty(dim: usize) -> Region {
        Region {
            dim,
            kind: RegionKind::Ribbons(Vec::new()),
        }
    }

    pub fn from_ribbons(dim: usize, ribbons: Vec<Ribbon>) -> Region {
        for r in &ribbons {
            assert_eq!(r.dim(), dim, "ribbon dimension mismatch");
        }
        Region {
            dim,
            kind: RegionKind::Ribbons(ribbons),
        }
    }

    pub fn single(ribbon: Ribbon) -> Region {
        Region::from_ribbons(ribbon.dim(), vec![ribbon])
    }

    /// All of R^n, as a tower of doubly unbounded ribbons.
    pub fn full_space(dim: usize) -> Region {
        if dim == 0 {
            return Region::point();
        }
        Region::single(Ribbon::new(
            Region::full_space(dim - 1),
            Bound::NegInf,
            Bound::PosInf,
        ))
    }

    /// Open interval as a 1-dimensional region.
    pub fn interval(lo: f64, hi: f64) -> Region {
        Region::single(Ribbon::interval(lo, hi))
    }

    /// Open box, as the ribbon tower over nested intervals.
    pub fn open_box(bounds: &[(f64, f64)]) -> Region {
        let mut region = Region::point();
        for (lo, hi) in bounds {
            fn lit(v: f64) -> ScalarExpr {
                ScalarExpr::rational(num::BigRational::from_float(v).expect("finite literal"))
            }
            region = Region::single(Ribbon::new(
                region,
                Bound::Finite(lit(*lo)),
                Bound::Finite(lit(*hi)),
            ));
        }
        region
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_point(&self) -> bool {
        matches!(self.kind, RegionKind::Point)
    }

    pub fn ribbons(&self) -> &[Ribbon] {
        match &self.kind {
            RegionKind::Point => &[],
            RegionKind::Ribbons(rs) => rs,
        }
    }

    pub fn is_empty_presentation(&self) -> bool {
        matches!(&self.kind, RegionKind::Ribbons(rs) if rs.is_empty())
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, DomainError> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        match &self.kind {
            RegionKind::Point => Ok(true),
            RegionKind::Ribbons(rs) => {
                // A point is in the union when any ribbon admits it; a
                // domain error in one ribbon's bounds does not veto another
                // ribbon's verdict, but is reported when nothing matched.
                let mut first_err = None;
                for r in rs {
                    match r.contains(x) {
                        Ok(true) => return Ok(true),
                        Ok(false) => {}
                        Err(e) => first_err = first_err.or(Some(e)),
                    }
                }
                match first_err {
                    Some(e) => Err(e),
                    None => Ok(false),
                }
            }
        }
    }

    pub fn membership_condition(&self) -> SemiCondition {
        match &self.kind {
            RegionKind::Point => SemiCondition::True,
            RegionKind::Ribbons(rs) => {
                SemiCondition::or(rs.iter().map(|r| r.membership_condition()).collect())
            }
        }
    }

    pub fn has_infinite_bounds(&self) -> bool {
        self.ribbons().iter().any(|r| r.has_infinite_bounds())
    }

    fn try_sample(&self, s: &mut Sampler) -> Option<Vec<f64>> {
        match &self.kind {
            RegionKind::Point => Some(Vec::new()),
            RegionKind::Ribbons(rs) => {
                if rs.is_empty() {
                    return None;
                }
                let idx = s.index(rs.len());
                rs[idx].try_sample(s)
            }
        }
    }

    /// One point of the region, within an attempt budget.
    pub fn sample_point(&self, s: &mut Sampler, budget: usize) -> Result<Vec<f64>, SamplingError> {
        for _ in 0..budget {
            if let Some(p) = self.try_sample(s) {
                // Membership is authoritative; a ribbon sample is re-checked
                // so overlap quirks cannot leak outside points.
                if self.contains(&p).unwrap_or(false) {
                    return Ok(p);
                }
            }
        }
        Err(SamplingError {
            context: format!("sampling a point of a {}-dimensional region", self.dim),
            attempts: budget,
        })
    }

    /// Up to `count` points (fewer only if the budget runs dry).
    pub fn sample_points(
        &self,
        s: &mut Sampler,
        count: usize,
        budget_per_point: usize,
    ) -> Result<Vec<Vec<f64>>, SamplingError> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.sample_point(s, budget_per_point)?);
        }
        Ok(out)
    }

    /// Sampled subset check: every sampled point of `self` lies in `other`.
    pub fn subset_sampled(&self, other: &Region, s: &mut Sampler, samples: usize) -> bool {
        if self.is_empty_presentation() {
            return true;
        }
        let pts = match self.sample_points(s, samples, 64) {
            Ok(p) => p,
            Err(_) => return self.is_empty_presentation(),
        };
        pts.iter()
            .all(|p| other.contains(p).unwrap_or(false))
    }

    /// Axis-aligned box around sampled points, padded by `margin`.
    pub fn sampled_bbox(
        &self,
        s: &mut Sampler,
        samples: usize,
        margin: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), SamplingError> {
        let pts = self.sample_points(s, samples, 64)?;
        let n = self.dim;
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for p in &pts {
            for i in 0..n {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        for i in 0..n {
            lo[i] -= margin;
            hi[i] += margin;
        }
        Ok((lo, hi))
    }

    /// The region cut down by an extra membership condition, attached to
    /// every ribbon.
    pub fn constrained(&self, cond: &SemiCondition) -> Region {
        if *cond == SemiCondition::True {
            return self.clone();
        }
        match &self.kind {
            RegionKind::Point => self.clone(),
            RegionKind::Ribbons(rs) => Region::from_ribbons(
                self.dim,
                rs.iter()
                    .map(|r| r.clone().with_constraint(cond.clone()))
                    .collect(),
            ),
        }
    }

    /// First `count - 1` ribbons and the last one, for the engine's
    /// left-associative induction.
    pub fn split_last(&self) -> Option<(Region, Ribbon)> {
        let rs = self.ribbons();
        let last = rs.last()?.clone();
        Some((
            Region::from_ribbons(self.dim, rs[..rs.len() - 1].to_vec()),
            last,
        ))
    }
}

fn bound_max(a: &Bound, b: &Bound) -> Bound {
    match (a, b) {
        (Bound::NegInf, x) | (x, Bound::NegInf) => x.clone(),
        (Bound::PosInf, _) | (_, Bound::PosInf) => Bound::PosInf,
        (Bound::Finite(u), Bound::Finite(v)) => {
            if u == v {
                Bound::Finite(u.clone())
            } else {
                Bound::Finite(u.max_with(v))
            }
        }
    }
}

fn bound_min(a: &Bound, b: &Bound) -> Bound {
    match (a, b) {
        (Bound::PosInf, x) | (x, Bound::PosInf) => x.clone(),
        (Bound::NegInf, _) | (_, Bound::NegInf) => Bound::NegInf,
        (Bound::Finite(u), Bound::Finite(v)) => {
            if u == v {
                Bound::Finite(u.clone())
            } else {
                Bound::Finite(u.min_with(v))
            }
        }
    }
}

/// Intersection of two ribbons: base intersection constrained by
/// `max(a1, a2) < min(b1, b2)`, with those as the new bounds. `None` when
/// sampling finds the candidate empty (heuristic; see module docs).
pub fn ribbon_intersect(v1: &Ribbon, v2: &Ribbon, s: &mut Sampler) -> Option<Ribbon> {
    assert_eq!(v1.dim(), v2.dim(), "ambient dimension mismatch");
    let base = region_intersect(v1.base(), v2.base(), s);
    if base.is_empty_presentation() && !base.is_point() {
        return None;
    }
    let lower = bound_max(&v1.lower, &v2.lower);
    let upper = bound_min(&v1.upper, &v2.upper);
    let mut constraint_parts = Vec::new();
    if let Some(c) = &v1.constraint {
        constraint_parts.push(c.clone());
    }
    if let Some(c) = &v2.constraint {
        constraint_parts.push(c.clone());
    }
    if let (Bound::Finite(a), Bound::Finite(b)) = (&lower, &upper) {
        constraint_parts.push(SemiCondition::atom(SignOp::Gt, b.sub(a)));
    }
    let mut out = Ribbon::new(base, lower, upper);
    if !constraint_parts.is_empty() {
        out = out.with_constraint(SemiCondition::and(constraint_parts));
    }
    out.declared_regularity = match (v1.declared_regularity, v2.declared_regularity) {
        (Some(p), Some(q)) => Some(p.min(q)),
        _ => None,
    };
    if out.validate_nonempty(s, 256) {
        Some(out)
    } else {
        None
    }
}

/// Pairwise ribbon intersections distributed over the unions; heuristically
/// empty pieces are dropped.
pub fn region_intersect(r1: &Region, r2: &Region, s: &mut Sampler) -> Region {
    assert_eq!(r1.dim(), r2.dim(), "ambient dimension mismatch");
    if r1.is_point() && r2.is_point() {
        return Region::point();
    }
    if r1.dim() == 0 {
        // point vs empty presentation
        return if r1.is_point() && r2.is_point() {
            Region::point()
        } else {
            Region::empty(0)
        };
    }
    let mut out = Vec::new();
    for a in r1.ribbons() {
        for b in r2.ribbons() {
            if let Some(v) = ribbon_intersect(a, b, s) {
                out.push(v);
            }
        }
    }
    Region::from_ribbons(r1.dim(), out)
}

/// Coordinatewise compression `x_i -> x_i / sqrt(1 + x_i^2)` onto the open
/// unit cube, returned with the image region and both directions as smooth
/// maps. Infinite ribbon bounds become the finite constants -1 / +1.
pub fn bounded_rescale(region: &Region) -> (Region, crate::forms::SmoothMap, crate::forms::SmoothMap) {
    let n = region.dim();
    let image = rescale_region(region);
    let fwd_components: Vec<ScalarExpr> = (0..n).map(|i| compress_expr(&ScalarExpr::var(i))).collect();
    let inv_components: Vec<ScalarExpr> = (0..n).map(|i| expand_expr(&ScalarExpr::var(i))).collect();
    let fwd = crate::forms::SmoothMap::new(n, n, fwd_components, region.clone());
    let inv = crate::forms::SmoothMap::new(n, n, inv_components, image.clone());
    (image, fwd, inv)
}

/// `u -> u / sqrt(1 + u^2)` applied to an expression.
pub fn compress_expr(u: &ScalarExpr) -> ScalarExpr {
    u.div(&ScalarExpr::int(1).add(&u.pow(2)).sqrt())
}

/// `v -> v / sqrt(1 - v^2)`, the inverse on (-1, 1).
pub fn expand_expr(v: &ScalarExpr) -> ScalarExpr {
    v.div(&ScalarExpr::int(1).sub(&v.pow(2)).sqrt())
}

fn rescale_region(region: &Region) -> Region {
    if region.is_point() {
        return Region::point();
    }
    let n = region.dim();
    let ribbons = region
        .ribbons()
        .iter()
        .map(|r| {
            let base = rescale_region(r.base());
            // Bound expressions compose with the inverse map of the base
            // coordinates, then compress the fiber value.
            let subs: Vec<ScalarExpr> = (0..n - 1)
                .map(|i| expand_expr(&ScalarExpr::var(i)))
                .collect();
            let map_bound = |b: &Bound, inf_value: i64| -> Bound {
                match b {
                    Bound::Finite(e) => {
                        let pulled = e
                            .substitute(&subs)
                            .expect("rescale substitution stays in grammar");
                        Bound::Finite(compress_expr(&pulled).normalized())
                    }
                    _ => Bound::Finite(ScalarExpr::int(inf_value)),
                }
            };
            let mut out = Ribbon::new(base, map_bound(&r.lower, -1), map_bound(&r.upper, 1));
            if let Some(c) = &r.constraint {
                let pulled = c
                    .substitute(&subs)
                    .expect("rescale substitution stays in grammar");
                out = out.with_constraint(pulled);
            }
            out.declared_regularity = r.declared_regularity;
            out
        })
        .collect();
    Region::from_ribbons(n, ribbons)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_membership_is_strict() {
        let sq = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        assert!(sq.contains(&[0.5, 0.5]).unwrap());
        assert!(!sq.contains(&[0.0, 0.5]).unwrap());
        assert!(!sq.contains(&[0.5, 1.0]).unwrap());
    }

    #[test]
    fn empty_region_contains_nothing() {
        let e = Region::empty(2);
        assert!(!e.contains(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn strip_intersection_matches_constants() {
        // {0 < y < 1 over (0,2)} meets {1/2 < y < 3/2 over (1,3)}
        // in the ribbon over (1,2) with bounds (1/2, 1).
        let mut s = Sampler::new(7);
        let v1 = Ribbon::new(
            Region::interval(0.0, 2.0),
            Bound::Finite(ScalarExpr::int(0)),
            Bound::Finite(ScalarExpr::int(1)),
        );
        let v2 = Ribbon::new(
            Region::interval(1.0, 3.0),
            Bound::Finite(ScalarExpr::frac(1, 2)),
            Bound::Finite(ScalarExpr::frac(3, 2)),
        );
        let v = ribbon_intersect(&v1, &v2, &mut s).expect("nonempty");
        assert!(v.contains(&[1.5, 0.75]).unwrap());
        assert!(!v.contains(&[0.5, 0.75]).unwrap());
        assert!(!v.contains(&[1.5, 1.25]).unwrap());
        assert_eq!(
            v.lower().as_expr().unwrap().normalized(),
            ScalarExpr::frac(1, 2).normalized()
        );
        assert_eq!(
            v.upper().as_expr().unwrap().normalized(),
            ScalarExpr::int(1).normalized()
        );
    }

    #[test]
    fn disjoint_strips_are_empty() {
        let mut s = Sampler::new(11);
        let v1 = Ribbon::new(
            Region::full_space(1),
            Bound::Finite(ScalarExpr::int(0)),
            Bound::Finite(ScalarExpr::int(1)),
        );
        let v2 = Ribbon::new(
            Region::full_space(1),
            Bound::Finite(ScalarExpr::int(2)),
            Bound::Finite(ScalarExpr::int(3)),
        );
        assert!(ribbon_intersect(&v1, &v2, &mut s).is_none());
    }

    #[test]
    fn self_intersection_is_identity_on_membership() {
        let mut s = Sampler::new(3);
        let v = Ribbon::new(
            Region::interval(0.0, 1.0),
            Bound::Finite(ScalarExpr::int(0)),
            Bound::Finite(ScalarExpr::var(0)),
        );
        let w = ribbon_intersect(&v, &v, &mut s).expect("nonempty");
        for _ in 0..200 {
            let p = vec![s.in_interval(-0.5, 1.5), s.in_interval(-0.5, 1.5)];
            assert_eq!(v.contains(&p).unwrap(), w.contains(&p).unwrap());
        }
    }

    #[test]
    fn full_line_rescales_to_unit_interval() {
        let (image, fwd, inv) = bounded_rescale(&Region::full_space(1));
        assert!(image.contains(&[0.0]).unwrap());
        assert!(image.contains(&[0.999]).unwrap());
        assert!(!image.contains(&[1.0]).unwrap());
        // round trip
        let mut s = Sampler::new(5);
        for _ in 0..100 {
            let x = s.in_bounds(None, None);
            let y = fwd.apply(&[x]).unwrap();
            let back = inv.apply(&y).unwrap();
            assert!((back[0] - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn bounded_interval_rescale_endpoint() {
        // (0,1) maps to (0, 1/sqrt(2)).
        let (image, fwd, _) = bounded_rescale(&Region::interval(0.0, 1.0));
        let y = fwd.apply(&[0.9999]).unwrap()[0];
        assert!(y < 1.0 / 2f64.sqrt());
        assert!(image.contains(&[0.5]).unwrap());
        assert!(!image.contains(&[1.0 / 2f64.sqrt()]).unwrap());
    }
}
