//! Explicit homotopies on cells and ribbons.
//!
//! Both constructions use the cubic ramp `sigma(t) = 3t^2 - 2t^3`, which
//! takes 0 at 0, 1 at 1, and stays inside [0, 1] on [-1/2, 3/2], so the
//! maps below are defined on the open time interval (-1/2, 3/2) and keep
//! their image inside the cell.

use crate::expr::{ScalarExpr, SemiCondition, SignOp};
use crate::forms::SmoothMap;
use crate::sample::Sampler;

use super::{Bound, Region, Ribbon};

/// Time interval used by every homotopy here.
pub const TIME_INTERVAL: (f64, f64) = (-0.5, 1.5);

/// `sigma(t) = 3t^2 - 2t^3` in the given variable.
pub fn sigma_poly(t: &ScalarExpr) -> ScalarExpr {
    ScalarExpr::int(3)
        .mul(&t.pow(2))
        .sub(&ScalarExpr::int(2).mul(&t.pow(3)))
}

/// A map on `X x (time interval)` with declared endpoint maps.
#[derive(Clone, Debug)]
pub struct Homotopy {
    /// Source dimension is `space_dim + 1` with time as the last variable.
    pub map: SmoothMap,
    pub start: SmoothMap,
    pub end: SmoothMap,
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum HomotopyError {
    #[error("contraction target lies outside the cell")]
    TargetOutside,
    #[error("section violates a < c < b at a sampled base point {point:?}")]
    SectionNotInterior { point: Vec<f64> },
    #[error("cell must be presented as a single-ribbon tower")]
    NotATower,
}

impl Homotopy {
    /// Map at a fixed time, as a smooth map on the space factor.
    pub fn at_time(&self, t: f64) -> SmoothMap {
        let n = self.map.source_dim() - 1;
        let t_expr = ScalarExpr::rational(
            num::BigRational::from_float(t).expect("finite time"),
        );
        let components = self
            .map
            .components()
            .iter()
            .map(|c| {
                c.substitute_var(n, &t_expr)
                    .expect("time substitution stays in grammar")
                    .normalized()
            })
            .collect();
        SmoothMap::new(n, self.map.target_dim(), components, self.start.source().clone())
    }
}

/// Straight-line contraction of a box-like cell onto an interior target:
/// `h(x, t) = (1 - sigma(t)) x + sigma(t) target`.
pub fn contraction_homotopy(
    cell: &Region,
    target: &[ScalarExpr],
) -> Result<Homotopy, HomotopyError> {
    let n = cell.dim();
    assert_eq!(target.len(), n, "target dimension mismatch");
    let target_pt: Vec<f64> = target
        .iter()
        .map(|e| e.eval(&[]).map_err(|_| HomotopyError::TargetOutside))
        .collect::<Result<_, _>>()?;
    if !cell.contains(&target_pt).unwrap_or(false) {
        return Err(HomotopyError::TargetOutside);
    }
    let t = ScalarExpr::var(n);
    let s = sigma_poly(&t);
    let one_minus = ScalarExpr::int(1).sub(&s);
    let components: Vec<ScalarExpr> = (0..n)
        .map(|i| {
            one_minus
                .mul(&ScalarExpr::var(i))
                .add(&s.mul(&target[i]))
                .normalized()
        })
        .collect();
    let source = product_with_time(cell);
    let map = SmoothMap::new(n + 1, n, components, source);
    let start = SmoothMap::identity(cell.clone());
    let end = SmoothMap::constant(cell.clone(), target.to_vec());
    Ok(Homotopy {
        map,
        start,
        end,
        interval: TIME_INTERVAL,
    })
}

/// Default interior section of a ribbon: midpoint between finite bounds,
/// unit inset from a single finite bound, zero when both are infinite.
pub fn default_section(ribbon: &Ribbon) -> ScalarExpr {
    match (ribbon.lower(), ribbon.upper()) {
        (Bound::Finite(a), Bound::Finite(b)) => {
            a.add(b).mul(&ScalarExpr::frac(1, 2)).normalized()
        }
        (Bound::Finite(a), _) => a.add(&ScalarExpr::int(1)).normalized(),
        (_, Bound::Finite(b)) => b.sub(&ScalarExpr::int(1)).normalized(),
        _ => ScalarExpr::int(0),
    }
}

/// Projection of a ribbon onto its base, the section `x' -> (x', c(x'))`,
/// and the fiberwise homotopy from the identity to section-after-projection.
pub fn ribbon_base_homotopy(
    ribbon: &Ribbon,
    section: Option<ScalarExpr>,
    sampler: &mut Sampler,
) -> Result<(SmoothMap, SmoothMap, Homotopy), HomotopyError> {
    let n = ribbon.dim();
    let c = section.unwrap_or_else(|| default_section(ribbon));

    // Sampled a < c < b interiority.
    let region = Region::single(ribbon.clone());
    if let Ok(points) = region.sample_points(sampler, 32, 64) {
        for p in points {
            let base_pt = &p[..n - 1];
            let cv = c.eval(base_pt).map_err(|_| HomotopyError::SectionNotInterior {
                point: base_pt.to_vec(),
            })?;
            let lo_ok = match ribbon.lower().as_expr() {
                Some(a) => a.eval(base_pt).map(|av| av < cv).unwrap_or(false),
                None => true,
            };
            let hi_ok = match ribbon.upper().as_expr() {
                Some(b) => b.eval(base_pt).map(|bv| cv < bv).unwrap_or(false),
                None => true,
            };
            if !lo_ok || !hi_ok {
                return Err(HomotopyError::SectionNotInterior {
                    point: base_pt.to_vec(),
                });
            }
        }
    }

    let base = ribbon.base().clone();
    let projection = SmoothMap::new(
        n,
        n - 1,
        (0..n - 1).map(ScalarExpr::var).collect(),
        region.clone(),
    );
    let mut section_components: Vec<ScalarExpr> = (0..n - 1).map(ScalarExpr::var).collect();
    section_components.push(c.clone());
    let section_map = SmoothMap::new(n - 1, n, section_components, base);

    // h(x', x_n, t) = (x', (1 - sigma(t)) x_n + sigma(t) c(x')).
    let t = ScalarExpr::var(n);
    let s = sigma_poly(&t);
    let mut components: Vec<ScalarExpr> = (0..n - 1).map(ScalarExpr::var).collect();
    components.push(
        ScalarExpr::int(1)
            .sub(&s)
            .mul(&ScalarExpr::var(n - 1))
            .add(&s.mul(&c))
            .normalized(),
    );
    let map = SmoothMap::new(n + 1, n, components, product_with_time(&region));
    let start = SmoothMap::identity(region.clone());
    let end = section_map.compose(&projection).expect("dimensions match");
    Ok((
        projection,
        section_map,
        Homotopy {
            map,
            start,
            end,
            interval: TIME_INTERVAL,
        },
    ))
}

/// `X x (time interval)` as a region (time is the last coordinate).
pub fn product_with_time(space: &Region) -> Region {
    fn lit(v: f64) -> ScalarExpr {
        ScalarExpr::rational(num::BigRational::from_float(v).expect("finite literal"))
    }
    Region::single(Ribbon::new(
        space.clone(),
        Bound::Finite(lit(TIME_INTERVAL.0)),
        Bound::Finite(lit(TIME_INTERVAL.1)),
    ))
}

/// `X x R` with an unbounded time axis, for the fiber-integration operators.
pub fn product_with_line(space: &Region) -> Region {
    Region::single(Ribbon::new(space.clone(), Bound::NegInf, Bound::PosInf))
}

/// Is the region a single-ribbon tower all the way down (a cell)?
pub fn is_cell_tower(region: &Region) -> bool {
    if region.is_point() {
        return true;
    }
    match region.ribbons() {
        [only] => is_cell_tower(only.base()),
        _ => false,
    }
}

/// Membership condition `u in (interval)` for the time variable of index
/// `t_index`; used when gluing homotopy pullbacks.
pub fn time_interval_condition(t_index: usize) -> SemiCondition {
    fn lit(v: f64) -> ScalarExpr {
        ScalarExpr::rational(num::BigRational::from_float(v).expect("finite literal"))
    }
    let t = ScalarExpr::var(t_index);
    SemiCondition::and(vec![
        SemiCondition::atom(SignOp::Gt, t.sub(&lit(TIME_INTERVAL.0))),
        SemiCondition::atom(SignOp::Lt, t.sub(&lit(TIME_INTERVAL.1))),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_endpoint_values() {
        let t = ScalarExpr::var(0);
        let s = sigma_poly(&t);
        assert_eq!(s.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(s.eval(&[1.0]).unwrap(), 1.0);
        assert_eq!(s.eval(&[0.5]).unwrap(), 0.5);
        // stays in [0,1] on the working interval
        for k in 0..=20 {
            let t = -0.5 + 2.0 * (k as f64) / 20.0;
            let v = s.eval(&[t]).unwrap();
            assert!((-1e-12..=1.0 + 1e-12).contains(&v), "sigma({t}) = {v}");
        }
    }

    #[test]
    fn contraction_fixes_start_and_ends_at_target() {
        let cell = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let target = vec![ScalarExpr::frac(1, 2), ScalarExpr::frac(1, 2)];
        let h = contraction_homotopy(&cell, &target).unwrap();
        let x = [0.25, 0.75];
        let at0 = h.map.apply(&[x[0], x[1], 0.0]).unwrap();
        assert_eq!(at0, vec![0.25, 0.75]);
        let at1 = h.map.apply(&[x[0], x[1], 1.0]).unwrap();
        assert!((at1[0] - 0.5).abs() < 1e-15 && (at1[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn contraction_rejects_outside_target() {
        let cell = Region::open_box(&[(0.0, 1.0)]);
        let r = contraction_homotopy(&cell, &[ScalarExpr::int(2)]);
        assert_eq!(r.err(), Some(HomotopyError::TargetOutside));
    }

    #[test]
    fn strip_section_is_midpoint() {
        // 0 < y < 2 over the line: c = 1.
        let v = Ribbon::new(
            Region::full_space(1),
            Bound::Finite(ScalarExpr::int(0)),
            Bound::Finite(ScalarExpr::int(2)),
        );
        assert_eq!(default_section(&v), ScalarExpr::int(1).normalized());
        let mut s = Sampler::new(13);
        let (proj, sect, h) = ribbon_base_homotopy(&v, None, &mut s).unwrap();
        // projection after section is the identity on the base
        let comp = proj.compose(&sect).unwrap();
        assert_eq!(comp.apply(&[0.3]).unwrap(), vec![0.3]);
        // h(., 1) lands on the section
        let moved = h.map.apply(&[0.3, 1.7, 1.0]).unwrap();
        assert!((moved[1] - 1.0).abs() < 1e-15);
    }
}
