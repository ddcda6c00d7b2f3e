//! Built-in fixture corpus: regions with analytically known Betti numbers
//! and form families for the verification suites.
//!
//! Presentations matter: the engine inducts on the given ribbon list, and
//! degree-0 representatives are built per chain-connected ribbon group, so
//! disconnected pieces are presented as separate ribbons.

use crate::expr::{ScalarExpr, SemiCondition, SignOp};
use crate::forms::{MultiIndex, ZonedForm};
use crate::geometry::{product_with_line, Bound, Region, Ribbon};
use crate::integrate::SimplexMap;

fn x(i: usize) -> ScalarExpr {
    ScalarExpr::var(i)
}

/// A named region with its expected Betti numbers and a suitable oracle
/// resolution.
#[derive(Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub region: Region,
    pub expected_betti: Vec<usize>,
    pub resolution: f64,
}

/// The open unit interval.
pub fn interval() -> Fixture {
    Fixture {
        name: "interval",
        region: Region::interval(0.0, 1.0),
        expected_betti: vec![1, 0],
        resolution: 0.25,
    }
}

/// The open unit square.
pub fn square() -> Fixture {
    Fixture {
        name: "square",
        region: Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]),
        expected_betti: vec![1, 0, 0],
        resolution: 0.25,
    }
}

/// Two disjoint intervals.
pub fn two_intervals() -> Fixture {
    Fixture {
        name: "two-intervals",
        region: Region::from_ribbons(
            1,
            vec![Ribbon::interval(0.0, 1.0), Ribbon::interval(2.0, 3.0)],
        ),
        expected_betti: vec![2, 0],
        resolution: 0.25,
    }
}

fn full_line() -> Region {
    Region::full_space(1)
}

fn half_line(positive: bool) -> Region {
    let r = if positive {
        Ribbon::new(Region::point(), Bound::Finite(ScalarExpr::int(0)), Bound::PosInf)
    } else {
        Ribbon::new(Region::point(), Bound::NegInf, Bound::Finite(ScalarExpr::int(0)))
    };
    Region::single(r)
}

/// The plane with the origin removed: upper and lower half planes plus two
/// horizontal strips over the punctured first axis.
pub fn punctured_plane() -> Fixture {
    let upper = Ribbon::new(full_line(), Bound::Finite(ScalarExpr::int(0)), Bound::PosInf);
    let lower = Ribbon::new(full_line(), Bound::NegInf, Bound::Finite(ScalarExpr::int(0)));
    let strip = |side: bool| {
        Ribbon::new(
            half_line(side),
            Bound::Finite(ScalarExpr::int(-1)),
            Bound::Finite(ScalarExpr::int(1)),
        )
    };
    Fixture {
        name: "punctured-plane",
        region: Region::from_ribbons(2, vec![upper, lower, strip(false), strip(true)]),
        expected_betti: vec![1, 1, 0],
        resolution: 0.25,
    }
}

/// The plane with two points (-2, 0) and (2, 0) removed: half planes plus
/// three strips over the three intervals between the punctures.
pub fn twice_punctured_plane() -> Fixture {
    let upper = Ribbon::new(full_line(), Bound::Finite(ScalarExpr::int(0)), Bound::PosInf);
    let lower = Ribbon::new(full_line(), Bound::NegInf, Bound::Finite(ScalarExpr::int(0)));
    let seg = |lo: Bound, hi: Bound| {
        Ribbon::new(
            Region::single(Ribbon::new(Region::point(), lo, hi)),
            Bound::Finite(ScalarExpr::int(-1)),
            Bound::Finite(ScalarExpr::int(1)),
        )
    };
    Fixture {
        name: "twice-punctured-plane",
        region: Region::from_ribbons(
            2,
            vec![
                upper,
                lower,
                seg(Bound::NegInf, Bound::Finite(ScalarExpr::int(-2))),
                seg(
                    Bound::Finite(ScalarExpr::int(-2)),
                    Bound::Finite(ScalarExpr::int(2)),
                ),
                seg(Bound::Finite(ScalarExpr::int(2)), Bound::PosInf),
            ],
        ),
        expected_betti: vec![1, 2, 0],
        resolution: 0.25,
    }
}

/// The round annulus 1 < |x| < 2 as four ribbons with root bounds.
pub fn annulus() -> Fixture {
    let inner = |sign: i64| {
        // +- sqrt(max(0, 1 - x1^2))
        let core = ScalarExpr::int(0)
            .max_with(&ScalarExpr::int(1).sub(&x(0).pow(2)))
            .sqrt();
        if sign >= 0 {
            core
        } else {
            core.neg()
        }
    };
    let outer = |sign: i64| {
        let core = ScalarExpr::int(4).sub(&x(0).pow(2)).sqrt();
        if sign >= 0 {
            core
        } else {
            core.neg()
        }
    };
    let top = Ribbon::new(
        Region::interval(-2.0, 2.0),
        Bound::Finite(inner(1)),
        Bound::Finite(outer(1)),
    );
    let bottom = Ribbon::new(
        Region::interval(-2.0, 2.0),
        Bound::Finite(outer(-1)),
        Bound::Finite(inner(-1)),
    );
    let right = Ribbon::new(
        Region::interval(1.0, 2.0),
        Bound::Finite(outer(-1)),
        Bound::Finite(outer(1)),
    );
    let left = Ribbon::new(
        Region::interval(-2.0, -1.0),
        Bound::Finite(outer(-1)),
        Bound::Finite(outer(1)),
    );
    Fixture {
        name: "annulus",
        region: Region::from_ribbons(2, vec![top, bottom, right, left]),
        expected_betti: vec![1, 1, 0],
        resolution: 0.25,
    }
}

/// Three-space with the third coordinate axis removed: one ribbon with the
/// punctured plane as base and a full fiber line.
pub fn punctured_space() -> Fixture {
    let base = punctured_plane().region;
    Fixture {
        name: "punctured-space",
        region: Region::single(Ribbon::new(base, Bound::NegInf, Bound::PosInf)),
        expected_betti: vec![1, 1, 0, 0],
        resolution: 0.5,
    }
}

/// The acceptance corpus, in spec order.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        interval(),
        square(),
        two_intervals(),
        punctured_plane(),
        twice_punctured_plane(),
        annulus(),
        punctured_space(),
    ]
}

/// Cell fixtures (single-ribbon towers) for the contractibility checks.
pub fn cell_fixtures() -> Vec<Fixture> {
    vec![
        interval(),
        square(),
        Fixture {
            name: "cube",
            region: Region::open_box(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]),
            expected_betti: vec![1, 0, 0, 0],
            resolution: 0.25,
        },
        Fixture {
            name: "tilted-ribbon",
            // 0 < x2 < 1 + x1^2 over (0, 1)
            region: Region::single(Ribbon::new(
                Region::interval(0.0, 1.0),
                Bound::Finite(ScalarExpr::int(0)),
                Bound::Finite(ScalarExpr::int(1).add(&x(0).pow(2))),
            )),
            expected_betti: vec![1, 0, 0],
            resolution: 0.25,
        },
    ]
}

/// The winding form `(x1 dx2 - x2 dx1) / (x1^2 + x2^2)` on a punctured
/// region.
pub fn angular_form(region: Region) -> ZonedForm {
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

/// A square loop of four oriented segments around the origin.
pub fn square_loop(radius: f64) -> Vec<SimplexMap> {
    let r = radius;
    let corners = [[r, -r], [r, r], [-r, r], [-r, -r]];
    (0..4)
        .map(|i| {
            SimplexMap::affine(vec![corners[i].to_vec(), corners[(i + 1) % 4].to_vec()])
        })
        .collect()
}

/// Forms on `X x R` (fiber last) exercising the chain homotopy identity:
/// polynomial, rational, spline with a fiber seam, and logarithmic
/// coefficients in mixed degrees. At least twenty, including a
/// regularity-0 spline with a seam at t = 0.
pub fn chain_identity_forms() -> Vec<ZonedForm> {
    let base1 = Region::interval(-1.0, 1.0);
    let on_line = product_with_line(&base1);
    let t = x(1);
    let dx = MultiIndex::single(0);
    let dt = MultiIndex::single(1);
    let dxdt = MultiIndex::pair(0, 1).unwrap();
    let mk1 = |coeffs: Vec<(MultiIndex, ScalarExpr)>, q: u32| {
        ZonedForm::new(2, 1, q, on_line.clone(), coeffs).unwrap()
    };
    let mk2 = |coeffs: Vec<(MultiIndex, ScalarExpr)>, q: u32| {
        ZonedForm::new(2, 2, q, on_line.clone(), coeffs).unwrap()
    };
    let spline = ScalarExpr::int(0).max_with(&t).pow(2);
    let mut out = vec![
        // degree 1, polynomial coefficients
        mk1(vec![(dx.clone(), t.clone())], 1),
        mk1(vec![(dx.clone(), t.pow(2).mul(&x(0)))], 1),
        mk1(vec![(dt.clone(), ScalarExpr::int(1))], 1),
        mk1(vec![(dt.clone(), t.mul(&x(0)))], 1),
        mk1(
            vec![
                (dx.clone(), x(0).mul(&t)),
                (dt.clone(), t.pow(2).add(&x(0))),
            ],
            1,
        ),
        mk1(vec![(dx.clone(), t.pow(3).sub(&t))], 1),
        mk1(vec![(dt.clone(), x(0).pow(2).sub(&t.pow(2)))], 1),
        // degree 2 (top): dt-bearing coefficients
        mk2(vec![(dxdt.clone(), ScalarExpr::int(1))], 1),
        mk2(vec![(dxdt.clone(), t.clone())], 1),
        mk2(vec![(dxdt.clone(), x(0).mul(&t.pow(2)))], 1),
        mk2(vec![(dxdt.clone(), x(0).pow(3).add(&t))], 1),
        // degree 0 (functions)
        ZonedForm::scalar(2, 1, on_line.clone(), t.pow(2).mul(&x(0))),
        ZonedForm::scalar(2, 1, on_line.clone(), t.pow(3).add(&x(0).mul(&t))),
        // rational in the fiber with a pole outside the real line? poles
        // are excluded, so use denominators in the base variable
        mk1(
            vec![(
                dt.clone(),
                t.div(&x(0).pow(2).add(&ScalarExpr::int(2))),
            )],
            1,
        ),
        mk1(
            vec![(
                dx.clone(),
                x(0).div(&t.pow(2).add(&ScalarExpr::int(1))),
            )],
            1,
        ),
        // logarithmic coefficient (positivity built in)
        mk1(
            vec![(
                dt.clone(),
                ScalarExpr::log(&t.pow(2).add(&ScalarExpr::int(1))).unwrap(),
            )],
            1,
        ),
        ZonedForm::scalar(
            2,
            1,
            on_line.clone(),
            ScalarExpr::log(&t.pow(2).add(&ScalarExpr::int(1))).unwrap(),
        ),
        // regularity-0 splines with a seam at t = 0
        mk1(vec![(dx.clone(), spline.clone())], 0),
        mk1(vec![(dt.clone(), spline.clone())], 0),
        mk2(vec![(dxdt.clone(), spline.clone())], 0),
        mk1(
            vec![(dx.clone(), spline.mul(&x(0)))],
            0,
        ),
        // shifted seam at t = x (a genuine graph over the base)
        mk1(
            vec![(dx.clone(), ScalarExpr::int(0).max_with(&t.sub(&x(0))).pow(2))],
            0,
        ),
        // absolute value in the fiber
        mk1(vec![(dt.clone(), t.abs())], 0),
    ];
    // a two-dimensional base
    let base2 = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
    let on_plane = product_with_line(&base2);
    let u = x(2);
    out.push(
        ZonedForm::new(
            3,
            1,
            1,
            on_plane.clone(),
            vec![
                (MultiIndex::single(0), x(1).mul(&u)),
                (MultiIndex::single(2), x(0).mul(&x(1))),
            ],
        )
        .unwrap(),
    );
    out.push(
        ZonedForm::new(
            3,
            2,
            1,
            on_plane,
            vec![
                (MultiIndex::pair(0, 2).unwrap(), x(1).add(&u.pow(2))),
                (MultiIndex::pair(1, 2).unwrap(), x(0).mul(&u)),
                (MultiIndex::pair(0, 1).unwrap(), u.clone()),
            ],
        )
        .unwrap(),
    );
    out
}

/// Closed forms on cells for the primitive construction: polynomial, mixed,
/// spline, and logarithmic, in degrees 1 and 2. At least ten.
pub fn poincare_cases() -> Vec<ZonedForm> {
    let seg = Region::interval(0.0, 1.0);
    let sq = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
    let dx = MultiIndex::single(0);
    let dy = MultiIndex::single(1);
    let dxdy = MultiIndex::pair(0, 1).unwrap();
    let spline2 = ScalarExpr::int(2).mul(
        &ScalarExpr::int(0)
            .max_with(&x(0).sub(&ScalarExpr::frac(1, 2)))
            .pow(2),
    );
    vec![
        // one-dimensional cells
        ZonedForm::new(1, 1, 1, seg.clone(), vec![(dx.clone(), ScalarExpr::int(1))]).unwrap(),
        ZonedForm::new(1, 1, 1, seg.clone(), vec![(dx.clone(), x(0).pow(3))]).unwrap(),
        ZonedForm::new(1, 1, 1, seg.clone(), vec![(dx.clone(), spline2)]).unwrap(),
        ZonedForm::new(
            1,
            1,
            0,
            seg.clone(),
            vec![(dx.clone(), ScalarExpr::int(1).div(&x(0)))],
        )
        .unwrap(),
        ZonedForm::new(
            1,
            1,
            0,
            seg.clone(),
            vec![(dx.clone(), ScalarExpr::log(&x(0)).unwrap())],
        )
        .unwrap(),
        // two-dimensional cells, degree 1 (closed by construction)
        ZonedForm::new(2, 1, 1, sq.clone(), vec![(dx.clone(), ScalarExpr::int(1))]).unwrap(),
        ZonedForm::new(
            2,
            1,
            1,
            sq.clone(),
            vec![(dx.clone(), x(1)), (dy.clone(), x(0))],
        )
        .unwrap(),
        ZonedForm::new(
            2,
            1,
            1,
            sq.clone(),
            vec![
                (dx.clone(), ScalarExpr::int(2).mul(&x(0)).mul(&x(1))),
                (dy.clone(), x(0).pow(2)),
            ],
        )
        .unwrap(),
        ZonedForm::new(
            2,
            1,
            1,
            sq.clone(),
            vec![
                (dx.clone(), x(1).pow(2)),
                (dy.clone(), ScalarExpr::int(2).mul(&x(0)).mul(&x(1))),
            ],
        )
        .unwrap(),
        // degree 2 on the square (top degree: automatically closed)
        ZonedForm::new(2, 2, 1, sq.clone(), vec![(dxdy.clone(), ScalarExpr::int(1))]).unwrap(),
        ZonedForm::new(2, 2, 1, sq.clone(), vec![(dxdy.clone(), x(0).mul(&x(1)))]).unwrap(),
        ZonedForm::new(
            2,
            2,
            0,
            sq,
            vec![(dxdy, ScalarExpr::int(0).max_with(&x(0)).pow(2))],
        )
        .unwrap(),
    ]
}

/// Forms on overlaps for the splitting checks: constants, polynomials,
/// splines, one-forms. Paired with the standard interval cover
/// (0,2) u (1,3).
pub fn mv_interval_cover() -> (Region, Region, Region, Region) {
    let u1 = Region::interval(0.0, 2.0);
    let u2 = Region::interval(1.0, 3.0);
    let overlap = Region::interval(1.0, 2.0);
    let union = Region::from_ribbons(
        1,
        vec![Ribbon::interval(0.0, 2.0), Ribbon::interval(1.0, 3.0)],
    );
    (u1, u2, overlap, union)
}

pub fn mv_overlap_forms() -> Vec<ZonedForm> {
    let (_, _, overlap, _) = mv_interval_cover();
    let dx = MultiIndex::single(0);
    let mut out = vec![
        ZonedForm::zero(1, 0, 1, overlap.clone()),
        ZonedForm::scalar(1, 1, overlap.clone(), ScalarExpr::int(1)),
        ZonedForm::scalar(1, 1, overlap.clone(), x(0)),
        ZonedForm::scalar(1, 1, overlap.clone(), x(0).pow(2).sub(&x(0))),
        ZonedForm::scalar(
            1,
            1,
            overlap.clone(),
            ScalarExpr::log(&x(0)).unwrap(),
        ),
        ZonedForm::scalar(
            1,
            0,
            overlap.clone(),
            ScalarExpr::int(0)
                .max_with(&x(0).sub(&ScalarExpr::frac(3, 2)))
                .pow(2),
        ),
    ];
    for c in [
        ScalarExpr::int(1),
        x(0),
        x(0).pow(2),
        ScalarExpr::int(1).div(&x(0)),
        x(0).mul(&ScalarExpr::log(&x(0)).unwrap()),
    ] {
        out.push(ZonedForm::new(1, 1, 0, overlap.clone(), vec![(dx.clone(), c)]).unwrap());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Sampler;

    #[test]
    fn fixture_membership_spot_checks() {
        let pp = punctured_plane().region;
        assert!(pp.contains(&[1.0, 0.5]).unwrap());
        assert!(pp.contains(&[3.0, 0.0]).unwrap()); // positive axis is kept
        assert!(pp.contains(&[-3.0, 0.0]).unwrap());
        assert!(!pp.contains(&[0.0, 0.0]).unwrap()); // the puncture

        let tp = twice_punctured_plane().region;
        assert!(!tp.contains(&[2.0, 0.0]).unwrap());
        assert!(!tp.contains(&[-2.0, 0.0]).unwrap());
        assert!(tp.contains(&[0.0, 0.0]).unwrap());
        assert!(tp.contains(&[5.0, 0.0]).unwrap());

        let an = annulus().region;
        assert!(an.contains(&[1.5, 0.0]).unwrap());
        assert!(an.contains(&[0.0, -1.5]).unwrap());
        assert!(an.contains(&[1.06, 1.06]).unwrap());
        assert!(!an.contains(&[0.5, 0.5]).unwrap());
        assert!(!an.contains(&[2.1, 0.0]).unwrap());
        assert!(!an.contains(&[1.0, 0.0]).unwrap());

        let ps = punctured_space().region;
        assert!(ps.contains(&[1.0, 0.0, 5.0]).unwrap());
        assert!(!ps.contains(&[0.0, 0.0, 5.0]).unwrap());
    }

    #[test]
    fn every_fixture_samples() {
        let mut s = Sampler::new(2);
        for f in fixtures() {
            let pts = f.region.sample_points(&mut s, 16, 128).unwrap();
            for p in pts {
                assert!(f.region.contains(&p).unwrap(), "{}: {:?}", f.name, p);
            }
        }
    }

    #[test]
    fn corpus_sizes_meet_the_quotas() {
        assert!(chain_identity_forms().len() >= 20);
        assert!(poincare_cases().len() >= 10);
        assert!(mv_overlap_forms().len() >= 10);
    }

    #[test]
    fn angular_form_region_and_closedness() {
        let omega = angular_form(punctured_plane().region);
        let d = crate::forms::raw_d(&omega);
        assert!(d.is_zero());
    }
}
