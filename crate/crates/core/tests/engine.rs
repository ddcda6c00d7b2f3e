//! End-to-end engine runs on the fixture corpus: Betti agreement with the
//! oracle, perfect pairings, and representative sanity.

use ribbon_derham::cohomology::{cohomology, EngineOpts};
use ribbon_derham::corpus;
use ribbon_derham::expr::EqOpts;
use ribbon_derham::forms::{equal_forms, raw_d, ZonedForm};
use ribbon_derham::integrate::PairingVerdict;

fn run_fixture(f: &corpus::Fixture, seed: u64) -> ribbon_derham::cohomology::MvNode {
    let mut opts = EngineOpts::new(seed, 0);
    opts.resolution = f.resolution;
    cohomology(&f.region, &opts).unwrap_or_else(|e| panic!("{}: {e}", f.name))
}

fn check_representatives_closed(node: &ribbon_derham::cohomology::MvNode, name: &str) {
    let region = &node.basis.region;
    for (k, reps) in node.basis.representatives.iter().enumerate() {
        for (i, rep) in reps.iter().enumerate() {
            let d = raw_d(rep);
            let zero = ZonedForm::zero(region.dim(), k + 1, rep.regularity(), region.clone());
            let verdict = equal_forms(&d, &zero, region, &EqOpts::seeded(17)).unwrap();
            assert!(
                verdict.is_equal(),
                "{name}: representative {i} in degree {k} is not closed: {verdict:?}"
            );
        }
    }
}

fn check_pairings(node: &ribbon_derham::cohomology::MvNode, name: &str) {
    for (k, pm) in node.basis.period_matrices.iter().enumerate() {
        if node.basis.betti[k] == 0 {
            continue;
        }
        let pm = pm.as_ref().unwrap_or_else(|| panic!("{name}: missing pairing in degree {k}"));
        match &pm.verdict {
            PairingVerdict::Perfect { normalized_det } => {
                assert!(
                    *normalized_det >= 1e-6,
                    "{name}: degenerate pairing in degree {k}: {normalized_det}"
                );
            }
            other => panic!("{name}: pairing verdict {other:?} in degree {k}"),
        }
    }
}

#[test]
fn interval_engine() {
    let f = corpus::interval();
    let node = run_fixture(&f, 11);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_representatives_closed(&node, f.name);
    check_pairings(&node, f.name);
}

#[test]
fn square_engine() {
    let f = corpus::square();
    let node = run_fixture(&f, 12);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_pairings(&node, f.name);
}

#[test]
fn two_intervals_engine() {
    let f = corpus::two_intervals();
    let node = run_fixture(&f, 13);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_representatives_closed(&node, f.name);
    check_pairings(&node, f.name);
}

#[test]
fn punctured_plane_engine() {
    let f = corpus::punctured_plane();
    let node = run_fixture(&f, 14);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_representatives_closed(&node, f.name);
    check_pairings(&node, f.name);
}

#[test]
fn twice_punctured_plane_engine() {
    let f = corpus::twice_punctured_plane();
    let node = run_fixture(&f, 15);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_representatives_closed(&node, f.name);
    check_pairings(&node, f.name);
}

#[test]
fn annulus_engine() {
    let f = corpus::annulus();
    let node = run_fixture(&f, 16);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_pairings(&node, f.name);
}

#[test]
fn punctured_space_engine() {
    let f = corpus::punctured_space();
    let node = run_fixture(&f, 17);
    assert_eq!(node.basis.betti, f.expected_betti);
    check_pairings(&node, f.name);
}

#[test]
fn cells_are_contractible() {
    for f in corpus::cell_fixtures() {
        let node = run_fixture(&f, 18);
        assert_eq!(node.basis.betti, f.expected_betti, "{}", f.name);
    }
}
