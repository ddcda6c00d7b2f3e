//! The recursive cohomology engine.
//!
//! A region presented as a union of ribbons is processed by induction: the
//! empty region and the point are trivial; a single ribbon is homotopy
//! equivalent to its base (one dimension down); a union splits into the
//! first s-1 ribbons, the last ribbon, and their pairwise intersection,
//! which the two-set gluing sequence reassembles. Restriction ranks are
//! decided through the period pairing against the cubical oracle's cycle
//! bases; the oracle side is independent brute force, so any inconsistency
//! surfaces as an `OracleMismatch` instead of being absorbed.
//!
//! Degree-0 representatives are indicator functions of chain-connected
//! groups of input ribbons (present disconnected pieces as separate
//! ribbons — a mismatch against the oracle's component count is reported).
//! New higher-degree classes are realized through the connecting map; a
//! class surviving from the pieces is glued after correcting by a primitive
//! on the overlap.

mod mv;
mod partition;
mod primitive;

pub use mv::{mv_connecting, mv_split, MvError, MvOpts};
pub use partition::{partition_of_unity, region_bump, PartitionError, PartitionOfUnity, PartitionOpts};
pub use primitive::{fiber_descent, poincare_primitive, FiberDescent, PrimitiveError};

use serde_json::json;

use crate::expr::{EqOpts, ScalarExpr, SemiCondition};
use crate::fiber::{FiberError, QOpts};
use crate::forms::{form_to_json, pullback, raw_d, MultiIndex, SmoothMap, ZonedForm};
use crate::geometry::{bounded_rescale, region_intersect, Region, Ribbon};
use crate::integrate::{
    decide_rank, period_matrix, PairingVerdict, PeriodMatrix, QuadratureSpec, RankError,
};
use crate::oracle::{stable_betti, Cycle, OracleError};
use crate::sample::Sampler;

#[derive(Clone, Debug, thiserror::Error)]
pub enum EngineError {
    #[error("engine Betti numbers {engine:?} disagree with the oracle's {oracle:?} ({context})")]
    OracleMismatch {
        context: String,
        engine: Vec<usize>,
        oracle: Vec<usize>,
    },
    #[error("period pairing is not perfect in degree {degree} (|det| = {det:.3e} after row normalization)")]
    PairingImperfect { degree: usize, det: f64 },
    #[error("primitive correction has no solution within tolerance (residual {residual:.3e})")]
    PrimitiveObstruction { residual: f64 },
    #[error("gluing a surviving class failed: pieces disagree on the overlap")]
    GlueMismatch,
    #[error("a ribbon constraint involves the fiber variable; the piece is not a fibration")]
    NotAFibration,
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Mv(#[from] MvError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Quadrature(#[from] crate::integrate::QuadratureError),
    #[error(transparent)]
    Form(#[from] crate::forms::FormError),
    #[error("sampling failed: {0}")]
    Sampling(#[from] crate::sample::SamplingError),
}

#[derive(Clone, Debug)]
pub struct EngineOpts {
    pub seed: u64,
    /// Regularity tag carried by representatives.
    pub q: u32,
    /// Oracle grid resolution (halved automatically on instability).
    pub resolution: f64,
    pub max_halvings: usize,
    pub quad: QuadratureSpec,
}

impl EngineOpts {
    pub fn new(seed: u64, q: u32) -> EngineOpts {
        EngineOpts {
            seed,
            q,
            resolution: 0.25,
            max_halvings: 2,
            quad: QuadratureSpec::default(),
        }
    }

    fn eq(&self) -> EqOpts {
        EqOpts::seeded(self.seed)
    }

    fn qopts(&self) -> QOpts {
        QOpts::seeded(self.seed)
    }

    fn partition_order(&self) -> u32 {
        self.q.max(1)
    }
}

/// Betti numbers, explicit closed representatives, oracle cycle bases, and
/// the verified period pairing of one region.
#[derive(Clone, Debug)]
pub struct CohomologyBasis {
    pub region: Region,
    pub regularity: u32,
    pub betti: Vec<usize>,
    /// `representatives[k]` has exactly `betti[k]` closed k-forms.
    pub representatives: Vec<Vec<ZonedForm>>,
    /// Oracle cycle bases per degree.
    pub cycles: Vec<Vec<Cycle>>,
    /// Period matrices per degree (None when the degree is trivial).
    pub period_matrices: Vec<Option<PeriodMatrix>>,
}

impl CohomologyBasis {
    pub fn to_json(&self, region_id: &str) -> serde_json::Value {
        json!({
            "region_id": region_id,
            "q": self.regularity,
            "betti": self.betti,
            "representatives": self
                .representatives
                .iter()
                .map(|per_k| per_k.iter().map(form_to_json).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "period_matrices": self
                .period_matrices
                .iter()
                .map(|pm| pm.as_ref().map(|p| json!({
                    "entries": p.entries,
                    "rank": p.rank,
                    "perfect": matches!(p.verdict, PairingVerdict::Perfect { .. }),
                })))
                .collect::<Vec<_>>(),
        })
    }
}

/// Node of the engine's induction tree.
pub struct MvNode {
    pub region: Region,
    pub kind: NodeKind,
    pub basis: CohomologyBasis,
}

pub enum NodeKind {
    Point,
    Empty,
    SingleRibbon {
        base: Box<MvNode>,
    },
    Union {
        left: Box<MvNode>,
        right: Box<MvNode>,
        overlap: Box<MvNode>,
        partition: PartitionOfUnity,
    },
}

/// Betti numbers and a full basis for a ribbon-presented region.
pub fn cohomology(region: &Region, opts: &EngineOpts) -> Result<MvNode, EngineError> {
    build_node(region, opts)
}

fn zero_basis(region: &Region, opts: &EngineOpts) -> CohomologyBasis {
    let n = region.dim();
    CohomologyBasis {
        region: region.clone(),
        regularity: opts.q,
        betti: vec![0; n + 1],
        representatives: vec![Vec::new(); n + 1],
        cycles: vec![Vec::new(); n + 1],
        period_matrices: vec![None; n + 1],
    }
}

fn build_node(region: &Region, opts: &EngineOpts) -> Result<MvNode, EngineError> {
    if region.is_point() {
        let one = ZonedForm::scalar(0, opts.q, Region::point(), ScalarExpr::int(1));
        let mut basis = zero_basis(region, opts);
        basis.betti = vec![1];
        basis.representatives = vec![vec![one]];
        let oracle = oracle_data(region, opts)?;
        attach_pairing(&mut basis, oracle, opts, "point")?;
        return Ok(MvNode {
            region: region.clone(),
            kind: NodeKind::Point,
            basis,
        });
    }
    if region.is_empty_presentation() {
        return Ok(MvNode {
            region: region.clone(),
            kind: NodeKind::Empty,
            basis: zero_basis(region, opts),
        });
    }
    match region.ribbons() {
        [only] => build_single_ribbon(region, only, opts),
        _ => build_union(region, opts),
    }
}

/// Effective base of a ribbon: its base region cut by the membership
/// constraint (which must not involve the fiber variable).
fn effective_base(ribbon: &Ribbon) -> Result<Region, EngineError> {
    let base = ribbon.base().clone();
    match ribbon.constraint() {
        None => Ok(base),
        Some(c) => {
            if c.max_var().is_some_and(|m| m >= ribbon.dim() - 1) {
                return Err(EngineError::NotAFibration);
            }
            Ok(base.constrained(c))
        }
    }
}

fn build_single_ribbon(
    region: &Region,
    ribbon: &Ribbon,
    opts: &EngineOpts,
) -> Result<MvNode, EngineError> {
    let n = region.dim();
    let base_region = effective_base(ribbon)?;
    let base = build_node(&base_region, opts)?;

    let mut betti = base.basis.betti.clone();
    betti.resize(n + 1, 0);
    // Pull representatives back along the fiber projection: coefficients
    // and multi-indices are unchanged, only the home region grows.
    let mut reps: Vec<Vec<ZonedForm>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut per_k = Vec::new();
        if let Some(base_reps) = base.basis.representatives.get(k) {
            for r in base_reps {
                let coeffs: Vec<(MultiIndex, ScalarExpr)> = r
                    .coeffs()
                    .iter()
                    .map(|(i, c)| (i.clone(), c.clone()))
                    .collect();
                per_k.push(ZonedForm::new(n, k, opts.q, region.clone(), coeffs)?);
            }
        }
        reps.push(per_k);
    }

    let mut basis = CohomologyBasis {
        region: region.clone(),
        regularity: opts.q,
        betti,
        representatives: reps,
        cycles: vec![Vec::new(); n + 1],
        period_matrices: vec![None; n + 1],
    };
    let oracle = oracle_data(region, opts)?;
    attach_pairing(&mut basis, oracle, opts, "single ribbon")?;
    Ok(MvNode {
        region: region.clone(),
        kind: NodeKind::SingleRibbon {
            base: Box::new(base),
        },
        basis,
    })
}

struct OracleData {
    betti: Vec<usize>,
    cycles: Vec<Vec<Cycle>>,
}

/// Rasterize (rescaling unbounded regions first) and extract Betti numbers
/// and cycle bases, mapped back into the original coordinates.
fn oracle_data(region: &Region, opts: &EngineOpts) -> Result<OracleData, EngineError> {
    let n = region.dim();
    if region.is_empty_presentation() {
        return Ok(OracleData {
            betti: vec![0; n + 1],
            cycles: vec![Vec::new(); n + 1],
        });
    }
    let (target, back): (Region, Option<SmoothMap>) = if region.has_infinite_bounds() {
        let (image, _, inv) = bounded_rescale(region);
        (image, Some(inv))
    } else {
        (region.clone(), None)
    };
    let (betti, complex) = stable_betti(&target, opts.resolution, opts.max_halvings, opts.seed)?;
    let mut cycles: Vec<Vec<Cycle>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if betti.get(k).copied().unwrap_or(0) == 0 {
            cycles.push(Vec::new());
            continue;
        }
        let mut per_k = complex.cycle_basis(k);
        if let Some(inv) = &back {
            per_k = per_k
                .into_iter()
                .map(|c| {
                    c.map_vertices(|v| inv.apply(v).ok())
                        .ok_or_else(|| OracleError::Sampling("cycle map-back failed".into()))
                })
                .collect::<Result<Vec<_>, _>>()?;
        }
        // sampled containment of each cycle in the original region
        for c in &per_k {
            if !c.contained_in(region, 24, opts.seed) {
                return Err(EngineError::Oracle(OracleError::Sampling(
                    "a mapped-back cycle left the region; refine the resolution".into(),
                )));
            }
        }
        cycles.push(per_k);
    }
    let mut betti = betti;
    betti.resize(n + 1, 0);
    Ok(OracleData { betti, cycles })
}

/// Cross-check the engine's Betti numbers against the oracle and verify
/// the period pairing degree by degree.
fn attach_pairing(
    basis: &mut CohomologyBasis,
    oracle: OracleData,
    opts: &EngineOpts,
    context: &str,
) -> Result<(), EngineError> {
    if basis.betti != oracle.betti {
        return Err(EngineError::OracleMismatch {
            context: context.to_string(),
            engine: basis.betti.clone(),
            oracle: oracle.betti,
        });
    }
    basis.cycles = oracle.cycles;
    for k in 0..basis.betti.len() {
        if basis.betti[k] == 0 {
            continue;
        }
        let pm = period_matrix(&basis.representatives[k], &basis.cycles[k], &opts.quad)?;
        match pm.verdict {
            PairingVerdict::Perfect { normalized_det } => {
                if normalized_det < 1e-6 {
                    return Err(EngineError::PairingImperfect {
                        degree: k,
                        det: normalized_det,
                    });
                }
            }
            PairingVerdict::RankDeficient { .. } | PairingVerdict::NotSquare => {
                return Err(EngineError::PairingImperfect { degree: k, det: 0.0 });
            }
        }
        basis.period_matrices[k] = Some(pm);
    }
    Ok(())
}

fn build_union(region: &Region, opts: &EngineOpts) -> Result<MvNode, EngineError> {
    let n = region.dim();
    let (left_region, last) = region.split_last().expect("union has ribbons");
    let right_region = Region::single(last);
    let left = build_node(&left_region, opts)?;
    let right = build_node(&right_region, opts)?;
    let mut sampler = Sampler::for_task(opts.seed, "engine-intersect");
    let overlap_region = region_intersect(&left_region, &right_region, &mut sampler);
    let overlap = build_node(&overlap_region, opts)?;

    // Restriction-difference period matrices per degree.
    let max_deg = n;
    let mut psi_rank = vec![0usize; max_deg + 2];
    let mut psi_entries: Vec<Vec<Vec<f64>>> = vec![Vec::new(); max_deg + 1];
    for k in 0..=max_deg {
        let (rank, entries) = psi_rank_in_degree(&left, &right, &overlap, k, opts)?;
        psi_rank[k] = rank;
        psi_entries[k] = entries;
    }

    let mut betti = vec![0usize; n + 1];
    for k in 0..=n {
        let from_pieces = left.basis.betti.get(k).copied().unwrap_or(0)
            + right.basis.betti.get(k).copied().unwrap_or(0)
            - psi_rank[k];
        let from_connecting = if k == 0 {
            0
        } else {
            overlap.basis.betti.get(k - 1).copied().unwrap_or(0) - psi_rank[k - 1]
        };
        betti[k] = from_pieces + from_connecting;
    }

    // Partition subordinate to (left, right) for the gluing machinery.
    let partition = partition_of_unity(
        &[left_region.clone(), right_region.clone()],
        opts.partition_order(),
        &PartitionOpts {
            seed: opts.seed,
            ..PartitionOpts::default()
        },
    )?;
    let mv_opts = MvOpts::seeded(opts.seed);

    // Representatives.
    let mut reps: Vec<Vec<ZonedForm>> = vec![Vec::new(); n + 1];
    reps[0] = component_representatives(region, opts)?;
    for k in 1..=n {
        // New classes via the connecting map.
        if betti[k] > 0 && !overlap_region.is_empty_presentation() {
            let selected = cokernel_representatives(&overlap, &psi_entries[k - 1], k - 1)?;
            for rho in selected {
                let theta =
                    mv_connecting(&rho, &partition, &overlap.region, region, &mv_opts)?;
                reps[k].push(theta);
            }
        }
        // Classes surviving from the pieces.
        let survivors = surviving_representatives(
            &left, &right, &overlap, &psi_entries[k], k, region, &partition, &mv_opts, opts,
        )?;
        reps[k].extend(survivors);
    }

    let mut basis = CohomologyBasis {
        region: region.clone(),
        regularity: opts.q,
        betti,
        representatives: reps,
        cycles: vec![Vec::new(); n + 1],
        period_matrices: vec![None; n + 1],
    };
    let oracle = oracle_data(region, opts)?;
    attach_pairing(&mut basis, oracle, opts, "union")?;
    Ok(MvNode {
        region: region.clone(),
        kind: NodeKind::Union {
            left: Box::new(left),
            right: Box::new(right),
            overlap: Box::new(overlap),
            partition,
        },
        basis,
    })
}

/// Periods of the restriction differences over the overlap's cycle basis:
/// columns are `-rho|I` for the left representatives followed by `+rho|I`
/// for the right ones; rows are overlap cycles.
fn psi_rank_in_degree(
    left: &MvNode,
    right: &MvNode,
    overlap: &MvNode,
    k: usize,
    opts: &EngineOpts,
) -> Result<(usize, Vec<Vec<f64>>), EngineError> {
    let rows = overlap.basis.cycles.get(k).map_or(0, |c| c.len());
    let left_reps = left.basis.representatives.get(k).cloned().unwrap_or_default();
    let right_reps = right
        .basis
        .representatives
        .get(k)
        .cloned()
        .unwrap_or_default();
    let cols = left_reps.len() + right_reps.len();
    if rows == 0 || cols == 0 {
        return Ok((0, vec![vec![0.0; cols]; rows]));
    }
    let mut sampler = Sampler::for_task(opts.seed, "psi-restriction");
    let mut forms = Vec::with_capacity(cols);
    for r in &left_reps {
        forms.push(r.restrict(&overlap.region, &mut sampler)?.negate());
    }
    for r in &right_reps {
        forms.push(r.restrict(&overlap.region, &mut sampler)?);
    }
    let pm = period_matrix(&forms, &overlap.basis.cycles[k], &opts.quad)?;
    // transpose: decide_rank sees forms as rows; the rank is the same, but
    // store entries as rows = cycles for the cokernel computation.
    let mut entries = vec![vec![0.0; cols]; rows];
    for (i, row) in pm.entries.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            entries[j][i] = *v;
        }
    }
    Ok((pm.rank, entries))
}

/// Indicator 0-forms of the chain-connected groups of input ribbons.
fn component_representatives(
    region: &Region,
    opts: &EngineOpts,
) -> Result<Vec<ZonedForm>, EngineError> {
    let ribbons = region.ribbons();
    let m = ribbons.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let mut sampler = Sampler::for_task(opts.seed, "component-groups");
    for i in 0..m {
        for j in i + 1..m {
            if crate::geometry::ribbon_intersect(&ribbons[i], &ribbons[j], &mut sampler).is_some()
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..m {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out = Vec::new();
    for (_, members) in groups {
        let cond = SemiCondition::or(
            members
                .iter()
                .map(|i| ribbons[*i].membership_condition())
                .collect(),
        );
        let indicator = ScalarExpr::piecewise(vec![
            (cond, ScalarExpr::int(1)),
            (SemiCondition::True, ScalarExpr::int(0)),
        ]);
        out.push(ZonedForm::scalar(
            region.dim(),
            opts.q,
            region.clone(),
            indicator,
        ));
    }
    Ok(out)
}

/// Overlap representatives spanning the cokernel of the restriction map:
/// greedily extend the image span by period columns of the overlap's own
/// basis.
fn cokernel_representatives(
    overlap: &MvNode,
    psi_entries: &[Vec<f64>],
    k: usize,
) -> Result<Vec<ZonedForm>, EngineError> {
    let b = overlap.basis.betti.get(k).copied().unwrap_or(0);
    if b == 0 {
        return Ok(Vec::new());
    }
    let pm = overlap.basis.period_matrices[k]
        .as_ref()
        .expect("degree with classes has a pairing");
    let mut stacked: Vec<Vec<f64>> = Vec::new();
    // rows = cycles: start with the image columns
    let cols0 = psi_entries.first().map_or(0, |r| r.len());
    for j in 0..cols0 {
        stacked.push(psi_entries.iter().map(|row| row[j]).collect());
    }
    let mut current_rank = rank_of_rows(&stacked, b)?;
    let mut selected = Vec::new();
    for (j, rep) in overlap.basis.representatives[k].iter().enumerate() {
        // period vector of this representative = row j of the pairing
        let col: Vec<f64> = pm.entries[j].clone();
        stacked.push(col);
        let r = rank_of_rows(&stacked, b)?;
        if r > current_rank {
            current_rank = r;
            selected.push(rep.clone());
        } else {
            stacked.pop();
        }
    }
    Ok(selected)
}

/// Rank of a list of length-b row vectors.
fn rank_of_rows(rows: &[Vec<f64>], b: usize) -> Result<usize, EngineError> {
    if rows.is_empty() {
        return Ok(0);
    }
    let entries: Vec<Vec<f64>> = rows.to_vec();
    let _ = b;
    let (rank, _) = decide_rank(&entries, None)?;
    Ok(rank)
}

/// Kernel vectors of the restriction-difference matrix give class pairs
/// that agree on the overlap; each is corrected by a primitive and glued
/// into a representative on the union.
#[allow(clippy::too_many_arguments)]
fn surviving_representatives(
    left: &MvNode,
    right: &MvNode,
    overlap: &MvNode,
    psi_entries: &[Vec<f64>],
    k: usize,
    union: &Region,
    partition: &PartitionOfUnity,
    mv_opts: &MvOpts,
    opts: &EngineOpts,
) -> Result<Vec<ZonedForm>, EngineError> {
    let left_reps = left.basis.representatives.get(k).cloned().unwrap_or_default();
    let right_reps = right
        .basis
        .representatives
        .get(k)
        .cloned()
        .unwrap_or_default();
    let cols = left_reps.len() + right_reps.len();
    if cols == 0 {
        return Ok(Vec::new());
    }
    let kernel = float_kernel(psi_entries, cols);
    let mut out = Vec::new();
    let mut sampler = Sampler::for_task(opts.seed, "surviving-glue");
    for vec in kernel {
        let combine = |reps: &[ZonedForm], coeffs: &[f64], region: &Region| -> ZonedForm {
            let mut acc = ZonedForm::zero(union.dim(), k, opts.q, region.clone());
            for (c, r) in coeffs.iter().zip(reps) {
                if c.abs() < 1e-12 {
                    continue;
                }
                acc = acc.add(&r.scale(&snap_rational(*c)));
            }
            acc
        };
        let omega_a = combine(&left_reps, &vec[..left_reps.len()], &left.region);
        let omega_b = combine(&right_reps, &vec[left_reps.len()..], &right.region);

        let (tilde_a, tilde_b) = if overlap.region.is_empty_presentation() {
            (omega_a, omega_b)
        } else {
            let xi = omega_b
                .restrict(&overlap.region, &mut sampler)?
                .sub(&omega_a.restrict(&overlap.region, &mut sampler)?);
            if k == 0 {
                // locally constant difference with zero periods vanishes
                (omega_a, omega_b)
            } else {
                let lambda = exact_primitive(overlap, &xi, opts)?;
                let (l1, l2) = mv_split(&lambda, partition, &overlap.region, mv_opts)?;
                (omega_a.add(&raw_d(&l1)), omega_b.sub(&raw_d(&l2)))
            }
        };

        // glue along the left membership condition
        let cond_left = left.region.membership_condition();
        let indices: std::collections::BTreeSet<MultiIndex> = tilde_a
            .coeffs()
            .keys()
            .chain(tilde_b.coeffs().keys())
            .cloned()
            .collect();
        let coeffs: Vec<(MultiIndex, ScalarExpr)> = indices
            .into_iter()
            .map(|idx| {
                let a = tilde_a.coeff(&idx);
                let b = tilde_b.coeff(&idx);
                let glued = if a == b {
                    a
                } else {
                    ScalarExpr::piecewise(vec![
                        (cond_left.clone(), a),
                        (SemiCondition::True, b),
                    ])
                };
                (idx, glued)
            })
            .collect();
        out.push(ZonedForm::new(union.dim(), k, opts.q, union.clone(), coeffs)?);
    }
    Ok(out)
}

fn snap_rational(v: f64) -> ScalarExpr {
    for den in 1..=16i64 {
        let num = (v * den as f64).round();
        if (num / den as f64 - v).abs() < 1e-9 && num.abs() < 1e6 {
            return ScalarExpr::frac(num as i64, den);
        }
    }
    ScalarExpr::irrational(v)
}

/// Null-space basis of a rows x cols matrix given as rows (may be empty).
fn float_kernel(rows: &[Vec<f64>], cols: usize) -> Vec<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let nrows = m.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        // find pivot
        let mut best = r;
        for i in r..nrows {
            if m[i][c].abs() > m[best][c].abs() {
                best = i;
            }
        }
        if r >= nrows || m[best][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, best);
        let p = m[r][c];
        for j in 0..cols {
            m[r][j] /= p;
        }
        for i in 0..nrows {
            if i != r && m[i][c].abs() > 0.0 {
                let f = m[i][c];
                for j in 0..cols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
    }
    let mut kernel = Vec::new();
    let pivot_set: std::collections::BTreeSet<usize> = pivot_cols.iter().cloned().collect();
    for free in 0..cols {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut v = vec![0.0; cols];
        v[free] = 1.0;
        for (row_idx, pc) in pivot_cols.iter().enumerate() {
            v[*pc] = -m[row_idx][free];
        }
        kernel.push(v);
    }
    kernel
}

/// Primitive of an exact form on a node's region, by recursion over the
/// induction tree.
pub fn exact_primitive(
    node: &MvNode,
    omega: &ZonedForm,
    opts: &EngineOpts,
) -> Result<ZonedForm, EngineError> {
    let k = omega.degree();
    let n = node.region.dim();
    if k == 0 {
        return Err(EngineError::Primitive(PrimitiveError::DegreeZero(0)));
    }
    if k > n || omega.is_zero() {
        return Ok(ZonedForm::zero(n, k - 1, opts.q, node.region.clone()));
    }
    match &node.kind {
        NodeKind::Point | NodeKind::Empty => {
            Ok(ZonedForm::zero(n, k - 1, opts.q, node.region.clone()))
        }
        NodeKind::SingleRibbon { base } => {
            let ribbon = node.region.ribbons()[0].clone();
            let descent = fiber_descent(omega, &ribbon, None, &opts.qopts(), &opts.eq())?;
            // carry the primitive problem down to the base node
            let base_form = retarget(&descent.base_form, &base.region)?;
            let mu = exact_primitive(base, &base_form, opts)?;
            let pulled = pullback(&descent.projection, &mu, &opts.eq())
                .map_err(PrimitiveError::Pullback)?;
            Ok(pulled.add(&descent.fiber_term))
        }
        NodeKind::Union {
            left,
            right,
            overlap,
            partition,
        } => {
            let mv_opts = MvOpts::seeded(opts.seed);
            let mut sampler = Sampler::for_task(opts.seed, "exact-primitive-union");
            let la = exact_primitive(left, &omega.restrict(&left.region, &mut sampler)?, opts)?;
            let lb = exact_primitive(right, &omega.restrict(&right.region, &mut sampler)?, opts)?;
            if overlap.region.is_empty_presentation() {
                return glue_forms(&la, &lb, &left.region, &node.region, opts);
            }
            let mu = lb
                .restrict(&overlap.region, &mut sampler)?
                .sub(&la.restrict(&overlap.region, &mut sampler)?);
            // express the class of mu through the overlap basis and the
            // restriction map
            let (la, lb) = correct_pieces(
                left, right, overlap, &la, &lb, &mu, k - 1, partition, &mv_opts, opts,
            )?;
            glue_forms(&la, &lb, &left.region, &node.region, opts)
        }
    }
}

/// View a form on an equivalent region presentation.
fn retarget(form: &ZonedForm, region: &Region) -> Result<ZonedForm, EngineError> {
    let coeffs: Vec<(MultiIndex, ScalarExpr)> = form
        .coeffs()
        .iter()
        .map(|(i, c)| (i.clone(), c.clone()))
        .collect();
    Ok(ZonedForm::new(
        region.dim(),
        form.degree(),
        form.regularity(),
        region.clone(),
        coeffs,
    )?)
}

/// Adjust primitives on the pieces so they agree on the overlap.
#[allow(clippy::too_many_arguments)]
fn correct_pieces(
    left: &MvNode,
    right: &MvNode,
    overlap: &MvNode,
    la: &ZonedForm,
    lb: &ZonedForm,
    mu: &ZonedForm,
    deg: usize,
    partition: &PartitionOfUnity,
    mv_opts: &MvOpts,
    opts: &EngineOpts,
) -> Result<(ZonedForm, ZonedForm), EngineError> {
    let mut sampler = Sampler::for_task(opts.seed, "primitive-correction");
    // periods of mu over the overlap cycles
    let cycles = &overlap.basis.cycles[deg.min(overlap.basis.cycles.len() - 1)];
    if overlap.basis.betti.get(deg).copied().unwrap_or(0) == 0 || cycles.is_empty() {
        // the overlap has no classes in this degree: mu is exact there
        if deg == 0 {
            return Ok((la.clone(), lb.clone()));
        }
        let nu = exact_primitive(overlap, mu, opts)?;
        let (n1, n2) = mv_split(&nu, partition, &overlap.region, mv_opts)?;
        return Ok((la.add(&raw_d(&n1)), lb.sub(&raw_d(&n2))));
    }
    let mut mu_periods = Vec::with_capacity(cycles.len());
    for c in cycles {
        mu_periods.push(crate::integrate::integrate_cycle(mu, c, &opts.quad)?.value);
    }
    // solve: restriction-difference of (alpha_a, alpha_b) hits mu's class
    let left_reps = left.basis.representatives.get(deg).cloned().unwrap_or_default();
    let right_reps = right
        .basis
        .representatives
        .get(deg)
        .cloned()
        .unwrap_or_default();
    let cols = left_reps.len() + right_reps.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for r in &left_reps {
        let restricted = r.restrict(&overlap.region, &mut sampler)?.negate();
        let mut col = Vec::new();
        for c in cycles {
            col.push(crate::integrate::integrate_cycle(&restricted, c, &opts.quad)?.value);
        }
        columns.push(col);
    }
    for r in &right_reps {
        let restricted = r.restrict(&overlap.region, &mut sampler)?;
        let mut col = Vec::new();
        for c in cycles {
            col.push(crate::integrate::integrate_cycle(&restricted, c, &opts.quad)?.value);
        }
        columns.push(col);
    }
    let coeffs = least_squares(&columns, &mu_periods, cycles.len())?;

    let scale_sum = |reps: &[ZonedForm], cs: &[f64], region: &Region| -> ZonedForm {
        let mut acc = ZonedForm::zero(region.dim(), deg, opts.q, region.clone());
        for (c, r) in cs.iter().zip(reps) {
            if c.abs() < 1e-12 {
                continue;
            }
            acc = acc.add(&r.scale(&snap_rational(*c)));
        }
        acc
    };
    let alpha_a = scale_sum(&left_reps, &coeffs[..left_reps.len()], &left.region);
    let alpha_b = scale_sum(&right_reps, &coeffs[left_reps.len()..], &right.region);
    let _ = cols;

    // the remainder is exact on the overlap
    let remainder = mu
        .sub(&alpha_b.restrict(&overlap.region, &mut sampler)?.sub(
            &alpha_a.restrict(&overlap.region, &mut sampler)?,
        ));
    if deg == 0 {
        return Ok((la.add(&alpha_a), lb.add(&alpha_b)));
    }
    let nu = exact_primitive(overlap, &remainder, opts)?;
    let (n1, n2) = mv_split(&nu, partition, &overlap.region, mv_opts)?;
    Ok((
        la.add(&alpha_a).add(&raw_d(&n1)),
        lb.add(&alpha_b).sub(&raw_d(&n2)),
    ))
}

/// Dense least squares via normal equations (small systems only), with a
/// residual check.
fn least_squares(
    columns: &[Vec<f64>],
    target: &[f64],
    rows: usize,
) -> Result<Vec<f64>, EngineError> {
    let cols = columns.len();
    if cols == 0 {
        let norm: f64 = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return Err(EngineError::PrimitiveObstruction { residual: norm });
        }
        return Ok(Vec::new());
    }
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, cols);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let b = nalgebra::DVector::<f64>::from_row_slice(target);
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-10)
        .map_err(|_| EngineError::PrimitiveObstruction { residual: f64::NAN })?;
    let residual = (&a * &x - &b).norm();
    if residual > 1e-6 * (1.0 + b.norm()) {
        return Err(EngineError::PrimitiveObstruction { residual });
    }
    Ok(x.iter().cloned().collect())
}

/// Glue two primitives that agree on the overlap into one form on the
/// union, verifying the agreement by sampling.
fn glue_forms(
    la: &ZonedForm,
    lb: &ZonedForm,
    left_region: &Region,
    union: &Region,
    opts: &EngineOpts,
) -> Result<ZonedForm, EngineError> {
    let cond_left = left_region.membership_condition();
    let indices: std::collections::BTreeSet<MultiIndex> = la
        .coeffs()
        .keys()
        .chain(lb.coeffs().keys())
        .cloned()
        .collect();
    let coeffs: Vec<(MultiIndex, ScalarExpr)> = indices
        .into_iter()
        .map(|idx| {
            let a = la.coeff(&idx);
            let b = lb.coeff(&idx);
            let glued = if a == b {
                a
            } else {
                ScalarExpr::piecewise(vec![(cond_left.clone(), a), (SemiCondition::True, b)])
            };
            (idx, glued)
        })
        .collect();
    Ok(ZonedForm::new(union.dim(), la.degree(), opts.q, union.clone(), coeffs)?)
}
