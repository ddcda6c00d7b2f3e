//! Brute-force cubical homology of rasterized regions.
//!
//! A bounded region is rasterized on an axis-aligned grid: top cells whose
//! center and all corners pass the membership predicate are kept, together
//! with all their faces. Boundary matrices are exact rational; Betti
//! numbers come from exact column reduction, and explicit cycle
//! representatives are exported as rational chains of affine simplices via
//! the standard cube subdivision.
//!
//! Resolution is cross-checked by the stability rule (identical Betti
//! numbers at h and h/2), since a raster at inadequate resolution can miss
//! topology; corpus fixtures record their analytically known answers.

pub mod linalg;

use std::collections::HashMap;

use num::rational::BigRational;
use num::{One, Zero};

use crate::geometry::Region;
use crate::sample::Sampler;

use linalg::{reduce, reduce_with_preloaded, Reduction, SparseMat};

/// Elementary grid cube: integer anchor plus the set of extended axes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    pub anchor: Vec<i64>,
    /// Strictly increasing axes along which the cube has extent.
    pub extent: Vec<usize>,
}

impl Cube {
    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    /// Corner vertices in grid coordinates.
    fn corners(&self) -> Vec<Vec<i64>> {
        let k = self.extent.len();
        let mut out = Vec::with_capacity(1 << k);
        for mask in 0..(1u32 << k) {
            let mut v = self.anchor.clone();
            for (j, axis) in self.extent.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    v[*axis] += 1;
                }
            }
            out.push(v);
        }
        out
    }

    /// Boundary faces with signs: the j-th extent axis contributes
    /// `(-1)^{j-1} (upper - lower)` in the product orientation.
    fn boundary(&self) -> Vec<(Cube, i64)> {
        let mut out = Vec::with_capacity(2 * self.extent.len());
        for (j, axis) in self.extent.iter().enumerate() {
            let sign = if j % 2 == 0 { 1 } else { -1 };
            let mut rest: Vec<usize> = self.extent.clone();
            rest.remove(j);
            let mut upper = self.anchor.clone();
            upper[*axis] += 1;
            out.push((
                Cube {
                    anchor: upper,
                    extent: rest.clone(),
                },
                sign,
            ));
            out.push((
                Cube {
                    anchor: self.anchor.clone(),
                    extent: rest,
                },
                -sign,
            ));
        }
        out
    }
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("rasterization produced no cells (empty raster)")]
    EmptyRaster,
    #[error("rasterization needs a bounded region (rescale first)")]
    Unbounded,
    #[error("Betti numbers kept changing between h and h/2 after {retries} refinements")]
    Unstable { retries: usize },
    #[error("sampling failed: {0}")]
    Sampling(String),
}

/// Grid raster of a region with exact boundary matrices.
pub struct CubicalComplex {
    pub dim: usize,
    pub resolution: f64,
    /// Cells per dimension, with an index map per dimension.
    cells: Vec<Vec<Cube>>,
    index: Vec<HashMap<Cube, usize>>,
    /// `boundary[k]` maps k-chains to (k-1)-chains, k >= 1.
    boundaries: Vec<SparseMat>,
}

impl CubicalComplex {
    pub fn cell_count(&self, k: usize) -> usize {
        self.cells.get(k).map_or(0, |v| v.len())
    }

    pub fn cells(&self, k: usize) -> &[Cube] {
        self.cells.get(k).map_or(&[], |v| v.as_slice())
    }

    pub fn boundary_matrix(&self, k: usize) -> Option<&SparseMat> {
        if k == 0 || k > self.dim {
            None
        } else {
            self.boundaries.get(k)
        }
    }

    /// Real coordinates of a grid vertex.
    pub fn vertex_coords(&self, v: &[i64]) -> Vec<f64> {
        v.iter().map(|i| *i as f64 * self.resolution).collect()
    }

    fn vertex_coords_exact(&self, v: &[i64]) -> Option<Vec<BigRational>> {
        let h = BigRational::from_float(self.resolution)?;
        Some(
            v.iter()
                .map(|i| BigRational::from_integer((*i).into()) * &h)
                .collect(),
        )
    }

    /// Boundary of a chain, exactly.
    pub fn boundary_chain(&self, k: usize, chain: &[(usize, BigRational)]) -> Vec<(usize, BigRational)> {
        let mut acc: HashMap<usize, BigRational> = HashMap::new();
        if k == 0 || k > self.dim {
            return Vec::new();
        }
        for (idx, coeff) in chain {
            for (face, sign) in self.cells[k][*idx].boundary() {
                let fi = self.index[k - 1][&face];
                let entry = acc.entry(fi).or_insert_with(BigRational::zero);
                *entry += coeff * BigRational::from_integer(sign.into());
            }
        }
        let mut out: Vec<(usize, BigRational)> = acc
            .into_iter()
            .filter(|(_, v)| !v.is_zero())
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }

    /// Betti numbers in degrees 0..=dim by exact rational elimination:
    /// `b_k = dim C_k - rank d_k - rank d_{k+1}`.
    pub fn betti(&self) -> Vec<usize> {
        let mut ranks = vec![0usize; self.dim + 2];
        for k in 1..=self.dim {
            ranks[k] = linalg::rank(&self.boundaries[k]);
        }
        (0..=self.dim)
            .map(|k| self.cell_count(k) - ranks[k] - ranks[k + 1])
            .collect()
    }

    /// Basis of homology classes in degree k as cube chains.
    pub fn cycle_chains(&self, k: usize) -> Vec<Vec<(usize, BigRational)>> {
        if self.cell_count(k) == 0 {
            return Vec::new();
        }
        if k == 0 {
            // one vertex per connected component, via union-find on edges
            let n = self.cell_count(0);
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(parent: &mut Vec<usize>, i: usize) -> usize {
                if parent[i] != i {
                    let r = find(parent, parent[i]);
                    parent[i] = r;
                }
                parent[i]
            }
            if self.dim >= 1 {
                for e in &self.cells[1] {
                    let faces = e.boundary();
                    let a = self.index[0][&faces[0].0];
                    let b = self.index[0][&faces[1].0];
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra] = rb;
                    }
                }
            }
            let mut reps: Vec<usize> = Vec::new();
            for i in 0..n {
                if find(&mut parent, i) == i {
                    reps.push(i);
                }
            }
            return reps
                .into_iter()
                .map(|i| vec![(i, BigRational::one())])
                .collect();
        }
        // kernel of d_k, independent modulo the image of d_{k+1}
        let Reduction { kernel, .. } = reduce(&self.boundaries[k]);
        if kernel.is_empty() {
            return Vec::new();
        }
        let rows = self.cell_count(k);
        let mut kernel_mat = SparseMat::new(rows, kernel.len());
        for (j, comb) in kernel.iter().enumerate() {
            // expand column combinations into chain vectors
            let mut chain: HashMap<usize, BigRational> = HashMap::new();
            for (col, coeff) in comb {
                // kernel combinations are with respect to d_k columns, which
                // are indexed by k-cells themselves
                let entry = chain.entry(*col).or_insert_with(BigRational::zero);
                *entry += coeff.clone();
            }
            let mut entries: Vec<(usize, BigRational)> =
                chain.into_iter().filter(|(_, v)| !v.is_zero()).collect();
            entries.sort_by_key(|(i, _)| *i);
            kernel_mat.columns[j] = entries;
        }
        let image = if k + 1 <= self.dim {
            self.boundaries[k + 1].clone()
        } else {
            SparseMat::new(rows, 0)
        };
        let (survivors, _) = reduce_with_preloaded(&kernel_mat, &image);
        survivors
            .into_iter()
            .map(|j| kernel_mat.columns[j].clone())
            .collect()
    }

    /// Homology cycle basis exported as affine singular chains.
    pub fn cycle_basis(&self, k: usize) -> Vec<Cycle> {
        self.cycle_chains(k)
            .into_iter()
            .map(|chain| self.chain_to_cycle(k, &chain))
            .collect()
    }

    fn chain_to_cycle(&self, k: usize, chain: &[(usize, BigRational)]) -> Cycle {
        let mut simplices = Vec::new();
        for (idx, coeff) in chain {
            for (weight, verts) in subdivide_cube(&self.cells[k][*idx]) {
                let vertices: Vec<Vec<f64>> =
                    verts.iter().map(|v| self.vertex_coords(v)).collect();
                let exact: Option<Vec<Vec<BigRational>>> = verts
                    .iter()
                    .map(|v| self.vertex_coords_exact(v))
                    .collect();
                simplices.push((
                    coeff * BigRational::from_integer(weight.into()),
                    AffineSimplex { vertices, exact },
                ));
            }
        }
        Cycle {
            degree: k,
            simplices,
        }
    }
}

/// Affine singular simplex given by its k+1 vertices.
#[derive(Clone, Debug)]
pub struct AffineSimplex {
    pub vertices: Vec<Vec<f64>>,
    /// Exact coordinates when the vertices are rational (grid points).
    pub exact: Option<Vec<Vec<BigRational>>>,
}

impl AffineSimplex {
    pub fn degree(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Map the vertices through a coordinatewise transformation.
    pub fn map_vertices(&self, f: impl Fn(&[f64]) -> Option<Vec<f64>>) -> Option<AffineSimplex> {
        let vertices = self
            .vertices
            .iter()
            .map(|v| f(v))
            .collect::<Option<Vec<_>>>()?;
        Some(AffineSimplex {
            vertices,
            exact: None,
        })
    }
}

/// Formal rational combination of affine simplices with vanishing boundary.
#[derive(Clone, Debug)]
pub struct Cycle {
    pub degree: usize,
    pub simplices: Vec<(BigRational, AffineSimplex)>,
}

impl Cycle {
    pub fn map_vertices(&self, f: impl Fn(&[f64]) -> Option<Vec<f64>>) -> Option<Cycle> {
        let simplices = self
            .simplices
            .iter()
            .map(|(c, s)| s.map_vertices(&f).map(|m| (c.clone(), m)))
            .collect::<Option<Vec<_>>>()?;
        Some(Cycle {
            degree: self.degree,
            simplices,
        })
    }

    /// Sampled containment of every simplex in a region.
    pub fn contained_in(&self, region: &Region, samples_per_simplex: usize, seed: u64) -> bool {
        let mut sampler = Sampler::for_task(seed, "cycle-containment");
        for (_, s) in &self.simplices {
            let k = s.degree();
            for _ in 0..samples_per_simplex {
                // random barycentric point
                let mut weights: Vec<f64> = (0..=k).map(|_| sampler.unit()).collect();
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                let n = s.vertices[0].len();
                let mut p = vec![0.0; n];
                for (w, v) in weights.iter().zip(&s.vertices) {
                    for i in 0..n {
                        p[i] += w * v[i];
                    }
                }
                if !region.contains(&p).unwrap_or(false) {
                    return false;
                }
            }
        }
        true
    }
}

/// Standard subdivision of a k-cube into k! simplices along axis
/// permutations, signed by parity.
fn subdivide_cube(cube: &Cube) -> Vec<(i64, Vec<Vec<i64>>)> {
    let k = cube.dim();
    if k == 0 {
        return vec![(1, vec![cube.anchor.clone()])];
    }
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let mut verts = vec![cube.anchor.clone()];
        let mut current = cube.anchor.clone();
        for j in p {
            current[cube.extent[*j]] += 1;
            verts.push(current.clone());
        }
        out.push((parity(p), verts));
    });
    out
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

fn parity(p: &[usize]) -> i64 {
    let mut inversions = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Rasterize a bounded region at resolution h. The grid is anchored at
/// integer multiples of h so that grid-friendly loci (punctures at the
/// origin, axis gaps) land exactly on vertices.
pub fn rasterize(region: &Region, h: f64, seed: u64) -> Result<CubicalComplex, OracleError> {
    let n = region.dim();
    if n == 0 {
        // the singleton point
        let mut cells = vec![Vec::new()];
        let mut index = vec![HashMap::new()];
        if region.is_point() {
            let cube = Cube {
                anchor: vec![],
                extent: vec![],
            };
            index[0].insert(cube.clone(), 0);
            cells[0].push(cube);
        } else {
            return Err(OracleError::EmptyRaster);
        }
        return Ok(CubicalComplex {
            dim: 0,
            resolution: h,
            cells,
            index,
            boundaries: vec![SparseMat::new(0, 0)],
        });
    }
    if region.has_infinite_bounds() {
        return Err(OracleError::Unbounded);
    }
    let mut sampler = Sampler::for_task(seed, "rasterize-bbox");
    let (lo, hi) = region
        .sampled_bbox(&mut sampler, 256, h)
        .map_err(|e| OracleError::Sampling(e.to_string()))?;
    let lo_idx: Vec<i64> = lo.iter().map(|v| (v / h).floor() as i64 - 1).collect();
    let hi_idx: Vec<i64> = hi.iter().map(|v| (v / h).ceil() as i64 + 1).collect();

    // top cells whose center and corners all belong
    let mut tops: Vec<Cube> = Vec::new();
    let extent_all: Vec<usize> = (0..n).collect();
    let mut counter = lo_idx.clone();
    'grid: loop {
        let cube = Cube {
            anchor: counter.clone(),
            extent: extent_all.clone(),
        };
        let center: Vec<f64> = counter
            .iter()
            .map(|i| (*i as f64 + 0.5) * h)
            .collect();
        let mut keep = region.contains(&center).unwrap_or(false);
        if keep {
            for corner in cube.corners() {
                let p: Vec<f64> = corner.iter().map(|i| *i as f64 * h).collect();
                if !region.contains(&p).unwrap_or(false) {
                    keep = false;
                    break;
                }
            }
        }
        if keep {
            tops.push(cube);
        }
        // advance the odometer
        for axis in 0..n {
            counter[axis] += 1;
            if counter[axis] < hi_idx[axis] {
                continue 'grid;
            }
            counter[axis] = lo_idx[axis];
        }
        break;
    }
    if tops.is_empty() {
        return Err(OracleError::EmptyRaster);
    }

    // close under faces
    let mut cells: Vec<Vec<Cube>> = vec![Vec::new(); n + 1];
    let mut index: Vec<HashMap<Cube, usize>> = vec![HashMap::new(); n + 1];
    let mut frontier = tops;
    for k in (0..=n).rev() {
        let mut next = Vec::new();
        for cube in frontier {
            if index[k].contains_key(&cube) {
                continue;
            }
            index[k].insert(cube.clone(), cells[k].len());
            if k > 0 {
                for (face, _) in cube.boundary() {
                    next.push(face);
                }
            }
            cells[k].push(cube);
        }
        frontier = next;
    }

    // boundary matrices
    let mut boundaries = vec![SparseMat::new(0, 0)];
    for k in 1..=n {
        let mut m = SparseMat::new(cells[k - 1].len(), cells[k].len());
        for (j, cube) in cells[k].iter().enumerate() {
            for (face, sign) in cube.boundary() {
                m.push_entry(index[k - 1][&face], j, sign);
            }
            m.finish_column(j);
        }
        boundaries.push(m);
    }
    Ok(CubicalComplex {
        dim: n,
        resolution: h,
        cells,
        index,
        boundaries,
    })
}

/// Rasterize at h and h/2 and demand identical Betti numbers, halving up to
/// `max_halvings` times before giving up.
pub fn stable_betti(
    region: &Region,
    h0: f64,
    max_halvings: usize,
    seed: u64,
) -> Result<(Vec<usize>, CubicalComplex), OracleError> {
    let mut h = h0;
    for _ in 0..=max_halvings {
        let coarse = rasterize(region, h, seed)?;
        let b_coarse = coarse.betti();
        if region.dim() == 0 {
            return Ok((b_coarse, coarse));
        }
        let fine = rasterize(region, h / 2.0, seed)?;
        if b_coarse == fine.betti() {
            return Ok((b_coarse, coarse));
        }
        h /= 2.0;
    }
    Err(OracleError::Unstable {
        retries: max_halvings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_of_boundary_vanishes() {
        let sq = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let complex = rasterize(&sq, 0.25, 1).unwrap();
        // d1 * d2 = 0 exactly
        for j in 0..complex.cell_count(2) {
            let chain = vec![(j, BigRational::one())];
            let d = complex.boundary_chain(2, &chain);
            let dd = complex.boundary_chain(1, &d);
            assert!(dd.is_empty(), "dd of cell {j} = {dd:?}");
        }
    }

    #[test]
    fn unit_square_raster_counts_interior_cells() {
        // Strict open membership keeps the cubes with all corners inside:
        // at h = 1/4 on (0,1)^2 that is the inner 2x2 block; one halving
        // gives the 6x6 block. Both are contractible.
        let sq = Region::open_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let complex = rasterize(&sq, 0.25, 1).unwrap();
        assert_eq!(complex.cell_count(2), 4);
        assert_eq!(complex.betti(), vec![1, 0, 0]);
        let fine = rasterize(&sq, 0.125, 1).unwrap();
        assert_eq!(fine.cell_count(2), 36);
        assert_eq!(fine.betti(), vec![1, 0, 0]);
    }

    #[test]
    fn point_region_has_unit_betti() {
        let complex = rasterize(&Region::point(), 0.5, 1).unwrap();
        assert_eq!(complex.betti(), vec![1]);
    }

    #[test]
    fn interval_betti() {
        let complex = rasterize(&Region::interval(0.0, 1.0), 0.25, 1).unwrap();
        assert_eq!(complex.betti(), vec![1, 0]);
    }

    #[test]
    fn disjoint_intervals_have_two_components() {
        let r = Region::from_ribbons(
            1,
            vec![
                crate::geometry::Ribbon::interval(0.0, 1.0),
                crate::geometry::Ribbon::interval(2.0, 3.0),
            ],
        );
        let (betti, complex) = stable_betti(&r, 0.25, 2, 1).unwrap();
        assert_eq!(betti, vec![2, 0]);
        let comps = complex.cycle_basis(0);
        assert_eq!(comps.len(), 2);
    }

    #[test]
    fn square_annulus_raster_finds_the_hole() {
        // The square ring between the boxes (-2,2)^2 and [-1,1]^2 as a
        // union of four slab ribbons; same homotopy type as the round
        // annulus and grid-exact.
        fn slab(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> crate::geometry::Ribbon {
            Region::open_box(&[(x_lo, x_hi), (y_lo, y_hi)]).ribbons()[0].clone()
        }
        let r = Region::from_ribbons(
            2,
            vec![
                slab(-2.0, -1.0, -2.0, 2.0),
                slab(1.0, 2.0, -2.0, 2.0),
                slab(-2.0, 2.0, 1.0, 2.0),
                slab(-2.0, 2.0, -2.0, -1.0),
            ],
        );
        let (betti, complex) = stable_betti(&r, 0.25, 2, 1).unwrap();
        assert_eq!(betti, vec![1, 1, 0]);
        let loops = complex.cycle_basis(1);
        assert_eq!(loops.len(), 1);
        // the loop is boundary-free and lies in the region
        let chain = complex.cycle_chains(1).remove(0);
        assert!(complex.boundary_chain(1, &chain).is_empty());
        assert!(loops[0].contained_in(&r, 16, 7));
    }

    #[test]
    fn empty_region_is_empty_raster() {
        let err = rasterize(&Region::empty(2), 0.25, 1);
        assert!(matches!(err, Err(OracleError::EmptyRaster | OracleError::Sampling(_))));
    }
}
