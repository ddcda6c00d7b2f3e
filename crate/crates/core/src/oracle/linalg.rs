//! Exact rational column reduction for sparse boundary matrices.
//!
//! Columns are reduced against recorded pivots by lowest remaining row,
//! tracking the combination matrix so kernel vectors come out of the same
//! pass. All arithmetic is over the rationals; nothing is rounded.

use num::rational::BigRational;
use num::Zero;

/// Column-major sparse matrix with exact entries.
#[derive(Clone, Debug)]
pub struct SparseMat {
    pub rows: usize,
    pub cols: usize,
    /// Per column: (row, coefficient) sorted by row, no zeros.
    pub columns: Vec<Vec<(usize, BigRational)>>,
}

impl SparseMat {
    pub fn new(rows: usize, cols: usize) -> SparseMat {
        SparseMat {
            rows,
            cols,
            columns: vec![Vec::new(); cols],
        }
    }

    pub fn push_entry(&mut self, row: usize, col: usize, value: i64) {
        if value == 0 {
            return;
        }
        self.columns[col].push((row, BigRational::from_integer(value.into())));
    }

    pub fn finish_column(&mut self, col: usize) {
        self.columns[col].sort_by_key(|(r, _)| *r);
        // merge duplicates
        let mut merged: Vec<(usize, BigRational)> = Vec::with_capacity(self.columns[col].len());
        for (r, v) in self.columns[col].drain(..) {
            match merged.last_mut() {
                Some((lr, lv)) if *lr == r => *lv += v,
                _ => merged.push((r, v)),
            }
        }
        merged.retain(|(_, v)| !v.is_zero());
        self.columns[col] = merged;
    }
}

fn lowest(col: &[(usize, BigRational)]) -> Option<usize> {
    col.last().map(|(r, _)| *r)
}

fn axpy(target: &mut Vec<(usize, BigRational)>, coeff: &BigRational, source: &[(usize, BigRational)]) {
    // target += coeff * source, both sorted by row
    let mut out = Vec::with_capacity(target.len() + source.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < source.len() {
        match (target.get(i), source.get(j)) {
            (Some((ri, vi)), Some((rj, vj))) => {
                if ri < rj {
                    out.push((*ri, vi.clone()));
                    i += 1;
                } else if rj < ri {
                    out.push((*rj, coeff * vj));
                    j += 1;
                } else {
                    let v = vi + coeff * vj;
                    if !v.is_zero() {
                        out.push((*ri, v));
                    }
                    i += 1;
                    j += 1;
                }
            }
            (Some((ri, vi)), None) => {
                out.push((*ri, vi.clone()));
                i += 1;
            }
            (None, Some((rj, vj))) => {
                out.push((*rj, coeff * vj));
                j += 1;
            }
            (None, None) => break,
        }
    }
    *target = out;
}

/// Result of a reduction pass.
pub struct Reduction {
    pub rank: usize,
    /// Kernel basis as combinations of the input columns.
    pub kernel: Vec<Vec<(usize, BigRational)>>,
}

/// Reduce the matrix, returning its rank and a kernel basis.
pub fn reduce(mat: &SparseMat) -> Reduction {
    reduce_with_preloaded(mat, &SparseMat::new(mat.rows, 0)).1
}

/// Reduce `extra`'s columns against the span of `base`'s columns (which are
/// reduced first). Returns, for the extra block, the indices of columns that
/// survived (are independent modulo the base image) and the reduction of the
/// whole system.
pub fn reduce_with_preloaded(extra: &SparseMat, base: &SparseMat) -> (Vec<usize>, Reduction) {
    assert_eq!(extra.rows, base.rows);
    let total = base.cols + extra.cols;
    let mut r: Vec<Vec<(usize, BigRational)>> = Vec::with_capacity(total);
    r.extend(base.columns.iter().cloned());
    r.extend(extra.columns.iter().cloned());
    // v tracks combinations of the *extra* columns only (base columns give
    // no kernel information we need).
    let one = BigRational::from_integer(1.into());
    let mut v: Vec<Vec<(usize, BigRational)>> = (0..total)
        .map(|j| {
            if j >= base.cols {
                vec![(j - base.cols, one.clone())]
            } else {
                Vec::new()
            }
        })
        .collect();

    let mut pivot_of_row: Vec<Option<usize>> = vec![None; extra.rows];
    let mut rank = 0;
    let mut survivors = Vec::new();
    let mut kernel = Vec::new();
    for j in 0..total {
        loop {
            let low = match lowest(&r[j]) {
                Some(l) => l,
                None => break,
            };
            match pivot_of_row[low] {
                Some(p) => {
                    let c = {
                        let (_, vp) = r[p].last().unwrap();
                        let (_, vj) = r[j].last().unwrap();
                        -(vj / vp)
                    };
                    let (rp, vp) = (r[p].clone(), v[p].clone());
                    axpy(&mut r[j], &c, &rp);
                    axpy(&mut v[j], &c, &vp);
                }
                None => {
                    pivot_of_row[low] = Some(j);
                    rank += 1;
                    if j >= base.cols {
                        survivors.push(j - base.cols);
                    }
                    break;
                }
            }
        }
        if r[j].is_empty() && j >= base.cols {
            kernel.push(v[j].clone());
        }
    }
    // rank here counts base+extra pivots; report only the extra-system rank
    // when a pure reduction was requested (base.cols == 0 keeps them equal).
    (survivors, Reduction { rank, kernel })
}

/// Rank of the matrix.
pub fn rank(mat: &SparseMat) -> usize {
    reduce(mat).rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, entries: &[&[(usize, i64)]]) -> SparseMat {
        let mut m = SparseMat::new(rows, entries.len());
        for (j, col) in entries.iter().enumerate() {
            for (r, v) in col.iter() {
                m.push_entry(*r, j, *v);
            }
            m.finish_column(j);
        }
        m
    }

    #[test]
    fn rank_of_small_matrices() {
        // identity 2x2
        let m = mat(2, &[&[(0, 1)], &[(1, 1)]]);
        assert_eq!(rank(&m), 2);
        // dependent columns
        let m = mat(2, &[&[(0, 1), (1, 1)], &[(0, 2), (1, 2)]]);
        assert_eq!(rank(&m), 1);
        // zero matrix
        let m = mat(3, &[&[], &[]]);
        assert_eq!(rank(&m), 0);
    }

    #[test]
    fn kernel_combination_is_exact() {
        // columns c0 = (1,1), c1 = (2,2): kernel = span{2 c0 - c1}
        let m = mat(2, &[&[(0, 1), (1, 1)], &[(0, 2), (1, 2)]]);
        let red = reduce(&m);
        assert_eq!(red.kernel.len(), 1);
        let k = &red.kernel[0];
        // verify M k = 0 exactly
        let mut acc = vec![BigRational::zero(); 2];
        for (j, c) in k {
            for (r, v) in &m.columns[*j] {
                acc[*r] += v * c;
            }
        }
        assert!(acc.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn survivors_mod_preloaded_image() {
        // base spans (1,0); extra = {(1,0), (0,1)}: only the second survives
        let base = mat(2, &[&[(0, 1)]]);
        let extra = mat(2, &[&[(0, 3)], &[(1, 1)]]);
        let (survivors, _) = reduce_with_preloaded(&extra, &base);
        assert_eq!(survivors, vec![1]);
    }
}
