//! Minimal compressed-sparse-row complex matrix used for superoperators and
//! the non-Hermitian trajectory generator.

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, C64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                if v.re != 0.0 || v.im != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(v);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.indptr[row]..self.indptr[row + 1];
        match self.indices[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Iterate stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = xᴴ A` returned as a row (i.e. `Aᴴ x` conjugated).
    pub fn left_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.ncols];
        for r in 0..self.nrows {
            let xr = x[r].conj();
            if xr.re == 0.0 && xr.im == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += xr * self.values[k];
            }
        }
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Induced infinity norm (largest absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| {
                self.values[self.indptr[r]..self.indptr[r + 1]]
                    .iter()
                    .map(|z| z.norm())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `A + shift * I` in faer's compressed-column layout.
    pub fn to_faer_shifted(&self, shift: C64) -> Result<SparseColMat<usize, C64>> {
        let n = self.nrows.min(self.ncols);
        let mut triplets: Vec<Triplet<usize, usize, C64>> =
            self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        triplets.extend((0..n).map(|i| Triplet::new(i, i, shift)));
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets).map_err(|e| {
            Error::SingularFactorization {
                shift: shift.norm(),
                msg: format!("matrix assembly failed: {e:?}"),
            }
        })
    }
}
