use nalgebra::DMatrix;

use crate::C64;

/// Compressed sparse row matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, C64::new(1.0, 0.0))))
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut acc = C64::new(0.0, 0.0);
                while k < row.len() && row[k].0 == c {
                    acc += row[k].1;
                    k += 1;
                }
                if acc != C64::new(0.0, 0.0) {
                    indices.push(c);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let trip = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| (r, c))).filter_map(|(r, c)| {
            let v = m[(r, c)];
            (v != C64::new(0.0, 0.0)).then_some((r, c, v))
        });
        Self::from_triplets(m.nrows(), m.ncols(), trip)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
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

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
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

    /// `y += alpha A x`.
    pub fn matvec_acc(&self, alpha: C64, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out += alpha * acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `x† A` as a row vector.
    pub fn vec_mul(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += x[r].conj() * v;
        }
        y
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.iter().map(|(r, c, v)| (c, r, v)))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.iter().map(|(r, c, v)| (r, c, v * s)))
    }

    /// `Σ_k coeff_k A_k`.
    pub fn linear_combination(terms: &[(C64, &CsrMatrix)]) -> Self {
        let (nrows, ncols) = terms.first().map(|(_, m)| (m.nrows, m.ncols)).unwrap_or((0, 0));
        for (_, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch in linear combination");
        }
        Self::from_triplets(
            nrows,
            ncols,
            terms.iter().flat_map(|(s, m)| m.iter().map(move |(r, c, v)| (r, c, *s * v))),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let one = C64::new(1.0, 0.0);
        Self::linear_combination(&[(one, self), (one, other)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::linear_combination(&[(C64::new(1.0, 0.0), self), (C64::new(-1.0, 0.0), other)])
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimension mismatch");
        let mut trip = Vec::new();
        let mut acc = vec![C64::new(0.0, 0.0); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut cols = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &cols {
                trip.push((r, c, acc[c]));
                acc[c] = C64::new(0.0, 0.0);
                touched[c] = false;
            }
            cols.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// Kronecker product `A ⊗ B`.
    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = (other.nrows, other.ncols);
        Self::from_triplets(
            self.nrows * p,
            self.ncols * q,
            self.iter()
                .flat_map(|(r1, c1, v1)| other.iter().map(move |(r2, c2, v2)| (r1 * p + r2, c1 * q + c2, v1 * v2))),
        )
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }

    /// Symmetric permutation `P A Pᵀ` where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        Self::from_triplets(self.nrows, self.ncols, self.iter().map(|(r, c, v)| (inv[r], inv[c], v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(3, 3, vec![(0, 0, c(1.0, 0.0)), (0, 2, c(0.0, 2.0)), (2, 1, c(-1.0, 1.0)), (0, 0, c(1.0, 0.0))])
    }

    #[test]
    fn duplicates_summed() {
        let m = sample();
        assert_eq!(m.get(0, 0), c(2.0, 0.0));
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = sample();
        let b = a.adjoint();
        let dense = a.to_dense() * b.to_dense();
        assert!((a.matmul(&b).to_dense() - dense).norm() < 1e-14);
    }

    #[test]
    fn kron_matches_dense() {
        let a = sample();
        let b = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0, 0.0)), (1, 0, c(0.0, 1.0))]);
        let k = a.kron(&b).to_dense();
        let (da, db) = (a.to_dense(), b.to_dense());
        assert!((k - da.kronecker(&db)).norm() < 1e-14);
    }

    #[test]
    fn matvec_and_vec_mul() {
        let a = sample();
        let x = vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0)];
        let y = a.mul_vec(&x);
        let d = a.to_dense() * nalgebra::DVector::from_vec(x.clone());
        for i in 0..3 {
            assert!((y[i] - d[i]).norm() < 1e-14);
        }
        let row = a.vec_mul(&x);
        let dr = nalgebra::DVector::from_vec(x).adjoint() * a.to_dense();
        for i in 0..3 {
            assert!((row[i] - dr[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn permutation_roundtrip() {
        let a = sample();
        let perm = vec![2, 0, 1];
        let p = a.permute_symmetric(&perm);
        for (new_r, &old_r) in perm.iter().enumerate() {
            for (new_c, &old_c) in perm.iter().enumerate() {
                assert_eq!(p.get(new_r, new_c), a.get(old_r, old_c));
            }
        }
    }
}
