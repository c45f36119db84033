use super::CsrMatrix;
use crate::{Error, Result, C64};

/// LU factorization of a banded matrix with partial pivoting.
///
/// Storage follows the classic column-major band layout: entry `(i, j)` lives at
/// `ab[j * ldab + kv + i - j]` with `kv = kl + ku`, leaving `kl` extra
/// superdiagonals for fill produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Factor a square CSR matrix whose entries satisfy `i - j <= kl` and `j - i <= ku`.
    pub fn factor(a: &CsrMatrix, kl: usize, ku: usize) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                context: "banded LU",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![C64::new(0.0, 0.0); ldab * n];
        for (i, j, v) in a.iter() {
            if i > j + kl || j > i + ku {
                return Err(Error::Precondition(format!(
                    "entry ({i},{j}) outside band kl={kl} ku={ku}"
                )));
            }
            ab[j * ldab + kv + i - j] = v;
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv: vec![0; n],
        };
        lu.factor_in_place()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut ju = 0usize;
        let scale = self.ab.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = -1.0;
            for r in 0..=km {
                let v = self.ab[self.idx(j + r, j)].norm();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            self.ipiv[j] = j + jp;
            if best <= f64::EPSILON * scale * 1e-6 || best == 0.0 {
                return Err(Error::Solver {
                    reason: format!("zero pivot in column {j}"),
                    residual: best,
                });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (x, y) = (self.idx(j, c), self.idx(j + jp, c));
                    self.ab.swap(x, y);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            let inv = pivot.inv();
            for r in 1..=km {
                let k = self.idx(j + r, j);
                self.ab[k] *= inv;
            }
            if km == 0 {
                continue;
            }
            let base = self.idx(j + 1, j);
            for c in j + 1..=ju {
                let u = self.ab[self.idx(j, c)];
                if u == C64::new(0.0, 0.0) {
                    continue;
                }
                let dst = self.idx(j + 1, c);
                for r in 0..km {
                    let l = self.ab[base + r];
                    self.ab[dst + r] -= l * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl) = (self.n, self.kl);
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if km == 0 || bj == C64::new(0.0, 0.0) {
                continue;
            }
            let base = self.idx(j + 1, j);
            for r in 1..=km {
                b[j + r] -= self.ab[base + r - 1] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                b[i] -= self.ab[self.idx(i, j)] * bj;
            }
        }
    }

    /// Solve with a few rounds of iterative refinement against the original matrix.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[C64], rounds: usize) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let mut r = vec![C64::new(0.0, 0.0); self.n];
        for _ in 0..rounds {
            a.matvec(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = *bi - *ri;
            }
            self.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += *di;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn banded_matrix(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut trip = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // weak diagonal forces pivoting
                let scale = if i == j { 0.01 } else { 1.0 };
                trip.push((i, j, c(next() * scale, next() * scale)));
            }
        }
        CsrMatrix::from_triplets(n, n, trip)
    }

    #[test]
    fn solves_against_dense() {
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 2), (30, 3, 1), (40, 4, 4)] {
            let a = banded_matrix(n, kl, ku, n as u64 + 7);
            let b: Vec<C64> = (0..n).map(|k| c(k as f64 + 1.0, -(k as f64))).collect();
            let lu = BandedLu::factor(&a, kl, ku).unwrap();
            let x = lu.solve_refined(&a, &b, 1);
            let dense = a.to_dense();
            let r = &dense * DVector::from_vec(x) - DVector::from_vec(b);
            assert!(r.norm() < 1e-10, "n={n} residual {}", r.norm());
        }
    }

    #[test]
    fn rejects_out_of_band() {
        let a = CsrMatrix::from_dense(&DMatrix::from_element(3, 3, c(1.0, 0.0)));
        assert!(BandedLu::factor(&a, 1, 1).is_err());
    }

    #[test]
    fn singular_detected() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(1.0, 0.0)), (0, 1, c(1.0, 0.0))]);
        assert!(BandedLu::factor(&a, 1, 1).is_err());
    }
}
