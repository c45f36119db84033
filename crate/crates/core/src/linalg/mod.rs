//! Small complex linear-algebra kit: CSR matrices, a banded LU with partial
//! pivoting and a reverse Cuthill-McKee ordering to feed it.

mod banded;
mod ordering;
mod sparse;

pub use banded::BandedLu;
pub use ordering::{bandwidth, reverse_cuthill_mckee};
pub use sparse::CsrMatrix;

use crate::C64;
use nalgebra::DMatrix;

/// Max-abs entry of a dense complex matrix.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Infinity norm of a complex vector.
pub fn inf_norm(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `⟨u|v⟩` (conjugate-linear in the first argument).
pub fn dot_c(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
