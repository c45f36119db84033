//! Master-equation machinery on column-stacked density matrices:
//! `vec(AXB) = (Bᵀ ⊗ A) vec(X)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::hilbert::{Factor, JointOps, OperatorMatrix, SpaceTag, TruncatedSpace};
use crate::linalg::{self, BandedLu, CsrMatrix};
use crate::ode::{self, OdeOptions};
use crate::{Error, Result, SystemParams, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    tag: SpaceTag,
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validated construction: Hermitian and unit trace within `1e-10`, spectrum above `−1e-8`.
    pub fn new(tag: SpaceTag, m: DMatrix<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(tag, m)?;
        let herm = linalg::max_abs(&(&rho.m - rho.m.adjoint()));
        if herm > 1e-10 {
            return Err(Error::Precondition(format!("density matrix not Hermitian: {herm:e}")));
        }
        let tr = rho.trace();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::Precondition(format!("density matrix trace {tr}")));
        }
        let min = rho.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::Precondition(format!("density matrix eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// Shape-checked construction without physical validation.
    pub fn new_unchecked(tag: SpaceTag, m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                context: "density matrix must be square",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let ok = match tag {
            SpaceTag::Qubit => m.nrows() == 2,
            SpaceTag::Cavity => m.nrows() >= 2,
            SpaceTag::Joint => m.nrows() >= 4 && m.nrows() % 2 == 0,
        };
        if !ok {
            return Err(Error::Dimension {
                context: "density matrix tag",
                expected: if tag == SpaceTag::Qubit { 2 } else { m.nrows() + 1 },
                found: m.nrows(),
            });
        }
        Ok(Self { tag, m })
    }

    /// `|ψ⟩⟨ψ|` for a normalized `ψ`.
    pub fn from_pure(tag: SpaceTag, psi: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        Self::new(tag, &v * v.adjoint())
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    /// Column-stacked `vec(ρ)`.
    pub fn to_vec(&self) -> Vec<C64> {
        self.m.as_slice().to_vec()
    }

    pub fn from_vec(tag: SpaceTag, v: &[C64]) -> Result<Self> {
        let d = (v.len() as f64).sqrt().round() as usize;
        if d * d != v.len() {
            return Err(Error::Dimension {
                context: "vectorized density matrix",
                expected: d * d,
                found: v.len(),
            });
        }
        Self::new_unchecked(tag, DMatrix::from_column_slice(d, d, v))
    }

    /// `(ρ + ρ†)/2`.
    pub fn hermitized(&self) -> DMatrix<C64> {
        (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0)
    }

    /// Spectrum of the Hermitized matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.hermitized()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs(&(&self.m - self.m.adjoint()))
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }
}

/// Sparse generator of the master equation acting on `vec(ρ)`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    d: usize,
    tag: SpaceTag,
    matrix: CsrMatrix,
    channels: Vec<(OperatorMatrix, f64)>,
}

impl Liouvillian {
    /// Dimension of the superoperator (`d²`).
    pub fn dim(&self) -> usize {
        self.d * self.d
    }

    /// Dimension of the underlying Hilbert space.
    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn channels(&self) -> &[(OperatorMatrix, f64)] {
        &self.channels
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(v)
    }

    pub fn norm_inf(&self) -> f64 {
        self.matrix.norm_inf()
    }

    /// `‖vec(I)†·L‖_∞`.
    pub fn trace_leak(&self) -> f64 {
        let mut id = vec![ZERO; self.dim()];
        for i in 0..self.d {
            id[i + i * self.d] = ONE;
        }
        linalg::inf_norm(&self.matrix.vec_mul(&id))
    }
}

/// `L = −i(I⊗H − Hᵀ⊗I) + Σ r (2 C̄⊗C − I⊗C†C − (C†C)ᵀ⊗I)`.
pub fn build_liouvillian(h: &OperatorMatrix, channels: &[(OperatorMatrix, f64)]) -> Result<Liouvillian> {
    let d = h.dim();
    for (c, r) in channels {
        if c.dim() != d || c.tag() != h.tag() {
            return Err(Error::Dimension {
                context: "collapse operator",
                expected: d,
                found: c.dim(),
            });
        }
        if !(*r >= 0.0) {
            return Err(Error::InvalidParams(format!("negative channel rate {r}")));
        }
    }
    let id = CsrMatrix::identity(d);
    let hm = h.to_csr();
    let mi = C64::new(0.0, -1.0);
    let mut parts: Vec<(C64, CsrMatrix)> = vec![(mi, id.kron(&hm)), (-mi, hm.transpose().kron(&id))];
    for (c, r) in channels {
        if *r == 0.0 {
            continue;
        }
        let cm = c.to_csr();
        let cdc = cm.adjoint().matmul(&cm);
        let rate = C64::new(*r, 0.0);
        parts.push((rate * 2.0, cm.conj().kron(&cm)));
        parts.push((-rate, id.kron(&cdc)));
        parts.push((-rate, cdc.transpose().kron(&id)));
    }
    let refs: Vec<(C64, &CsrMatrix)> = parts.iter().map(|(s, m)| (*s, m)).collect();
    Ok(Liouvillian {
        d,
        tag: h.tag(),
        matrix: CsrMatrix::linear_combination(&refs),
        channels: channels.to_vec(),
    })
}

/// The JC channels: `(a, κ)` and `(σ₋, γ/2)`; zero-rate channels are dropped.
pub fn jc_channels(p: &SystemParams, space: &TruncatedSpace) -> Vec<(OperatorMatrix, f64)> {
    let ops = JointOps::new(space);
    let mut ch = vec![(ops.a, p.kappa)];
    if p.gamma > 0.0 {
        ch.push((ops.sm, 0.5 * p.gamma));
    }
    ch
}

/// Liouvillian of the driven damped JC system.
pub fn jc_liouvillian(p: &SystemParams, space: &TruncatedSpace) -> Result<Liouvillian> {
    p.validate()?;
    let h = crate::hilbert::build_jc_hamiltonian(p, space);
    build_liouvillian(&h, &jc_channels(p, space))
}

/// Liouvillian of the cavity-only Duffing model with `σ_z → s`, damped at `κ`.
pub fn duffing_liouvillian(p: &SystemParams, space: &TruncatedSpace, sigma_z_value: f64) -> Result<Liouvillian> {
    p.validate()?;
    let h = crate::hilbert::build_duffing_hamiltonian(p, space, sigma_z_value)?;
    let (a, _, _) = crate::hilbert::fock_ops(space);
    build_liouvillian(&h, &[(a, p.kappa)])
}

/// Ordering that interleaves the qubit index inside the Fock index on both
/// sides of `ρ`, which keeps the JC Liouvillian narrowly banded.
fn fock_major_permutation(d: usize) -> Vec<usize> {
    let n_max = d / 2;
    let inner: Vec<usize> = (0..d).map(|k| (k % 2) * n_max + k / 2).collect();
    let mut perm = Vec::with_capacity(d * d);
    for jc in 0..d {
        for ic in 0..d {
            perm.push(inner[ic] + d * inner[jc]);
        }
    }
    perm
}

fn band_width(m: &CsrMatrix) -> (usize, usize, usize) {
    let (kl, ku) = linalg::bandwidth(m);
    (kl, ku, 2 * kl + ku)
}

/// Options for [`steady_state_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    /// Required `‖L vec ρ‖_∞ / ‖L‖_∞`.
    pub residual_tol: f64,
    pub refinement_rounds: usize,
    pub inverse_iterations: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            refinement_rounds: 3,
            inverse_iterations: 50,
        }
    }
}

struct BandedSystem {
    perm: Vec<usize>,
    inv: Vec<usize>,
    lp: CsrMatrix,
    kl: usize,
    ku: usize,
}

impl BandedSystem {
    fn new(l: &Liouvillian) -> Self {
        let n = l.dim();
        let mut best: Option<(Vec<usize>, CsrMatrix, (usize, usize, usize))> = None;
        let mut candidates = vec![linalg::reverse_cuthill_mckee(&l.matrix)];
        if l.tag == SpaceTag::Joint {
            candidates.push(fock_major_permutation(l.d));
        }
        for perm in candidates {
            let lp = l.matrix.permute_symmetric(&perm);
            let bw = band_width(&lp);
            if best.as_ref().is_none_or(|b| bw.2 < b.2 .2) {
                best = Some((perm, lp, bw));
            }
        }
        let (perm, lp, (kl, ku, _)) = best.expect("at least one ordering");
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        Self { perm, inv, lp, kl, ku }
    }

    fn to_original(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; x.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    /// Solve `(L + σ e_k e_kᵀ) x = σ e_k` in the permuted frame.
    fn pinned_solve(&self, k_orig: usize, sigma: f64, opts: &SteadyOptions) -> Result<Vec<C64>> {
        let k = self.inv[k_orig];
        let n = self.lp.nrows();
        let pin = CsrMatrix::from_triplets(n, n, [(k, k, C64::new(sigma, 0.0))]);
        let a = self.lp.add(&pin);
        let lu = BandedLu::factor(&a, self.kl, self.ku)?;
        let mut b = vec![ZERO; n];
        b[k] = C64::new(sigma, 0.0);
        Ok(self.to_original(&lu.solve_refined(&a, &b, opts.refinement_rounds)))
    }

    /// Inverse iteration on `L − s I` for the eigenvector nearest `s`.
    fn inverse_iteration(&self, shift: f64, iters: usize) -> Result<Vec<C64>> {
        let n = self.lp.nrows();
        let sh = CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, C64::new(-shift, 0.0))));
        let a = self.lp.add(&sh);
        let lu = BandedLu::factor(&a, self.kl, self.ku)?;
        let mut x = vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        for _ in 0..iters {
            lu.solve_in_place(&mut x);
            let nrm = linalg::norm2(&x);
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        Ok(self.to_original(&x))
    }
}

fn density_from_null_vector(l: &Liouvillian, v: &[C64]) -> Result<DensityMatrix> {
    let d = l.d;
    let tr: C64 = (0..d).map(|i| v[i + i * d]).sum();
    if tr.norm() == 0.0 || !tr.norm().is_finite() {
        return Err(Error::Solver {
            reason: "null vector has zero trace".into(),
            residual: f64::NAN,
        });
    }
    let m = DMatrix::from_column_slice(d, d, v) / tr;
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::new_unchecked(l.tag, m)
}

/// Relative residual `‖L vec ρ‖_∞ / ‖L‖_∞`.
pub fn steady_residual(l: &Liouvillian, rho: &DensityMatrix) -> f64 {
    linalg::inf_norm(&l.apply(&rho.to_vec())) / l.norm_inf()
}

/// Steady state with default options.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, &SteadyOptions::default())
}

/// Null vector of `L` normalized to unit trace.
///
/// The constraint is imposed by a rank-one pin on one diagonal population
/// `ρ_kk`, which keeps the banded structure of the reordered system intact.
/// The pin starts on the first basis state and moves to the most populated
/// diagonal entry if that one turns out to be small.
pub fn steady_state_with(l: &Liouvillian, opts: &SteadyOptions) -> Result<DensityMatrix> {
    let d = l.d;
    let sys = BandedSystem::new(l);
    let sigma = l.norm_inf().max(f64::MIN_POSITIVE);
    let lnorm = l.norm_inf();

    let mut pins = vec![0usize];
    if l.tag == SpaceTag::Joint {
        // |g,0⟩
        let g0 = d / 2;
        pins.insert(0, g0 + g0 * d);
    }

    let mut last_err = None;
    let mut tried = Vec::new();
    while let Some(k) = pins.pop() {
        if tried.contains(&k) {
            continue;
        }
        tried.push(k);
        let x = match sys.pinned_solve(k, sigma, opts) {
            Ok(x) => x,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let diag: Vec<f64> = (0..d).map(|i| x[i + i * d].re).collect();
        let (imax, &dmax) = diag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("d > 0");
        if diag[k % d.max(1)].abs() < 1e-3 * dmax.abs() && !tried.contains(&(imax + imax * d)) {
            pins.push(imax + imax * d);
            continue;
        }
        let rho = density_from_null_vector(l, &x)?;
        let res = steady_residual(l, &rho);
        if res <= opts.residual_tol {
            return Ok(rho);
        }
        last_err = Some(Error::Solver {
            reason: "pinned solve residual above tolerance".into(),
            residual: res,
        });
    }

    // shifted inverse iteration as fallback
    let shift = -1e-9 * lnorm;
    match sys.inverse_iteration(shift, opts.inverse_iterations) {
        Ok(x) => {
            let rho = density_from_null_vector(l, &x)?;
            let res = steady_residual(l, &rho);
            if res <= opts.residual_tol {
                return Ok(rho);
            }
            Err(Error::Solver {
                reason: "inverse iteration did not reach tolerance".into(),
                residual: res,
            })
        }
        Err(_) => match last_err {
            Some(Error::Solver { reason, .. }) if reason.starts_with("zero pivot") => {
                Err(Error::Degenerate("Liouvillian null space is not one-dimensional".into()))
            }
            Some(e) => Err(e),
            None => Err(Error::Degenerate("no usable pin".into())),
        },
    }
}

/// Integrate `dρ/dt = L ρ` and return `ρ` at every time in `t_grid` (ascending, starting at 0).
pub fn evolve(rho0: &DensityMatrix, l: &Liouvillian, t_grid: &[f64]) -> Result<Vec<DensityMatrix>> {
    evolve_with(rho0, l, t_grid, &OdeOptions::default())
}

pub fn evolve_with(rho0: &DensityMatrix, l: &Liouvillian, t_grid: &[f64], opts: &OdeOptions) -> Result<Vec<DensityMatrix>> {
    if rho0.dim() != l.d || rho0.tag != l.tag {
        return Err(Error::Dimension {
            context: "evolve",
            expected: l.d,
            found: rho0.dim(),
        });
    }
    if t_grid.first().is_some_and(|&t| t != 0.0) {
        return Err(Error::Precondition("time grid must start at 0".into()));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    ode::integrate_with(
        |_, y, dy| l.matrix.matvec(y, dy),
        &rho0.to_vec(),
        t_grid,
        opts,
        |_, _, y| out.push(y.to_vec()),
    )?;
    out.into_iter().map(|v| DensityMatrix::from_vec(l.tag, &v)).collect()
}

/// `tr(ρ O)`.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<C64> {
    if rho.dim() != op.dim() || rho.tag != op.tag() {
        return Err(Error::Dimension {
            context: "expectation",
            expected: rho.dim(),
            found: op.dim(),
        });
    }
    Ok(op.expectation_dense(&rho.m))
}

/// Reduce a joint state to one factor.
pub fn partial_trace(rho: &DensityMatrix, keep: Factor) -> Result<DensityMatrix> {
    if rho.tag != SpaceTag::Joint {
        return Err(Error::Dimension {
            context: "partial trace needs a joint state",
            expected: rho.dim() + rho.dim() % 2,
            found: rho.dim(),
        });
    }
    let n = rho.dim() / 2;
    let m = &rho.m;
    let out = match keep {
        Factor::Cavity => DMatrix::from_fn(n, n, |r, c| m[(r, c)] + m[(n + r, n + c)]),
        Factor::Qubit => DMatrix::from_fn(2, 2, |r, c| (0..n).map(|k| m[(r * n + k, c * n + k)]).sum()),
    };
    DensityMatrix::new_unchecked(keep.into(), out)
}

/// `−Σ λ ln λ` over the spectrum of the Hermitized state, dropping `λ < 1e-14`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues().into_iter().filter(|&l| l >= 1e-14).map(|l| -l * l.ln()).sum()
}

/// `½ ‖ρ − σ‖₁`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let diff = a.hermitized() - b.hermitized();
    0.5 * SymmetricEigen::new(diff).eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}

/// Eigenvalues of a small Liouvillian sorted by modulus, for spectral-gap reporting.
pub fn liouvillian_spectrum_dense(l: &Liouvillian) -> Result<Vec<C64>> {
    if l.dim() > 2500 {
        return Err(Error::Precondition(format!("dense spectrum limited to dimension 2500, got {}", l.dim())));
    }
    let ev = l
        .matrix
        .to_dense()
        .eigenvalues()
        .ok_or_else(|| Error::Solver {
            reason: "Schur iteration failed".into(),
            residual: f64::NAN,
        })?;
    let mut v: Vec<C64> = ev.iter().copied().collect();
    v.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(v)
}
