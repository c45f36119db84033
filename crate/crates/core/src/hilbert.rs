//! Truncated qubit ⊗ cavity space, operators and Hamiltonians.
//!
//! The joint basis is qubit-major: `|q⟩ ⊗ |n⟩` has index `q·n_max + n`, with the
//! excited qubit state at `q = 0` and the ground state at `q = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::CsrMatrix;
use crate::{Error, Result, SystemParams, C64};

/// Matrices up to this dimension are held dense.
pub const DENSE_LIMIT: usize = 64;

pub const QUBIT_EXCITED: usize = 0;
pub const QUBIT_GROUND: usize = 1;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruncatedSpace {
    n_max: usize,
}

impl TruncatedSpace {
    /// Fock states `0..n_max`.
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidSpace { n_max });
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max
    }

    /// Joint index of `|qubit⟩ ⊗ |n⟩`.
    pub fn index(&self, qubit: usize, n: usize) -> usize {
        debug_assert!(qubit < 2 && n < self.n_max);
        qubit * self.n_max + n
    }

    pub fn dim_of(&self, tag: SpaceTag) -> usize {
        match tag {
            SpaceTag::Cavity => self.n_max,
            SpaceTag::Qubit => 2,
            SpaceTag::Joint => self.dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceTag {
    Cavity,
    Qubit,
    Joint,
}

/// Factor of the joint space an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    Cavity,
    Qubit,
}

impl From<Factor> for SpaceTag {
    fn from(f: Factor) -> Self {
        match f {
            Factor::Cavity => SpaceTag::Cavity,
            Factor::Qubit => SpaceTag::Qubit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(DMatrix<C64>),
    Sparse(CsrMatrix),
}

/// Square complex operator tagged with the space it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    tag: SpaceTag,
    repr: Repr,
}

impl OperatorMatrix {
    fn check_tag(tag: SpaceTag, dim: usize) -> Result<()> {
        let ok = match tag {
            SpaceTag::Qubit => dim == 2,
            SpaceTag::Cavity => dim >= 2,
            SpaceTag::Joint => dim >= 4 && dim % 2 == 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension {
                context: "operator tag",
                expected: if tag == SpaceTag::Qubit { 2 } else { dim + dim % 2 },
                found: dim,
            })
        }
    }

    pub fn from_csr(tag: SpaceTag, m: CsrMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                context: "operator must be square",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Self::check_tag(tag, m.nrows())?;
        let repr = if m.nrows() > DENSE_LIMIT { Repr::Sparse(m) } else { Repr::Dense(m.to_dense()) };
        Ok(Self { tag, repr })
    }

    pub fn from_dense(tag: SpaceTag, m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                context: "operator must be square",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Self::check_tag(tag, m.nrows())?;
        let repr = if m.nrows() > DENSE_LIMIT { Repr::Sparse(CsrMatrix::from_dense(&m)) } else { Repr::Dense(m) };
        Ok(Self { tag, repr })
    }

    fn rebuild(&self, m: CsrMatrix) -> Self {
        Self::from_csr(self.tag, m).expect("shape preserved")
    }

    fn rebuild_dense(&self, m: DMatrix<C64>) -> Self {
        Self::from_dense(self.tag, m).expect("shape preserved")
    }

    pub fn identity(tag: SpaceTag, dim: usize) -> Result<Self> {
        Self::from_csr(tag, CsrMatrix::identity(dim))
    }

    pub fn zeros(tag: SpaceTag, dim: usize) -> Result<Self> {
        Self::from_csr(tag, CsrMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Dense(m) => m.nrows(),
            Repr::Sparse(m) => m.nrows(),
        }
    }

    pub fn tag(&self) -> SpaceTag {
        self.tag
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, Repr::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Sparse(m) => m.to_dense(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match &self.repr {
            Repr::Dense(m) => CsrMatrix::from_dense(m),
            Repr::Sparse(m) => m.clone(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        match &self.repr {
            Repr::Dense(m) => m[(r, c)],
            Repr::Sparse(m) => m.get(r, c),
        }
    }

    fn same_space(&self, other: &Self) {
        assert!(
            self.tag == other.tag && self.dim() == other.dim(),
            "operator space mismatch: {:?}/{} vs {:?}/{}",
            self.tag,
            self.dim(),
            other.tag,
            other.dim()
        );
    }

    /// `y = O x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        match &self.repr {
            Repr::Dense(m) => {
                let n = m.nrows();
                for (r, out) in y.iter_mut().enumerate().take(n) {
                    *out = (0..n).fold(ZERO, |acc, c| acc + m[(r, c)] * x[c]);
                }
            }
            Repr::Sparse(m) => m.matvec(x, y),
        }
    }

    pub fn adjoint(&self) -> Self {
        match &self.repr {
            Repr::Dense(m) => self.rebuild_dense(m.adjoint()),
            Repr::Sparse(m) => self.rebuild(m.adjoint()),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.same_space(other);
        match (&self.repr, &other.repr) {
            (Repr::Dense(a), Repr::Dense(b)) => self.rebuild_dense(a * b),
            _ => self.rebuild(self.to_csr().matmul(&other.to_csr())),
        }
    }

    /// `Σ_k c_k O_k` over operators on one space.
    pub fn linear_combination(terms: &[(C64, &OperatorMatrix)]) -> Self {
        let first = terms.first().expect("non-empty linear combination").1;
        for (_, op) in terms {
            first.same_space(op);
        }
        if terms.iter().all(|(_, op)| !op.is_sparse()) {
            let mut acc = DMatrix::zeros(first.dim(), first.dim());
            for (s, op) in terms {
                if let Repr::Dense(m) = &op.repr {
                    acc += m * *s;
                }
            }
            first.rebuild_dense(acc)
        } else {
            let mats: Vec<CsrMatrix> = terms.iter().map(|(_, op)| op.to_csr()).collect();
            let refs: Vec<(C64, &CsrMatrix)> = terms.iter().zip(&mats).map(|((s, _), m)| (*s, m)).collect();
            first.rebuild(CsrMatrix::linear_combination(&refs))
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::linear_combination(&[(ONE, self), (ONE, other)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::linear_combination(&[(ONE, self), (-ONE, other)])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::linear_combination(&[(s, self)])
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => crate::linalg::max_abs(m),
            Repr::Sparse(m) => m.max_abs(),
        }
    }

    /// `max |O − O†|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    /// `⟨ψ|O|ψ⟩`.
    pub fn expectation_pure(&self, psi: &[C64]) -> C64 {
        crate::linalg::dot_c(psi, &self.apply(psi))
    }

    /// `tr(ρ O)` for a dense `ρ`.
    pub fn expectation_dense(&self, rho: &DMatrix<C64>) -> C64 {
        let mut acc = ZERO;
        match &self.repr {
            Repr::Dense(m) => {
                for r in 0..m.nrows() {
                    for c in 0..m.ncols() {
                        acc += m[(r, c)] * rho[(c, r)];
                    }
                }
            }
            Repr::Sparse(m) => {
                for (r, c, v) in m.iter() {
                    acc += v * rho[(c, r)];
                }
            }
        }
        acc
    }
}

/// Annihilation, creation and number operators on the cavity factor.
pub fn fock_ops(space: &TruncatedSpace) -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    let n = space.n_max();
    let a = CsrMatrix::from_triplets(n, n, (1..n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))));
    let a_dag = a.adjoint();
    let num = CsrMatrix::from_triplets(n, n, (0..n).map(|k| (k, k, C64::new(k as f64, 0.0))));
    let wrap = |m| OperatorMatrix::from_csr(SpaceTag::Cavity, m).expect("n_max >= 2");
    (wrap(a), wrap(a_dag), wrap(num))
}

/// `(σ₋, σ₊, σ_z)` with the excited state first.
pub fn qubit_ops() -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    let sm = CsrMatrix::from_triplets(2, 2, [(QUBIT_GROUND, QUBIT_EXCITED, ONE)]);
    let sp = sm.adjoint();
    let sz = CsrMatrix::from_triplets(2, 2, [(QUBIT_EXCITED, QUBIT_EXCITED, ONE), (QUBIT_GROUND, QUBIT_GROUND, -ONE)]);
    let wrap = |m| OperatorMatrix::from_csr(SpaceTag::Qubit, m).expect("2x2");
    (wrap(sm), wrap(sp), wrap(sz))
}

/// Lift a single-factor operator to the joint space.
pub fn embed(op: &OperatorMatrix, space: &TruncatedSpace, which: Factor) -> Result<OperatorMatrix> {
    let want = SpaceTag::from(which);
    if op.tag() != want || op.dim() != space.dim_of(want) {
        return Err(Error::Dimension {
            context: "embed",
            expected: space.dim_of(want),
            found: op.dim(),
        });
    }
    let m = op.to_csr();
    let joint = match which {
        Factor::Cavity => CsrMatrix::identity(2).kron(&m),
        Factor::Qubit => m.kron(&CsrMatrix::identity(space.n_max())),
    };
    OperatorMatrix::from_csr(SpaceTag::Joint, joint)
}

/// Joint-space operators used throughout: `a`, `σ₋`, `σ_z`, `a†a`, `N`.
#[derive(Debug, Clone)]
pub struct JointOps {
    pub a: OperatorMatrix,
    pub a_dag: OperatorMatrix,
    pub n: OperatorMatrix,
    pub sm: OperatorMatrix,
    pub sp: OperatorMatrix,
    pub sz: OperatorMatrix,
    pub sx: OperatorMatrix,
    pub sy: OperatorMatrix,
}

impl JointOps {
    pub fn new(space: &TruncatedSpace) -> Self {
        let (a, a_dag, n) = fock_ops(space);
        let (sm, sp, sz) = qubit_ops();
        let sx = sm.add(&sp);
        let sy = sp.sub(&sm).scale(-I);
        let e = |op: &OperatorMatrix, f| embed(op, space, f).expect("consistent space");
        Self {
            a: e(&a, Factor::Cavity),
            a_dag: e(&a_dag, Factor::Cavity),
            n: e(&n, Factor::Cavity),
            sm: e(&sm, Factor::Qubit),
            sp: e(&sp, Factor::Qubit),
            sz: e(&sz, Factor::Qubit),
            sx: e(&sx, Factor::Qubit),
            sy: e(&sy, Factor::Qubit),
        }
    }
}

/// `H = −Δc a†a − ½Δq σ_z + ig(a†σ₋ − aσ₊) + i(ε a† − ε* a)`.
pub fn build_jc_hamiltonian(p: &SystemParams, space: &TruncatedSpace) -> OperatorMatrix {
    let ops = JointOps::new(space);
    let exchange = ops.a_dag.mul(&ops.sm).sub(&ops.a.mul(&ops.sp));
    OperatorMatrix::linear_combination(&[
        (C64::new(-p.delta_c, 0.0), &ops.n),
        (C64::new(-0.5 * p.delta_q, 0.0), &ops.sz),
        (I * p.g, &exchange),
        (I * p.eps_d, &ops.a_dag),
        (-I * p.eps_d.conj(), &ops.a),
    ])
}

/// Cavity-only Duffing Hamiltonian with `σ_z` replaced by the scalar `s`:
/// `(−Δc + g⁴/δ³ − λs + 2χ)a†a + χ a†²a² + i(ε a† − ε* a)` with `χ = (g⁴/δ³)s`.
pub fn build_duffing_hamiltonian(p: &SystemParams, space: &TruncatedSpace, sigma_z_value: f64) -> Result<OperatorMatrix> {
    let lambda = p.lambda()?;
    let k4 = p.kerr_scale()?;
    let s = sigma_z_value;
    let chi = k4 * s;
    let linear = -p.delta_c + k4 - lambda * s + 2.0 * chi;
    let n = space.n_max();
    let mut trip: Vec<(usize, usize, C64)> = (0..n)
        .map(|k| {
            let kf = k as f64;
            (k, k, C64::new(linear * kf + chi * kf * (kf - 1.0), 0.0))
        })
        .collect();
    for k in 1..n {
        let amp = (k as f64).sqrt();
        trip.push((k, k - 1, I * p.eps_d * amp));
        trip.push((k - 1, k, -I * p.eps_d.conj() * amp));
    }
    OperatorMatrix::from_csr(SpaceTag::Cavity, CsrMatrix::from_triplets(n, n, trip))
}

/// `N = a†a + σ₊σ₋` on the joint space.
pub fn excitation_number(space: &TruncatedSpace) -> OperatorMatrix {
    let n = space.n_max();
    let diag = (0..2).flat_map(|q| {
        (0..n).map(move |k| {
            let exc = k + usize::from(q == QUBIT_EXCITED);
            (q * n + k, q * n + k, C64::new(exc as f64, 0.0))
        })
    });
    OperatorMatrix::from_csr(SpaceTag::Joint, CsrMatrix::from_triplets(2 * n, 2 * n, diag)).expect("joint dim")
}

/// Basis vector `|qubit, n⟩`.
pub fn basis_state(space: &TruncatedSpace, qubit: usize, n: usize) -> Vec<C64> {
    let mut v = vec![ZERO; space.dim()];
    v[space.index(qubit, n)] = ONE;
    v
}
