//! Diffusive (homodyne) unraveling of the master equation, integrated with an explicit
//! weak order-2 scheme, plus episode detection, lifetime histograms and spectra.
//!
//! For each channel `(C, r)` the jump operator is `L = √(2r) C` and, with `x = ⟨L + L†⟩`,
//! `dψ = [−iH − ½L†L + ½xL − ⅛x²]ψ dt + (L − ½x)ψ dW`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::hilbert::{build_jc_hamiltonian, OperatorMatrix, SpaceTag, TruncatedSpace, QUBIT_EXCITED, QUBIT_GROUND};
use crate::linalg::{dot_c, CsrMatrix};
use crate::lindblad::jc_channels;
use crate::rng::{NoiseStream, StepNoise};
use crate::{Error, Result, SystemParams, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// How the coherent part of the JC dynamics is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    /// The weak scheme sees the full Hamiltonian.
    Direct,
    /// The undriven JC Hamiltonian is applied exactly in two half steps around a
    /// weak-scheme step carrying the drive and the channels.
    #[default]
    SplitJc,
}

/// Exact propagator of a Hamiltonian whose coupling graph splits into blocks of size ≤ 2.
#[derive(Debug, Clone)]
struct BlockFlow {
    singles: Vec<(usize, C64)>,
    pairs: Vec<([usize; 2], [[C64; 2]; 2])>,
}

impl BlockFlow {
    fn new(h: &CsrMatrix, tau: f64) -> Result<Self> {
        let n = h.nrows();
        let mut partner: Vec<Option<usize>> = vec![None; n];
        for (r, c, v) in h.iter() {
            if r == c || v == ZERO {
                continue;
            }
            match partner[r] {
                None => partner[r] = Some(c),
                Some(p) if p == c => {}
                Some(_) => return Err(Error::Precondition("coherent part does not split into 2x2 blocks".into())),
            }
        }
        let mut singles = Vec::new();
        let mut pairs = Vec::new();
        for r in 0..n {
            match partner[r] {
                None => singles.push((r, C64::from_polar(1.0, -h.get(r, r).re * tau))),
                Some(c) if c > r => {
                    if partner[c] != Some(r) {
                        return Err(Error::Precondition("coherent part does not split into 2x2 blocks".into()));
                    }
                    let m = [[h.get(r, r), h.get(r, c)], [h.get(c, r), h.get(c, c)]];
                    pairs.push(([r, c], expm_hermitian_2x2(m, tau)));
                }
                Some(_) => {}
            }
        }
        Ok(Self { singles, pairs })
    }

    fn apply(&self, psi: &mut [C64]) {
        for &(i, ph) in &self.singles {
            psi[i] *= ph;
        }
        for ([r, c], u) in &self.pairs {
            let (x, y) = (psi[*r], psi[*c]);
            psi[*r] = u[0][0] * x + u[0][1] * y;
            psi[*c] = u[1][0] * x + u[1][1] * y;
        }
    }
}

/// `exp(−iHτ)` for a Hermitian 2×2 `H`.
fn expm_hermitian_2x2(h: [[C64; 2]; 2], tau: f64) -> [[C64; 2]; 2] {
    let mean = 0.5 * (h[0][0].re + h[1][1].re);
    let half = 0.5 * (h[0][0].re - h[1][1].re);
    let off = h[0][1];
    let omega = (half * half + off.norm_sqr()).sqrt();
    let phase = C64::from_polar(1.0, -mean * tau);
    let (cs, sn) = ((omega * tau).cos(), (omega * tau).sin());
    let s = if omega > 0.0 { sn / omega } else { tau };
    [
        [phase * C64::new(cs, -s * half), phase * (-I * s * off)],
        [phase * (-I * s * h[1][0]), phase * C64::new(cs, s * half)],
    ]
}

/// Drift and diffusion operators of the SSE.
#[derive(Debug, Clone)]
pub struct SseModel {
    dim: usize,
    ops: Vec<CsrMatrix>,
    /// `−iH − ½ Σ L†L`
    drift_op: CsrMatrix,
    half_flow: Option<BlockFlow>,
}

impl SseModel {
    pub fn new(h: &OperatorMatrix, channels: &[(OperatorMatrix, f64)]) -> Result<Self> {
        let dim = h.dim();
        let mut ops = Vec::with_capacity(channels.len());
        let mut terms: Vec<(C64, CsrMatrix)> = vec![(-I, h.to_csr())];
        for (c, rate) in channels {
            if c.dim() != dim || c.tag() != h.tag() {
                return Err(Error::Dimension {
                    context: "channel operator",
                    expected: dim,
                    found: c.dim(),
                });
            }
            if *rate < 0.0 {
                return Err(Error::InvalidParams(format!("negative channel rate {rate}")));
            }
            let l = c.to_csr().scale(C64::new((2.0 * rate).sqrt(), 0.0));
            terms.push((C64::new(-0.5, 0.0), l.adjoint().matmul(&l)));
            ops.push(l);
        }
        let refs: Vec<(C64, &CsrMatrix)> = terms.iter().map(|(s, m)| (*s, m)).collect();
        Ok(Self {
            dim,
            ops,
            drift_op: CsrMatrix::linear_combination(&refs),
            half_flow: None,
        })
    }

    /// Model of the driven damped JC system.
    pub fn jc(p: &SystemParams, space: &TruncatedSpace, propagation: Propagation, dt: f64) -> Result<Self> {
        p.validate()?;
        let h = build_jc_hamiltonian(p, space);
        let channels = jc_channels(p, space);
        match propagation {
            Propagation::Direct => Self::new(&h, &channels),
            Propagation::SplitJc => {
                let h0 = build_jc_hamiltonian(&p.with_drive(ZERO), space);
                let mut model = Self::new(&h.sub(&h0), &channels)?;
                model.half_flow = Some(BlockFlow::new(&h0.to_csr(), 0.5 * dt)?);
                Ok(model)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.ops.len()
    }
}

/// Scratch buffers for one trajectory.
#[derive(Debug, Clone)]
pub struct Workspace {
    lpsi: Vec<Vec<C64>>,
    a0: Vec<C64>,
    a1: Vec<C64>,
    b0: Vec<Vec<C64>>,
    stage: Vec<C64>,
    base: Vec<C64>,
    bp: Vec<C64>,
    bm: Vec<C64>,
    next: Vec<C64>,
}

impl Workspace {
    pub fn new(model: &SseModel) -> Self {
        let (d, m) = (model.dim, model.ops.len());
        let v = || vec![ZERO; d];
        Self {
            lpsi: vec![v(); m],
            a0: v(),
            a1: v(),
            b0: vec![v(); m],
            stage: v(),
            base: v(),
            bp: v(),
            bm: v(),
            next: v(),
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `x_j = ⟨L_j + L_j†⟩` with `L_jψ` already in `lpsi`.
fn quadrature(psi: &[C64], lpsi: &[C64], n2: f64) -> f64 {
    2.0 * dot_c(psi, lpsi).re / n2
}

impl SseModel {
    /// `b_j(ψ)` into `out`.
    fn diffusion_into(&self, j: usize, psi: &[C64], out: &mut [C64]) {
        self.ops[j].matvec(psi, out);
        let x = quadrature(psi, out, norm_sqr(psi));
        for (o, p) in out.iter_mut().zip(psi) {
            *o -= *p * (0.5 * x);
        }
    }

    /// `a(ψ)` into `out`, and optionally every `b_j(ψ)` into `b`.
    fn terms_into(&self, psi: &[C64], lpsi: &mut [Vec<C64>], out: &mut [C64], b: Option<&mut [Vec<C64>]>) {
        let n2 = norm_sqr(psi);
        self.drift_op.matvec(psi, out);
        let mut xs = Vec::with_capacity(self.ops.len());
        for (j, l) in self.ops.iter().enumerate() {
            l.matvec(psi, &mut lpsi[j]);
            let x = quadrature(psi, &lpsi[j], n2);
            xs.push(x);
            let c = 0.125 * x * x;
            for ((o, lp), p) in out.iter_mut().zip(&lpsi[j]).zip(psi) {
                *o += *lp * (0.5 * x) - *p * c;
            }
        }
        if let Some(b) = b {
            for (j, x) in xs.into_iter().enumerate() {
                for ((o, lp), p) in b[j].iter_mut().zip(&lpsi[j]).zip(psi) {
                    *o = *lp - *p * (0.5 * x);
                }
            }
        }
    }
}

/// Drift `D1` and diffusions `D2_j` at a normalized state.
pub fn sse_terms(psi: &[C64], h: &OperatorMatrix, channels: &[(OperatorMatrix, f64)]) -> Result<(Vec<C64>, Vec<Vec<C64>>)> {
    let model = SseModel::new(h, channels)?;
    model_terms(&model, psi)
}

/// Drift and diffusions of a prepared model.
pub fn model_terms(model: &SseModel, psi: &[C64]) -> Result<(Vec<C64>, Vec<Vec<C64>>)> {
    if psi.len() != model.dim {
        return Err(Error::Dimension {
            context: "state vector",
            expected: model.dim,
            found: psi.len(),
        });
    }
    let n2 = norm_sqr(psi);
    if (n2 - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm: n2.sqrt() });
    }
    let mut ws = Workspace::new(model);
    let mut a = vec![ZERO; model.dim];
    let mut b = vec![vec![ZERO; model.dim]; model.ops.len()];
    model.terms_into(psi, &mut ws.lpsi, &mut a, Some(&mut b));
    Ok((a, b))
}

/// One step of the explicit weak order-2.0 scheme (derivative-free, multi-noise) for the
/// model's drift and diffusions, followed by renormalization. With split propagation the
/// exact coherent half steps are applied around it. `noise.normals` are standard normals.
pub fn platen_weak2_step(model: &SseModel, psi: &mut [C64], dt: f64, noise: &StepNoise, ws: &mut Workspace) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be > 0, got {dt}")));
    }
    if let Some(flow) = &model.half_flow {
        flow.apply(psi);
    }
    weak2_core(model, psi, dt, noise, ws);
    if let Some(flow) = &model.half_flow {
        flow.apply(psi);
    }
    let n = norm_sqr(psi).sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(Error::StepFailure {
            t: f64::NAN,
            reason: format!("state norm {n}"),
        });
    }
    for z in psi.iter_mut() {
        *z /= n;
    }
    Ok(())
}

fn weak2_core(model: &SseModel, psi: &mut [C64], dt: f64, noise: &StepNoise, ws: &mut Workspace) {
    let m = model.ops.len();
    let sq = dt.sqrt();
    let dw: Vec<f64> = noise.normals.iter().map(|z| z * sq).collect();
    let Workspace {
        lpsi,
        a0,
        a1,
        b0,
        stage,
        base,
        bp,
        bm,
        next,
    } = ws;
    model.terms_into(psi, lpsi, a0, Some(b0));

    // Ῡ = Y + aΔ + Σ b^j ΔW^j
    for i in 0..model.dim {
        base[i] = psi[i] + a0[i] * dt;
        let mut s = base[i];
        for j in 0..m {
            s += b0[j][i] * dw[j];
        }
        stage[i] = s;
    }
    model.terms_into(stage, lpsi, a1, None);
    for i in 0..model.dim {
        next[i] = psi[i] + (a0[i] + a1[i]) * (0.5 * dt);
    }

    for j in 0..m {
        // R̄± = Y + aΔ ± b^j √Δ
        for i in 0..model.dim {
            stage[i] = base[i] + b0[j][i] * sq;
        }
        model.diffusion_into(j, stage, bp);
        for i in 0..model.dim {
            stage[i] = base[i] - b0[j][i] * sq;
        }
        model.diffusion_into(j, stage, bm);
        let c_sum = 0.25 * dw[j];
        let c_diff = 0.25 * (dw[j] * dw[j] - dt) / sq;
        for i in 0..model.dim {
            next[i] += (bp[i] + bm[i] + b0[j][i] * 2.0) * c_sum + (bp[i] - bm[i]) * c_diff;
        }
    }

    for r in 0..m {
        if m < 2 {
            break;
        }
        for j in 0..m {
            if j == r {
                continue;
            }
            // Ū± = Y ± b^r √Δ
            for i in 0..model.dim {
                stage[i] = psi[i] + b0[r][i] * sq;
            }
            model.diffusion_into(j, stage, bp);
            for i in 0..model.dim {
                stage[i] = psi[i] - b0[r][i] * sq;
            }
            model.diffusion_into(j, stage, bm);
            // V_{r,j}: ±Δ two-point below the diagonal, antisymmetric
            let v = if r > j { noise.sign(r, j) * dt } else { -noise.sign(j, r) * dt };
            let c_sum = 0.25 * dw[j];
            let c_diff = 0.25 * (dw[j] * dw[r] + v) / sq;
            for i in 0..model.dim {
                next[i] += (bp[i] + bm[i] - b0[j][i] * 2.0) * c_sum + (bp[i] - bm[i]) * c_diff;
            }
        }
    }
    psi.copy_from_slice(next);
}

/// Observables of a normalized joint state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub a: C64,
    pub n: f64,
    pub sm: C64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub entropy: f64,
}

pub fn observe(space: &TruncatedSpace, psi: &[C64]) -> Sample {
    let nm = space.n_max();
    let (mut a, mut n, mut sm, mut pe, mut pg) = (ZERO, 0.0, ZERO, 0.0, 0.0);
    for q in [QUBIT_EXCITED, QUBIT_GROUND] {
        for k in 0..nm {
            let z = psi[space.index(q, k)];
            n += k as f64 * z.norm_sqr();
            if k > 0 {
                a += psi[space.index(q, k - 1)].conj() * z * (k as f64).sqrt();
            }
            if q == QUBIT_EXCITED {
                pe += z.norm_sqr();
                sm += psi[space.index(QUBIT_GROUND, k)].conj() * z;
            } else {
                pg += z.norm_sqr();
            }
        }
    }
    let (sx, sy, sz) = (2.0 * sm.re, -2.0 * sm.im, pe - pg);
    let r = (sx * sx + sy * sy + sz * sz).sqrt().min(1.0);
    let entropy = [0.5 * (1.0 + r), 0.5 * (1.0 - r)]
        .iter()
        .filter(|&&l| l > 1e-14)
        .map(|&l| -l * l.ln())
        .sum();
    Sample { a, n, sm, sx, sy, sz, entropy }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub t_final: f64,
    pub dt: f64,
    pub sample_stride: usize,
    pub seed: u64,
    #[serde(default)]
    pub trajectory: u64,
    #[serde(default)]
    pub propagation: Propagation,
}

impl TrajectoryConfig {
    pub fn new(t_final: f64, dt: f64, sample_stride: usize, seed: u64) -> Self {
        Self {
            t_final,
            dt,
            sample_stride,
            seed,
            trajectory: 0,
            propagation: Propagation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !(self.dt > 0.0) || self.sample_stride == 0 {
            return Err(Error::Config(format!(
                "need t_final > 0, dt > 0, sample_stride >= 1 (got {}, {}, {})",
                self.t_final, self.dt, self.sample_stride
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_final / self.dt).round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub params: SystemParams,
    pub n_max: usize,
    pub seed: u64,
    pub trajectory: u64,
    pub dt: f64,
    pub sample_stride: usize,
    pub times: Vec<f64>,
    pub a: Vec<C64>,
    pub n: Vec<f64>,
    pub sm: Vec<C64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub sz: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl TrajectoryRecord {
    fn empty(p: &SystemParams, space: &TruncatedSpace, cfg: &TrajectoryConfig) -> Self {
        Self {
            params: *p,
            n_max: space.n_max(),
            seed: cfg.seed,
            trajectory: cfg.trajectory,
            dt: cfg.dt,
            sample_stride: cfg.sample_stride,
            times: Vec::new(),
            a: Vec::new(),
            n: Vec::new(),
            sm: Vec::new(),
            sx: Vec::new(),
            sy: Vec::new(),
            sz: Vec::new(),
            entropy: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, s: Sample) {
        self.times.push(t);
        self.a.push(s.a);
        self.n.push(s.n);
        self.sm.push(s.sm);
        self.sx.push(s.sx);
        self.sy.push(s.sy);
        self.sz.push(s.sz);
        self.entropy.push(s.entropy);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_stride as f64
    }
}

/// Vacuum cavity, ground-state qubit.
pub fn initial_state(space: &TruncatedSpace) -> Vec<C64> {
    crate::hilbert::basis_state(space, QUBIT_GROUND, 0)
}

/// Integrate one trajectory from `psi0`, calling `observer(t, ψ)` at every stride.
pub fn run_trajectory_from<O>(p: &SystemParams, space: &TruncatedSpace, cfg: &TrajectoryConfig, psi0: &[C64], mut observer: O) -> Result<()>
where
    O: FnMut(f64, &[C64]),
{
    cfg.validate()?;
    let model = SseModel::jc(p, space, cfg.propagation, cfg.dt)?;
    if psi0.len() != model.dim() {
        return Err(Error::Dimension {
            context: "initial state",
            expected: model.dim(),
            found: psi0.len(),
        });
    }
    let mut psi = psi0.to_vec();
    let n0 = norm_sqr(&psi).sqrt();
    if (n0 - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { norm: n0 });
    }
    let mut ws = Workspace::new(&model);
    let mut stream = NoiseStream::new(cfg.seed, cfg.trajectory, model.channels());
    let mut noise = StepNoise::zeros(model.channels());
    observer(0.0, &psi);
    for step in 0..cfg.steps() {
        stream.at_step(step, &mut noise);
        let t = (step + 1) as f64 * cfg.dt;
        platen_weak2_step(&model, &mut psi, cfg.dt, &noise, &mut ws).map_err(|e| match e {
            Error::StepFailure { reason, .. } => Error::StepFailure { t, reason },
            other => other,
        })?;
        if (step + 1) % cfg.sample_stride as u64 == 0 {
            observer(t, &psi);
        }
    }
    Ok(())
}

/// One trajectory from vacuum and the ground state, recording every observable.
pub fn run_trajectory(p: &SystemParams, space: &TruncatedSpace, cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    let mut rec = TrajectoryRecord::empty(p, space, cfg);
    run_trajectory_from(p, space, cfg, &initial_state(space), |t, psi| rec.push(t, observe(space, psi)))?;
    Ok(rec)
}

fn par_map<T: Send, F: Fn(u64) -> Result<T> + Sync + Send>(n: u64, f: F) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// `n_traj` trajectories with ids `0..n_traj`.
pub fn run_ensemble(p: &SystemParams, space: &TruncatedSpace, cfg: &TrajectoryConfig, n_traj: u64) -> Result<Vec<TrajectoryRecord>> {
    par_map(n_traj, |id| {
        let c = TrajectoryConfig { trajectory: id, ..cfg.clone() };
        run_trajectory(p, space, &c)
    })
}

/// Ensemble mean of `|ψ⟩⟨ψ|` at every sampled time.
pub fn ensemble_density(p: &SystemParams, space: &TruncatedSpace, cfg: &TrajectoryConfig, n_traj: u64) -> Result<Vec<DMatrix<C64>>> {
    let per = par_map(n_traj, |id| {
        let c = TrajectoryConfig { trajectory: id, ..cfg.clone() };
        let mut out: Vec<DMatrix<C64>> = Vec::new();
        run_trajectory_from(p, space, &c, &initial_state(space), |_, psi| {
            let v = nalgebra::DVector::from_column_slice(psi);
            out.push(&v * v.adjoint());
        })?;
        Ok(out)
    })?;
    let mut acc = per.first().cloned().unwrap_or_default();
    for traj in per.iter().skip(1) {
        for (a, b) in acc.iter_mut().zip(traj) {
            *a += b;
        }
    }
    let scale = 1.0 / n_traj.max(1) as f64;
    for a in &mut acc {
        *a *= C64::new(scale, 0.0);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bright,
    Dim,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub label: Label,
    pub t_start: f64,
    pub t_end: f64,
    pub mean_n: f64,
    pub mean_sz: f64,
}

impl Episode {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub n_dark: f64,
    pub n_mid: f64,
    pub n_bright: f64,
    pub sz_dark: f64,
    pub sz_dim: f64,
    /// Shortest kept episode, in time units.
    pub min_duration: f64,
}

impl Thresholds {
    pub fn new(n_dark: f64, n_mid: f64, n_bright: f64, kappa: f64) -> Result<Self> {
        let t = Self {
            n_dark,
            n_mid,
            n_bright,
            sz_dark: 0.0,
            sz_dim: -0.5,
            min_duration: 2.0 / (2.0 * kappa),
        };
        t.validate()?;
        Ok(t)
    }

    /// Photon thresholds from the stable mean-field levels: `n_bright` halfway between
    /// the dim and bright levels, `n_mid` halfway between the dim level and `n_bright`.
    pub fn from_levels(n_dim: f64, n_bright_level: f64, kappa: f64) -> Result<Self> {
        let n_bright = 0.5 * (n_dim + n_bright_level);
        let n_dark = 1.0f64.min(0.5 * n_bright);
        let n_mid = (0.5 * (n_dim + n_bright)).max(n_dark);
        Self::new(n_dark, n_mid, n_bright, kappa)
    }

    /// Levels from the damped mean-field S-curve at `p`, when it has two stable roots.
    pub fn from_mean_field(p: &SystemParams) -> Result<Self> {
        let roots = if p.gamma > 0.0 {
            crate::meanfield::mb_steady_roots(p, &crate::meanfield::default_n_grid(p))?
        } else {
            crate::meanfield::dispersive_branches(p, p.delta_c, &crate::meanfield::default_n_grid(p))?.roots.remove(0)
        };
        let stable: Vec<f64> = roots
            .iter()
            .filter(|r| r.stability != crate::meanfield::Stability::Unstable)
            .map(|r| r.n)
            .collect();
        if stable.len() < 2 {
            return Err(Error::Config("mean-field response is single valued; supply photon thresholds".into()));
        }
        Self::from_levels(stable[0], stable[stable.len() - 1], p.kappa)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_dark <= self.n_mid && self.n_mid < self.n_bright && self.min_duration >= 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "thresholds must satisfy n_dark <= n_mid < n_bright, got {} {} {}",
                self.n_dark, self.n_mid, self.n_bright
            )));
        }
        Ok(())
    }

    fn label(&self, n: f64, sz: f64) -> Option<Label> {
        if sz > self.sz_dark && n < self.n_dark {
            Some(Label::Dark)
        } else if sz < self.sz_dim && n < self.n_mid {
            Some(Label::Dim)
        } else if n > self.n_bright {
            Some(Label::Bright)
        } else {
            None
        }
    }
}

/// Label samples, close single-sample gaps, and merge runs into episodes.
pub fn classify_states(rec: &TrajectoryRecord, thr: &Thresholds) -> Result<Vec<Episode>> {
    thr.validate()?;
    if rec.is_empty() {
        return Err(Error::EmptyStatistics("empty trajectory record".into()));
    }
    let mut labels: Vec<Option<Label>> = rec.n.iter().zip(&rec.sz).map(|(&n, &sz)| thr.label(n, sz)).collect();
    for i in 1..labels.len().saturating_sub(1) {
        if labels[i - 1].is_some() && labels[i - 1] == labels[i + 1] && labels[i] != labels[i - 1] {
            labels[i] = labels[i - 1];
        }
    }
    let step = if rec.len() > 1 { rec.times[1] - rec.times[0] } else { rec.sample_interval() };
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let Some(label) = labels[i] else {
            i += 1;
            continue;
        };
        let start = i;
        while i < labels.len() && labels[i] == Some(label) {
            i += 1;
        }
        let span = start..i;
        let len = span.len() as f64;
        let ep = Episode {
            label,
            t_start: rec.times[start],
            t_end: rec.times[i - 1] + step,
            mean_n: rec.n[span.clone()].iter().sum::<f64>() / len,
            mean_sz: rec.sz[span].iter().sum::<f64>() / len,
        };
        if ep.duration() >= thr.min_duration {
            out.push(ep);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn mean(&self) -> f64 {
        let s: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * 0.5 * (self.bin_edges[i] + self.bin_edges[i + 1]))
            .sum();
        s / self.total as f64
    }
}

/// Durations of `label` episodes in units of `1/κ`, binned from zero.
pub fn lifetime_histogram(episodes: &[Episode], label: Label, bin_width: f64, kappa: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) {
        return Err(Error::Config(format!("bin width must be > 0, got {bin_width}")));
    }
    let durations: Vec<f64> = episodes.iter().filter(|e| e.label == label).map(|e| e.duration() * kappa).collect();
    if durations.is_empty() {
        return Err(Error::EmptyStatistics(format!("no {label:?} episodes")));
    }
    let max = durations.iter().copied().fold(0.0, f64::max);
    let bins = (max / bin_width).floor() as usize + 1;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| i as f64 * bin_width).collect();
    let mut counts = vec![0u64; bins];
    for d in &durations {
        counts[((d / bin_width).floor() as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram {
        bin_edges,
        counts,
        total: durations.len() as u64,
    })
}

/// Mean duration of `label` episodes in time units.
pub fn mean_lifetime(episodes: &[Episode], label: Label) -> Option<(f64, usize)> {
    let d: Vec<f64> = episodes.iter().filter(|e| e.label == label).map(Episode::duration).collect();
    (!d.is_empty()).then(|| (d.iter().sum::<f64>() / d.len() as f64, d.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Angular frequency relative to the drive; a component `e^{−iωt}` appears at `+ω`.
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn peak(&self) -> (usize, f64) {
        let i = (0..self.magnitudes.len())
            .max_by(|&a, &b| self.magnitudes[a].total_cmp(&self.magnitudes[b]))
            .unwrap_or(0);
        (i, self.freqs[i])
    }

    pub fn peak_value(&self) -> f64 {
        self.magnitudes[self.peak().0]
    }

    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }
}

/// Hann-windowed DFT magnitude, normalized so that a constant unit series peaks at 1.
pub fn spectrum(series: &[C64], dt_sample: f64) -> Result<Spectrum> {
    let n = series.len();
    if n < 2 || !(dt_sample > 0.0) {
        return Err(Error::Precondition("spectrum needs at least two samples and dt > 0".into()));
    }
    let w: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect();
    let wsum: f64 = w.iter().sum();
    // the inverse kernel e^{+iωt} puts a component e^{−iωt} at +ω
    let mut buf: Vec<C64> = series.iter().zip(&w).map(|(x, wk)| x * *wk).collect();
    rustfft::FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dw = 2.0 * std::f64::consts::PI / (n as f64 * dt_sample);
    let mut pairs: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let kk = if 2 * k >= n { k as f64 - n as f64 } else { k as f64 };
            (kk * dw, x.norm() / wsum)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (freqs, magnitudes) = pairs.into_iter().unzip();
    Ok(Spectrum { freqs, magnitudes })
}

/// `x(t) e^{−iωt}`: moves a spectral line from `ω₀` to `ω₀ + ω`.
pub fn shift_frequency(series: &[C64], times: &[f64], omega: f64) -> Vec<C64> {
    series.iter().zip(times).map(|(x, t)| x * C64::from_polar(1.0, -omega * t)).collect()
}

/// First sample index after the spectral transient `10/(2κ)`.
pub fn steady_window_start(times: &[f64], kappa: f64) -> usize {
    let t0 = times.first().copied().unwrap_or(0.0) + 10.0 / (2.0 * kappa);
    times.partition_point(|&t| t < t0)
}

/// `⟨σ₋(t)⟩` with the bare qubit rotation removed, from the steady window.
pub fn qubit_coherence_series(rec: &TrajectoryRecord) -> (Vec<f64>, Vec<C64>) {
    let start = steady_window_start(&rec.times, rec.params.kappa);
    let times = rec.times[start..].to_vec();
    let series = shift_frequency(&rec.sm[start..], &times, rec.params.delta_q);
    (times, series)
}

/// Dispersive estimate of where the qubit-flip line of [`qubit_coherence_series`] sits.
///
/// The dressed `|e,0⟩` level is pushed down by `(√(δ²+4g²) − δ)/2`, and the coherent
/// cavity response in the two qubit branches, `α_± = ε/(κ − i(Δc ± λ))`, adds the
/// ac-Stark term `−2λ Re(α₋ α₊*)`. The undriven value is `−g²/δ` to leading order.
pub fn dark_line_estimate(p: &SystemParams) -> Result<f64> {
    let delta = p.delta();
    let lambda = p.lambda()?;
    let lamb = 0.5 * ((delta * delta + 4.0 * p.g * p.g).sqrt() - delta);
    let branch = |shift: f64| p.eps_d / C64::new(p.kappa, -(p.delta_c + shift));
    let overlap = branch(-lambda) * branch(lambda).conj();
    Ok(-lamb - 2.0 * lambda * overlap.re)
}

/// Joint state vector as a density matrix (for ensemble comparisons).
pub fn projector(psi: &[C64]) -> Result<crate::lindblad::DensityMatrix> {
    crate::lindblad::DensityMatrix::from_pure(SpaceTag::Joint, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_state, JointOps};
    use crate::lindblad::{jc_liouvillian, DensityMatrix};
    use rand::{Rng, SeedableRng};

    fn small() -> (SystemParams, TruncatedSpace) {
        let p = SystemParams::with_qubit_below(1.3, 4.0, 0.8, 0.7, 0.5, 0.3);
        (p, TruncatedSpace::new(8).unwrap())
    }

    fn random_state(dim: usize, seed: u64) -> Vec<C64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        // damp high Fock levels so the truncation edge is quiet
        let n = dim / 2;
        for (i, z) in v.iter_mut().enumerate() {
            *z *= (-0.4 * (i % n) as f64).exp();
        }
        let nrm = norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|z| *z /= nrm);
        v
    }

    fn outer(u: &[C64], v: &[C64]) -> DMatrix<C64> {
        DMatrix::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }

    #[test]
    fn quiet_vacuum_has_no_diffusion() {
        let (p, s) = small();
        let q = p.with_drive(ZERO);
        let h = build_jc_hamiltonian(&q, &s);
        let psi = basis_state(&s, QUBIT_GROUND, 0);
        let (a, b) = sse_terms(&psi, &h, &jc_channels(&q, &s)).unwrap();
        let want: Vec<C64> = h.apply(&psi).iter().map(|z| -I * z).collect();
        for (x, y) in a.iter().zip(&want) {
            assert!((x - y).norm() < 1e-15);
        }
        assert!(b.iter().all(|v| v.iter().all(|z| z.norm() < 1e-15)));
        let mut un = psi.clone();
        un[0] = C64::new(0.1, 0.0);
        assert!(matches!(sse_terms(&un, &h, &[]), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn drift_and_diffusion_reproduce_liouvillian() {
        let (p, s) = small();
        let h = build_jc_hamiltonian(&p, &s);
        let ch = jc_channels(&p, &s);
        let l = jc_liouvillian(&p, &s).unwrap();
        for seed in 0..4 {
            let psi = random_state(s.dim(), seed);
            let (a, b) = sse_terms(&psi, &h, &ch).unwrap();
            let mut drho = outer(&a, &psi) + outer(&psi, &a);
            for bj in &b {
                drho += outer(bj, bj);
            }
            let rho = DensityMatrix::from_pure(SpaceTag::Joint, &psi).unwrap();
            let lm = DMatrix::from_column_slice(s.dim(), s.dim(), &l.apply(&rho.to_vec()));
            assert!((drho - lm).iter().all(|z| z.norm() < 1e-12));
            // Itô norm balance
            let bal = 2.0 * dot_c(&psi, &a).re + b.iter().map(|v| norm_sqr(v)).sum::<f64>();
            assert!(bal.abs() < 1e-12, "{bal}");
        }
    }

    #[test]
    fn sampled_increments_average_to_liouvillian() {
        let (p, s) = small();
        let h = build_jc_hamiltonian(&p, &s);
        let ch = jc_channels(&p, &s);
        let l = jc_liouvillian(&p, &s).unwrap();
        let psi = random_state(s.dim(), 11);
        let (a, b) = sse_terms(&psi, &h, &ch).unwrap();
        let dt = 1e-3;
        let mut stream = NoiseStream::new(5, 0, b.len());
        let samples = 100_000u64;
        let mut acc = DMatrix::<C64>::zeros(s.dim(), s.dim());
        let mut acc2 = DMatrix::<f64>::zeros(s.dim(), s.dim());
        let base = outer(&psi, &psi);
        for k in 0..samples {
            let e = stream.step_noise(k);
            let mut next = psi.clone();
            for i in 0..s.dim() {
                next[i] += a[i] * dt;
                for (j, bj) in b.iter().enumerate() {
                    next[i] += bj[i] * (e.normals[j] * dt.sqrt());
                }
            }
            let d = outer(&next, &next) - &base;
            acc2 += d.map(|z| z.norm_sqr());
            acc += d;
        }
        let nf = samples as f64;
        acc /= C64::new(nf, 0.0);
        let rho = DensityMatrix::from_pure(SpaceTag::Joint, &psi).unwrap();
        let want = DMatrix::from_column_slice(s.dim(), s.dim(), &l.apply(&rho.to_vec())) * C64::new(dt, 0.0);
        // 5 empirical standard errors per element plus the O(dt²) drift bias
        let bias = 2.0 * norm_sqr(&a) * dt * dt;
        let mut worst = 0.0f64;
        for r in 0..s.dim() {
            for c in 0..s.dim() {
                let var = (acc2[(r, c)] / nf - acc[(r, c)].norm_sqr()).max(0.0);
                let tol = 5.0 * (var / nf).sqrt() + bias;
                worst = worst.max((acc[(r, c)] - want[(r, c)]).norm() / tol);
            }
        }
        let (err, tol) = (worst, 1.0);
        assert!(err < tol, "{err} vs {tol}");
    }

    #[test]
    fn zero_noise_empty_model_is_identity() {
        let s = TruncatedSpace::new(4).unwrap();
        let h = OperatorMatrix::zeros(SpaceTag::Joint, s.dim()).unwrap();
        let model = SseModel::new(&h, &[]).unwrap();
        let mut ws = Workspace::new(&model);
        let psi0 = random_state(s.dim(), 3);
        let mut psi = psi0.clone();
        platen_weak2_step(&model, &mut psi, 0.1, &StepNoise::zeros(0), &mut ws).unwrap();
        for (x, y) in psi.iter().zip(&psi0) {
            assert!((x - y).norm() < 1e-15);
        }
        assert!(platen_weak2_step(&model, &mut psi, 0.0, &StepNoise::zeros(0), &mut ws).is_err());
    }

    #[test]
    fn block_flow_matches_dense_exponential() {
        let (p, s) = small();
        let h0 = build_jc_hamiltonian(&p.with_drive(ZERO), &s);
        let tau = 0.37;
        let flow = BlockFlow::new(&h0.to_csr(), tau).unwrap();
        let dense = (h0.to_dense() * C64::new(0.0, -tau)).exp();
        let psi0 = random_state(s.dim(), 8);
        let mut psi = psi0.clone();
        flow.apply(&mut psi);
        let want = &dense * nalgebra::DVector::from_column_slice(&psi0);
        for (x, y) in psi.iter().zip(want.iter()) {
            assert!((x - y).norm() < 1e-13);
        }
        // the drive couples neighbouring manifolds, so the full H is rejected
        assert!(BlockFlow::new(&build_jc_hamiltonian(&p, &s).to_csr(), tau).is_err());
    }

    #[test]
    fn observables_match_operators() {
        let (_, s) = small();
        let ops = JointOps::new(&s);
        let psi = random_state(s.dim(), 21);
        let o = observe(&s, &psi);
        let ev = |op: &OperatorMatrix| op.expectation_pure(&psi);
        assert!((o.a - ev(&ops.a)).norm() < 1e-14);
        assert!((o.n - ev(&ops.n).re).abs() < 1e-14);
        assert!((o.sm - ev(&ops.sm)).norm() < 1e-14);
        assert!((o.sx - ev(&ops.sx).re).abs() < 1e-14);
        assert!((o.sy - ev(&ops.sy).re).abs() < 1e-14);
        assert!((o.sz - ev(&ops.sz).re).abs() < 1e-14);
        let rho = DensityMatrix::from_pure(SpaceTag::Joint, &psi).unwrap();
        let rq = crate::lindblad::partial_trace(&rho, crate::hilbert::Factor::Qubit).unwrap();
        assert!((o.entropy - crate::lindblad::von_neumann_entropy(&rq)).abs() < 1e-10);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (p, s) = small();
        let cfg = TrajectoryConfig::new(2.0, 0.01, 5, 99);
        let a = run_trajectory(&p, &s, &cfg).unwrap();
        let b = run_trajectory(&p, &s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 41);
        let c = run_trajectory(&p, &s, &TrajectoryConfig { seed: 100, ..cfg.clone() }).unwrap();
        assert_ne!(a.n, c.n);
        for i in 0..a.len() {
            assert!(a.sx[i].powi(2) + a.sy[i].powi(2) + a.sz[i].powi(2) <= 1.0 + 1e-6);
        }
        assert!(run_trajectory(&p, &s, &TrajectoryConfig { dt: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn excited_qubit_relaxes() {
        let (p, s) = small();
        let q = p.with_drive(ZERO);
        let cfg = TrajectoryConfig::new(20.0, 0.01, 100, 1);
        let mut last = 0.0;
        run_trajectory_from(&q, &s, &cfg, &basis_state(&s, QUBIT_EXCITED, 0), |_, psi| last = observe(&s, psi).sz).unwrap();
        assert!(last < -0.99, "{last}");
    }

    fn linear_cavity_error(prop: Propagation, dt: f64, n_traj: u64) -> C64 {
        let p = SystemParams {
            g: 0.0,
            ..SystemParams::with_qubit_below(2.0, 5.0, 0.0, 1.5, 1.0, 0.0)
        };
        let s = TruncatedSpace::new(14).unwrap();
        let t = 1.0;
        let z = C64::new(p.kappa, -p.delta_c);
        let exact = p.eps_d / z * (1.0 - (-z * t).exp());
        let cfg = TrajectoryConfig {
            propagation: prop,
            ..TrajectoryConfig::new(t, dt, (t / dt).round() as usize, 3)
        };
        let recs = run_ensemble(&p, &s, &cfg, n_traj).unwrap();
        let mean: C64 = recs.iter().map(|r| *r.a.last().unwrap()).sum::<C64>() / n_traj as f64;
        mean - exact
    }

    #[test]
    fn weak_error_shrinks_quadratically() {
        for prop in [Propagation::Direct, Propagation::SplitJc] {
            let dts = [0.2, 0.1, 0.05, 0.025];
            let errs: Vec<f64> = dts.iter().map(|&dt| linear_cavity_error(prop, dt, 8).norm()).collect();
            let xs: Vec<f64> = dts.iter().map(|d: &f64| d.ln()).collect();
            let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
            let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
            let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
            assert!((slope - 2.0).abs() < 0.3, "{prop:?}: errors {errs:?}, slope {slope}");
        }
    }

    fn synthetic(levels: &[(f64, f64, usize)]) -> TrajectoryRecord {
        let p = SystemParams::with_qubit_below(1.0, 10.0, 1.0, 1.0, 1.0, 0.0);
        let s = TruncatedSpace::new(4).unwrap();
        let mut rec = TrajectoryRecord::empty(&p, &s, &TrajectoryConfig::new(1.0, 0.1, 1, 0));
        let mut t = 0.0;
        for &(n, sz, len) in levels {
            for _ in 0..len {
                rec.push(
                    t,
                    Sample {
                        a: ZERO,
                        n,
                        sm: ZERO,
                        sx: 0.0,
                        sy: 0.0,
                        sz,
                        entropy: 0.0,
                    },
                );
                t += 0.1;
            }
        }
        rec
    }

    #[test]
    fn three_plateaus_recovered() {
        let rec = synthetic(&[(2.0, -0.9, 50), (30.0, -0.6, 80), (0.2, 0.95, 60), (2.1, -0.9, 40)]);
        let thr = Thresholds::new(1.0, 5.0, 15.0, 1.0).unwrap();
        let eps = classify_states(&rec, &thr).unwrap();
        let labels: Vec<Label> = eps.iter().map(|e| e.label).collect();
        assert_eq!(labels, [Label::Dim, Label::Bright, Label::Dark, Label::Dim]);
        let bounds = [(0.0, 5.0), (5.0, 13.0), (13.0, 19.0), (19.0, 23.0)];
        for (e, (a, b)) in eps.iter().zip(bounds) {
            assert!((e.t_start - a).abs() <= 0.1 + 1e-9 && (e.t_end - b).abs() <= 0.1 + 1e-9, "{e:?}");
        }
        for w in eps.windows(2) {
            assert!(w[0].t_end <= w[1].t_start + 1e-12);
        }
        let dark = eps[2];
        assert!((dark.mean_n - 0.2).abs() < 1e-12 && (dark.mean_sz - 0.95).abs() < 1e-12);
    }

    #[test]
    fn single_sample_gaps_close_and_short_runs_drop() {
        let rec = synthetic(&[(30.0, -1.0, 20), (10.0, -1.0, 1), (30.0, -1.0, 20), (0.1, 0.9, 3)]);
        let thr = Thresholds::new(1.0, 5.0, 15.0, 1.0).unwrap();
        let eps = classify_states(&rec, &thr).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].label, Label::Bright);
        assert!((eps[0].duration() - 4.1).abs() < 1e-9);
        let constant = synthetic(&[(30.0, -0.5, 100)]);
        assert_eq!(classify_states(&constant, &thr).unwrap().len(), 1);
        assert!(Thresholds::new(2.0, 1.0, 15.0, 1.0).is_err());
        assert!(Thresholds::new(1.0, 15.0, 15.0, 1.0).is_err());
    }

    #[test]
    fn histogram_counts() {
        let ep = |len: f64| Episode {
            label: Label::Dark,
            t_start: 1.0,
            t_end: 1.0 + len,
            mean_n: 0.1,
            mean_sz: 0.9,
        };
        let h = lifetime_histogram(&[ep(7.0 / 2.0)], Label::Dark, 1.0, 2.0).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
        assert_eq!(h.counts[7], 1);
        assert_eq!((h.bin_edges[7], h.bin_edges[8]), (7.0, 8.0));
        let many: Vec<Episode> = (1..20).map(|k| ep(k as f64 * 0.37)).collect();
        let h = lifetime_histogram(&many, Label::Dark, 0.5, 1.0).unwrap();
        assert_eq!(h.total, 19);
        assert_eq!(h.counts.iter().sum::<u64>(), 19);
        assert_eq!(h.counts.len() + 1, h.bin_edges.len());
        assert!(matches!(lifetime_histogram(&many, Label::Bright, 0.5, 1.0), Err(Error::EmptyStatistics(_))));
    }

    #[test]
    fn spectrum_conventions() {
        let dt = 0.05;
        let n = 512;
        let flat = vec![C64::new(1.0, 0.0); n];
        let sp = spectrum(&flat, dt).unwrap();
        assert_eq!(sp.peak().1, 0.0);
        assert!((sp.peak_value() - 1.0).abs() < 1e-12);
        let w = sp.bin_width();
        let omega0 = 37.3 * w;
        let tone: Vec<C64> = (0..n).map(|k| C64::from_polar(1.0, -omega0 * k as f64 * dt)).collect();
        let sp = spectrum(&tone, dt).unwrap();
        assert!((sp.peak().1 - omega0).abs() <= w);
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let moved = shift_frequency(&tone, &times, -omega0);
        assert!(spectrum(&moved, dt).unwrap().peak().1.abs() < 1e-12);
        assert!(spectrum(&flat[..1], dt).is_err());
    }

    #[test]
    fn undriven_qubit_line_at_dressed_shift() {
        let p = SystemParams::with_qubit_below(3.0, 200.0, 30.0, 0.0, 0.2, 0.0);
        let space = TruncatedSpace::new(6).unwrap();
        let e = basis_state(&space, QUBIT_EXCITED, 0);
        let g = basis_state(&space, QUBIT_GROUND, 0);
        let psi: Vec<C64> = e.iter().zip(&g).map(|(a, b)| (a + b) * C64::new(0.5f64.sqrt(), 0.0)).collect();
        let cfg = TrajectoryConfig::new(40.0, 1e-3, 5, 3);
        let mut times = Vec::new();
        let mut sm = Vec::new();
        run_trajectory_from(&p, &space, &cfg, &psi, |t, s| {
            times.push(t);
            sm.push(observe(&space, s).sm);
        })
        .unwrap();
        let sp = spectrum(&shift_frequency(&sm, &times, p.delta_q), times[1] - times[0]).unwrap();
        let expected = dark_line_estimate(&p).unwrap();
        assert!((expected + 0.5 * ((200.0f64 * 200.0 + 3600.0).sqrt() - 200.0)).abs() < 1e-12);
        assert!((sp.peak().1 - expected).abs() <= 2.0 * sp.bin_width(), "{} vs {expected}", sp.peak().1);
    }
}
