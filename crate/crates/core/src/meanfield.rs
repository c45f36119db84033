//! Maxwell-Bloch and neoclassical mean-field equations, steady-state S-curves,
//! dispersive-bistability branches and the bistability leaf.
//!
//! Amplitudes here follow the field convention of the neoclassical equations, in which a
//! linear cavity settles at `α = −iε/(κ − iΔc)`. Master-equation expectations of `a` map
//! onto it through [`to_mean_field_frame`].

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::ode::{self, OdeOptions};
use crate::{Error, Result, SystemParams, C64};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    /// `⟨a⟩`
    pub alpha: C64,
    /// `⟨σ−⟩`
    pub mu: C64,
    /// `⟨σz⟩`
    pub zeta: f64,
}

impl MeanFieldState {
    pub fn new(alpha: C64, mu: C64, zeta: f64) -> Self {
        Self { alpha, mu, zeta }
    }

    /// Empty cavity, qubit in the ground state.
    pub fn ground() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), -1.0)
    }

    pub fn photons(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// `4|μ|² + ζ²`, conserved when `γ = 0`.
    pub fn bloch_length_sq(&self) -> f64 {
        4.0 * self.mu.norm_sqr() + self.zeta * self.zeta
    }

    /// `(Re α, Im α, Re μ, Im μ, ζ)`
    pub fn to_real(self) -> Vector5<f64> {
        Vector5::new(self.alpha.re, self.alpha.im, self.mu.re, self.mu.im, self.zeta)
    }

    fn norm_inf(&self) -> f64 {
        self.alpha.norm().max(self.mu.norm()).max(self.zeta.abs())
    }
}

/// Map a master-equation amplitude `⟨a⟩` onto the mean-field convention.
pub fn to_mean_field_frame(a: C64) -> C64 {
    -I * a
}

/// Inverse of [`to_mean_field_frame`].
pub fn from_mean_field_frame(alpha: C64) -> C64 {
    I * alpha
}

/// Maxwell-Bloch right-hand side with radiative damping:
/// `α' = −(κ − iΔc)α − igμ − iε`, `μ' = (iΔq − γ/2)μ + igαζ`,
/// `ζ' = −γ(ζ+1) + 2ig(α*μ − αμ*)`.
pub fn maxwell_bloch_rhs(s: &MeanFieldState, p: &SystemParams) -> MeanFieldState {
    let dalpha = -C64::new(p.kappa, -p.delta_c) * s.alpha - I * p.g * s.mu - I * p.eps_d;
    let dmu = C64::new(-0.5 * p.gamma, p.delta_q) * s.mu + I * p.g * s.alpha * s.zeta;
    let cross = s.alpha.conj() * s.mu - s.alpha * s.mu.conj();
    let dzeta = -p.gamma * (s.zeta + 1.0) + (2.0 * I * p.g * cross).re;
    MeanFieldState::new(dalpha, dmu, dzeta)
}

/// Integrate the Maxwell-Bloch equations, reporting the state at each `t_grid` entry.
pub fn integrate_mb(s0: &MeanFieldState, p: &SystemParams, t_grid: &[f64]) -> Result<Vec<MeanFieldState>> {
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-13,
        ..OdeOptions::default()
    };
    integrate_mb_with(s0, p, t_grid, &opts)
}

pub fn integrate_mb_with(s0: &MeanFieldState, p: &SystemParams, t_grid: &[f64], opts: &OdeOptions) -> Result<Vec<MeanFieldState>> {
    p.validate()?;
    let y0 = [s0.alpha, s0.mu, C64::new(s0.zeta, 0.0)];
    let mut out = Vec::with_capacity(t_grid.len());
    ode::integrate_with(
        |_, y, dy| {
            let d = maxwell_bloch_rhs(&MeanFieldState::new(y[0], y[1], y[2].re), p);
            dy[0] = d.alpha;
            dy[1] = d.mu;
            dy[2] = C64::new(d.zeta, 0.0);
        },
        &y0,
        t_grid,
        opts,
        |_, _, y| out.push(MeanFieldState::new(y[0], y[1], y[2].re)),
    )?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeoclassicalSteady {
    pub mu_mag: f64,
    /// `(−√(1 − 4|μ|²), +√(1 − 4|μ|²))`
    pub zeta: (f64, f64),
}

/// Qubit steady state of the neoclassical equations for a given field amplitude.
pub fn neoclassical_steady(p: &SystemParams, alpha: C64) -> Result<NeoclassicalSteady> {
    if p.delta_q == 0.0 {
        return Err(Error::Precondition("neoclassical steady state needs a nonzero qubit detuning".into()));
    }
    let ga = p.g * alpha.norm();
    let mu_mag = ga / (p.delta_q * p.delta_q + 4.0 * ga * ga).sqrt();
    let z = (1.0 - 4.0 * mu_mag * mu_mag).max(0.0).sqrt();
    Ok(NeoclassicalSteady { mu_mag, zeta: (-z, z) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

/// One steady root on a response curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyRoot {
    pub n: f64,
    pub alpha: C64,
    pub stability: Stability,
    /// Full mean-field state where the qubit variables are known.
    pub state: Option<MeanFieldState>,
}

/// Steady roots for each value of a swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub sweep_name: String,
    pub sweep: Vec<f64>,
    /// `roots[i]` holds the roots at `sweep[i]`, ascending in `n`.
    pub roots: Vec<Vec<SteadyRoot>>,
}

impl BranchSet {
    pub fn max_roots(&self) -> usize {
        self.roots.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Indices of sweep points with more than one root.
    pub fn multistable(&self) -> Vec<usize> {
        (0..self.sweep.len()).filter(|&i| self.roots[i].len() > 1).collect()
    }
}

/// Logarithmic bracketing grid of 10³ points from a tenth of the smallest admissible
/// photon number, `|ε|²/(κ² + (|Δc| + g²/|δ|)²)`, up to `10 (|ε|/κ)²`.
pub fn default_n_grid(p: &SystemParams) -> Vec<f64> {
    let e2 = p.eps_d.norm_sqr();
    let top = (10.0 * e2 / (p.kappa * p.kappa)).max(1e-3);
    let shift = p.delta_c.abs() + p.g * p.g / p.delta().abs().max(f64::MIN_POSITIVE);
    let bottom = (0.1 * e2 / (p.kappa * p.kappa + shift * shift)).clamp(1e-300, 1e-6);
    log_grid(bottom, top, 1000)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp()).collect()
}

fn check_grid(n_grid: &[f64]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::InvalidParams("empty photon-number grid".into()));
    }
    if n_grid.windows(2).any(|w| !(w[1] > w[0])) || n_grid[0] < 0.0 {
        return Err(Error::InvalidParams("photon-number grid must be nonnegative and ascending".into()));
    }
    Ok(())
}

/// Bisection on a bracketed sign change.
fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= 4.0 * f64::EPSILON * hi.abs() {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All sign changes of `f` over the grid, refined by bisection.
fn grid_roots<F: Fn(f64) -> f64>(f: F, grid: &[f64]) -> Vec<f64> {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if vals[i] == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if i + 1 < grid.len() && vals[i + 1] != 0.0 && (vals[i] > 0.0) != (vals[i + 1] > 0.0) {
            roots.push(bisect(&f, grid[i], grid[i + 1]));
        }
    }
    roots
}

/// Dispersive-bistability response (qubit relaxation neglected):
/// the effective detuning `Δc − (g²/δ)(1 + 4g²n/δ²)^{−1/2}`.
fn eq6_detuning(p: &SystemParams, delta_c: f64, n: f64) -> f64 {
    let d = p.delta();
    delta_c - p.g * p.g / d / (1.0 + 4.0 * p.g * p.g * n / (d * d)).sqrt()
}

/// `ε²(n) = n {κ² + [Δc − (g²/δ)(1 + 4g²n/δ²)^{−1/2}]²}`.
pub fn dispersive_eps_sq(p: &SystemParams, delta_c: f64, n: f64) -> f64 {
    let det = eq6_detuning(p, delta_c, n);
    n * (p.kappa * p.kappa + det * det)
}

/// `dε²/dn`.
pub fn dispersive_eps_sq_slope(p: &SystemParams, delta_c: f64, n: f64) -> f64 {
    let d = p.delta();
    let u = 1.0 + 4.0 * p.g * p.g * n / (d * d);
    let det = eq6_detuning(p, delta_c, n);
    // d(det)/dn = (g²/δ)(2g²/δ²) u^{−3/2}
    let ddet = p.g * p.g / d * (2.0 * p.g * p.g / (d * d)) * u.powf(-1.5);
    p.kappa * p.kappa + det * det + 2.0 * n * det * ddet
}

fn dispersive_alpha(p: &SystemParams, delta_c: f64, n: f64) -> C64 {
    -I * p.eps_d / C64::new(p.kappa, -eq6_detuning(p, delta_c, n))
}

/// Roots of the dispersive-bistability equation at one cavity detuning.
pub fn dispersive_branches(p: &SystemParams, delta_c: f64, n_grid: &[f64]) -> Result<BranchSet> {
    check_grid(n_grid)?;
    if p.delta() <= 0.0 {
        return Err(Error::DispersiveLimit);
    }
    Ok(BranchSet {
        sweep_name: "delta_c".into(),
        sweep: vec![delta_c],
        roots: vec![dispersive_roots(p, delta_c, n_grid)],
    })
}

fn dispersive_roots(p: &SystemParams, delta_c: f64, n_grid: &[f64]) -> Vec<SteadyRoot> {
    let target = p.eps_d.norm_sqr();
    if target == 0.0 {
        return vec![SteadyRoot {
            n: 0.0,
            alpha: C64::new(0.0, 0.0),
            stability: Stability::Stable,
            state: None,
        }];
    }
    // splitting at the folds leaves one sign change per monotone piece
    let mut grid = n_grid.to_vec();
    grid.extend(grid_roots(|n| dispersive_eps_sq_slope(p, delta_c, n), n_grid));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid_roots(|n| dispersive_eps_sq(p, delta_c, n) - target, &grid)
        .into_iter()
        .map(|n| {
            let alpha = dispersive_alpha(p, delta_c, n);
            SteadyRoot {
                n: alpha.norm_sqr(),
                alpha,
                stability: if dispersive_eps_sq_slope(p, delta_c, n) < 0.0 {
                    Stability::Unstable
                } else {
                    Stability::Stable
                },
                state: None,
            }
        })
        .collect()
}

/// Dispersive roots over a sweep of cavity detunings.
pub fn dispersive_sweep(p: &SystemParams, delta_c_grid: &[f64]) -> Result<BranchSet> {
    if p.delta() <= 0.0 {
        return Err(Error::DispersiveLimit);
    }
    Ok(BranchSet {
        sweep_name: "delta_c".into(),
        sweep: delta_c_grid.to_vec(),
        roots: map_sweep(delta_c_grid, |dc| dispersive_roots(p, dc, &default_n_grid(&p.with_cavity_detuning(dc)))),
    })
}

/// Residual `|α + iε/(κ − i[Δc − …])|` of the dispersive-bistability equation.
pub fn dispersive_residual(p: &SystemParams, delta_c: f64, alpha: C64) -> f64 {
    (alpha - dispersive_alpha(p, delta_c, alpha.norm_sqr())).norm()
}

fn map_sweep<T: Send, F: Fn(f64) -> T + Sync>(grid: &[f64], f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.par_iter().map(|&x| f(x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.iter().map(|&x| f(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafPoint {
    pub delta_c: f64,
    pub eps_low: f64,
    pub eps_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafBoundary {
    pub points: Vec<LeafPoint>,
    /// Cusp at the large-detuning end, `(Δc, ε)`.
    pub c1: Option<(f64, f64)>,
    /// Closing point at the small-detuning end, `(Δc, ε)`.
    pub c2: Option<(f64, f64)>,
}

impl LeafBoundary {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether `(Δc, ε)` lies strictly between the fold lines at a sampled detuning.
    pub fn contains(&self, delta_c: f64, eps: f64) -> Option<bool> {
        self.points
            .iter()
            .find(|pt| pt.delta_c == delta_c)
            .map(|pt| eps > pt.eps_low && eps < pt.eps_high)
    }
}

fn leaf_n_grid() -> Vec<f64> {
    log_grid(1e-10, 1e12, 4400)
}

/// Turning points of `ε²(n)` at one detuning as `(eps_low, eps_high, n_low, n_high)`.
fn turning_points(p: &SystemParams, delta_c: f64, grid: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let tp = grid_roots(|n| dispersive_eps_sq_slope(p, delta_c, n), grid);
    if tp.len() < 2 {
        return None;
    }
    let (n_max_pt, n_min_pt) = (tp[0], tp[1]);
    let hi = dispersive_eps_sq(p, delta_c, n_max_pt).sqrt();
    let lo = dispersive_eps_sq(p, delta_c, n_min_pt).sqrt();
    Some((lo, hi, n_max_pt, n_min_pt))
}

/// Fold lines of dispersive bistability over a detuning grid.
pub fn bistability_leaf(p: &SystemParams, delta_c_grid: &[f64]) -> Result<LeafBoundary> {
    if p.delta() <= 0.0 {
        return Err(Error::DispersiveLimit);
    }
    if delta_c_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("detuning grid must be ascending".into()));
    }
    let grid = leaf_n_grid();
    let tps = map_sweep(delta_c_grid, |dc| turning_points(p, dc, &grid));
    let points: Vec<LeafPoint> = delta_c_grid
        .iter()
        .zip(&tps)
        .filter_map(|(&delta_c, tp)| tp.map(|(eps_low, eps_high, _, _)| LeafPoint { delta_c, eps_low, eps_high }))
        .collect();
    if points.is_empty() {
        return Ok(LeafBoundary {
            points,
            c1: None,
            c2: None,
        });
    }
    let first = tps.iter().position(Option::is_some).expect("nonempty");
    let last = tps.iter().rposition(Option::is_some).expect("nonempty");
    let c2 = (first > 0).then(|| locate_merge(p, delta_c_grid[first - 1], delta_c_grid[first], &grid));
    let c1 = (last + 1 < delta_c_grid.len()).then(|| locate_merge(p, delta_c_grid[last + 1], delta_c_grid[last], &grid));
    Ok(LeafBoundary { points, c1, c2 })
}

/// Bisect in detuning between `outside` and `inside` for the merge of the two folds.
fn locate_merge(p: &SystemParams, mut outside: f64, mut inside: f64, grid: &[f64]) -> (f64, f64) {
    let mut last = turning_points(p, inside, grid).expect("inside point has folds");
    for _ in 0..60 {
        let mid = 0.5 * (outside + inside);
        match turning_points(p, mid, grid) {
            Some(tp) => {
                inside = mid;
                last = tp;
            }
            None => outside = mid,
        }
        if (inside - outside).abs() <= 1e-12 * inside.abs().max(1.0) {
            break;
        }
    }
    (inside, 0.5 * (last.0 + last.1))
}

/// Fixed-point photon law of the damped Maxwell-Bloch equations:
/// `K(n) = κ − iΔc − g²ζ(n)/D` with `D = γ/2 − iΔq`, `ζ(n) = −|D|²/(|D|² + 2g²n)`.
fn mb_k(p: &SystemParams, n: f64) -> (C64, C64, f64) {
    let d = C64::new(0.5 * p.gamma, -p.delta_q);
    let d2 = d.norm_sqr();
    let zeta = -d2 / (d2 + 2.0 * p.g * p.g * n);
    (C64::new(p.kappa, -p.delta_c) - p.g * p.g * zeta / d, d, zeta)
}

fn mb_state(p: &SystemParams, n: f64) -> MeanFieldState {
    let (k, d, zeta) = mb_k(p, n);
    let alpha = -I * p.eps_d / k;
    let mu = I * p.g * alpha * zeta / d;
    MeanFieldState::new(alpha, mu, zeta)
}

/// Steady states of the damped Maxwell-Bloch equations at fixed parameters, ascending in `n`.
pub fn mb_steady_roots(p: &SystemParams, n_grid: &[f64]) -> Result<Vec<SteadyRoot>> {
    p.validate()?;
    check_grid(n_grid)?;
    if p.gamma <= 0.0 {
        return Err(Error::Precondition("damped Maxwell-Bloch steady states need gamma > 0".into()));
    }
    let target = p.eps_d.norm_sqr();
    let ns = if target == 0.0 {
        vec![0.0]
    } else {
        grid_roots(|n| n * mb_k(p, n).0.norm_sqr() - target, n_grid)
    };
    ns.into_iter()
        .map(|n| {
            let s = mb_state(p, n);
            let (_, stability) = jacobian_stability(&s, p)?;
            Ok(SteadyRoot {
                n: s.photons(),
                alpha: s.alpha,
                stability,
                state: Some(s),
            })
        })
        .collect()
}

/// Damped Maxwell-Bloch steady response over a sweep of cavity detunings.
pub fn mb_steady_scurve(p: &SystemParams, delta_c_grid: &[f64]) -> Result<BranchSet> {
    if p.gamma <= 0.0 {
        return Err(Error::Precondition("damped Maxwell-Bloch steady states need gamma > 0".into()));
    }
    let delta = p.delta_q - p.delta_c;
    let roots = map_sweep(delta_c_grid, |dc| {
        let q = SystemParams {
            delta_c: dc,
            delta_q: dc + delta,
            ..*p
        };
        mb_steady_roots(&q, &default_n_grid(&q))
    });
    Ok(BranchSet {
        sweep_name: "delta_c".into(),
        sweep: delta_c_grid.to_vec(),
        roots: roots.into_iter().collect::<Result<_>>()?,
    })
}

/// Fixed points of the neoclassical equations (`γ = 0`) on both qubit hemispheres.
pub fn neoclassical_fixed_points(p: &SystemParams, n_grid: &[f64]) -> Result<Vec<MeanFieldState>> {
    check_grid(n_grid)?;
    if p.delta_q == 0.0 {
        return Err(Error::Precondition("neoclassical steady state needs a nonzero qubit detuning".into()));
    }
    let target = p.eps_d.norm_sqr();
    let mut out = Vec::new();
    for sign in [-1.0, 1.0] {
        let zeta_of = |n: f64| sign * p.delta_q.abs() / (p.delta_q * p.delta_q + 4.0 * p.g * p.g * n).sqrt();
        let k_of = |n: f64| C64::new(p.kappa, -p.delta_c) - I * p.g * p.g * zeta_of(n) / p.delta_q;
        for n in grid_roots(|n| n * k_of(n).norm_sqr() - target, n_grid) {
            let alpha = -I * p.eps_d / k_of(n);
            let zeta = zeta_of(n);
            let mu = -p.g * alpha * zeta / p.delta_q;
            out.push(MeanFieldState::new(alpha, mu, zeta));
        }
    }
    Ok(out)
}

/// Real Jacobian of the Maxwell-Bloch flow in `(Re α, Im α, Re μ, Im μ, ζ)`.
pub fn jacobian(s: &MeanFieldState, p: &SystemParams) -> Matrix5<f64> {
    let (g, k, dc, dq, gm) = (p.g, p.kappa, p.delta_c, p.delta_q, p.gamma);
    let (ar, ai, mr, mi, z) = (s.alpha.re, s.alpha.im, s.mu.re, s.mu.im, s.zeta);
    #[rustfmt::skip]
    let j = Matrix5::new(
        -k,         -dc,        0.0,        g,          0.0,
        dc,         -k,         -g,         0.0,        0.0,
        0.0,        -g * z,     -0.5 * gm,  -dq,        -g * ai,
        g * z,      0.0,        dq,         -0.5 * gm,  g * ar,
        -4.0 * g * mi, 4.0 * g * mr, 4.0 * g * ai, -4.0 * g * ar, -gm,
    );
    j
}

/// Eigenvalues of the Jacobian at a fixed point and the resulting classification.
pub fn jacobian_stability(s: &MeanFieldState, p: &SystemParams) -> Result<(Vec<C64>, Stability)> {
    let r = maxwell_bloch_rhs(s, p);
    let scale = 1.0 + p.eps_d.norm() + p.kappa * s.alpha.norm() + p.g * s.mu.norm();
    if r.norm_inf() > 1e-8 * scale {
        return Err(Error::Precondition(format!("not a fixed point: |rhs| = {:.3e}", r.norm_inf())));
    }
    let ev: Vec<C64> = jacobian(s, p).complex_eigenvalues().iter().copied().collect();
    let max_re = ev.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    let stability = if max_re < -1e-10 {
        Stability::Stable
    } else if max_re > 1e-10 {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    Ok((ev, stability))
}

/// `‖rhs‖∞` at a candidate fixed point.
pub fn fixed_point_residual(s: &MeanFieldState, p: &SystemParams) -> f64 {
    maxwell_bloch_rhs(s, p).norm_inf()
}
