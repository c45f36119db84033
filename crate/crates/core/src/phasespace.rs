//! Husimi Q and Wigner functions, the analytic Duffing steady state and
//! critical points of sampled quasi-distributions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::hilbert::SpaceTag;
use crate::lindblad::DensityMatrix;
use crate::specfun::{self, SeriesControl};
use crate::{Error, Result, SystemParams, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Regular grid over the complex amplitude plane, `α = x + iy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    /// Row-major samples, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Sampling window without values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize, y_min: f64, y_max: f64, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::InvalidParams(format!(
                "grid needs nx, ny >= 2 and increasing bounds, got x [{x_min}, {x_max}]x{nx}, y [{y_min}, {y_max}]x{ny}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            y_min,
            y_max,
            ny,
        })
    }

    /// Square window `[-r, r]²` centred on `center`.
    pub fn square(center: C64, half_width: f64, n: usize) -> Result<Self> {
        Self::new(center.re - half_width, center.re + half_width, n, center.im - half_width, center.im + half_width, n)
    }

    /// Window sized from the photon statistics of a cavity state: radius `√(⟨n⟩ + 3σ_n) + 3`.
    pub fn for_state(rho_c: &DensityMatrix, n: usize) -> Result<Self> {
        let m = rho_c.matrix();
        let (mut mean, mut second) = (0.0, 0.0);
        for k in 0..m.nrows() {
            let p = m[(k, k)].re;
            mean += k as f64 * p;
            second += (k * k) as f64 * p;
        }
        let sigma = (second - mean * mean).max(0.0).sqrt();
        Self::square(ZERO, (mean + 3.0 * sigma).sqrt() + 3.0, n)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn point(&self, ix: usize, iy: usize) -> C64 {
        C64::new(self.x_min + ix as f64 * self.dx(), self.y_min + iy as f64 * self.dy())
    }

    /// Evaluate `f` at every node (rows in parallel when enabled).
    pub fn evaluate<F>(&self, f: F) -> PhaseGrid
    where
        F: Fn(C64) -> f64 + Sync,
    {
        let row = |iy: usize| (0..self.nx).map(|ix| f(self.point(ix, iy))).collect::<Vec<f64>>();
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            (0..self.ny).into_par_iter().map(row).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<f64>> = (0..self.ny).map(row).collect();
        PhaseGrid {
            x_min: self.x_min,
            x_max: self.x_max,
            nx: self.nx,
            y_min: self.y_min,
            y_max: self.y_max,
            ny: self.ny,
            values: rows.concat(),
            warnings: Vec::new(),
        }
    }
}

impl PhaseGrid {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            x_min: self.x_min,
            x_max: self.x_max,
            nx: self.nx,
            y_min: self.y_min,
            y_max: self.y_max,
            ny: self.ny,
        }
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn point(&self, ix: usize, iy: usize) -> C64 {
        self.spec().point(ix, iy)
    }

    /// Riemann sum `Σ f(α) W(α) dx dy`.
    pub fn integrate_with<F: Fn(C64) -> C64>(&self, f: F) -> C64 {
        let spec = self.spec();
        let mut acc = ZERO;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                acc += f(spec.point(ix, iy)) * self.value(ix, iy);
            }
        }
        acc * spec.dx() * spec.dy()
    }

    pub fn integral(&self) -> f64 {
        self.integrate_with(|_| C64::new(1.0, 0.0)).re
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Record a warning when less than 99.9 % of the mass falls on the grid.
    fn check_coverage(&mut self) {
        let mass = self.integral();
        if mass < 0.999 {
            self.warnings.push(format!("grid holds only {mass:.6} of the distribution; widen the window"));
        }
    }
}

fn require_cavity(rho: &DensityMatrix) -> Result<()> {
    if rho.tag() != SpaceTag::Cavity {
        return Err(Error::Dimension {
            context: "phase-space functions need a cavity state",
            expected: rho.dim() / 2,
            found: rho.dim(),
        });
    }
    Ok(())
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n.max(1)];
    for k in 1..n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Coherent-state amplitudes `⟨n|α⟩` for `n < n_max`.
fn coherent_amplitudes(alpha: C64, n_max: usize, ln_fact: &[f64]) -> Vec<C64> {
    let r2 = alpha.norm_sqr();
    if r2 == 0.0 {
        let mut v = vec![ZERO; n_max];
        v[0] = C64::new(1.0, 0.0);
        return v;
    }
    let (ln_r, theta) = (alpha.norm().ln(), alpha.arg());
    (0..n_max)
        .map(|n| C64::from_polar((-0.5 * r2 + n as f64 * ln_r - 0.5 * ln_fact[n]).exp(), n as f64 * theta))
        .collect()
}

/// `Q(α) = ⟨α|ρ|α⟩/π`.
pub fn husimi_q(rho_c: &DensityMatrix, grid: &GridSpec) -> Result<PhaseGrid> {
    require_cavity(rho_c)?;
    let m = rho_c.matrix();
    let n = m.nrows();
    let ln_fact = ln_factorials(n);
    let mut out = grid.evaluate(|alpha| {
        let c = coherent_amplitudes(alpha, n, &ln_fact);
        let mut acc = ZERO;
        for i in 0..n {
            let mut row = ZERO;
            for j in 0..n {
                row += m[(i, j)] * c[j];
            }
            acc += c[i].conj() * row;
        }
        acc.re / std::f64::consts::PI
    });
    out.check_coverage();
    Ok(out)
}

/// Matrix elements `⟨m|D(β)|n⟩` for `m, n < dim` of the untruncated displacement,
/// `√(n!/m!) β^{m−n} e^{−|β|²/2} L_n^{(m−n)}(|β|²)` for `m ≥ n`.
pub fn displacement_elements(beta: C64, dim: usize) -> DMatrix<C64> {
    let x = beta.norm_sqr();
    if x == 0.0 {
        return DMatrix::identity(dim, dim);
    }
    let ln_fact = ln_factorials(dim);
    let (ln_b, phase) = (beta.norm().ln(), beta.arg());
    let mut d = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let kf = k as f64;
        let lower = C64::from_polar(1.0, kf * phase);
        let upper = C64::from_polar(1.0, kf * (std::f64::consts::PI - phase));
        let (mut prev, mut cur, mut scale) = (0.0f64, 1.0f64, 0.0f64);
        for j in 0..dim - k {
            if j > 0 {
                let jf = j as f64;
                let next = ((2.0 * jf - 1.0 + kf - x) * cur - (jf - 1.0 + kf) * prev) / jf;
                prev = cur;
                cur = next;
                if cur.abs() > 1e100 {
                    prev *= 1e-100;
                    cur *= 1e-100;
                    scale += 100.0 * std::f64::consts::LN_10;
                }
            }
            let m = j + k;
            let mag = cur * (0.5 * (ln_fact[j] - ln_fact[m]) + kf * ln_b - 0.5 * x + scale).exp();
            d[(m, j)] = lower * mag;
            if k > 0 {
                d[(j, m)] = upper * mag;
            }
        }
    }
    d
}

/// `W(α) = (2/π) Σ_n (−1)^n ⟨n|D(−α) ρ D(α)|n⟩`, evaluated as
/// `(2/π) tr[ρ D(2α) Π]` with exact displacement matrix elements.
pub fn wigner(rho_c: &DensityMatrix, grid: &GridSpec) -> Result<PhaseGrid> {
    require_cavity(rho_c)?;
    let m = rho_c.matrix();
    let n = m.nrows();
    let mut out = grid.evaluate(|alpha| wigner_point(m, n, alpha));
    out.check_coverage();
    Ok(out)
}

fn wigner_point(m: &DMatrix<C64>, n: usize, alpha: C64) -> f64 {
    let d = displacement_elements(alpha * 2.0, n);
    // tr[ρ D Π] = Σ_{j,k} ρ_{jk} D_{kj} (−1)^j
    let mut acc = ZERO;
    for j in 0..n {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut s = ZERO;
        for k in 0..n {
            s += m[(j, k)] * d[(k, j)];
        }
        acc += s * sign;
    }
    2.0 / std::f64::consts::PI * acc.re
}

/// Single-point Wigner value.
pub fn wigner_at(rho_c: &DensityMatrix, alpha: C64) -> Result<f64> {
    require_cavity(rho_c)?;
    Ok(wigner_point(rho_c.matrix(), rho_c.dim(), alpha))
}

/// Parameters of the dressed-cavity Duffing oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    /// `c = (κ − iΔc′)/(iχ)`.
    pub c: C64,
    /// `χ = (g⁴/δ³)s`.
    pub chi: f64,
    /// `ε̃ = ε/(iχ)`.
    pub eps_tilde: C64,
    /// `Δc′ = Δc + λs − (g⁴/δ³)(2s+1)`.
    pub delta_c_prime: f64,
    pub s: f64,
}

impl DuffingParams {
    pub fn from_system(p: &SystemParams, s: f64) -> Result<Self> {
        p.validate()?;
        let lambda = p.lambda()?;
        let k4 = p.kerr_scale()?;
        let chi = k4 * s;
        if chi == 0.0 {
            return Err(Error::InvalidParams("Duffing nonlinearity vanishes".into()));
        }
        let delta_c_prime = p.delta_c + lambda * s - k4 * (2.0 * s + 1.0);
        let ichi = C64::new(0.0, chi);
        Ok(Self {
            c: C64::new(p.kappa, -delta_c_prime) / ichi,
            chi,
            eps_tilde: p.eps_d / ichi,
            delta_c_prime,
            s,
        })
    }

    fn d(&self) -> C64 {
        self.c.conj()
    }

    fn x(&self) -> f64 {
        self.eps_tilde.norm_sqr()
    }
}

/// `₀F₂(c, c*, 2|ε̃|²)`, the common normalization.
fn normalization(dp: &DuffingParams, ctl: &SeriesControl) -> Result<specfun::Scaled> {
    specfun::hyp0f2_scaled(dp.c, dp.d(), C64::new(2.0 * dp.x(), 0.0), ctl)
}

/// Closed-form steady-state Wigner function of the Duffing oscillator:
/// `(2/π) e^{−2|α|²} |₀F₁(c, 2ε̃α*)|² / ₀F₂(c, c*, 2|ε̃|²)`.
pub fn duffing_wigner_analytic(dp: &DuffingParams, alpha: C64) -> Result<f64> {
    let ctl = SeriesControl::default();
    let norm = normalization(dp, &ctl)?;
    duffing_wigner_with_norm(dp, alpha, &norm, &ctl)
}

fn duffing_wigner_with_norm(dp: &DuffingParams, alpha: C64, norm: &specfun::Scaled, ctl: &SeriesControl) -> Result<f64> {
    let f = specfun::hyp0f1_scaled(dp.c, 2.0 * dp.eps_tilde * alpha.conj(), ctl)?;
    let ln_w = (2.0 / std::f64::consts::PI).ln() - 2.0 * alpha.norm_sqr() + 2.0 * (f.mantissa.norm().ln() + f.log_scale)
        - (norm.mantissa.re.ln() + norm.log_scale);
    Ok(ln_w.exp())
}

/// Analytic Duffing Wigner function sampled on a grid.
pub fn duffing_wigner_grid(dp: &DuffingParams, grid: &GridSpec) -> Result<PhaseGrid> {
    let ctl = SeriesControl::default();
    let norm = normalization(dp, &ctl)?;
    let failure = std::sync::Mutex::new(None);
    let out = grid.evaluate(|alpha| match duffing_wigner_with_norm(dp, alpha, &norm, &ctl) {
        Ok(v) => v,
        Err(e) => {
            failure.lock().expect("poisoned").get_or_insert(e);
            f64::NAN
        }
    });
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    let mut out = out;
    out.check_coverage();
    Ok(out)
}

/// Which argument the numerator `₀F₂` of `p(n)` takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdfArgument {
    /// `|ε̃|²`.
    Printed,
    /// `2|ε̃|²`, matching the denominator.
    Doubled,
}

/// Steady-state photon-number distribution
/// `p(n) = |ε̃|^{2n}/n! · |Γ(c)/Γ(c+n)|² · ₀F₂(c+n, c*+n, |ε̃|²) / ₀F₂(c, c*, 2|ε̃|²)`.
pub fn duffing_photon_pdf(dp: &DuffingParams, n_max: usize) -> Result<Vec<f64>> {
    duffing_photon_pdf_variant(dp, n_max, PdfArgument::Printed)
}

pub fn duffing_photon_pdf_variant(dp: &DuffingParams, n_max: usize, arg: PdfArgument) -> Result<Vec<f64>> {
    let ctl = SeriesControl::default();
    let x = dp.x();
    if x == 0.0 {
        let mut p = vec![0.0; n_max];
        if let Some(p0) = p.first_mut() {
            *p0 = 1.0;
        }
        return Ok(p);
    }
    let norm = normalization(dp, &ctl)?;
    let ln_norm = norm.mantissa.re.ln() + norm.log_scale;
    let z = match arg {
        PdfArgument::Printed => x,
        PdfArgument::Doubled => 2.0 * x,
    };
    let lg_c = specfun::log_gamma(dp.c)?;
    let mut ln_fact = 0.0;
    (0..n_max)
        .map(|n| {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let nf = n as f64;
            let gamma = 2.0 * (lg_c - specfun::log_gamma(dp.c + nf)?).re;
            let f = specfun::hyp0f2_scaled(dp.c + nf, dp.d() + nf, C64::new(z, 0.0), &ctl)?;
            let ln_p = nf * x.ln() - ln_fact + gamma + f.mantissa.re.ln() + f.log_scale - ln_norm;
            Ok(ln_p.exp())
        })
        .collect()
}

/// `m₁ = |ε̃|² ₀F₂(c+1, d+1, 2|ε̃|²) / (c d ₀F₂(c, d, 2|ε̃|²))` with `d = c*`.
pub fn duffing_mean_photon(dp: &DuffingParams) -> Result<f64> {
    let x = dp.x();
    if x == 0.0 {
        return Ok(0.0);
    }
    let ctl = SeriesControl::default();
    let z = C64::new(2.0 * x, 0.0);
    let num = specfun::hyp0f2_scaled(dp.c + 1.0, dp.d() + 1.0, z, &ctl)?;
    let den = normalization(dp, &ctl)?;
    let m1 = num.ratio(&den) * x / (dp.c * dp.d());
    if m1.im.abs() > 1e-10 * m1.norm().max(1.0) {
        return Err(Error::Solver {
            reason: "first moment not real".into(),
            residual: m1.im,
        });
    }
    Ok(m1.re)
}

/// Symmetrically ordered moment `⟨(a†)^n a^m⟩_S` of the analytic Duffing state,
/// from the angular-delta-collapsed series
/// `Σ_k (2ε̃)^k (2ε̃*)^{k+n−m} (k+n)! / (k! (k+n−m)! (c)_k (d)_{k+n−m} 2^{k+n})`
/// divided by `₀F₂(c, d, 2|ε̃|²)`.
pub fn duffing_symmetric_moment(dp: &DuffingParams, n: usize, m: usize) -> Result<C64> {
    let ctl = SeriesControl::default();
    let (ni, mi) = (n as i64, m as i64);
    if dp.x() == 0.0 {
        // only k = 0 and k + n − m = 0 survive
        if n != m {
            return Ok(ZERO);
        }
        let ln = ln_factorials(n + 1)[n] - n as f64 * std::f64::consts::LN_2;
        return Ok(C64::new(ln.exp(), 0.0));
    }
    let norm = normalization(dp, &ctl)?;
    let ln_norm = C64::new(norm.mantissa.re.ln() + norm.log_scale, 0.0);
    let (lg_c, lg_d) = (specfun::log_gamma(dp.c)?, specfun::log_gamma(dp.d())?);
    let ln_2e = (2.0 * dp.eps_tilde).ln();
    let ln_2ec = (2.0 * dp.eps_tilde.conj()).ln();
    let k0 = (mi - ni).max(0) as usize;
    let mut terms: Vec<C64> = Vec::new();
    let mut max_re = f64::NEG_INFINITY;
    let mut below = 0;
    for k in k0..k0 + ctl.max_terms() {
        let kf = k as f64;
        let l = (k as i64 + ni - mi) as f64;
        let ln_t = kf * ln_2e + l * ln_2ec + lgamma_real(kf + n as f64 + 1.0) - lgamma_real(kf + 1.0) - lgamma_real(l + 1.0)
            - (specfun::log_gamma(dp.c + kf)? - lg_c)
            - (specfun::log_gamma(dp.d() + l)? - lg_d)
            - (kf + n as f64) * std::f64::consts::LN_2
            - ln_norm;
        max_re = max_re.max(ln_t.re);
        terms.push(ln_t);
        if ln_t.re < max_re + (ctl.rel_tol() * 1e-3).ln() && k > k0 + 4 {
            below += 1;
            if below >= 2 {
                return Ok(terms.iter().map(|t| t.exp()).sum());
            }
        } else {
            below = 0;
        }
    }
    Err(Error::Accuracy {
        terms: ctl.max_terms(),
        last_rel: f64::NAN,
    })
}

fn lgamma_real(x: f64) -> f64 {
    specfun::log_gamma(C64::new(x, 0.0)).expect("positive argument").re
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Maximum,
    Minimum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub position: C64,
    pub kind: CriticalKind,
    pub value: f64,
}

/// Critical points with the default prominence floor `1e-4 · max`.
pub fn find_critical_points(grid: &PhaseGrid) -> Vec<CriticalPoint> {
    find_critical_points_with(grid, 1e-4)
}

/// Interior cells where both discrete gradient components change sign,
/// classified by the discrete Hessian; nearby duplicates of the same kind are merged
/// and points with `|value| < floor · max|value|` dropped.
pub fn find_critical_points_with(grid: &PhaseGrid, floor_rel: f64) -> Vec<CriticalPoint> {
    let (nx, ny) = (grid.nx, grid.ny);
    if nx < 4 || ny < 4 {
        return Vec::new();
    }
    let (dx, dy) = (grid.spec().dx(), grid.spec().dy());
    let v = |ix: usize, iy: usize| grid.value(ix, iy);
    let gx = |ix: usize, iy: usize| (v(ix + 1, iy) - v(ix - 1, iy)) / (2.0 * dx);
    let gy = |ix: usize, iy: usize| (v(ix, iy + 1) - v(ix, iy - 1)) / (2.0 * dy);
    let vmax = grid.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = floor_rel * vmax;

    let sign_change = |vals: [f64; 4]| {
        let pos = vals.iter().any(|&x| x > 0.0);
        let neg = vals.iter().any(|&x| x < 0.0);
        let zero = vals.iter().any(|&x| x == 0.0);
        (pos && neg) || zero
    };

    let mut found: Vec<(CriticalPoint, f64)> = Vec::new();
    for iy in 1..ny - 2 {
        for ix in 1..nx - 2 {
            let corners = [(ix, iy), (ix + 1, iy), (ix, iy + 1), (ix + 1, iy + 1)];
            let gxs = corners.map(|(a, b)| gx(a, b));
            let gys = corners.map(|(a, b)| gy(a, b));
            if !(sign_change(gxs) && sign_change(gys)) {
                continue;
            }
            // sign changes without a common bilinear zero belong to a neighbouring cell
            let Some((u, w)) = bilinear_root(gxs, gys) else {
                continue;
            };
            let pos = grid.point(ix, iy) + C64::new(u * dx, w * dy);
            // Hessian from the corner nearest the root
            let (hx, hy) = (ix + usize::from(u > 0.5), iy + usize::from(w > 0.5));
            let hx = hx.clamp(1, nx - 2);
            let hy = hy.clamp(1, ny - 2);
            let fxx = (v(hx + 1, hy) - 2.0 * v(hx, hy) + v(hx - 1, hy)) / (dx * dx);
            let fyy = (v(hx, hy + 1) - 2.0 * v(hx, hy) + v(hx, hy - 1)) / (dy * dy);
            let fxy = (v(hx + 1, hy + 1) - v(hx + 1, hy - 1) - v(hx - 1, hy + 1) + v(hx - 1, hy - 1)) / (4.0 * dx * dy);
            let det = fxx * fyy - fxy * fxy;
            let kind = if det < 0.0 {
                CriticalKind::Saddle
            } else if fxx + fyy < 0.0 {
                CriticalKind::Maximum
            } else {
                CriticalKind::Minimum
            };
            let value = bilinear(
                [v(ix, iy), v(ix + 1, iy), v(ix, iy + 1), v(ix + 1, iy + 1)],
                u,
                w,
            );
            if value.abs() < floor {
                continue;
            }
            let gnorm = bilinear(gxs, u, w).hypot(bilinear(gys, u, w));
            found.push((CriticalPoint { position: pos, kind, value }, gnorm));
        }
    }

    // merge neighbours of the same kind, keeping the flattest gradient
    let radius = 1.5 * dx.hypot(dy);
    let mut kept: Vec<(CriticalPoint, f64)> = Vec::new();
    for (cp, g) in found {
        if let Some(existing) = kept.iter_mut().find(|(k, _)| k.kind == cp.kind && (k.position - cp.position).norm() < radius) {
            if g < existing.1 {
                *existing = (cp, g);
            }
        } else {
            kept.push((cp, g));
        }
    }
    kept.into_iter().map(|(cp, _)| cp).collect()
}

fn bilinear(c: [f64; 4], u: f64, w: f64) -> f64 {
    c[0] * (1.0 - u) * (1.0 - w) + c[1] * u * (1.0 - w) + c[2] * (1.0 - u) * w + c[3] * u * w
}

/// Common zero of two bilinear interpolants on the unit cell, by Newton iteration.
fn bilinear_root(gx: [f64; 4], gy: [f64; 4]) -> Option<(f64, f64)> {
    let (mut u, mut w) = (0.5, 0.5);
    for _ in 0..20 {
        let f1 = bilinear(gx, u, w);
        let f2 = bilinear(gy, u, w);
        let du1 = (gx[1] - gx[0]) * (1.0 - w) + (gx[3] - gx[2]) * w;
        let dw1 = (gx[2] - gx[0]) * (1.0 - u) + (gx[3] - gx[1]) * u;
        let du2 = (gy[1] - gy[0]) * (1.0 - w) + (gy[3] - gy[2]) * w;
        let dw2 = (gy[2] - gy[0]) * (1.0 - u) + (gy[3] - gy[1]) * u;
        let det = du1 * dw2 - dw1 * du2;
        if det.abs() < 1e-300 {
            return None;
        }
        u -= (f1 * dw2 - f2 * dw1) / det;
        w -= (du1 * f2 - du2 * f1) / det;
        if !(u.is_finite() && w.is_finite()) {
            return None;
        }
    }
    ((-1e-9..=1.0 + 1e-9).contains(&u) && (-1e-9..=1.0 + 1e-9).contains(&w)).then_some((u.clamp(0.0, 1.0), w.clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::TruncatedSpace;
    use std::f64::consts::PI;

    fn pure_cavity(psi: &[C64]) -> DensityMatrix {
        DensityMatrix::from_pure(SpaceTag::Cavity, psi).unwrap()
    }

    fn coherent(beta: C64, n: usize) -> DensityMatrix {
        let lf = ln_factorials(n);
        pure_cavity(&coherent_amplitudes(beta, n, &lf))
    }

    fn fock(k: usize, n: usize) -> DensityMatrix {
        let mut v = vec![ZERO; n];
        v[k] = C64::new(1.0, 0.0);
        pure_cavity(&v)
    }

    #[test]
    fn vacuum_distributions() {
        let vac = fock(0, 6);
        let g = GridSpec::square(ZERO, 2.0, 9).unwrap();
        let q = husimi_q(&vac, &g).unwrap();
        let w = wigner(&vac, &g).unwrap();
        for iy in 0..9 {
            for ix in 0..9 {
                let a = g.point(ix, iy);
                assert!((q.value(ix, iy) - (-a.norm_sqr()).exp() / PI).abs() < 1e-15);
                assert!((w.value(ix, iy) - 2.0 / PI * (-2.0 * a.norm_sqr()).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fock_one_has_negative_origin() {
        let w = wigner_at(&fock(1, 5), ZERO).unwrap();
        assert!((w + 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn coherent_state_peaks_and_moments() {
        let beta = C64::new(1.2, -0.7);
        let rho = coherent(beta, 30);
        let g = GridSpec::square(beta, 4.0, 81).unwrap();
        let q = husimi_q(&rho, &g).unwrap();
        let w = wigner(&rho, &g).unwrap();
        let peak = (0..q.values.len()).max_by(|&a, &b| q.values[a].total_cmp(&q.values[b])).unwrap();
        let at = q.point(peak % 81, peak / 81);
        assert!((at - beta).norm() < 0.1);
        assert!((q.integral() - 1.0).abs() < 1e-3);
        assert!((w.integral() - 1.0).abs() < 1e-3);
        let mq = q.integrate_with(|a| a);
        let mw = w.integrate_with(|a| a);
        assert!((mq - mw).norm() < 1e-3);
        assert!((mw - beta).norm() < 1e-3);
        assert!(q.warnings.is_empty());
    }

    #[test]
    fn displacement_matches_dense_exponential() {
        let n = 40;
        let beta = C64::new(0.9, 0.4);
        let big = 120;
        let mut gen: DMatrix<C64> = DMatrix::zeros(big, big);
        for k in 1..big {
            let s = (k as f64).sqrt();
            gen[(k, k - 1)] += beta * s; // β a†
            gen[(k - 1, k)] -= beta.conj() * s; // −β* a
        }
        let dense = gen.exp();
        let d = displacement_elements(beta, n);
        for r in 0..n {
            for c in 0..n {
                assert!((d[(r, c)] - dense[(r, c)]).norm() < 1e-12, "({r},{c}) {} {}", d[(r, c)], dense[(r, c)]);
            }
        }
    }

    #[test]
    fn displacement_large_amplitude_frozen() {
        // mpmath, closed-form Laguerre expression at 30 digits
        let cases = [
            (C64::new(6.0, 5.0), 70, 64, C64::new(-0.038505957036504850428, -0.063664685794805200096)),
            (C64::new(6.0, 5.0), 50, 77, C64::new(0.062208843709976623695, 0.0057157304170973070639)),
            (C64::new(12.0, 0.0), 79, 79, C64::new(0.036929458717139850102, 0.0)),
            (C64::new(-3.0, 8.0), 40, 10, C64::new(-0.016541493935506437389, -0.069873880390558861518)),
        ];
        for (beta, m, n, want) in cases {
            let d = displacement_elements(beta, 80);
            assert!((d[(m, n)] - want).norm() < 1e-13, "{beta} ({m},{n}): {}", d[(m, n)]);
        }
    }

    #[test]
    fn coverage_warning_when_window_small() {
        let rho = coherent(C64::new(3.0, 0.0), 50);
        let g = GridSpec::square(ZERO, 1.0, 11).unwrap();
        assert!(!husimi_q(&rho, &g).unwrap().warnings.is_empty());
    }

    #[test]
    fn wrong_tag_rejected() {
        let s = TruncatedSpace::new(3).unwrap();
        let mut v = vec![ZERO; s.dim()];
        v[0] = C64::new(1.0, 0.0);
        let joint = DensityMatrix::from_pure(SpaceTag::Joint, &v).unwrap();
        let g = GridSpec::square(ZERO, 1.0, 3).unwrap();
        assert!(husimi_q(&joint, &g).is_err());
        assert!(wigner(&joint, &g).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1, 0.0, 1.0, 5).is_err());
    }

    fn gaussian_grid(centers: &[(C64, f64)], half: f64, n: usize) -> PhaseGrid {
        GridSpec::square(ZERO, half, n).unwrap().evaluate(|a| centers.iter().map(|(c, amp)| amp * (-(a - c).norm_sqr()).exp()).sum())
    }

    #[test]
    fn single_gaussian_one_maximum() {
        let c = C64::new(0.33, -0.41);
        let g = gaussian_grid(&[(c, 1.0)], 3.0, 61);
        let cps = find_critical_points(&g);
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].kind, CriticalKind::Maximum);
        assert!((cps[0].position - c).norm() < 0.1);
    }

    #[test]
    fn two_gaussians_two_maxima_one_saddle() {
        let (a, b) = (C64::new(-1.5, 0.2), C64::new(1.4, -0.1));
        let g = gaussian_grid(&[(a, 1.0), (b, 0.6)], 4.0, 101);
        let cps = find_critical_points(&g);
        let maxima: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Maximum).collect();
        let saddles: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Saddle).collect();
        assert_eq!(maxima.len(), 2, "{cps:?}");
        assert_eq!(saddles.len(), 1, "{cps:?}");
        assert_eq!(cps.len(), 3);
        // analytic saddle: on the segment between the centres where the directional derivative vanishes
        let dir = (b - a) / (b - a).norm();
        let f = |t: f64| {
            let p = a + dir * t;
            -2.0 * (((p - a) * dir.conj()).re * (-(p - a).norm_sqr()).exp() + 0.6 * ((p - b) * dir.conj()).re * (-(p - b).norm_sqr()).exp())
        };
        let (mut lo, mut hi) = (0.5, (b - a).norm() - 0.5);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo).signum() == f(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let want = a + dir * lo;
        assert!((saddles[0].position - want).norm() < 0.1, "{} vs {want}", saddles[0].position);
    }

    fn fig_a1(eps_over_kappa: f64) -> (SystemParams, DuffingParams) {
        let kappa = 6.0;
        let g = 2.0 * kappa * 279.0;
        let p = SystemParams::with_qubit_below(74.17 * kappa, g / 0.14, g, eps_over_kappa * kappa, kappa, 1.0);
        (p, DuffingParams::from_system(&p, -1.0).unwrap())
    }

    #[test]
    fn duffing_params_values() {
        let (_, dp) = fig_a1(1.667);
        assert!((dp.c - C64::new(-1.5798, 0.6531)).norm() < 5e-3, "{}", dp.c);
        assert!((dp.eps_tilde - C64::new(0.0, 1.0887)).norm() < 5e-3, "{}", dp.eps_tilde);
        let flat = SystemParams::with_qubit_below(1.0, 0.0, 1.0, 1.0, 1.0, 1.0);
        assert!(DuffingParams::from_system(&flat, -1.0).is_err());
    }

    #[test]
    fn undriven_duffing_is_vacuum() {
        let (p, _) = fig_a1(1.667);
        let dp = DuffingParams::from_system(&p.with_drive(ZERO), -1.0).unwrap();
        for a in [ZERO, C64::new(0.3, -0.8)] {
            let w = duffing_wigner_analytic(&dp, a).unwrap();
            assert!((w - 2.0 / PI * (-2.0 * a.norm_sqr()).exp()).abs() < 1e-15);
        }
        let pdf = duffing_photon_pdf(&dp, 5).unwrap();
        assert_eq!(pdf, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(duffing_mean_photon(&dp).unwrap(), 0.0);
        assert!((duffing_symmetric_moment(&dp, 1, 1).unwrap() - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((duffing_symmetric_moment(&dp, 0, 0).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn appendix_identities() {
        let (_, dp) = fig_a1(1.667);
        let pdf = duffing_photon_pdf(&dp, 60).unwrap();
        let total: f64 = pdf.iter().sum();
        assert!((total - 1.0).abs() < 1e-8, "Σp = {total}");
        assert!(pdf.iter().all(|&p| p >= 0.0));
        let mean: f64 = pdf.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let m1 = duffing_mean_photon(&dp).unwrap();
        assert!((m1 - mean).abs() < 1e-8, "{m1} vs {mean}");
        let s00 = duffing_symmetric_moment(&dp, 0, 0).unwrap();
        assert!((s00 - C64::new(1.0, 0.0)).norm() < 1e-8);
        // symmetric a†a = m1 + 1/2
        let s11 = duffing_symmetric_moment(&dp, 1, 1).unwrap();
        assert!((s11 - C64::new(m1 + 0.5, 0.0)).norm() < 1e-8);
        let doubled = duffing_photon_pdf_variant(&dp, 60, PdfArgument::Doubled).unwrap();
        assert!((doubled.iter().sum::<f64>() - 1.0).abs() > 1e-3);
    }

    #[test]
    fn analytic_wigner_quadrature() {
        let (_, dp) = fig_a1(1.667);
        let g = GridSpec::square(ZERO, 4.0, 161).unwrap();
        let w = duffing_wigner_grid(&dp, &g).unwrap();
        assert!(w.min_value() > 0.0);
        assert!((w.integral() - 1.0).abs() < 1e-4, "{}", w.integral());
        let m1 = duffing_mean_photon(&dp).unwrap();
        let quad = w.integrate_with(|a| C64::new(a.norm_sqr(), 0.0)).re - 0.5;
        assert!((quad - m1).abs() < 1e-3);
        let s10 = duffing_symmetric_moment(&dp, 1, 0).unwrap();
        let quad10 = w.integrate_with(|a| a.conj());
        assert!((s10 - quad10).norm() < 1e-3, "{s10} vs {quad10}");
    }
}
