//! Browser entry points. Rates are in units of `γ` (`γ = 1`), as in the CLI.

use jc_core::hilbert::{Factor, TruncatedSpace};
use jc_core::lindblad::{jc_liouvillian, partial_trace, steady_state};
use jc_core::meanfield::{bistability_leaf, log_grid};
use jc_core::phasespace::{
    duffing_mean_photon, duffing_wigner_grid, find_critical_points, husimi_q, CriticalKind, DuffingParams, GridSpec,
    PhaseGrid,
};
use jc_core::{SystemParams, C64};
use wasm_bindgen::prelude::*;

/// Square phase-space map, row-major in `y`.
#[wasm_bindgen]
pub struct Map {
    half_width: f64,
    n: usize,
    values: Vec<f64>,
    maxima: usize,
    mean_photons: f64,
}

#[wasm_bindgen]
impl Map {
    #[wasm_bindgen(getter)]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }

    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Local maxima found on the grid.
    #[wasm_bindgen(getter)]
    pub fn maxima(&self) -> usize {
        self.maxima
    }

    #[wasm_bindgen(getter)]
    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }
}

fn err(e: jc_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn params(eps: f64, delta_c_over_kappa: f64, g: f64, delta_over_g: f64, two_kappa: f64) -> Result<SystemParams, JsError> {
    let kappa = 0.5 * two_kappa;
    let p = SystemParams::with_qubit_below(delta_c_over_kappa * kappa, delta_over_g * g, g, eps, kappa, 1.0);
    p.validate().map_err(err)?;
    if !(delta_over_g > 0.0) {
        return Err(JsError::new("delta/g must be positive"));
    }
    Ok(p)
}

fn to_map(g: PhaseGrid, half_width: f64, n: usize, mean_photons: f64) -> Map {
    let maxima = find_critical_points(&g).iter().filter(|c| c.kind == CriticalKind::Maximum).count();
    Map {
        half_width,
        n,
        values: g.values,
        maxima,
        mean_photons,
    }
}

/// Husimi Q of the cavity in the master-equation steady state.
#[wasm_bindgen]
pub fn steady_q(
    eps: f64,
    delta_c_over_kappa: f64,
    g: f64,
    delta_over_g: f64,
    two_kappa: f64,
    n_max: usize,
    half_width: f64,
    points: usize,
) -> Result<Map, JsError> {
    let p = params(eps, delta_c_over_kappa, g, delta_over_g, two_kappa)?;
    let space = TruncatedSpace::new(n_max).map_err(err)?;
    let rho = steady_state(&jc_liouvillian(&p, &space).map_err(err)?).map_err(err)?;
    let rho_c = partial_trace(&rho, Factor::Cavity).map_err(err)?;
    let m = rho_c.matrix();
    let mean: f64 = (0..m.nrows()).map(|k| k as f64 * m[(k, k)].re).sum();
    let spec = GridSpec::square(C64::new(0.0, 0.0), half_width, points).map_err(err)?;
    Ok(to_map(husimi_q(&rho_c, &spec).map_err(err)?, half_width, points, mean))
}

/// Closed-form Wigner function of the Duffing oscillator with the qubit frozen at `⟨σ_z⟩ = s`.
#[wasm_bindgen]
pub fn duffing_wigner(
    eps: f64,
    delta_c_over_kappa: f64,
    g: f64,
    delta_over_g: f64,
    two_kappa: f64,
    s: f64,
    half_width: f64,
    points: usize,
) -> Result<Map, JsError> {
    let p = params(eps, delta_c_over_kappa, g, delta_over_g, two_kappa)?;
    let dp = DuffingParams::from_system(&p, s).map_err(err)?;
    let spec = GridSpec::square(C64::new(0.0, 0.0), half_width, points).map_err(err)?;
    let mean = duffing_mean_photon(&dp).map_err(err)?;
    Ok(to_map(duffing_wigner_grid(&dp, &spec).map_err(err)?, half_width, points, mean))
}

/// Fold lines of dispersive bistability as flat triples `(Δc/κ, ε_low, ε_high)`.
#[wasm_bindgen]
pub fn leaf(g: f64, delta_over_g: f64, two_kappa: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let p = params(1.0, 1.0, g, delta_over_g, two_kappa)?;
    let k = p.kappa;
    let b = bistability_leaf(&p, &log_grid(0.01 * k, 200.0 * k, points.max(2))).map_err(err)?;
    Ok(b.points.iter().flat_map(|q| [q.delta_c / k, q.eps_low, q.eps_high]).collect())
}
