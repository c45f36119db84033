use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Rates and detunings of the driven JC system in the frame rotating at the drive.
///
/// `delta_c = ω_d − ω_c`, `delta_q = ω_d − ω_q`. The cavity field decays at `kappa`
/// (photon loss `2κ`), the qubit relaxes at `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub delta_c: f64,
    pub delta_q: f64,
    pub g: f64,
    pub eps_d: C64,
    pub kappa: f64,
    pub gamma: f64,
}

impl SystemParams {
    /// Parameters for a qubit lying `delta` below the cavity (`ω_c − ω_q = δ > 0`),
    /// so that `delta_q = delta_c + delta`. This is the ordering in which the
    /// low-power cavity resonance sits at `delta_c = +g²/δ`.
    pub fn with_qubit_below(delta_c: f64, delta: f64, g: f64, eps_d: f64, kappa: f64, gamma: f64) -> Self {
        Self {
            delta_c,
            delta_q: delta_c + delta,
            g,
            eps_d: C64::new(eps_d, 0.0),
            kappa,
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta_c, self.delta_q, self.g, self.kappa, self.gamma, self.eps_d.re, self.eps_d.im]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParams(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParams(format!("g must be >= 0, got {}", self.g)));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Qubit-cavity detuning `δ = |ω_c − ω_q|`.
    pub fn delta(&self) -> f64 {
        (self.delta_q - self.delta_c).abs()
    }

    fn dispersive_delta(&self) -> Result<f64> {
        let d = self.delta();
        if d > 0.0 {
            Ok(d)
        } else {
            Err(Error::DispersiveLimit)
        }
    }

    /// Dispersive shift `λ = g²/δ`.
    pub fn lambda(&self) -> Result<f64> {
        Ok(self.g * self.g / self.dispersive_delta()?)
    }

    /// Photon scale `(δ/2g)²` at which the dispersive expansion breaks down.
    pub fn n_scale(&self) -> Result<f64> {
        let d = self.dispersive_delta()?;
        Ok((d / (2.0 * self.g)).powi(2))
    }

    /// Quartic coefficient magnitude `g⁴/δ³`.
    pub fn kerr_scale(&self) -> Result<f64> {
        let d = self.dispersive_delta()?;
        Ok(self.g.powi(4) / d.powi(3))
    }

    /// `C = g²/(κγ)`; `None` when `γ = 0`.
    pub fn cooperativity(&self) -> Option<f64> {
        (self.gamma > 0.0).then(|| self.g * self.g / (self.kappa * self.gamma))
    }

    /// Purcell rate `κ g²/δ²`.
    pub fn purcell_rate(&self) -> Result<f64> {
        let d = self.dispersive_delta()?;
        Ok(self.kappa * self.g * self.g / (d * d))
    }

    /// Dispersive validity monitor `4⟨N⟩g²/δ²` for a given excitation number.
    pub fn dispersive_validity(&self, mean_excitations: f64) -> Result<f64> {
        let d = self.dispersive_delta()?;
        Ok(4.0 * mean_excitations * self.g * self.g / (d * d))
    }

    /// Copy with a different drive amplitude.
    pub fn with_drive(mut self, eps_d: C64) -> Self {
        self.eps_d = eps_d;
        self
    }

    /// Copy with a different cavity detuning, keeping `δ` fixed.
    pub fn with_cavity_detuning(mut self, delta_c: f64) -> Self {
        let shift = self.delta_q - self.delta_c;
        self.delta_c = delta_c;
        self.delta_q = delta_c + shift;
        self
    }
}
