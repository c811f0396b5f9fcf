//! Liver tissue model: material constants, coagulation-dependent optical
//! coefficients, the Arrhenius damage rate, and the laser power schedule.
//!
//! Everything is SI with temperatures in kelvin. The Arrhenius frequency
//! factor (3.1e98 s⁻¹) forces log-space evaluation of the rate; the exponent
//! ln A − E_a/(R T) is bounded above by ln A, so the rate can never overflow
//! for positive temperatures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snaps x·100 to the nearest integer when it is one up to rounding error,
/// so temperatures with at most two decimals convert through exact integer
/// centidegrees.
fn centi(x: f64) -> f64 {
    let p = x * 100.0;
    let r = p.round();
    if (p - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        p
    }
}

/// Converts °C to K with the 273.15 offset. Values with at most two decimals
/// (all of Table-1's) round-trip bitwise through [`kelvin_to_celsius`]; plain
/// `c + 273.15` would drift by a few ulp.
pub fn celsius_to_kelvin(c: f64) -> f64 {
    (centi(c) + 27315.0) / 100.0
}

/// Inverse of [`celsius_to_kelvin`], exact on the same values.
pub fn kelvin_to_celsius(k: f64) -> f64 {
    (centi(k) - 27315.0) / 100.0
}

/// All tissue, laser, and damage-model constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueParams {
    /// Tissue density [kg·m⁻³].
    pub rho: f64,
    /// Specific heat capacity [J·kg⁻¹·K⁻¹].
    pub c_p: f64,
    /// Heat conductivity [W·m⁻¹·K⁻¹].
    pub kappa: f64,
    /// Heat transfer coefficient on the applicator interface [W·K⁻¹·m⁻²].
    pub alpha_cool: f64,
    /// Heat transfer coefficient on the outer liver surface [W·K⁻¹·m⁻²].
    pub alpha_amb: f64,
    /// Coolant absorption factor [1].
    pub beta_q: f64,
    /// Total laser power [W].
    pub q_hat_app: f64,
    /// Laser switch-on time [s].
    pub t_on: f64,
    /// Laser switch-off time [s].
    pub t_off: f64,
    /// End of treatment [s].
    pub tau_end: f64,
    /// Initial tissue temperature [K].
    pub t0: f64,
    /// Coolant temperature [K].
    pub t_cool: f64,
    /// Blood temperature [K].
    pub t_b: f64,
    /// Ambient temperature [K].
    pub t_amb: f64,
    /// Universal gas constant [J·mol⁻¹·K⁻¹].
    pub r_gas: f64,
    /// Arrhenius frequency factor [s⁻¹].
    pub a_freq: f64,
    /// Activation energy [J·mol⁻¹].
    pub e_a: f64,
    /// Perfusion rate inside a blood vessel [W·K⁻¹·m⁻³].
    pub xi_max: f64,
    /// Native / coagulated absorption coefficients [m⁻¹].
    pub mu_a_native: f64,
    pub mu_a_coag: f64,
    /// Native / coagulated scattering coefficients [m⁻¹].
    pub mu_s_native: f64,
    pub mu_s_coag: f64,
    /// Native / coagulated anisotropy factors [1].
    pub g_native: f64,
    pub g_coag: f64,
    /// When false, the optical coefficients stay native and the damage field
    /// is held at its initial value (used to isolate the non-damage physics).
    pub damage_coupling: bool,
}

impl Default for TissueParams {
    fn default() -> Self {
        Self {
            rho: 1.08e3,
            c_p: 3.69e3,
            kappa: 0.48,
            alpha_cool: 250.0,
            alpha_amb: 0.0,
            beta_q: 0.14,
            q_hat_app: 22.0,
            t_on: 25.0,
            t_off: 1175.0,
            tau_end: 1200.0,
            t0: celsius_to_kelvin(21.8),
            t_cool: celsius_to_kelvin(20.0),
            t_b: celsius_to_kelvin(21.8),
            t_amb: celsius_to_kelvin(21.8),
            r_gas: 8.31,
            a_freq: 3.1e98,
            e_a: 6.28e5,
            xi_max: 6e4,
            mu_a_native: 50.0,
            mu_a_coag: 60.0,
            mu_s_native: 8e3,
            mu_s_coag: 3e4,
            g_native: 0.97,
            g_coag: 0.95,
            damage_coupling: true,
        }
    }
}

impl TissueParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("c_p", self.c_p),
            ("kappa", self.kappa),
            ("r_gas", self.r_gas),
            ("a_freq", self.a_freq),
            ("e_a", self.e_a),
            ("t0", self.t0),
            ("t_cool", self.t_cool),
            ("t_b", self.t_b),
            ("t_amb", self.t_amb),
            ("mu_a_native", self.mu_a_native),
            ("mu_a_coag", self.mu_a_coag),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.beta_q) {
            return Err(Error::InvalidParameter(format!(
                "beta_q must lie in [0, 1), got {}",
                self.beta_q
            )));
        }
        for (name, g) in [("g_native", self.g_native), ("g_coag", self.g_coag)] {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {g}"
                )));
            }
        }
        if !(self.t_on < self.t_off && self.t_off <= self.tau_end) {
            return Err(Error::InvalidParameter(format!(
                "laser schedule must satisfy t_on < t_off <= tau_end, got {} / {} / {}",
                self.t_on, self.t_off, self.tau_end
            )));
        }
        if self.alpha_cool < 0.0 || self.alpha_amb < 0.0 || self.xi_max < 0.0 {
            return Err(Error::InvalidParameter(
                "heat transfer coefficients and xi_max must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// ρ·C_p [J·K⁻¹·m⁻³].
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.rho * self.c_p
    }

    /// Coagulated fraction δ = 1 − e^{−ω}.
    pub fn damage_fraction(&self, omega: f64) -> f64 {
        assert!(omega >= 0.0, "negative damage {omega} rejected");
        -f64::exp_m1(-omega)
    }

    /// Optical coefficients blended between native and coagulated by δ(ω).
    pub fn blended_optics(&self, omega: f64) -> OpticalState {
        let delta = self.damage_fraction(omega);
        let mu_a = self.mu_a_native + delta * (self.mu_a_coag - self.mu_a_native);
        let mu_s = self.mu_s_native + delta * (self.mu_s_coag - self.mu_s_native);
        let g = self.g_native + delta * (self.g_coag - self.g_native);
        OpticalState {
            mu_a,
            mu_s,
            g,
            diffusion: 1.0 / (3.0 * (mu_a + mu_s * (1.0 - g))),
        }
    }

    /// (∂μ_a/∂ω, ∂D/∂ω) at the blended state.
    pub fn d_optics_d_omega(&self, omega: f64) -> (f64, f64) {
        assert!(omega >= 0.0, "negative damage {omega} rejected");
        let ddelta = (-omega).exp();
        let d_mu_a = ddelta * (self.mu_a_coag - self.mu_a_native);
        let d_mu_s = ddelta * (self.mu_s_coag - self.mu_s_native);
        let d_g = ddelta * (self.g_coag - self.g_native);
        let state = self.blended_optics(omega);
        // S = μ_a + μ_s (1 − g); D = 1/(3S) so dD/dω = −3 D² dS/dω.
        let ds = d_mu_a + d_mu_s * (1.0 - state.g) - state.mu_s * d_g;
        let dd = -3.0 * state.diffusion * state.diffusion * ds;
        (d_mu_a, dd)
    }

    /// Arrhenius damage rate A·exp(−E_a/(R T)) [s⁻¹], evaluated in log space.
    pub fn arrhenius_rate(&self, temperature: f64) -> f64 {
        assert!(temperature > 0.0, "non-physical temperature {temperature}");
        (self.a_freq.ln() - self.e_a / (self.r_gas * temperature)).exp()
    }

    /// Temperature derivative of the Arrhenius rate,
    /// A·exp(−E_a/(R T))·E_a/(R T²) [s⁻¹·K⁻¹].
    pub fn arrhenius_rate_derivative(&self, temperature: f64) -> f64 {
        self.arrhenius_rate(temperature) * self.e_a
            / (self.r_gas * temperature * temperature)
    }

    /// Effective laser power (1 − β_q)·q̂ inside [t_on, t_off], zero outside [W].
    pub fn laser_power(&self, t: f64) -> f64 {
        if t >= self.t_on && t <= self.t_off {
            (1.0 - self.beta_q) * self.q_hat_app
        } else {
            0.0
        }
    }
}

/// Optical coefficients at one damage level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalState {
    /// Absorption coefficient μ_a [m⁻¹].
    pub mu_a: f64,
    /// Scattering coefficient μ_s [m⁻¹].
    pub mu_s: f64,
    /// Anisotropy factor g [1].
    pub g: f64,
    /// Diffusion coefficient D = 1/(3(μ_a + μ_s(1 − g))) [m].
    pub diffusion: f64,
}
