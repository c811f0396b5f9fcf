//! TOML run configuration: geometry, tissue constants (temperatures in °C as
//! tabulated), time discretization, vessels, measurement, and optimizer
//! sections, all optional with embedded defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::vessels::{default_vessel_layout, VesselKind, VesselSpec};
use crate::error::{Error, Result};
use crate::forward::SolverSettings;
use crate::mesh::GeometryConfig;
use crate::optimize::IdentifyConfig;
use crate::tissue::{celsius_to_kelvin, TissueParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueSection {
    pub rho: f64,
    pub c_p: f64,
    pub kappa: f64,
    pub alpha_cool: f64,
    pub alpha_amb: f64,
    pub beta_q: f64,
    pub q_hat_app: f64,
    pub t0_celsius: f64,
    pub t_cool_celsius: f64,
    pub t_b_celsius: f64,
    pub t_amb_celsius: f64,
    pub r_gas: f64,
    pub a_freq: f64,
    pub e_a: f64,
    pub xi_max: f64,
    pub mu_a_native: f64,
    pub mu_a_coag: f64,
    pub mu_s_native: f64,
    pub mu_s_coag: f64,
    pub g_native: f64,
    pub g_coag: f64,
    pub damage_coupling: bool,
}

impl Default for TissueSection {
    fn default() -> Self {
        let p = TissueParams::default();
        Self {
            rho: p.rho,
            c_p: p.c_p,
            kappa: p.kappa,
            alpha_cool: p.alpha_cool,
            alpha_amb: p.alpha_amb,
            beta_q: p.beta_q,
            q_hat_app: p.q_hat_app,
            t0_celsius: 21.8,
            t_cool_celsius: 20.0,
            t_b_celsius: 21.8,
            t_amb_celsius: 21.8,
            r_gas: p.r_gas,
            a_freq: p.a_freq,
            e_a: p.e_a,
            xi_max: p.xi_max,
            mu_a_native: p.mu_a_native,
            mu_a_coag: p.mu_a_coag,
            mu_s_native: p.mu_s_native,
            mu_s_coag: p.mu_s_coag,
            g_native: p.g_native,
            g_coag: p.g_coag,
            damage_coupling: p.damage_coupling,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeSection {
    pub dt: f64,
    pub t_on: f64,
    pub t_off: f64,
    pub tau_end: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt: 1.0,
            t_on: 25.0,
            t_off: 1175.0,
            tau_end: 1200.0,
        }
    }
}

/// Vessel entry; omitted amplitude defaults to the tissue's xi_max.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VesselEntry {
    pub kind: VesselKind,
    pub center: [f64; 2],
    pub extent: f64,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementSection {
    /// Measurement times τ₁ < … < τ_m [s].
    pub times: Vec<f64>,
    /// Noise standard deviation [K].
    pub sigma: f64,
    pub seed: u64,
    /// Diffusion end time of the smoothing filter [m²].
    pub smoothing_end_time: f64,
    /// Smooth even when sigma = 0 (measurements are smoothed automatically
    /// whenever sigma > 0).
    pub force_smoothing: bool,
    /// Generate the truth run on a once-refined mesh and interpolate the
    /// snapshots down, instead of committing the inverse crime.
    pub refined_truth: bool,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self {
            times: vec![60.0],
            sigma: 0.0,
            seed: 7,
            smoothing_end_time: 2e-7,
            force_smoothing: false,
            refined_truth: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSection {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS memory; 0 selects projected gradient descent.
    pub memory: usize,
    pub beta: f64,
    pub c: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let c = IdentifyConfig::default();
        Self {
            lambda: c.lambda,
            tol: c.tol,
            max_iter: c.max_iter,
            memory: c.memory,
            beta: c.beta,
            c: c.c,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub tissue: TissueSection,
    pub time: TimeSection,
    /// Omitted entirely: the default two-column vessel layout. Present but
    /// empty: no vessels.
    pub vessels: Option<Vec<VesselEntry>>,
    pub measurement: MeasurementSection,
    pub optimizer: OptimizerSection,
    pub solver: SolverSettings,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn tissue_params(&self) -> TissueParams {
        let t = &self.tissue;
        TissueParams {
            rho: t.rho,
            c_p: t.c_p,
            kappa: t.kappa,
            alpha_cool: t.alpha_cool,
            alpha_amb: t.alpha_amb,
            beta_q: t.beta_q,
            q_hat_app: t.q_hat_app,
            t_on: self.time.t_on,
            t_off: self.time.t_off,
            tau_end: self.time.tau_end,
            t0: celsius_to_kelvin(t.t0_celsius),
            t_cool: celsius_to_kelvin(t.t_cool_celsius),
            t_b: celsius_to_kelvin(t.t_b_celsius),
            t_amb: celsius_to_kelvin(t.t_amb_celsius),
            r_gas: t.r_gas,
            a_freq: t.a_freq,
            e_a: t.e_a,
            xi_max: t.xi_max,
            mu_a_native: t.mu_a_native,
            mu_a_coag: t.mu_a_coag,
            mu_s_native: t.mu_s_native,
            mu_s_coag: t.mu_s_coag,
            g_native: t.g_native,
            g_coag: t.g_coag,
            damage_coupling: t.damage_coupling,
        }
    }

    pub fn vessel_specs(&self) -> Vec<VesselSpec> {
        match &self.vessels {
            None => default_vessel_layout(VesselKind::Gaussian, self.tissue.xi_max),
            Some(entries) => entries
                .iter()
                .map(|e| VesselSpec {
                    kind: e.kind,
                    center: e.center,
                    extent: e.extent,
                    amplitude: e.amplitude.unwrap_or(self.tissue.xi_max),
                })
                .collect(),
        }
    }

    pub fn identify_config(&self) -> IdentifyConfig {
        IdentifyConfig {
            lambda: self.optimizer.lambda,
            tol: self.optimizer.tol,
            max_iter: self.optimizer.max_iter,
            memory: self.optimizer.memory,
            beta: self.optimizer.beta,
            c: self.optimizer.c,
            max_line_search_trials: 30,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        self.solver
    }

    /// Whether measurements should be smoothed before identification.
    pub fn smoothing_enabled(&self) -> bool {
        self.measurement.sigma > 0.0 || self.measurement.force_smoothing
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.tissue_params().validate()?;
        let dt = self.time.dt;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time.dt must be positive, got {dt}")));
        }
        let mut last = 0.0;
        for &t in &self.measurement.times {
            if t <= last {
                return Err(Error::Config(
                    "measurement.times must be positive and strictly increasing".into(),
                ));
            }
            let steps = t / dt;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "measurement time {t} is not a multiple of dt = {dt}"
                )));
            }
            last = t;
        }
        if last >= self.time.tau_end {
            return Err(Error::Config(format!(
                "last measurement time {last} must precede tau_end {}",
                self.time.tau_end
            )));
        }
        let steps = self.time.tau_end / dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "tau_end {} is not a multiple of dt = {dt}",
                self.time.tau_end
            )));
        }
        if self.measurement.sigma < 0.0 {
            return Err(Error::Config("measurement.sigma must be nonnegative".into()));
        }
        if self.measurement.smoothing_end_time < 0.0 {
            return Err(Error::Config(
                "measurement.smoothing_end_time must be nonnegative".into(),
            ));
        }
        if let Some(entries) = &self.vessels {
            for e in entries {
                VesselSpec {
                    kind: e.kind,
                    center: e.center,
                    extent: e.extent,
                    amplitude: e.amplitude.unwrap_or(self.tissue.xi_max),
                }
                .validate()?;
            }
        }
        let o = &self.optimizer;
        if o.lambda < 0.0 || !(o.tol > 0.0) || !(0.0 < o.beta && o.beta < 1.0) || !(o.c > 0.0) {
            return Err(Error::Config(
                "optimizer section: lambda >= 0, tol > 0, 0 < beta < 1, c > 0 required".into(),
            ));
        }
        Ok(())
    }
}
