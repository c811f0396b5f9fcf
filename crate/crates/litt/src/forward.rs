//! Forward model: quasi-stationary P1 radiation, implicit-Euler bio-heat
//! stepping, and trapezoidal Arrhenius damage accumulation.
//!
//! Per time step: optical coefficients are evaluated nodally from the damage
//! field lagged by one step, the radiation system is solved (skipped while the
//! laser is off), the temperature takes one implicit Euler step, and damage is
//! accumulated from the two temperature endpoints. Radiation and bio-heat
//! systems are SPD and solved with CG preconditioned by incomplete Cholesky.

use crate::error::{Error, Result};
use crate::mesh::{
    assemble_boundary_load, assemble_boundary_mass, assemble_mass, assemble_stiffness, AxiMesh,
    BoundaryTag, FeField, Unit,
};
use crate::sparse::{cg_solve, incomplete_cholesky, IncompleteCholesky, JacobiPrecond};
use crate::tissue::TissueParams;
use crate::SparseMatrix;

/// Iterative-solver settings shared by the whole pipeline.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative residual tolerance of the linear solves.
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_factor: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

impl SolverSettings {
    pub fn max_iter(&self, n: usize) -> usize {
        self.max_iter_factor.saturating_mul(n).max(50)
    }
}

/// Nonnegative nodal perfusion-rate field (the admissible set).
#[derive(Debug, Clone, PartialEq)]
pub struct PerfusionField {
    xi: FeField,
}

impl PerfusionField {
    pub fn new(xi: FeField) -> Result<Self> {
        if let Some((i, &v)) = xi
            .values
            .iter()
            .enumerate()
            .find(|(_, &v)| v < 0.0 || !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "perfusion rate must be nonnegative and finite, node {i} has {v}"
            )));
        }
        Ok(Self { xi })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            xi: FeField::zeros(n, Unit::PerfusionRate),
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(FeField::from_values(values, Unit::PerfusionRate))
    }

    pub fn field(&self) -> &FeField {
        &self.xi
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.xi.values
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// Time series of temperature, radiative energy, and damage on the mesh.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub temperature: Vec<FeField>,
    pub radiation: Vec<FeField>,
    pub damage: Vec<FeField>,
}

impl StateTrajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn final_temperature(&self) -> &FeField {
        self.temperature.last().expect("non-empty trajectory")
    }

    pub fn final_damage(&self) -> &FeField {
        self.damage.last().expect("non-empty trajectory")
    }

    /// Index of the stored state at time `t` on the uniform grid.
    pub fn index_at_time(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        if dt <= 0.0 {
            return Err(Error::GridMismatch("trajectory has no time steps".into()));
        }
        let k = ((t - self.times[0]) / dt).round();
        let idx = k as usize;
        if k < 0.0 || idx >= self.times.len() || (self.times[0] + k * dt - t).abs() > 1e-9 * dt {
            return Err(Error::GridMismatch(format!(
                "time {t} is not on the trajectory grid [{}, {}] with dt = {dt}",
                self.times[0],
                self.times.last().unwrap()
            )));
        }
        Ok(idx)
    }
}

/// Mesh-dependent operators shared by the forward and adjoint solvers.
pub(crate) struct Workspace<'a> {
    pub mesh: &'a AxiMesh,
    pub params: &'a TissueParams,
    pub settings: SolverSettings,
    /// Boundary mass on the ambient boundary with unit coefficient.
    pub amb_mass: Option<SparseMatrix>,
    /// ∫_RAD φ_i r ds, the unit boundary load on the radiating section.
    pub rad_load: Vec<f64>,
    /// ∫_RAD r ds.
    pub rad_measure: f64,
}

impl<'a> Workspace<'a> {
    pub fn new(mesh: &'a AxiMesh, params: &'a TissueParams, settings: SolverSettings) -> Result<Self> {
        params.validate()?;
        let amb_mass = if mesh.has_tag(BoundaryTag::Amb) {
            Some(assemble_boundary_mass(mesh, BoundaryTag::Amb, 1.0)?)
        } else {
            None
        };
        let rad_load = if mesh.has_tag(BoundaryTag::Rad) {
            assemble_boundary_load(mesh, BoundaryTag::Rad, 1.0)?
        } else {
            vec![0.0; mesh.n_nodes()]
        };
        let rad_measure = rad_load.iter().sum();
        Ok(Self {
            mesh,
            params,
            settings,
            amb_mass,
            rad_load,
            rad_measure,
        })
    }

    /// Nodal (μ_a, D) fields from the damage field; native values when the
    /// damage coupling is frozen.
    pub fn optics_fields(&self, omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = omega.len();
        let mut mu_a = Vec::with_capacity(n);
        let mut diffusion = Vec::with_capacity(n);
        for &w in omega {
            let state = if self.params.damage_coupling {
                self.params.blended_optics(w)
            } else {
                self.params.blended_optics(0.0)
            };
            mu_a.push(state.mu_a);
            diffusion.push(state.diffusion);
        }
        (mu_a, diffusion)
    }

    /// Radiation system matrix K_D + M_μa + ½ B_amb and the absorption mass
    /// M_μa (reused for the bio-heat source and the adjoint right-hand side).
    pub fn radiation_operator(&self, omega: &[f64]) -> Result<(SparseMatrix, SparseMatrix)> {
        let (mu_a, diffusion) = self.optics_fields(omega);
        let stiff = assemble_stiffness(self.mesh, diffusion.as_slice())?;
        let mass_mu_a = assemble_mass(self.mesh, mu_a.as_slice())?;
        let matrix = match &self.amb_mass {
            Some(b) => {
                SparseMatrix::linear_combination(&[(1.0, &stiff), (1.0, &mass_mu_a), (0.5, b)])?
            }
            None => SparseMatrix::linear_combination(&[(1.0, &stiff), (1.0, &mass_mu_a)])?,
        };
        Ok((matrix, mass_mu_a))
    }

    /// Solves the P1 system for a boundary source `flux` on the radiating
    /// section and a volumetric weak source `volume_rhs` (used by the adjoint).
    pub fn solve_radiation_system(
        &self,
        omega: &[f64],
        flux: f64,
        volume_rhs: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let n = self.mesh.n_nodes();
        let (matrix, _) = self.radiation_operator(omega)?;
        let mut rhs = vec![0.0; n];
        if flux != 0.0 {
            for (r, &l) in rhs.iter_mut().zip(&self.rad_load) {
                *r = flux * l;
            }
        }
        if let Some(v) = volume_rhs {
            for (r, &s) in rhs.iter_mut().zip(v) {
                *r += s;
            }
        }
        let ic = incomplete_cholesky(&matrix)?;
        let (phi, report) = cg_solve(&matrix, &rhs, &ic, self.settings.rel_tol, self.settings.max_iter(n))?;
        if !report.converged {
            return Err(Error::SolverDidNotConverge {
                solver: "CG (radiation)",
                iterations: report.iterations,
                relative_residual: report.final_residual_norm,
                tolerance: self.settings.rel_tol,
            });
        }
        Ok(phi)
    }

    /// Physical boundary flux at time t: q_app(t) / (2π ∫_RAD r ds).
    /// All weak forms drop the factor 2π, so energy bookkeeping is per radian.
    pub fn boundary_flux(&self, t: f64) -> Result<f64> {
        let power = self.params.laser_power(t);
        if power == 0.0 {
            return Ok(0.0);
        }
        if self.rad_measure <= 0.0 {
            return Err(Error::InvalidGeometry(
                "laser is on but the mesh has no radiating boundary".into(),
            ));
        }
        Ok(power / (2.0 * std::f64::consts::PI * self.rad_measure))
    }
}

/// Constant-in-time operators of one bio-heat marching problem
/// (fixed mesh, parameters, perfusion field, and time step).
pub(crate) struct HeatStepper<'a> {
    pub ws: &'a Workspace<'a>,
    pub dt: f64,
    /// M_ρCp/dt + K_κ + M_ξ + α B.
    pub matrix: SparseMatrix,
    pub ic: IncompleteCholesky<f64>,
    pub jacobi: JacobiPrecond<f64>,
    /// M_ρCp (without the 1/dt factor).
    pub mass_rho_cp: SparseMatrix,
    /// Robin loads α_cool T_cool ∫φ r ds + α_amb T_amb ∫φ r ds, plus the
    /// perfusion supply T_b · (M_ξ 1).
    pub const_rhs: Vec<f64>,
}

impl<'a> HeatStepper<'a> {
    pub fn new(ws: &'a Workspace<'a>, xi: &PerfusionField, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let mesh = ws.mesh;
        let params = ws.params;
        let n = mesh.n_nodes();
        if xi.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "perfusion field has {} values on a mesh with {n} nodes",
                xi.len()
            )));
        }
        let mass_rho_cp = assemble_mass(mesh, params.volumetric_heat_capacity())?;
        let stiff = assemble_stiffness(mesh, params.kappa)?;
        let mass_xi = assemble_mass(mesh, xi.as_slice())?;

        let mut terms: Vec<(f64, &SparseMatrix)> = vec![
            (1.0 / dt, &mass_rho_cp),
            (1.0, &stiff),
            (1.0, &mass_xi),
        ];
        let mut boundary = Vec::new();
        if params.alpha_cool != 0.0 {
            for tag in [BoundaryTag::Rad, BoundaryTag::Cool] {
                if mesh.has_tag(tag) {
                    boundary.push((params.alpha_cool, assemble_boundary_mass(mesh, tag, 1.0)?));
                }
            }
        }
        if params.alpha_amb != 0.0 {
            if let Some(b) = &ws.amb_mass {
                boundary.push((params.alpha_amb, b.clone()));
            }
        }
        for (c, b) in &boundary {
            terms.push((*c, b));
        }
        let matrix = SparseMatrix::linear_combination(&terms)?;
        let ic = incomplete_cholesky(&matrix)?;
        let jacobi = crate::sparse::jacobi(&matrix)?;

        let mut const_rhs = mass_xi.matvec(&vec![params.t_b; n])?;
        if params.alpha_cool != 0.0 {
            for tag in [BoundaryTag::Rad, BoundaryTag::Cool] {
                if mesh.has_tag(tag) {
                    let load = assemble_boundary_load(mesh, tag, params.alpha_cool * params.t_cool)?;
                    for (r, l) in const_rhs.iter_mut().zip(load) {
                        *r += l;
                    }
                }
            }
        }
        if params.alpha_amb != 0.0 && mesh.has_tag(BoundaryTag::Amb) {
            let load = assemble_boundary_load(mesh, BoundaryTag::Amb, params.alpha_amb * params.t_amb)?;
            for (r, l) in const_rhs.iter_mut().zip(load) {
                *r += l;
            }
        }

        Ok(Self {
            ws,
            dt,
            matrix,
            ic,
            jacobi,
            mass_rho_cp,
            const_rhs,
        })
    }

    /// One implicit Euler step; `weak_source` is an already-assembled load
    /// vector (∫ μ_a φ v r for the forward model).
    pub fn step(&self, t_prev: &[f64], weak_source: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = t_prev.len();
        let mut rhs = self.mass_rho_cp.matvec(t_prev)?;
        for (r, c) in rhs.iter_mut().zip(&self.const_rhs) {
            *r = *r / self.dt + c;
        }
        if let Some(src) = weak_source {
            for (r, &s) in rhs.iter_mut().zip(src) {
                *r += s;
            }
        }
        let (t_next, report) = cg_solve(
            &self.matrix,
            &rhs,
            &self.ic,
            self.ws.settings.rel_tol,
            self.ws.settings.max_iter(n),
        )?;
        if !report.converged {
            return Err(Error::SolverDidNotConverge {
                solver: "CG (bio-heat)",
                iterations: report.iterations,
                relative_residual: report.final_residual_norm,
                tolerance: self.ws.settings.rel_tol,
            });
        }
        Ok(t_next)
    }
}

/// Galerkin solution of the quasi-stationary P1 radiation problem at time `t`
/// with optics evaluated from `omega`.
pub fn solve_radiation(
    mesh: &AxiMesh,
    params: &TissueParams,
    omega: &FeField,
    t: f64,
    settings: &SolverSettings,
) -> Result<FeField> {
    let ws = Workspace::new(mesh, params, *settings)?;
    let flux = ws.boundary_flux(t)?;
    if flux == 0.0 {
        return Ok(FeField::zeros(mesh.n_nodes(), Unit::WattPerSquareMeter));
    }
    let phi = ws.solve_radiation_system(&omega.values, flux, None)?;
    Ok(FeField::from_values(phi, Unit::WattPerSquareMeter))
}

/// One implicit-Euler bio-heat step with Robin boundary conditions.
#[allow(clippy::too_many_arguments)]
pub fn step_bioheat(
    mesh: &AxiMesh,
    params: &TissueParams,
    t_prev: &FeField,
    phi: &FeField,
    omega: &FeField,
    xi: &PerfusionField,
    dt: f64,
    settings: &SolverSettings,
) -> Result<FeField> {
    let ws = Workspace::new(mesh, params, *settings)?;
    let stepper = HeatStepper::new(&ws, xi, dt)?;
    let source = if phi.values.iter().any(|&v| v != 0.0) {
        let (mu_a, _) = ws.optics_fields(&omega.values);
        let mass_mu_a = assemble_mass(mesh, mu_a.as_slice())?;
        Some(mass_mu_a.matvec(&phi.values)?)
    } else {
        None
    };
    let t_next = stepper.step(&t_prev.values, source.as_deref())?;
    Ok(FeField::from_values(t_next, Unit::Kelvin))
}

/// Trapezoidal Arrhenius update ω_next = ω_prev + dt/2 (r(T_prev) + r(T_next)).
pub fn update_damage(
    params: &TissueParams,
    omega_prev: &FeField,
    t_prev: &FeField,
    t_next: &FeField,
    dt: f64,
) -> FeField {
    let values = omega_prev
        .values
        .iter()
        .zip(&t_prev.values)
        .zip(&t_next.values)
        .map(|((&w, &tp), &tn)| {
            w + 0.5 * dt * (params.arrhenius_rate(tp) + params.arrhenius_rate(tn))
        })
        .collect();
    FeField::from_values(values, Unit::Dimensionless)
}

/// Runs the coupled forward model on the uniform grid t_start..t_end.
#[allow(clippy::too_many_arguments)]
pub fn run_forward(
    mesh: &AxiMesh,
    params: &TissueParams,
    xi: &PerfusionField,
    t_init: &FeField,
    omega_init: &FeField,
    t_start: f64,
    t_end: f64,
    dt: f64,
    settings: &SolverSettings,
) -> Result<StateTrajectory> {
    let n = mesh.n_nodes();
    if t_init.len() != n || omega_init.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial fields of lengths {} and {} on a mesh with {n} nodes",
            t_init.len(),
            omega_init.len()
        )));
    }
    if !(t_start < t_end) {
        return Err(Error::InvalidParameter(format!(
            "time window [{t_start}, {t_end}] is empty"
        )));
    }
    let steps_f = (t_end - t_start) / dt;
    let n_steps = steps_f.round() as usize;
    if n_steps == 0 || (steps_f - n_steps as f64).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} does not divide the time window [{t_start}, {t_end}]"
        )));
    }

    let ws = Workspace::new(mesh, params, *settings)?;
    let stepper = HeatStepper::new(&ws, xi, dt)?;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut temperature = Vec::with_capacity(n_steps + 1);
    let mut radiation = Vec::with_capacity(n_steps + 1);
    let mut damage = Vec::with_capacity(n_steps + 1);

    times.push(t_start);
    temperature.push(FeField::from_values(t_init.values.clone(), Unit::Kelvin));
    damage.push(FeField::from_values(
        omega_init.values.clone(),
        Unit::Dimensionless,
    ));
    let flux0 = ws.boundary_flux(t_start)?;
    let phi0 = if flux0 != 0.0 {
        ws.solve_radiation_system(&omega_init.values, flux0, None)?
    } else {
        vec![0.0; n]
    };
    radiation.push(FeField::from_values(phi0, Unit::WattPerSquareMeter));

    for k in 1..=n_steps {
        let t_k = t_start + k as f64 * dt;
        let omega_prev = &damage[k - 1];
        let flux = ws.boundary_flux(t_k)?;
        let (phi, source) = if flux != 0.0 {
            let (matrix, mass_mu_a) = ws.radiation_operator(&omega_prev.values)?;
            let rhs: Vec<f64> = ws.rad_load.iter().map(|&l| flux * l).collect();
            let ic = incomplete_cholesky(&matrix)?;
            let (phi, report) =
                cg_solve(&matrix, &rhs, &ic, settings.rel_tol, settings.max_iter(n))?;
            if !report.converged {
                return Err(Error::SolverDidNotConverge {
                    solver: "CG (radiation)",
                    iterations: report.iterations,
                    relative_residual: report.final_residual_norm,
                    tolerance: settings.rel_tol,
                });
            }
            let source = mass_mu_a.matvec(&phi)?;
            (phi, Some(source))
        } else {
            (vec![0.0; n], None)
        };

        let t_next = stepper.step(&temperature[k - 1].values, source.as_deref())?;
        let t_next = FeField::from_values(t_next, Unit::Kelvin);
        let omega_next = if params.damage_coupling {
            update_damage(params, omega_prev, &temperature[k - 1], &t_next, dt)
        } else {
            omega_prev.clone()
        };

        times.push(t_k);
        temperature.push(t_next);
        radiation.push(FeField::from_values(phi, Unit::WattPerSquareMeter));
        damage.push(omega_next);
    }

    Ok(StateTrajectory {
        times,
        temperature,
        radiation,
        damage,
    })
}
