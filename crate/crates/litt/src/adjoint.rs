//! Backward-in-time adjoint system.
//!
//! Given a forward trajectory and the terminal residual, the march computes
//! the adjoint temperature p (implicit Euler in reversed time, MINRES with
//! Jacobi preconditioning) and the adjoint radiation ψ (same elliptic operator
//! as the forward P1 problem with zero-flux applicator boundary, CG with
//! incomplete Cholesky). The damage history enters through two time-nonlocal
//! memory terms: running trapezoidal accumulators of
//!
//!   mem_a(t) = ∫_t^τ (∂μ_a/∂ω) φ (ψ − p) dθ,
//!   mem_d(t) = ∫_t^τ (∂D/∂ω) ∇φ·∇ψ dθ,
//!
//! multiplied at each level by the temperature derivative of the Arrhenius
//! rate. Within a backward step, ψ_k is solved from the newest available p
//! (p_{k+1}), so the trailing trapezoid panel of the accumulator for step k
//! pairs (ψ_k, p_{k+1}); the panel is refreshed with the final p_k before the
//! march moves on. No inner fixed-point iteration is performed.

use crate::error::{Error, Result};
use crate::forward::{HeatStepper, PerfusionField, SolverSettings, StateTrajectory, Workspace};
use crate::mesh::{
    assemble_mass, elementwise_gradient, project_elementwise_to_nodes, AxiMesh, FeField, Unit,
};
use crate::sparse::minres_solve;
use crate::tissue::TissueParams;

/// Adjoint fields on the forward time grid, plus the memory accumulators that
/// fed each backward step.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    /// Adjoint temperature p.
    pub p: Vec<FeField>,
    /// Adjoint radiation ψ.
    pub psi: Vec<FeField>,
    /// Accumulated absorption memory ∫_t^τ (∂μ_a/∂ω) φ (ψ − p) dθ.
    pub mem_absorption: Vec<FeField>,
    /// Accumulated diffusion memory ∫_t^τ (∂D/∂ω) ∇φ·∇ψ dθ.
    pub mem_diffusion: Vec<FeField>,
}

/// Solves the adjoint radiation problem
/// −∇·(D∇ψ) + μ_a ψ = μ_a p with zero flux on the applicator interface and
/// the ½ψ Robin term on the ambient boundary.
pub fn solve_adjoint_radiation(
    mesh: &AxiMesh,
    params: &TissueParams,
    omega: &FeField,
    p: &FeField,
    settings: &SolverSettings,
) -> Result<FeField> {
    let ws = Workspace::new(mesh, params, *settings)?;
    let psi = solve_adjoint_radiation_in(&ws, &omega.values, &p.values)?;
    Ok(FeField::from_values(psi, Unit::Dimensionless))
}

fn solve_adjoint_radiation_in(ws: &Workspace, omega: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let (_, mass_mu_a) = ws.radiation_operator(omega)?;
    let rhs = mass_mu_a.matvec(p)?;
    ws.solve_radiation_system(omega, 0.0, Some(&rhs))
}

/// Nodal integrand of the absorption memory term at one time level.
fn absorption_integrand(
    params: &TissueParams,
    omega: &[f64],
    phi: &[f64],
    psi: &[f64],
    p: &[f64],
) -> Vec<f64> {
    omega
        .iter()
        .zip(phi)
        .zip(psi.iter().zip(p))
        .map(|((&w, &f), (&s, &q))| params.d_optics_d_omega(w).0 * f * (s - q))
        .collect()
}

/// Nodal integrand of the diffusion memory term at one time level: the
/// elementwise-constant ∇φ·∇ψ is projected back to nodes by r-weighted
/// mass-lumped averaging and then weighted by the nodal ∂D/∂ω.
///
/// The ∂D/∂ω factor must be applied nodally, not per element: its e^{−ω}
/// saturation has to cancel pointwise against the Arrhenius rate derivative
/// that later multiplies the accumulator. Averaging ∂D/∂ω across an element
/// that straddles the coagulation front leaks a nonzero memory value onto
/// fully saturated nodes, whose rate derivative is astronomically large, and
/// the backward march then amplifies it without bound.
fn diffusion_integrand(
    mesh: &AxiMesh,
    params: &TissueParams,
    omega: &[f64],
    phi: &[f64],
    psi: &[f64],
) -> Result<Vec<f64>> {
    let grad_phi = elementwise_gradient(mesh, phi)?;
    let grad_psi = elementwise_gradient(mesh, psi)?;
    let elem_values: Vec<f64> = (0..mesh.n_triangles())
        .map(|t| grad_phi[t][0] * grad_psi[t][0] + grad_phi[t][1] * grad_psi[t][1])
        .collect();
    let grad_product = project_elementwise_to_nodes(mesh, &elem_values)?;
    Ok(omega
        .iter()
        .zip(&grad_product)
        .map(|(&w, &gp)| params.d_optics_d_omega(w).1 * gp)
        .collect())
}

/// Direct trapezoidal evaluation of both memory accumulators at step `k`,
/// given the adjoint fields for steps k..N (aligned with the state indices).
/// `run_adjoint` maintains the same sums incrementally.
pub fn accumulate_memory(
    mesh: &AxiMesh,
    params: &TissueParams,
    state: &StateTrajectory,
    psi: &[FeField],
    p: &[FeField],
    k: usize,
) -> Result<(FeField, FeField)> {
    let n_levels = state.times.len();
    if psi.len() != n_levels || p.len() != n_levels {
        return Err(Error::GridMismatch(format!(
            "adjoint fields ({} levels) do not match the state grid ({n_levels} levels)",
            psi.len()
        )));
    }
    let n = mesh.n_nodes();
    let dt = state.dt();
    let integrands = |j: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let i1 = absorption_integrand(
            params,
            &state.damage[j].values,
            &state.radiation[j].values,
            &psi[j].values,
            &p[j].values,
        );
        let i2 = diffusion_integrand(
            mesh,
            params,
            &state.damage[j].values,
            &state.radiation[j].values,
            &psi[j].values,
        )?;
        Ok((i1, i2))
    };
    let mut mem1 = vec![0.0; n];
    let mut mem2 = vec![0.0; n];
    if k + 1 < n_levels {
        let (mut i1_cur, mut i2_cur) = integrands(k)?;
        for j in k + 1..n_levels {
            let (i1_next, i2_next) = integrands(j)?;
            for i in 0..n {
                mem1[i] += 0.5 * dt * (i1_cur[i] + i1_next[i]);
                mem2[i] += 0.5 * dt * (i2_cur[i] + i2_next[i]);
            }
            i1_cur = i1_next;
            i2_cur = i2_next;
        }
    }
    Ok((
        FeField::from_values(mem1, Unit::Dimensionless),
        FeField::from_values(mem2, Unit::Dimensionless),
    ))
}

/// Weak source −(F₁ + F₂) of the backward heat step at one level:
/// F = (∂rate/∂T)(T_k) ⊙ (mem_a + mem_d), returned as the nodal field F.
fn memory_source(params: &TissueParams, temperature: &[f64], mem1: &[f64], mem2: &[f64]) -> Vec<f64> {
    temperature
        .iter()
        .zip(mem1.iter().zip(mem2))
        .map(|(&t, (&m1, &m2))| params.arrhenius_rate_derivative(t) * (m1 + m2))
        .collect()
}

/// One implicit Euler step of the adjoint bio-heat equation in reversed time,
/// solved with MINRES and Jacobi preconditioning.
#[allow(clippy::too_many_arguments)]
pub fn step_adjoint_bioheat(
    mesh: &AxiMesh,
    params: &TissueParams,
    p_next: &FeField,
    temperature: &FeField,
    mem_absorption: &FeField,
    mem_diffusion: &FeField,
    xi: &PerfusionField,
    dt: f64,
    settings: &SolverSettings,
) -> Result<FeField> {
    let ws = Workspace::new(mesh, params, *settings)?;
    let stepper = HeatStepper::new(&ws, xi, dt)?;
    let mass = assemble_mass(mesh, 1.0)?;
    let p = adjoint_step_in(
        &stepper,
        &mass,
        &p_next.values,
        &temperature.values,
        &mem_absorption.values,
        &mem_diffusion.values,
    )?;
    Ok(FeField::from_values(p, Unit::Kelvin))
}

fn adjoint_step_in(
    stepper: &HeatStepper,
    mass: &crate::SparseMatrix,
    p_next: &[f64],
    temperature: &[f64],
    mem1: &[f64],
    mem2: &[f64],
) -> Result<Vec<f64>> {
    let params = stepper.ws.params;
    let settings = &stepper.ws.settings;
    let n = p_next.len();
    let source = memory_source(params, temperature, mem1, mem2);
    let weak_source = mass.matvec(&source)?;
    let mut rhs = stepper.mass_rho_cp.matvec(p_next)?;
    for (r, s) in rhs.iter_mut().zip(weak_source) {
        *r = *r / stepper.dt - s;
    }
    let (p, report) = minres_solve(
        &stepper.matrix,
        &rhs,
        &stepper.jacobi,
        settings.rel_tol,
        settings.max_iter(n),
    )?;
    if !report.converged {
        return Err(Error::SolverDidNotConverge {
            solver: "MINRES (adjoint bio-heat)",
            iterations: report.iterations,
            relative_residual: report.final_residual_norm,
            tolerance: settings.rel_tol,
        });
    }
    Ok(p)
}

/// Marches the adjoint system backward over the trajectory, starting from the
/// terminal condition p(τ) = (T(τ) − T_meas)/(ρ C_p).
pub fn run_adjoint(
    mesh: &AxiMesh,
    params: &TissueParams,
    state: &StateTrajectory,
    t_meas: &FeField,
    xi: &PerfusionField,
    settings: &SolverSettings,
) -> Result<AdjointTrajectory> {
    let n = mesh.n_nodes();
    let n_steps = state.n_steps();
    if t_meas.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "measurement with {} values on a mesh with {n} nodes",
            t_meas.len()
        )));
    }
    if n_steps == 0 {
        return Err(Error::GridMismatch("trajectory has no time steps".into()));
    }
    let dt = state.dt();
    let ws = Workspace::new(mesh, params, *settings)?;
    let stepper = HeatStepper::new(&ws, xi, dt)?;
    let mass = assemble_mass(mesh, 1.0)?;
    let coupled = params.damage_coupling;

    let mut p = vec![FeField::zeros(n, Unit::Kelvin); n_steps + 1];
    let mut psi = vec![FeField::zeros(n, Unit::Dimensionless); n_steps + 1];
    let mut mem1 = vec![FeField::zeros(n, Unit::Dimensionless); n_steps + 1];
    let mut mem2 = vec![FeField::zeros(n, Unit::Dimensionless); n_steps + 1];

    let rho_cp = params.volumetric_heat_capacity();
    let terminal: Vec<f64> = state
        .final_temperature()
        .values
        .iter()
        .zip(&t_meas.values)
        .map(|(&t, &m)| (t - m) / rho_cp)
        .collect();
    p[n_steps] = FeField::from_values(terminal, Unit::Kelvin);
    if coupled {
        psi[n_steps] = FeField::from_values(
            solve_adjoint_radiation_in(&ws, &state.damage[n_steps].values, &p[n_steps].values)?,
            Unit::Dimensionless,
        );
    }

    // Running trapezoid sums over fully finalized panels, and the integrand
    // values at the most recently finalized level.
    let mut cum1 = vec![0.0; n];
    let mut cum2 = vec![0.0; n];
    let mut i1_last = if coupled {
        absorption_integrand(
            params,
            &state.damage[n_steps].values,
            &state.radiation[n_steps].values,
            &psi[n_steps].values,
            &p[n_steps].values,
        )
    } else {
        vec![0.0; n]
    };
    let mut i2_last = if coupled {
        diffusion_integrand(
            mesh,
            params,
            &state.damage[n_steps].values,
            &state.radiation[n_steps].values,
            &psi[n_steps].values,
        )?
    } else {
        vec![0.0; n]
    };

    for k in (0..n_steps).rev() {
        if coupled {
            psi[k] = FeField::from_values(
                solve_adjoint_radiation_in(&ws, &state.damage[k].values, &p[k + 1].values)?,
                Unit::Dimensionless,
            );
            let i1_prov = absorption_integrand(
                params,
                &state.damage[k].values,
                &state.radiation[k].values,
                &psi[k].values,
                &p[k + 1].values,
            );
            let i2_k = diffusion_integrand(
                mesh,
                params,
                &state.damage[k].values,
                &state.radiation[k].values,
                &psi[k].values,
            )?;
            let m1: Vec<f64> = (0..n)
                .map(|i| cum1[i] + 0.5 * dt * (i1_last[i] + i1_prov[i]))
                .collect();
            let m2: Vec<f64> = (0..n)
                .map(|i| cum2[i] + 0.5 * dt * (i2_last[i] + i2_k[i]))
                .collect();
            mem1[k] = FeField::from_values(m1, Unit::Dimensionless);
            mem2[k] = FeField::from_values(m2, Unit::Dimensionless);

            let p_k = adjoint_step_in(
                &stepper,
                &mass,
                &p[k + 1].values,
                &state.temperature[k].values,
                &mem1[k].values,
                &mem2[k].values,
            )?;
            p[k] = FeField::from_values(p_k, Unit::Kelvin);

            // Finalize the trailing panel with the solved p_k.
            let i1_final = absorption_integrand(
                params,
                &state.damage[k].values,
                &state.radiation[k].values,
                &psi[k].values,
                &p[k].values,
            );
            for i in 0..n {
                cum1[i] += 0.5 * dt * (i1_last[i] + i1_final[i]);
                cum2[i] += 0.5 * dt * (i2_last[i] + i2_k[i]);
            }
            i1_last = i1_final;
            i2_last = i2_k;
        } else {
            let zeros = vec![0.0; n];
            let p_k = adjoint_step_in(
                &stepper,
                &mass,
                &p[k + 1].values,
                &state.temperature[k].values,
                &zeros,
                &zeros,
            )?;
            p[k] = FeField::from_values(p_k, Unit::Kelvin);
        }
    }

    Ok(AdjointTrajectory {
        times: state.times.clone(),
        p,
        psi,
        mem_absorption: mem1,
        mem_diffusion: mem2,
    })
}
