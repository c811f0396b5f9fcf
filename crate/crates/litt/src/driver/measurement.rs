//! Synthetic temperature measurements: forward snapshots, seeded Gaussian
//! noise, and linear-diffusion smoothing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::forward::{run_forward, PerfusionField, SolverSettings};
use crate::mesh::{assemble_mass, assemble_stiffness, AxiMesh, FeField, Unit};
use crate::sparse::{cg_solve_warm, incomplete_cholesky};
use crate::tissue::TissueParams;
use crate::SparseMatrix;

/// Temperature snapshots at ordered measurement times.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub times: Vec<f64>,
    pub fields: Vec<FeField>,
    /// Standard deviation of the added nodal noise [K].
    pub noise_sigma: f64,
    /// End time of the smoothing diffusion process [m²].
    pub smoothing_end_time: f64,
}

impl MeasurementSet {
    pub fn validate(&self, tau_end: f64) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.fields.len() {
            return Err(Error::Config(format!(
                "measurement set with {} times and {} fields",
                self.times.len(),
                self.fields.len()
            )));
        }
        for w in self.times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(format!(
                    "measurement times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.times[0] <= 0.0 {
            return Err(Error::Config("first measurement time must be positive".into()));
        }
        if *self.times.last().unwrap() >= tau_end {
            return Err(Error::Config(format!(
                "last measurement time {} must precede tau_end {tau_end}",
                self.times.last().unwrap()
            )));
        }
        Ok(())
    }
}

pub(crate) fn add_gaussian_noise(values: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for v in values {
        *v += normal.sample(rng);
    }
}

/// Runs one forward simulation of the true perfusion field to the last
/// measurement time and snapshots the temperature at each requested time,
/// adding i.i.d. nodal Gaussian noise (deterministic under `seed`).
#[allow(clippy::too_many_arguments)]
pub fn make_measurement(
    mesh: &AxiMesh,
    params: &TissueParams,
    xi_true: &PerfusionField,
    times: &[f64],
    sigma: f64,
    seed: u64,
    dt: f64,
    smoothing_end_time: f64,
    settings: &SolverSettings,
) -> Result<MeasurementSet> {
    if sigma < 0.0 {
        return Err(Error::Config(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    if times.is_empty() {
        return Err(Error::Config("at least one measurement time is required".into()));
    }
    let n = mesh.n_nodes();
    let t_init = FeField::constant(n, params.t0, Unit::Kelvin);
    let omega_init = FeField::zeros(n, Unit::Dimensionless);
    let horizon = *times.last().unwrap();
    let state = run_forward(
        mesh,
        params,
        xi_true,
        &t_init,
        &omega_init,
        0.0,
        horizon,
        dt,
        settings,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = Vec::with_capacity(times.len());
    for &t in times {
        let k = state.index_at_time(t)?;
        let mut values = state.temperature[k].values.clone();
        add_gaussian_noise(&mut values, sigma, &mut rng);
        fields.push(FeField::from_values(values, Unit::Kelvin));
    }
    let set = MeasurementSet {
        times: times.to_vec(),
        fields,
        noise_sigma: sigma,
        smoothing_end_time,
    };
    set.validate(params.tau_end)?;
    Ok(set)
}

/// Like [`make_measurement`], but the truth simulation runs on a once-refined
/// mesh (half the target edge size) and the snapshots are interpolated down
/// to the identification mesh. This breaks the inverse crime of generating
/// the data with the very discretization used for the inversion.
#[allow(clippy::too_many_arguments)]
pub fn make_measurement_refined(
    mesh: &AxiMesh,
    geometry: &crate::mesh::GeometryConfig,
    params: &TissueParams,
    vessels: &[crate::driver::vessels::VesselSpec],
    times: &[f64],
    sigma: f64,
    seed: u64,
    dt: f64,
    smoothing_end_time: f64,
    settings: &SolverSettings,
) -> Result<MeasurementSet> {
    let fine_geom = crate::mesh::GeometryConfig {
        target_edge_size: 0.5 * geometry.target_edge_size,
        ..*geometry
    };
    let fine_mesh = crate::mesh::build_mesh(&fine_geom)?;
    let xi_fine = crate::driver::vessels::synthesize_perfusion(vessels, &fine_mesh)?;
    let fine = make_measurement(
        &fine_mesh,
        params,
        &xi_fine,
        times,
        0.0,
        seed,
        dt,
        smoothing_end_time,
        settings,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields = Vec::with_capacity(times.len());
    for field in &fine.fields {
        let mut values =
            crate::mesh::interpolate_at(&fine_mesh, &field.values, mesh.coords())?;
        add_gaussian_noise(&mut values, sigma, &mut rng);
        fields.push(FeField::from_values(values, Unit::Kelvin));
    }
    let set = MeasurementSet {
        times: times.to_vec(),
        fields,
        noise_sigma: sigma,
        smoothing_end_time,
    };
    set.validate(params.tau_end)?;
    Ok(set)
}

/// Isotropic linear diffusion smoothing: ten implicit Euler steps of
/// u̇ = Δu (unit diffusivity, zero-flux boundaries, r-weighted forms) up to
/// `end_time` [m²]; equivalent to a Gaussian blur of std √(2·end_time).
pub fn smooth_measurement(
    field: &FeField,
    end_time: f64,
    mesh: &AxiMesh,
    settings: &SolverSettings,
) -> Result<FeField> {
    if end_time < 0.0 {
        return Err(Error::Config(format!(
            "smoothing end time must be nonnegative, got {end_time}"
        )));
    }
    if field.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "field with {} values on a mesh with {} nodes",
            field.len(),
            mesh.n_nodes()
        )));
    }
    if end_time == 0.0 {
        return Ok(field.clone());
    }
    let n = mesh.n_nodes();
    let steps = 10;
    let dt = end_time / steps as f64;
    let mass = assemble_mass(mesh, 1.0)?;
    let stiff = assemble_stiffness(mesh, 1.0)?;
    let system = SparseMatrix::linear_combination(&[(1.0, &mass), (dt, &stiff)])?;
    let ic = incomplete_cholesky(&system)?;
    let mut u = field.values.clone();
    for _ in 0..steps {
        let rhs = mass.matvec(&u)?;
        // Warm start from the current level: constants stay exact fixed
        // points of the diffusion step.
        let (next, report) =
            cg_solve_warm(&system, &rhs, &u, &ic, settings.rel_tol, settings.max_iter(n))?;
        if !report.converged {
            return Err(Error::SolverDidNotConverge {
                solver: "CG (smoothing)",
                iterations: report.iterations,
                relative_residual: report.final_residual_norm,
                tolerance: settings.rel_tol,
            });
        }
        u = next;
    }
    Ok(FeField::from_values(u, field.unit))
}
