//! Error tables comparing simulated and reference trajectories in
//! L∞(0,τ;L∞(Ω)) and L²(0,τ;L²(Ω)).

use crate::error::{Error, Result};
use crate::forward::StateTrajectory;
use crate::mesh::{assemble_mass, AxiMesh};
use crate::sparse::weighted_dot;

/// Absolute and relative errors of one quantity in both norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantityErrors {
    pub linf_abs: f64,
    pub linf_rel: f64,
    pub l2_abs: f64,
    pub l2_rel: f64,
}

/// Errors of temperature, radiative energy, and tissue damage δ = 1 − e^{−ω}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTable {
    pub temperature: QuantityErrors,
    pub radiation: QuantityErrors,
    pub damage: QuantityErrors,
}

impl ErrorTable {
    pub fn rows(&self) -> [(&'static str, QuantityErrors); 3] {
        [
            ("temperature", self.temperature),
            ("radiation", self.radiation),
            ("damage", self.damage),
        ]
    }
}

fn quantity_errors(
    mass: &crate::SparseMatrix,
    times: &[f64],
    sim: &[Vec<f64>],
    reference: &[Vec<f64>],
) -> Result<QuantityErrors> {
    let n_levels = times.len();
    let mut linf_abs: f64 = 0.0;
    let mut linf_ref: f64 = 0.0;
    let mut l2_abs_sq = 0.0;
    let mut l2_ref_sq = 0.0;
    for k in 0..n_levels {
        // Trapezoid weights on the time grid.
        let w = if k == 0 {
            0.5 * (times[1] - times[0])
        } else if k == n_levels - 1 {
            0.5 * (times[k] - times[k - 1])
        } else {
            0.5 * (times[k + 1] - times[k - 1])
        };
        let diff: Vec<f64> = sim[k].iter().zip(&reference[k]).map(|(a, b)| a - b).collect();
        for (d, r) in diff.iter().zip(&reference[k]) {
            linf_abs = linf_abs.max(d.abs());
            linf_ref = linf_ref.max(r.abs());
        }
        l2_abs_sq += w * weighted_dot(&diff, &diff, mass)?;
        l2_ref_sq += w * weighted_dot(&reference[k], &reference[k], mass)?;
    }
    let l2_abs = l2_abs_sq.max(0.0).sqrt();
    let l2_ref = l2_ref_sq.max(0.0).sqrt();
    Ok(QuantityErrors {
        linf_abs,
        linf_rel: if linf_ref > 0.0 { linf_abs / linf_ref } else { 0.0 },
        l2_abs,
        l2_rel: if l2_ref > 0.0 { l2_abs / l2_ref } else { 0.0 },
    })
}

/// Temperature error evolution over time: (t, L∞(Ω), L²(Ω)) per level.
pub fn temperature_error_evolution(
    mesh: &AxiMesh,
    sim: &StateTrajectory,
    reference: &StateTrajectory,
) -> Result<Vec<(f64, f64, f64)>> {
    if sim.times.len() != reference.times.len() {
        return Err(Error::GridMismatch(
            "trajectories are sampled on different time grids".into(),
        ));
    }
    let mass = assemble_mass(mesh, 1.0)?;
    let mut rows = Vec::with_capacity(sim.times.len());
    for k in 0..sim.times.len() {
        let diff: Vec<f64> = sim.temperature[k]
            .values
            .iter()
            .zip(&reference.temperature[k].values)
            .map(|(a, b)| a - b)
            .collect();
        let linf = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l2 = weighted_dot(&diff, &diff, &mass)?.max(0.0).sqrt();
        rows.push((sim.times[k], linf, l2));
    }
    Ok(rows)
}

/// Compares two trajectories on a shared grid and mesh.
pub fn compare_metrics(
    mesh: &AxiMesh,
    sim: &StateTrajectory,
    reference: &StateTrajectory,
) -> Result<ErrorTable> {
    if sim.times.len() != reference.times.len()
        || sim
            .times
            .iter()
            .zip(&reference.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
    {
        return Err(Error::GridMismatch(
            "trajectories are sampled on different time grids".into(),
        ));
    }
    if sim.temperature[0].len() != mesh.n_nodes()
        || reference.temperature[0].len() != mesh.n_nodes()
    {
        return Err(Error::GridMismatch(
            "trajectories and mesh have different node counts".into(),
        ));
    }
    if sim.times.len() < 2 {
        return Err(Error::GridMismatch("trajectories need at least two levels".into()));
    }
    let mass = assemble_mass(mesh, 1.0)?;
    let temp_sim: Vec<Vec<f64>> = sim.temperature.iter().map(|f| f.values.clone()).collect();
    let temp_ref: Vec<Vec<f64>> = reference.temperature.iter().map(|f| f.values.clone()).collect();
    let rad_sim: Vec<Vec<f64>> = sim.radiation.iter().map(|f| f.values.clone()).collect();
    let rad_ref: Vec<Vec<f64>> = reference.radiation.iter().map(|f| f.values.clone()).collect();
    let delta = |fields: &[crate::mesh::FeField]| -> Vec<Vec<f64>> {
        fields
            .iter()
            .map(|f| f.values.iter().map(|&w| -f64::exp_m1(-w)).collect())
            .collect()
    };
    let dam_sim = delta(&sim.damage);
    let dam_ref = delta(&reference.damage);

    Ok(ErrorTable {
        temperature: quantity_errors(&mass, &sim.times, &temp_sim, &temp_ref)?,
        radiation: quantity_errors(&mass, &sim.times, &rad_sim, &rad_ref)?,
        damage: quantity_errors(&mass, &sim.times, &dam_sim, &dam_ref)?,
    })
}
