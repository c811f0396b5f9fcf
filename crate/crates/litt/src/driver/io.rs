//! File formats of the CLI: nodal field CSV (`node_id,r,z,value`),
//! measurement CSV (`time,node_id,r,z,value`), convergence history CSV, and
//! VTK legacy ASCII trajectory series with a `series.csv` index.

use std::path::Path;

use crate::driver::measurement::MeasurementSet;
use crate::driver::metrics::ErrorTable;
use crate::error::{Error, Result};
use crate::forward::StateTrajectory;
use crate::mesh::vtk::{read_vtk, write_vtk};
use crate::mesh::{AxiMesh, FeField, Unit};
use crate::optimize::IterationRecord;

const COORD_TOL: f64 = 1e-9;

pub fn write_field_csv(path: &Path, mesh: &AxiMesh, field: &FeField) -> Result<()> {
    if field.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "field with {} values on a mesh with {} nodes",
            field.len(),
            mesh.n_nodes()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "r", "z", "value"])?;
    for (i, (c, v)) in mesh.coords().iter().zip(&field.values).enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:.17e}", c[0]),
            format!("{:.17e}", c[1]),
            format!("{v:.17e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_node(mesh: &AxiMesh, id: usize, r: f64, z: f64, path: &Path) -> Result<()> {
    if id >= mesh.n_nodes() {
        return Err(Error::Config(format!(
            "{}: node id {id} outside the mesh ({} nodes)",
            path.display(),
            mesh.n_nodes()
        )));
    }
    let c = mesh.coords()[id];
    if (c[0] - r).abs() > COORD_TOL || (c[1] - z).abs() > COORD_TOL {
        return Err(Error::Config(format!(
            "{}: node {id} at ({r}, {z}) does not match the mesh node at ({}, {})",
            path.display(),
            c[0],
            c[1]
        )));
    }
    Ok(())
}

pub fn read_field_csv(path: &Path, mesh: &AxiMesh, unit: Unit) -> Result<FeField> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut values = vec![f64::NAN; mesh.n_nodes()];
    let mut seen = 0usize;
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: malformed row", path.display())))
        };
        let id = parse(0)? as usize;
        check_node(mesh, id, parse(1)?, parse(2)?, path)?;
        values[id] = parse(3)?;
        seen += 1;
    }
    if seen != mesh.n_nodes() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::Config(format!(
            "{}: expected one value for each of the {} mesh nodes, got {seen}",
            path.display(),
            mesh.n_nodes()
        )));
    }
    Ok(FeField::from_values(values, unit))
}

pub fn write_measurement_csv(path: &Path, mesh: &AxiMesh, meas: &MeasurementSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "node_id", "r", "z", "value"])?;
    for (t, field) in meas.times.iter().zip(&meas.fields) {
        for (i, (c, v)) in mesh.coords().iter().zip(&field.values).enumerate() {
            w.write_record([
                format!("{t:.17e}"),
                i.to_string(),
                format!("{:.17e}", c[0]),
                format!("{:.17e}", c[1]),
                format!("{v:.17e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads measurement snapshots; noise and smoothing metadata come from the
/// run configuration, not the file.
pub fn read_measurement_csv(
    path: &Path,
    mesh: &AxiMesh,
    noise_sigma: f64,
    smoothing_end_time: f64,
) -> Result<MeasurementSet> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut times: Vec<f64> = Vec::new();
    let mut fields: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: malformed row", path.display())))
        };
        let t = parse(0)?;
        let id = parse(1)? as usize;
        check_node(mesh, id, parse(2)?, parse(3)?, path)?;
        let v = parse(4)?;
        let slot = match times.iter().position(|&x| (x - t).abs() <= 1e-12 * (1.0 + t.abs())) {
            Some(s) => s,
            None => {
                times.push(t);
                fields.push(vec![f64::NAN; mesh.n_nodes()]);
                counts.push(0);
                times.len() - 1
            }
        };
        fields[slot][id] = v;
        counts[slot] += 1;
    }
    if times.is_empty() {
        return Err(Error::Config(format!("{}: no measurements found", path.display())));
    }
    for (t, &count) in times.iter().zip(&counts) {
        if count != mesh.n_nodes() {
            return Err(Error::Config(format!(
                "{}: measurement at t = {t} covers {count} of {} nodes",
                path.display(),
                mesh.n_nodes()
            )));
        }
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    Ok(MeasurementSet {
        times: order.iter().map(|&i| times[i]).collect(),
        fields: order
            .iter()
            .map(|&i| FeField::from_values(fields[i].clone(), Unit::Kelvin))
            .collect(),
        noise_sigma,
        smoothing_end_time,
    })
}

/// Convergence history CSV with columns
/// `k,misfit,tikhonov,total,stationarity_rel,alpha,armijo_trials`.
pub fn write_convergence_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "k",
        "misfit",
        "tikhonov",
        "total",
        "stationarity_rel",
        "alpha",
        "armijo_trials",
    ])?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            format!("{:.17e}", r.cost.misfit),
            format!("{:.17e}", r.cost.tikhonov),
            format!("{:.17e}", r.cost.total),
            format!("{:.17e}", r.stationarity_rel),
            format!("{:.17e}", r.step_size),
            r.armijo_trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_error_table_csv(path: &Path, table: &ErrorTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quantity", "linf_abs", "linf_rel", "l2_abs", "l2_rel"])?;
    for (name, q) in table.rows() {
        w.write_record([
            name.to_string(),
            format!("{:.10e}", q.linf_abs),
            format!("{:.10e}", q.linf_rel),
            format!("{:.10e}", q.l2_abs),
            format!("{:.10e}", q.l2_rel),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Temperature error evolution as CSV: `time,linf,l2`.
pub fn write_error_evolution_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "linf", "l2"])?;
    for &(t, linf, l2) in rows {
        w.write_record([
            format!("{t:.6e}"),
            format!("{linf:.10e}"),
            format!("{l2:.10e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every `stride`-th trajectory level (always including the last) as
/// `step_{k:05}.vtk` plus a `series.csv` index of (step, time, file).
pub fn write_trajectory_series(
    dir: &Path,
    mesh: &AxiMesh,
    traj: &StateTrajectory,
    stride: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stride = stride.max(1);
    let mut index = csv::Writer::from_path(dir.join("series.csv"))?;
    index.write_record(["step", "time", "file"])?;
    let last = traj.times.len() - 1;
    for k in 0..traj.times.len() {
        if k % stride != 0 && k != last {
            continue;
        }
        let file = format!("step_{k:05}.vtk");
        write_vtk(
            &dir.join(&file),
            mesh,
            &[
                ("temperature", &traj.temperature[k]),
                ("radiation", &traj.radiation[k]),
                ("damage", &traj.damage[k]),
            ],
        )?;
        index.write_record([k.to_string(), format!("{:.17e}", traj.times[k]), file])?;
    }
    index.flush()?;
    Ok(())
}

/// Reads a trajectory series written by [`write_trajectory_series`].
pub fn read_trajectory_series(dir: &Path, mesh: &AxiMesh) -> Result<StateTrajectory> {
    let index_path = dir.join("series.csv");
    let mut reader = csv::Reader::from_path(&index_path)?;
    let mut entries: Vec<(f64, String)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let time: f64 = record
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: malformed row", index_path.display())))?;
        let file = record
            .get(2)
            .ok_or_else(|| Error::Config(format!("{}: malformed row", index_path.display())))?
            .to_string();
        entries.push((time, file));
    }
    if entries.is_empty() {
        return Err(Error::Config(format!("{}: empty series", index_path.display())));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut times = Vec::new();
    let mut temperature = Vec::new();
    let mut radiation = Vec::new();
    let mut damage = Vec::new();
    for (time, file) in entries {
        let vtk = read_vtk(&dir.join(&file))?;
        if vtk.n_points != mesh.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{file}: {} points, mesh has {} nodes",
                vtk.n_points,
                mesh.n_nodes()
            )));
        }
        let find = |name: &str| -> Result<Vec<f64>> {
            vtk.fields
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Config(format!("{file}: missing field {name}")))
        };
        times.push(time);
        temperature.push(FeField::from_values(find("temperature")?, Unit::Kelvin));
        radiation.push(FeField::from_values(
            find("radiation")?,
            Unit::WattPerSquareMeter,
        ));
        damage.push(FeField::from_values(find("damage")?, Unit::Dimensionless));
    }
    Ok(StateTrajectory {
        times,
        temperature,
        radiation,
        damage,
    })
}

/// Probe-point time histories as CSV: nearest-node temperature, radiation,
/// and damage per probe.
pub fn write_probe_csv(
    path: &Path,
    mesh: &AxiMesh,
    traj: &StateTrajectory,
    probes: &[(f64, f64)],
) -> Result<()> {
    let nodes: Vec<usize> = probes.iter().map(|&(r, z)| mesh.nearest_node(r, z)).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string()];
    for (i, &(r, z)) in probes.iter().enumerate() {
        header.push(format!("probe{i}_T(r={r:.4},z={z:.4})"));
        header.push(format!("probe{i}_phi"));
        header.push(format!("probe{i}_delta"));
    }
    w.write_record(&header)?;
    for k in 0..traj.times.len() {
        let mut row = vec![format!("{:.6e}", traj.times[k])];
        for &node in &nodes {
            row.push(format!("{:.10e}", traj.temperature[k].values[node]));
            row.push(format!("{:.10e}", traj.radiation[k].values[node]));
            let delta = -f64::exp_m1(-traj.damage[k].values[node]);
            row.push(format!("{delta:.10e}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
