//! Command-line interface: forward simulation, synthetic measurement
//! generation, perfusion-rate identification, and trajectory comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use litt::driver::{
    compare_metrics, io, make_measurement, make_measurement_refined, reference_run,
    sequential_identify, synthesize_perfusion, temperature_error_evolution, RunConfig,
};
use litt::forward::PerfusionField;
use litt::mesh::{build_mesh, vtk::write_vtk, AxiMesh, Unit};
use litt::optimize::Termination;
use litt::Error;

#[derive(Parser)]
#[command(
    name = "litt",
    version,
    about = "Axisymmetric laser-induced thermotherapy simulation and blood-perfusion identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_probe(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected r,z".into());
    }
    let r = parts[0].trim().parse().map_err(|e| format!("bad r: {e}"))?;
    let z = parts[1].trim().parse().map_err(|e| format!("bad z: {e}"))?;
    Ok((r, z))
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the full therapy with the configured vessel field and export
    /// the trajectory (VTK series), probe histories, and final fields.
    Forward {
        config: PathBuf,
        /// Output directory.
        #[arg(short, long, default_value = "forward_out")]
        output: PathBuf,
        /// Keep every STRIDE-th time level in the exported series.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Probe point "r,z" in meters; repeatable.
        #[arg(long = "probe", value_parser = parse_probe)]
        probes: Vec<(f64, f64)>,
    },
    /// Generate synthetic temperature measurements (noise per config).
    MakeMeasurement {
        config: PathBuf,
        /// Measurement CSV to write.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Identify the perfusion rate from measurement snapshots.
    Identify {
        config: PathBuf,
        /// Measurement CSV produced by make-measurement.
        #[arg(long = "meas")]
        measurement: PathBuf,
        /// Identified perfusion field CSV; convergence history lands next to
        /// it.
        #[arg(short, long)]
        output: PathBuf,
        /// Optional initial-guess field CSV (default: zero).
        #[arg(long)]
        xi0: Option<PathBuf>,
        /// Export the predicted full-therapy trajectory to this directory.
        #[arg(long)]
        traj_dir: Option<PathBuf>,
        /// Stride of the exported trajectory series.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Compare two exported trajectory series and write an error table.
    Compare {
        config: PathBuf,
        /// Simulated trajectory directory.
        #[arg(long)]
        sim: PathBuf,
        /// Reference trajectory directory.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Error table CSV to write.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the temperature error evolution (time,linf,l2) here.
        #[arg(long)]
        evolution: Option<PathBuf>,
    },
}

fn exit_code_of(e: &Error) -> u8 {
    match e {
        Error::SolverDidNotConverge { .. } | Error::CgBreakdown { .. } | Error::InvalidMatrix(_) => 3,
        Error::LineSearchFailure { .. } => 4,
        Error::Interval { source, .. } => exit_code_of(source),
        _ => 2,
    }
}

fn load(config: &Path) -> Result<(RunConfig, AxiMesh), Error> {
    let config = RunConfig::from_path(config)?;
    let mesh = build_mesh(&config.geometry)?;
    Ok((config, mesh))
}

fn truth_field(config: &RunConfig, mesh: &AxiMesh) -> Result<PerfusionField, Error> {
    synthesize_perfusion(&config.vessel_specs(), mesh)
}

fn cmd_forward(
    config: &Path,
    output: &Path,
    stride: usize,
    probes: &[(f64, f64)],
) -> Result<(), Error> {
    let (config, mesh) = load(config)?;
    let params = config.tissue_params();
    let xi = truth_field(&config, &mesh)?;
    eprintln!(
        "mesh: {} nodes, {} triangles; simulating to {} s with dt = {} s",
        mesh.n_nodes(),
        mesh.n_triangles(),
        params.tau_end,
        config.time.dt
    );
    let traj = reference_run(&mesh, &params, &xi, config.time.dt, &config.solver_settings())?;
    std::fs::create_dir_all(output)?;
    write_vtk(&output.join("mesh.vtk"), &mesh, &[("perfusion", xi.field())])?;
    io::write_field_csv(&output.join("perfusion.csv"), &mesh, xi.field())?;
    io::write_trajectory_series(&output.join("trajectory"), &mesh, &traj, stride)?;
    let default_probes = [(2.5e-3, 0.0), (5e-3, 0.0), (10e-3, 0.0)];
    let probes = if probes.is_empty() { &default_probes[..] } else { probes };
    io::write_probe_csv(&output.join("probes.csv"), &mesh, &traj, probes)?;
    io::write_field_csv(
        &output.join("final_temperature.csv"),
        &mesh,
        traj.final_temperature(),
    )?;
    let t_max = traj
        .temperature
        .iter()
        .flat_map(|f| f.values.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "forward run complete: {} time levels, peak temperature {:.2} K ({:.2} C)",
        traj.times.len(),
        t_max,
        litt::tissue::kelvin_to_celsius(t_max)
    );
    println!("outputs in {}", output.display());
    Ok(())
}

fn cmd_make_measurement(config: &Path, output: &Path) -> Result<(), Error> {
    let (config, mesh) = load(config)?;
    let params = config.tissue_params();
    let xi = truth_field(&config, &mesh)?;
    let m = &config.measurement;
    let meas = if m.refined_truth {
        make_measurement_refined(
            &mesh,
            &config.geometry,
            &params,
            &config.vessel_specs(),
            &m.times,
            m.sigma,
            m.seed,
            config.time.dt,
            m.smoothing_end_time,
            &config.solver_settings(),
        )?
    } else {
        make_measurement(
            &mesh,
            &params,
            &xi,
            &m.times,
            m.sigma,
            m.seed,
            config.time.dt,
            m.smoothing_end_time,
            &config.solver_settings(),
        )?
    };
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_measurement_csv(output, &mesh, &meas)?;
    println!(
        "wrote {} snapshot(s) at t = {:?} s (sigma = {} K, seed = {}) to {}",
        meas.times.len(),
        meas.times,
        m.sigma,
        m.seed,
        output.display()
    );
    Ok(())
}

fn cmd_identify(
    config: &Path,
    measurement: &Path,
    output: &Path,
    xi0: Option<&Path>,
    traj_dir: Option<&Path>,
    stride: usize,
) -> Result<bool, Error> {
    let (config, mesh) = load(config)?;
    let params = config.tissue_params();
    let m = &config.measurement;
    let meas = io::read_measurement_csv(measurement, &mesh, m.sigma, m.smoothing_end_time)?;
    let xi0 = match xi0 {
        Some(path) => PerfusionField::new(io::read_field_csv(path, &mesh, Unit::PerfusionRate)?)?,
        None => PerfusionField::zeros(mesh.n_nodes()),
    };
    let identify_config = config.identify_config();
    eprintln!(
        "identifying on {} interval(s), lambda = {:.2e}, tol = {:.1e}, max {} iterations, {}",
        meas.times.len(),
        identify_config.lambda,
        identify_config.tol,
        identify_config.max_iter,
        if identify_config.memory == 0 {
            "projected gradient descent".to_string()
        } else {
            format!("projected L-BFGS (memory {})", identify_config.memory)
        }
    );
    let outcome = sequential_identify(
        &mesh,
        &params,
        &meas,
        &xi0,
        &identify_config,
        config.time.dt,
        config.smoothing_enabled(),
        &config.solver_settings(),
    )?;

    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_field_csv(output, &mesh, outcome.final_xi().field())?;
    let stem = output.with_extension("");
    let stem = stem.to_string_lossy();
    for (i, records) in outcome.interval_records.iter().enumerate() {
        let path = if outcome.interval_records.len() == 1 {
            PathBuf::from(format!("{stem}_convergence.csv"))
        } else {
            PathBuf::from(format!("{stem}_convergence_{}.csv", i + 1))
        };
        io::write_convergence_csv(&path, records)?;
    }
    if outcome.xis.len() > 1 {
        for (i, xi) in outcome.xis.iter().enumerate() {
            let path = PathBuf::from(format!("{stem}_interval_{}.csv", i + 1));
            io::write_field_csv(&path, &mesh, xi.field())?;
        }
    }
    if let Some(dir) = traj_dir {
        io::write_trajectory_series(dir, &mesh, &outcome.predicted, stride)?;
    }
    for (i, (records, termination)) in outcome
        .interval_records
        .iter()
        .zip(&outcome.terminations)
        .enumerate()
    {
        let last = records.last().expect("records are never empty");
        println!(
            "interval {}: {} iterations, cost {:.6e}, stationarity ratio {:.3e}, {:?}",
            i + 1,
            last.k,
            last.cost.total,
            last.stationarity_rel,
            termination
        );
    }
    println!("identified perfusion rate written to {}", output.display());
    Ok(outcome.terminations.contains(&Termination::LineSearchFailed))
}

fn cmd_compare(
    config: &Path,
    sim: &Path,
    reference: &Path,
    output: &Path,
    evolution: Option<&Path>,
) -> Result<(), Error> {
    let (_, mesh) = load(config)?;
    let sim_traj = io::read_trajectory_series(sim, &mesh)?;
    let ref_traj = io::read_trajectory_series(reference, &mesh)?;
    let table = compare_metrics(&mesh, &sim_traj, &ref_traj)?;
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_error_table_csv(output, &table)?;
    if let Some(path) = evolution {
        let rows = temperature_error_evolution(&mesh, &sim_traj, &ref_traj)?;
        io::write_error_evolution_csv(path, &rows)?;
    }
    println!(
        "{:<14} {:>12} {:>10} {:>12} {:>10}",
        "quantity", "Linf abs", "Linf rel", "L2 abs", "L2 rel"
    );
    for (name, q) in table.rows() {
        println!(
            "{name:<14} {:>12.4e} {:>9.3}% {:>12.4e} {:>9.3}%",
            q.linf_abs,
            100.0 * q.linf_rel,
            q.l2_abs,
            100.0 * q.l2_rel
        );
    }
    println!("error table written to {}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<bool, Error> = match &cli.command {
        Command::Forward {
            config,
            output,
            stride,
            probes,
        } => cmd_forward(config, output, *stride, probes).map(|_| false),
        Command::MakeMeasurement { config, output } => {
            cmd_make_measurement(config, output).map(|_| false)
        }
        Command::Identify {
            config,
            measurement,
            output,
            xi0,
            traj_dir,
            stride,
        } => cmd_identify(
            config,
            measurement,
            output,
            xi0.as_deref(),
            traj_dir.as_deref(),
            *stride,
        ),
        Command::Compare {
            config,
            sim,
            reference,
            output,
            evolution,
        } => cmd_compare(config, sim, reference, output, evolution.as_deref()).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("line search failed on at least one interval; best-so-far iterate written");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_of(&e))
        }
    }
}
