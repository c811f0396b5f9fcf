//! End-to-end identification workflows: single- and multi-measurement
//! identification with state hand-over between intervals, prediction to the
//! end of the therapy, and reference/baseline runs.

use crate::driver::measurement::{smooth_measurement, MeasurementSet};
use crate::driver::metrics::{compare_metrics, ErrorTable};
use crate::error::{Error, Result};
use crate::forward::{run_forward, PerfusionField, SolverSettings, StateTrajectory};
use crate::mesh::{AxiMesh, FeField, Unit};
use crate::optimize::{identify, IdentifyConfig, IdentifyOutcome, IterationRecord, ReducedProblem, Termination};
use crate::tissue::TissueParams;

/// Result of a (possibly multi-interval) identification.
#[derive(Debug)]
pub struct SequentialOutcome {
    /// Identified perfusion rate per measurement interval.
    pub xis: Vec<PerfusionField>,
    /// Stitched trajectory over the whole therapy: each interval simulated
    /// with its identified rate, then the prediction with the last one.
    pub predicted: StateTrajectory,
    /// Convergence records per interval.
    pub interval_records: Vec<Vec<IterationRecord>>,
    /// Termination reason per interval.
    pub terminations: Vec<Termination>,
}

impl SequentialOutcome {
    pub fn final_xi(&self) -> &PerfusionField {
        self.xis.last().expect("at least one interval")
    }

    pub fn any_line_search_failure(&self) -> bool {
        self.terminations.contains(&Termination::LineSearchFailed)
    }
}

fn append_trajectory(stitched: &mut StateTrajectory, segment: &StateTrajectory) {
    // The segment's first level duplicates the current last level.
    for k in 1..segment.times.len() {
        stitched.times.push(segment.times[k]);
        stitched.temperature.push(segment.temperature[k].clone());
        stitched.radiation.push(segment.radiation[k].clone());
        stitched.damage.push(segment.damage[k].clone());
    }
}

/// Identifies the perfusion rate interval by interval: on (τ_{i−1}, τ_i) the
/// initial temperature and damage come from the previously simulated state,
/// and the previous identified rate seeds the optimizer. After the last
/// measurement the therapy is simulated to tau_end with the last rate.
#[allow(clippy::too_many_arguments)]
pub fn sequential_identify(
    mesh: &AxiMesh,
    params: &TissueParams,
    measurements: &MeasurementSet,
    xi0: &PerfusionField,
    config: &IdentifyConfig,
    dt: f64,
    smooth: bool,
    settings: &SolverSettings,
) -> Result<SequentialOutcome> {
    measurements.validate(params.tau_end)?;
    let n = mesh.n_nodes();
    if xi0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial guess with {} values on a mesh with {n} nodes",
            xi0.len()
        )));
    }

    let mut xis: Vec<PerfusionField> = Vec::new();
    let mut interval_records = Vec::new();
    let mut terminations = Vec::new();

    let mut t_init = FeField::constant(n, params.t0, Unit::Kelvin);
    let mut omega_init = FeField::zeros(n, Unit::Dimensionless);
    let mut t_start = 0.0;
    let mut predicted: Option<StateTrajectory> = None;

    for (i, (&tau, raw)) in measurements
        .times
        .iter()
        .zip(&measurements.fields)
        .enumerate()
    {
        let wrap = |e: Error| Error::Interval {
            interval: i + 1,
            source: Box::new(e),
        };
        let meas_field = if smooth {
            smooth_measurement(raw, measurements.smoothing_end_time, mesh, settings).map_err(wrap)?
        } else {
            raw.clone()
        };
        let problem = ReducedProblem::new(
            mesh,
            params,
            *settings,
            t_start,
            tau,
            dt,
            t_init.clone(),
            omega_init.clone(),
            meas_field,
            config.lambda,
        )
        .map_err(wrap)?;
        let guess = xis.last().cloned().unwrap_or_else(|| xi0.clone());
        let IdentifyOutcome {
            xi,
            records,
            termination,
            state,
        } = identify(&problem, &guess, config).map_err(wrap)?;

        t_init = state.final_temperature().clone();
        omega_init = state.final_damage().clone();
        t_start = tau;
        match &mut predicted {
            None => predicted = Some(state),
            Some(p) => append_trajectory(p, &state),
        }
        xis.push(xi);
        interval_records.push(records);
        terminations.push(termination);
    }

    let mut predicted = predicted.expect("at least one interval");
    if t_start < params.tau_end {
        let tail = run_forward(
            mesh,
            params,
            xis.last().unwrap(),
            &t_init,
            &omega_init,
            t_start,
            params.tau_end,
            dt,
            settings,
        )?;
        append_trajectory(&mut predicted, &tail);
    }

    Ok(SequentialOutcome {
        xis,
        predicted,
        interval_records,
        terminations,
    })
}

/// Full-therapy forward run from the resting initial state.
pub fn reference_run(
    mesh: &AxiMesh,
    params: &TissueParams,
    xi: &PerfusionField,
    dt: f64,
    settings: &SolverSettings,
) -> Result<StateTrajectory> {
    let n = mesh.n_nodes();
    run_forward(
        mesh,
        params,
        xi,
        &FeField::constant(n, params.t0, Unit::Kelvin),
        &FeField::zeros(n, Unit::Dimensionless),
        0.0,
        params.tau_end,
        dt,
        settings,
    )
}

/// Error table of a predicted trajectory against the reference run.
pub fn prediction_errors(
    mesh: &AxiMesh,
    predicted: &StateTrajectory,
    reference: &StateTrajectory,
) -> Result<ErrorTable> {
    compare_metrics(mesh, predicted, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::measurement::make_measurement;
    use crate::mesh::{build_mesh, GeometryConfig};

    fn coarse() -> (AxiMesh, TissueParams, SolverSettings) {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 5e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let mut params = TissueParams::default();
        params.tau_end = 60.0;
        params.t_off = 58.0;
        let settings = SolverSettings {
            rel_tol: 1e-11,
            max_iter_factor: 20,
        };
        (mesh, params, settings)
    }

    #[test]
    fn single_measurement_reduces_to_identify_plus_prediction() {
        let (mesh, params, settings) = coarse();
        let n = mesh.n_nodes();
        let xi_true = PerfusionField::from_values(
            mesh.coords()
                .iter()
                .map(|c| 6e4 * (-((c[0] - 4e-3).powi(2) + c[1].powi(2)) / 8e-6).exp())
                .collect(),
        )
        .unwrap();
        let meas = make_measurement(&mesh, &params, &xi_true, &[12.0], 0.0, 1, 2.0, 2e-7, &settings)
            .unwrap();
        let cfg = IdentifyConfig {
            max_iter: 3,
            ..IdentifyConfig::default()
        };
        let out = sequential_identify(
            &mesh,
            &params,
            &meas,
            &PerfusionField::zeros(n),
            &cfg,
            2.0,
            false,
            &settings,
        )
        .unwrap();
        assert_eq!(out.xis.len(), 1);
        assert_eq!(out.interval_records.len(), 1);
        // Stitched trajectory spans the full therapy on the dt grid.
        assert_eq!(out.predicted.times.len(), 31);
        assert!((out.predicted.times.last().unwrap() - params.tau_end).abs() < 1e-9);
        // Cost decreased across accepted steps.
        let recs = &out.interval_records[0];
        for w in recs.windows(2) {
            assert!(w[1].cost.total <= w[0].cost.total + 1e-18);
        }
    }

    #[test]
    fn three_intervals_produce_three_records_and_hand_over_state() {
        let (mesh, params, settings) = coarse();
        let n = mesh.n_nodes();
        let xi_true = PerfusionField::from_values(vec![1.5e4; n]).unwrap();
        let meas = make_measurement(
            &mesh,
            &params,
            &xi_true,
            &[12.0, 24.0, 36.0],
            0.0,
            1,
            2.0,
            2e-7,
            &settings,
        )
        .unwrap();
        let cfg = IdentifyConfig {
            max_iter: 2,
            ..IdentifyConfig::default()
        };
        let out = sequential_identify(
            &mesh,
            &params,
            &meas,
            &PerfusionField::zeros(n),
            &cfg,
            2.0,
            false,
            &settings,
        )
        .unwrap();
        assert_eq!(out.xis.len(), 3);
        assert_eq!(out.terminations.len(), 3);
        // Times strictly increase through the stitched trajectory.
        for w in out.predicted.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn exact_initial_guess_converges_immediately_on_every_interval() {
        let (mesh, params, settings) = coarse();
        let n = mesh.n_nodes();
        let xi_true = PerfusionField::from_values(vec![2e4; n]).unwrap();
        let meas = make_measurement(
            &mesh,
            &params,
            &xi_true,
            &[12.0, 24.0],
            0.0,
            1,
            2.0,
            2e-7,
            &settings,
        )
        .unwrap();
        let out = sequential_identify(
            &mesh,
            &params,
            &meas,
            &xi_true,
            &IdentifyConfig::default(),
            2.0,
            false,
            &settings,
        )
        .unwrap();
        for (records, termination) in out.interval_records.iter().zip(&out.terminations) {
            assert_eq!(*termination, Termination::Converged);
            assert_eq!(records.len(), 1);
            assert_eq!(records[0].k, 0);
        }
        for xi in &out.xis {
            assert_eq!(xi.as_slice(), xi_true.as_slice());
        }
    }
}
