//! Reduced-space optimization of the perfusion rate: cost evaluation,
//! adjoint-based gradient, projection onto the nonnegative admissible set,
//! projected gradient descent and projected L-BFGS with an Armijo line search
//! along the projected path.
//!
//! All inner products and norms are weighted by the r-weighted mass matrix,
//! the discrete L²(Ω) pairing, so the iteration behaves mesh-independently.

use std::collections::VecDeque;

use crate::adjoint::{run_adjoint, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::forward::{run_forward, PerfusionField, SolverSettings, StateTrajectory};
use crate::mesh::{assemble_mass, product_load, AxiMesh, FeField, Unit};
use crate::sparse::{cg_solve, incomplete_cholesky, weighted_dot, weighted_norm, IncompleteCholesky};
use crate::tissue::TissueParams;
use crate::SparseMatrix;

/// Cost functional split into its data-misfit and Tikhonov parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// ½ ‖T(τ) − T_meas‖²_{L²}.
    pub misfit: f64,
    /// ½ λ ‖ξ‖²_{L²}.
    pub tikhonov: f64,
    pub total: f64,
}

/// Curvature pairs of the limited-memory BFGS update, FIFO up to `memory`.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    memory: usize,
    /// (s, y, ρ = 1/(s, y)_M).
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    curvature_floor: f64,
}

impl LbfgsHistory {
    pub fn new(memory: usize) -> Self {
        Self {
            memory,
            pairs: VecDeque::new(),
            curvature_floor: 1e-10,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    pub fn oldest_step(&self) -> Option<&[f64]> {
        self.pairs.front().map(|(s, _, _)| s.as_slice())
    }

    /// Appends a pair when the curvature condition (s, y)_M > ε (s, s)_M
    /// holds; otherwise the whole history is discarded (identity restart).
    /// Returns whether the pair was stored.
    pub fn update(&mut self, s: Vec<f64>, y: Vec<f64>, m: &SparseMatrix) -> Result<bool> {
        if self.memory == 0 {
            return Ok(false);
        }
        let sy = weighted_dot(&s, &y, m)?;
        let ss = weighted_dot(&s, &s, m)?;
        if sy > self.curvature_floor * ss {
            if self.pairs.len() == self.memory {
                self.pairs.pop_front();
            }
            let rho = 1.0 / sy;
            self.pairs.push_back((s, y, rho));
            Ok(true)
        } else {
            self.pairs.clear();
            Ok(false)
        }
    }
}

/// Two-loop recursion with M-weighted inner products: d = −H g, with the
/// initial scaling H₀ = (s, y)_M/(y, y)_M · I taken from the newest pair.
/// An empty history reduces to steepest descent, d = −g.
pub fn lbfgs_direction(g: &[f64], history: &LbfgsHistory, m: &SparseMatrix) -> Result<Vec<f64>> {
    let mut q = g.to_vec();
    if history.is_empty() {
        for v in &mut q {
            *v = -*v;
        }
        return Ok(q);
    }
    let k = history.pairs.len();
    let mut alphas = vec![0.0; k];
    for i in (0..k).rev() {
        let (s, y, rho) = &history.pairs[i];
        let a = rho * weighted_dot(s, &q, m)?;
        alphas[i] = a;
        for (qv, yv) in q.iter_mut().zip(y) {
            *qv -= a * yv;
        }
    }
    let (s_new, y_new, _) = &history.pairs[k - 1];
    let gamma = weighted_dot(s_new, y_new, m)? / weighted_dot(y_new, y_new, m)?;
    for qv in &mut q {
        *qv *= gamma;
    }
    for i in 0..k {
        let (s, y, rho) = &history.pairs[i];
        let b = rho * weighted_dot(y, &q, m)?;
        for (qv, sv) in q.iter_mut().zip(s) {
            *qv += (alphas[i] - b) * sv;
        }
    }
    for v in &mut q {
        *v = -*v;
    }
    Ok(q)
}

/// Nodal projection onto the admissible set of nonnegative perfusion rates.
pub fn project(xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|&v| v.max(0.0)).collect()
}

/// Stationarity measure Σ(ξ) = ‖ξ − P(ξ − g)‖_{L²}; zero exactly at points
/// satisfying the discrete first-order conditions.
pub fn stationarity(xi: &[f64], g: &[f64], m: &SparseMatrix) -> Result<f64> {
    let moved: Vec<f64> = xi.iter().zip(g).map(|(&x, &gi)| x - (x - gi).max(0.0)).collect();
    weighted_norm(&moved, m)
}

/// Armijo backtracking parameters: trial steps s₀·βᵐ and sufficient-decrease
/// constant c.
#[derive(Debug, Clone, Copy)]
pub struct ArmijoOptions {
    pub beta: f64,
    pub c: f64,
    pub max_trials: usize,
}

impl Default for ArmijoOptions {
    fn default() -> Self {
        Self {
            beta: 0.5,
            c: 1e-4,
            max_trials: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmijoOutcome {
    pub alpha: f64,
    pub xi_next: Vec<f64>,
    pub cost_next: f64,
    /// Number of cost evaluations, i.e. m + 1 for the accepted β^m s₀.
    pub trials: usize,
}

/// Line search along the projected path ξ(α) = P(ξ + α d): accepts the first
/// α ∈ {s₀ βᵐ} with Ĵ(ξ(α)) ≤ Ĵ(ξ) + c (g, ξ(α) − ξ)_M.
#[allow(clippy::too_many_arguments)]
pub fn armijo_search(
    xi: &[f64],
    direction: &[f64],
    gradient: &[f64],
    cost_current: f64,
    initial_step: f64,
    m: &SparseMatrix,
    opts: &ArmijoOptions,
    mut cost_fn: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<ArmijoOutcome> {
    let mut alpha = initial_step;
    let mut last_cost = f64::NAN;
    for trial in 0..opts.max_trials {
        let candidate: Vec<f64> = xi
            .iter()
            .zip(direction)
            .map(|(&x, &d)| (x + alpha * d).max(0.0))
            .collect();
        let movement: Vec<f64> = candidate.iter().zip(xi).map(|(c, x)| c - x).collect();
        let decrease = weighted_dot(gradient, &movement, m)?;
        let cost = cost_fn(&candidate)?;
        last_cost = cost;
        if cost <= cost_current + opts.c * decrease {
            return Ok(ArmijoOutcome {
                alpha,
                xi_next: candidate,
                cost_next: cost,
                trials: trial + 1,
            });
        }
        alpha *= opts.beta;
    }
    Err(Error::LineSearchFailure {
        trials: opts.max_trials,
        last_step: alpha / opts.beta,
        cost: last_cost,
        reference: cost_current,
    })
}

/// The reduced problem: everything needed to evaluate Ĵ and its gradient for
/// one identification window (initial state at t_start, measurement at τ).
pub struct ReducedProblem<'a> {
    pub mesh: &'a AxiMesh,
    pub params: &'a TissueParams,
    pub settings: SolverSettings,
    pub t_start: f64,
    pub tau: f64,
    pub dt: f64,
    pub t_init: FeField,
    pub omega_init: FeField,
    pub measurement: FeField,
    pub lambda: f64,
    mass: SparseMatrix,
    mass_ic: IncompleteCholesky<f64>,
}

impl<'a> ReducedProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &'a AxiMesh,
        params: &'a TissueParams,
        settings: SolverSettings,
        t_start: f64,
        tau: f64,
        dt: f64,
        t_init: FeField,
        omega_init: FeField,
        measurement: FeField,
        lambda: f64,
    ) -> Result<Self> {
        if measurement.len() != mesh.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "measurement with {} values on a mesh with {} nodes",
                measurement.len(),
                mesh.n_nodes()
            )));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "regularization parameter must be nonnegative, got {lambda}"
            )));
        }
        let mass = assemble_mass(mesh, 1.0)?;
        let mass_ic = incomplete_cholesky(&mass)?;
        Ok(Self {
            mesh,
            params,
            settings,
            t_start,
            tau,
            dt,
            t_init,
            omega_init,
            measurement,
            lambda,
            mass,
            mass_ic,
        })
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn simulate(&self, xi: &PerfusionField) -> Result<StateTrajectory> {
        run_forward(
            self.mesh,
            self.params,
            xi,
            &self.t_init,
            &self.omega_init,
            self.t_start,
            self.tau,
            self.dt,
            &self.settings,
        )
    }

    /// Cost of an already simulated state.
    pub fn cost_of_state(&self, xi: &[f64], state: &StateTrajectory) -> Result<CostBreakdown> {
        let residual: Vec<f64> = state
            .final_temperature()
            .values
            .iter()
            .zip(&self.measurement.values)
            .map(|(&t, &m)| t - m)
            .collect();
        let misfit = 0.5 * weighted_dot(&residual, &residual, &self.mass)?;
        let tikhonov = if self.lambda > 0.0 {
            0.5 * self.lambda * weighted_dot(xi, xi, &self.mass)?
        } else {
            0.0
        };
        Ok(CostBreakdown {
            misfit,
            tikhonov,
            total: misfit + tikhonov,
        })
    }

    /// Runs the forward model and evaluates both cost terms.
    pub fn evaluate_cost(&self, xi: &PerfusionField) -> Result<(CostBreakdown, StateTrajectory)> {
        let state = self.simulate(xi)?;
        let cost = self.cost_of_state(xi.as_slice(), &state)?;
        Ok((cost, state))
    }

    /// L²-Riesz representative of the reduced gradient,
    /// g = λξ + M⁻¹ Σ_k dt · w(T_b − T_k, p_{k−1}), where
    /// w(u, v)_j = ∫ φ_j u v r dr dz is assembled with the perfusion-form
    /// quadrature. The staggered (T_k, p_{k−1}) pairing is the quadrature of
    /// ∫ (T_b − T) p dt that matches the discrete forward model exactly when
    /// the damage coupling is frozen.
    pub fn reduced_gradient(
        &self,
        state: &StateTrajectory,
        adjoint: &AdjointTrajectory,
        xi: &PerfusionField,
    ) -> Result<FeField> {
        let n = self.mesh.n_nodes();
        if adjoint.times.len() != state.times.len() {
            return Err(Error::GridMismatch(
                "adjoint and state trajectories have different grids".into(),
            ));
        }
        let dt = state.dt();
        let t_b = self.params.t_b;
        let mut dual = vec![0.0; n];
        for k in 1..state.times.len() {
            let u: Vec<f64> = state.temperature[k].values.iter().map(|&t| t_b - t).collect();
            let load = product_load(self.mesh, &u, &adjoint.p[k - 1].values)?;
            for (d, l) in dual.iter_mut().zip(load) {
                *d += dt * l;
            }
        }
        let (riesz, report) = cg_solve(
            &self.mass,
            &dual,
            &self.mass_ic,
            self.settings.rel_tol.min(1e-12),
            self.settings.max_iter(n),
        )?;
        if !report.converged {
            return Err(Error::SolverDidNotConverge {
                solver: "CG (mass Riesz)",
                iterations: report.iterations,
                relative_residual: report.final_residual_norm,
                tolerance: self.settings.rel_tol,
            });
        }
        let g = xi
            .as_slice()
            .iter()
            .zip(&riesz)
            .map(|(&x, &r)| self.lambda * x + r)
            .collect();
        Ok(FeField::from_values(g, Unit::PerfusionRate))
    }

    /// Adjoint solve plus gradient assembly for a simulated state.
    pub fn gradient(&self, xi: &PerfusionField, state: &StateTrajectory) -> Result<FeField> {
        let adjoint = run_adjoint(
            self.mesh,
            self.params,
            state,
            &self.measurement,
            xi,
            &self.settings,
        )?;
        self.reduced_gradient(state, &adjoint, xi)
    }
}

/// Optimizer configuration. Defaults: tol 1e-3, 20 iterations, memory 5,
/// β = ½, c = 1e-4.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// L-BFGS memory; 0 runs projected gradient descent.
    pub memory: usize,
    pub beta: f64,
    pub c: f64,
    pub max_line_search_trials: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol: 1e-3,
            max_iter: 20,
            memory: 5,
            beta: 0.5,
            c: 1e-4,
            max_line_search_trials: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Σ(ξ_k) ≤ tol · Σ(ξ₀).
    Converged,
    MaxIterations,
    /// No Armijo step was accepted; the returned iterate is the best so far.
    LineSearchFailed,
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: CostBreakdown,
    pub stationarity: f64,
    /// Σ(ξ_k)/Σ(ξ₀).
    pub stationarity_rel: f64,
    /// Accepted step size of the move away from this iterate (0 on the final
    /// record).
    pub step_size: f64,
    /// Armijo cost evaluations spent on that move (0 on the final record).
    pub armijo_trials: usize,
}

#[derive(Debug)]
pub struct IdentifyOutcome {
    pub xi: PerfusionField,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Forward trajectory of the returned iterate over the identification
    /// window.
    pub state: StateTrajectory,
}

/// Projected quasi-Newton identification loop: forward, adjoint, gradient,
/// L-BFGS direction (or steepest descent for `memory == 0`), projected Armijo
/// step, curvature-guarded history update, relative stationarity stopping.
pub fn identify(
    problem: &ReducedProblem,
    xi0: &PerfusionField,
    config: &IdentifyConfig,
) -> Result<IdentifyOutcome> {
    let m = &problem.mass;
    let armijo_opts = ArmijoOptions {
        beta: config.beta,
        c: config.c,
        max_trials: config.max_line_search_trials,
    };

    let mut xi = xi0.clone();
    let (mut cost, mut state) = problem.evaluate_cost(&xi)?;
    let mut g = problem.gradient(&xi, &state)?;
    let sigma0 = stationarity(xi.as_slice(), &g.values, m)?;
    let mut records = Vec::new();

    if sigma0 == 0.0 {
        records.push(IterationRecord {
            k: 0,
            cost,
            stationarity: 0.0,
            stationarity_rel: 0.0,
            step_size: 0.0,
            armijo_trials: 0,
        });
        return Ok(IdentifyOutcome {
            xi,
            records,
            termination: Termination::Converged,
            state,
        });
    }

    let mut history = LbfgsHistory::new(config.memory);
    let mut prev_accepted_alpha: Option<f64> = None;
    let mut termination = Termination::MaxIterations;

    for k in 0..=config.max_iter {
        let sigma = stationarity(xi.as_slice(), &g.values, m)?;
        let sigma_rel = sigma / sigma0;
        if sigma <= config.tol * sigma0 {
            records.push(IterationRecord {
                k,
                cost,
                stationarity: sigma,
                stationarity_rel: sigma_rel,
                step_size: 0.0,
                armijo_trials: 0,
            });
            termination = Termination::Converged;
            break;
        }
        if k == config.max_iter {
            records.push(IterationRecord {
                k,
                cost,
                stationarity: sigma,
                stationarity_rel: sigma_rel,
                step_size: 0.0,
                armijo_trials: 0,
            });
            termination = Termination::MaxIterations;
            break;
        }

        let mut direction = lbfgs_direction(&g.values, &history, m)?;
        let mut gradient_step = history.is_empty();
        if !gradient_step {
            // Guard against a non-descent quasi-Newton direction.
            let slope = weighted_dot(&g.values, &direction, m)?;
            if slope >= 0.0 {
                history.clear();
                direction = g.values.iter().map(|&v| -v).collect();
                gradient_step = true;
            }
        }
        let initial_step = if !gradient_step {
            1.0
        } else if config.memory == 0 {
            match prev_accepted_alpha {
                // Warm start for plain gradient descent, doubled so the trial
                // step can also grow again.
                Some(a) => 2.0 * a,
                None => 1.0 / weighted_norm(&g.values, m)?,
            }
        } else {
            1.0 / weighted_norm(&g.values, m)?
        };

        let mut last_eval: Option<(Vec<f64>, StateTrajectory, CostBreakdown)> = None;
        let search = armijo_search(
            xi.as_slice(),
            &direction,
            &g.values,
            cost.total,
            initial_step,
            m,
            &armijo_opts,
            |candidate| {
                let pf = PerfusionField::from_values(candidate.to_vec())?;
                let (cb, st) = problem.evaluate_cost(&pf)?;
                last_eval = Some((candidate.to_vec(), st, cb));
                Ok(cb.total)
            },
        );
        let outcome = match search {
            Ok(o) => o,
            Err(Error::LineSearchFailure { .. }) => {
                records.push(IterationRecord {
                    k,
                    cost,
                    stationarity: sigma,
                    stationarity_rel: sigma_rel,
                    step_size: 0.0,
                    armijo_trials: armijo_opts.max_trials,
                });
                termination = Termination::LineSearchFailed;
                break;
            }
            Err(e) => return Err(e),
        };
        records.push(IterationRecord {
            k,
            cost,
            stationarity: sigma,
            stationarity_rel: sigma_rel,
            step_size: outcome.alpha,
            armijo_trials: outcome.trials,
        });

        let (cand, cand_state, cand_cost) = last_eval.expect("accepted trial was evaluated");
        debug_assert_eq!(cand, outcome.xi_next);
        let xi_next = PerfusionField::from_values(outcome.xi_next)?;
        let g_next = problem.gradient(&xi_next, &cand_state)?;

        if config.memory > 0 {
            let s: Vec<f64> = xi_next
                .as_slice()
                .iter()
                .zip(xi.as_slice())
                .map(|(a, b)| a - b)
                .collect();
            let y: Vec<f64> = g_next.values.iter().zip(&g.values).map(|(a, b)| a - b).collect();
            history.update(s, y, m)?;
        }

        xi = xi_next;
        state = cand_state;
        cost = cand_cost;
        g = g_next;
        prev_accepted_alpha = Some(outcome.alpha);
    }

    Ok(IdentifyOutcome {
        xi,
        records,
        termination,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, AxiMesh, GeometryConfig};
    use approx::assert_relative_eq;

    fn identity_m(n: usize) -> SparseMatrix {
        SparseMatrix::identity(n)
    }

    #[test]
    fn projection_clamps_idempotently() {
        assert_eq!(project(&[1.0, 2.0]), vec![1.0, 2.0]);
        assert_eq!(project(&[-1.0, -2.0]), vec![0.0, 0.0]);
        let once = project(&[-0.5, 3.0, -0.0]);
        assert_eq!(project(&once), once);
    }

    #[test]
    fn stationarity_zero_cases() {
        let m = identity_m(3);
        assert_eq!(stationarity(&[1.0, 2.0, 0.5], &[0.0; 3], &m).unwrap(), 0.0);
        // At the bound with nonnegative gradient: constrained stationary.
        assert_eq!(stationarity(&[0.0; 3], &[1.0, 0.5, 0.0], &m).unwrap(), 0.0);
    }

    #[test]
    fn stationarity_on_the_test_rectangle() {
        // ξ ≡ 0, g ≡ −1 on the rectangle with r-weighted measure 1.5e-9:
        // Σ = ‖−1‖_M = √(1.5e-9).
        let coords = vec![[1e-3, 0.0], [2e-3, 0.0], [2e-3, 1e-3], [1e-3, 1e-3]];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        let mesh = AxiMesh::from_parts(coords, tris, vec![]).unwrap();
        let m = assemble_mass(&mesh, 1.0).unwrap();
        let sigma = stationarity(&[0.0; 4], &[-1.0; 4], &m).unwrap();
        assert_relative_eq!(sigma, 1.5e-9f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(sigma, 3.873e-5, max_relative = 1e-3);
    }

    #[test]
    fn stationarity_zero_iff_nodal_kkt() {
        let coords = vec![[1e-3, 0.0], [2e-3, 0.0], [2e-3, 1e-3], [1e-3, 1e-3]];
        let tris = vec![[0, 1, 2], [0, 2, 3]];
        let mesh = AxiMesh::from_parts(coords, tris, vec![]).unwrap();
        let m = assemble_mass(&mesh, 1.0).unwrap();
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![0.0; 4], vec![0.3, 0.0, 2.0, 1e-9]),
            (vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]),
            (vec![0.0, 5.0, 0.0, 1.0], vec![2.0, 0.0, 0.0, 0.0]),
            (vec![0.0, 5.0, 0.0, 1.0], vec![2.0, 1e-3, 0.0, 0.0]),
            (vec![0.0; 4], vec![-1e-6, 1.0, 1.0, 1.0]),
            (vec![2.0, 0.0, 0.0, 0.0], vec![-0.5, 1.0, 1.0, 1.0]),
        ];
        for (xi, g) in cases {
            let sigma = stationarity(&xi, &g, &m).unwrap();
            let kkt = xi
                .iter()
                .zip(&g)
                .all(|(&x, &gi)| (x == 0.0 && gi >= 0.0) || (x > 0.0 && gi == 0.0));
            assert_eq!(sigma == 0.0, kkt, "xi/g case mismatch: sigma = {sigma}");
        }
    }

    #[test]
    fn empty_history_gives_steepest_descent() {
        let m = identity_m(3);
        let h = LbfgsHistory::new(5);
        let d = lbfgs_direction(&[1.0, -2.0, 0.5], &h, &m).unwrap();
        assert_eq!(d, vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn single_pair_two_loop_hand_trace() {
        // s = y = [1] with M = [1] and g = [2]: α = 2, q = 0, γ = 1, r = 0,
        // β = 0, r = s(α − β) = 2, d = −2.
        let m = identity_m(1);
        let mut h = LbfgsHistory::new(5);
        assert!(h.update(vec![1.0], vec![1.0], &m).unwrap());
        let d = lbfgs_direction(&[2.0], &h, &m).unwrap();
        assert_relative_eq!(d[0], -2.0, max_relative = 1e-15);
    }

    #[test]
    fn history_update_growth_curvature_and_eviction() {
        let m = identity_m(2);
        let mut h = LbfgsHistory::new(5);
        assert!(h.update(vec![1.0, 0.0], vec![0.5, 0.0], &m).unwrap());
        assert_eq!(h.len(), 1);
        // Failed curvature clears everything.
        assert!(!h.update(vec![1.0, 0.0], vec![-1.0, 0.0], &m).unwrap());
        assert!(h.is_empty());
        // FIFO eviction at capacity.
        for k in 0..6 {
            let s = vec![1.0 + k as f64, 0.0];
            assert!(h.update(s, vec![1.0, 0.0], &m).unwrap());
        }
        assert_eq!(h.len(), 5);
        assert_eq!(h.oldest_step().unwrap()[0], 2.0);
    }

    #[test]
    fn armijo_accepts_full_step_on_friendly_quadratic() {
        // J(ξ) = ½(ξ−2)² at ξ = 0 with d = 2 = −g: full step hits the
        // minimum, 0 ≤ 2 − 4e-4.
        let m = identity_m(1);
        let cost = |x: &[f64]| Ok(0.5 * (x[0] - 2.0) * (x[0] - 2.0));
        let out = armijo_search(
            &[0.0],
            &[2.0],
            &[-2.0],
            2.0,
            1.0,
            &m,
            &ArmijoOptions::default(),
            cost,
        )
        .unwrap();
        assert_eq!(out.trials, 1);
        assert_relative_eq!(out.alpha, 1.0);
        assert_relative_eq!(out.xi_next[0], 2.0);
        assert_relative_eq!(out.cost_next, 0.0);
    }

    #[test]
    fn armijo_at_active_bound_accepts_zero_movement() {
        // ξ = 0 with an outward direction: the projection absorbs the step,
        // the decrease condition holds with equality at the first trial.
        let m = identity_m(1);
        let cost = |x: &[f64]| Ok(x[0] * x[0]);
        let out = armijo_search(
            &[0.0],
            &[-1.0],
            &[0.5],
            0.0,
            1.0,
            &m,
            &ArmijoOptions::default(),
            cost,
        )
        .unwrap();
        assert_eq!(out.trials, 1);
        assert_eq!(out.xi_next, vec![0.0]);
    }

    #[test]
    fn armijo_halves_the_trial_step_exactly() {
        // Narrow quadratic forces several rejections; record the trial steps.
        let m = identity_m(1);
        let mut seen = Vec::new();
        let out = armijo_search(
            &[1.0],
            &[1.0],
            &[-0.1],
            0.005,
            8.0,
            &m,
            &ArmijoOptions::default(),
            |x: &[f64]| {
                seen.push(x[0] - 1.0);
                Ok(0.5 * (x[0] - 1.1) * (x[0] - 1.1))
            },
        )
        .unwrap();
        assert!(out.trials > 2, "expected rejections, got {}", out.trials);
        for w in seen.windows(2) {
            assert_relative_eq!(w[1], 0.5 * w[0], max_relative = 1e-14);
        }
        assert_relative_eq!(out.alpha, 8.0 * 0.5f64.powi(out.trials as i32 - 1));
    }

    #[test]
    fn armijo_fails_after_the_trial_cap() {
        let m = identity_m(1);
        // Constant cost with a strictly negative decrease reference can never
        // satisfy the strict decrease test.
        let res = armijo_search(
            &[1.0],
            &[1.0],
            &[-1.0],
            1.0,
            1.0,
            &m,
            &ArmijoOptions {
                max_trials: 7,
                ..ArmijoOptions::default()
            },
            |_x: &[f64]| Ok(1.0),
        );
        match res {
            Err(Error::LineSearchFailure { trials, .. }) => assert_eq!(trials, 7),
            other => panic!("expected line-search failure, got {other:?}"),
        }
    }

    fn small_problem<'a>(
        mesh: &'a AxiMesh,
        params: &'a TissueParams,
        measurement: FeField,
        lambda: f64,
    ) -> ReducedProblem<'a> {
        let n = mesh.n_nodes();
        ReducedProblem::new(
            mesh,
            params,
            SolverSettings {
                rel_tol: 1e-12,
                max_iter_factor: 20,
            },
            0.0,
            16.0,
            4.0,
            FeField::constant(n, params.t0, Unit::Kelvin),
            FeField::zeros(n, Unit::Dimensionless),
            measurement,
            lambda,
        )
        .unwrap()
    }

    #[test]
    fn cost_zero_cases_and_quadratic_tikhonov() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 6e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let params = TissueParams::default();
        let n = mesh.n_nodes();
        let xi0 = PerfusionField::zeros(n);

        // Measurement equal to the model output at ξ = 0: zero total cost.
        let probe = small_problem(&mesh, &params, FeField::zeros(n, Unit::Kelvin), 0.0);
        let meas = probe.simulate(&xi0).unwrap().final_temperature().clone();
        let problem = small_problem(&mesh, &params, meas.clone(), 0.0);
        let (cost, _) = problem.evaluate_cost(&xi0).unwrap();
        assert_eq!(cost.total, 0.0);
        assert_eq!(cost.tikhonov, 0.0);

        // Doubling a uniform ξ quadruples the Tikhonov term.
        let problem = small_problem(&mesh, &params, meas, 2.5e-10);
        let xi1 = PerfusionField::from_values(vec![1e4; n]).unwrap();
        let xi2 = PerfusionField::from_values(vec![2e4; n]).unwrap();
        let (c1, _) = problem.evaluate_cost(&xi1).unwrap();
        let (c2, _) = problem.evaluate_cost(&xi2).unwrap();
        assert_relative_eq!(c2.tikhonov, 4.0 * c1.tikhonov, max_relative = 1e-12);
    }

    #[test]
    fn gradient_vanishes_for_zero_adjoint_and_reduces_to_lambda_xi() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 6e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let mut params = TissueParams::default();
        // Keep the temperature pinned at T_b so (T_b − T) vanishes: no laser,
        // no cooling contrast.
        params.t_on = 1e6;
        params.t_off = 2e6;
        params.tau_end = 3e6;
        params.t_cool = params.t_b;
        params.t_amb = params.t_b;
        let n = mesh.n_nodes();
        let lambda = 1e-9;
        let probe = small_problem(&mesh, &params, FeField::zeros(n, Unit::Kelvin), lambda);
        let xi = PerfusionField::from_values(vec![3e4; n]).unwrap();
        let state = probe.simulate(&xi).unwrap();
        let meas = state.final_temperature().clone();
        let problem = small_problem(&mesh, &params, meas, lambda);
        let state = problem.simulate(&xi).unwrap();
        let g = problem.gradient(&xi, &state).unwrap();
        for (gv, xv) in g.values.iter().zip(xi.as_slice()) {
            assert_relative_eq!(*gv, lambda * xv, max_relative = 1e-9);
        }
    }

    #[test]
    fn identify_with_zero_residual_converges_immediately() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 6e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let params = TissueParams::default();
        let n = mesh.n_nodes();
        let xi0 = PerfusionField::zeros(n);
        let probe = small_problem(&mesh, &params, FeField::zeros(n, Unit::Kelvin), 0.0);
        let meas = probe.simulate(&xi0).unwrap().final_temperature().clone();
        let problem = small_problem(&mesh, &params, meas, 0.0);
        let out = identify(&problem, &xi0, &IdentifyConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].k, 0);
        assert!(out.xi.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_iterate_identical_for_gradient_descent_and_lbfgs() {
        let mesh = build_mesh(&GeometryConfig {
            target_edge_size: 6e-3,
            ..GeometryConfig::default()
        })
        .unwrap();
        let params = TissueParams::default();
        let n = mesh.n_nodes();
        // Synthetic truth: a blob of perfusion near the applicator.
        let xi_true = PerfusionField::from_values(
            mesh.coords()
                .iter()
                .map(|c| {
                    let d2 = (c[0] - 5e-3).powi(2) + c[1].powi(2);
                    6e4 * (-d2 / 2e-5).exp()
                })
                .collect(),
        )
        .unwrap();
        let probe = small_problem(&mesh, &params, FeField::zeros(n, Unit::Kelvin), 0.0);
        let meas = probe.simulate(&xi_true).unwrap().final_temperature().clone();
        let problem = small_problem(&mesh, &params, meas, 0.0);
        let xi0 = PerfusionField::zeros(n);
        let gd = identify(
            &problem,
            &xi0,
            &IdentifyConfig {
                memory: 0,
                max_iter: 1,
                tol: 1e-12,
                ..IdentifyConfig::default()
            },
        )
        .unwrap();
        let lbfgs = identify(
            &problem,
            &xi0,
            &IdentifyConfig {
                memory: 5,
                max_iter: 1,
                tol: 1e-12,
                ..IdentifyConfig::default()
            },
        )
        .unwrap();
        assert_eq!(gd.xi.as_slice(), lbfgs.xi.as_slice());
        assert!(gd.records[0].cost.total > gd.records[1].cost.total);
    }
}
