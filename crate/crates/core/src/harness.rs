//! Formulation matrix runs, audits, open-loop replay and reports.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::{SVector, Vector3};
use ode_solvers::{Dopri5, System};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formulations::{audit_violation, FormulationKind};
use crate::geom::wrap_angle;
use crate::nlp::init::initial_guess;
use crate::nlp::plan;
use crate::nlp::problem::FlatTrajectory;
use crate::nlp::solver::SolveStatus;
use crate::scenario::Scenario;
use crate::vessel::{dynamics, flat_input, VesselParams, VesselState};

/// How the replayed input is reconstructed from its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputHold {
    ZeroOrder,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    /// Input sampling period, s.
    pub step: f64,
    pub hold: InputHold,
    pub rtol: f64,
    pub atol: f64,
    /// Spacing of the comparison grid, s.
    pub output_step: f64,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { step: 0.01, hold: InputHold::Linear, rtol: 1e-10, atol: 1e-10, output_step: 0.05 }
    }
}

type State6 = SVector<f64, 6>;

fn pack(s: &VesselState) -> State6 {
    State6::from_iterator(s.eta.iter().chain(s.nu.iter()).copied())
}

fn unpack(y: &State6) -> VesselState {
    VesselState { eta: y.fixed_rows::<3>(0).into(), nu: y.fixed_rows::<3>(3).into() }
}

struct Plant<'a, F> {
    params: &'a VesselParams,
    input: F,
}

impl<F: Fn(f64) -> Vector3<f64>> System<f64, State6> for Plant<'_, F> {
    fn system(&self, t: f64, y: &State6, dy: &mut State6) {
        let (eta_dot, nu_dot) = dynamics(&unpack(y), &(self.input)(t), self.params);
        dy.fixed_rows_mut::<3>(0).copy_from(&eta_dot);
        dy.fixed_rows_mut::<3>(3).copy_from(&nu_dot);
    }
}

/// Integrate the vessel dynamics under `input` from `start` at `t0` to `t1`.
/// Returns the states at `t0, t0 + output_step, …, t1`.
pub fn integrate<F: Fn(f64) -> Vector3<f64>>(
    params: &VesselParams,
    start: &VesselState,
    input: F,
    (t0, t1): (f64, f64),
    options: &ReplayOptions,
) -> Result<Vec<(f64, VesselState)>> {
    if !(t1 > t0) || !(options.output_step > 0.0) {
        return Err(Error::InvalidArgument("replay needs t1 > t0 and a positive output step".into()));
    }
    let plant = Plant { params, input };
    let mut solver = Dopri5::new(plant, t0, t1, options.output_step, pack(start), options.rtol, options.atol);
    solver.integrate().map_err(|e| Error::Integration(e.to_string()))?;
    let (ts, ys) = solver.results().get();
    Ok(ts.iter().zip(ys).map(|(t, y)| (*t, unpack(y))).collect())
}

/// Samples of `f` on `t0 + k·step`, reconstructed by `hold`.
pub struct SampledInput {
    t0: f64,
    step: f64,
    hold: InputHold,
    values: Vec<Vector3<f64>>,
}

impl SampledInput {
    pub fn new(f: impl Fn(f64) -> Vector3<f64>, (t0, t1): (f64, f64), step: f64, hold: InputHold) -> Self {
        let n = ((t1 - t0) / step).ceil() as usize;
        let values = (0..=n).map(|k| f((t0 + k as f64 * step).min(t1))).collect();
        Self { t0, step, hold, values }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        let last = self.values.len() - 1;
        let s = ((t - self.t0) / self.step).max(0.0);
        let k = (s.floor() as usize).min(last);
        match self.hold {
            InputHold::ZeroOrder => self.values[k],
            InputHold::Linear if k == last => self.values[last],
            InputHold::Linear => {
                let w = (s - k as f64).clamp(0.0, 1.0);
                self.values[k] * (1.0 - w) + self.values[k + 1] * w
            }
        }
    }
}

/// Planned generalized forces with the sway force dropped: the vessel has
/// no sway actuator.
pub fn planned_input(trajectory: &FlatTrajectory, params: &VesselParams, t: f64) -> Vector3<f64> {
    let tau = flat_input(&trajectory.flat_output(t), params);
    Vector3::new(tau.x, 0.0, tau.z)
}

/// Re-simulate a planned trajectory open loop and return the largest
/// position deviation from the plan, m.
pub fn resimulate(trajectory: &FlatTrajectory, params: &VesselParams, options: &ReplayOptions) -> Result<f64> {
    let horizon = trajectory.horizon();
    let input = SampledInput::new(|t| planned_input(trajectory, params, t), horizon, options.step, options.hold);
    let start = trajectory.state(horizon.0);
    let states = integrate(params, &start, |t| input.at(t), horizon, options)?;
    Ok(states
        .iter()
        .map(|(t, s)| {
            let p = trajectory.pose(*t);
            ((s.eta.x - p.position.x).powi(2) + (s.eta.y - p.position.y).powi(2)).sqrt()
        })
        .fold(0.0, f64::max))
}

/// One row of the matrix report.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub id: String,
    pub status: Option<SolveStatus>,
    /// Set when the run could not be solved at all.
    pub error: Option<String>,
    pub obstacle_constraints: usize,
    pub variables: usize,
    pub constraint_calls: usize,
    /// Largest true-shape violation, m.
    pub audit: f64,
    pub cost: f64,
    pub max_violation: f64,
    pub kkt: f64,
    pub boundary_error: f64,
    /// Largest `|τ_v|` at the samples.
    pub max_sway: f64,
    /// Open-loop replay position error, m.
    pub replay_error: f64,
    pub solver_time: Duration,
    pub total_time: Duration,
    /// Total time over the fastest run's total time.
    pub relative_time: f64,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.status.is_some_and(|s| s.is_converged())
    }

    fn failed(id: String, error: Error) -> Self {
        Self {
            id,
            status: None,
            error: Some(error.to_string()),
            obstacle_constraints: 0,
            variables: 0,
            constraint_calls: 0,
            audit: f64::NAN,
            cost: f64::NAN,
            max_violation: f64::NAN,
            kkt: f64::NAN,
            boundary_error: f64::NAN,
            max_sway: f64::NAN,
            replay_error: f64::NAN,
            solver_time: Duration::ZERO,
            total_time: Duration::ZERO,
            relative_time: f64::NAN,
        }
    }
}

/// A finished run with its solution, if any.
#[derive(Debug, Clone)]
pub struct Run {
    pub formulation: FormulationKind,
    pub report: RunReport,
    pub trajectory: Option<FlatTrajectory>,
    pub sample_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Matrix {
    pub scenario: String,
    pub seed: u64,
    pub guess: FlatTrajectory,
    pub runs: Vec<Run>,
}

impl Matrix {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(|r| r.report.converged())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixOptions {
    pub replay: ReplayOptions,
    /// Solve runs concurrently.
    pub parallel: bool,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self { replay: ReplayOptions::default(), parallel: true }
    }
}

/// Largest deviation of the trajectory's end states from the scenario's
/// boundary states, over pose and body velocity.
pub fn boundary_error(trajectory: &FlatTrajectory, scenario: &Scenario) -> f64 {
    let (t0, t1) = trajectory.horizon();
    [(t0, &scenario.start), (t1, &scenario.goal)]
        .iter()
        .map(|(t, target)| {
            let s = trajectory.state(*t);
            let d_eta =
                Vector3::new(s.eta.x - target.eta.x, s.eta.y - target.eta.y, wrap_angle(s.eta.z - target.eta.z));
            d_eta.amax().max((s.nu - target.nu).amax())
        })
        .fold(0.0, f64::max)
}

fn run_one(scenario: &Scenario, formulation: FormulationKind, guess: &FlatTrajectory, options: &MatrixOptions) -> Run {
    let id = formulation.id();
    let attempt = || -> Result<Run> {
        let start = Instant::now();
        let plan = plan(scenario, Some(formulation), guess)?;
        let total_time = start.elapsed();
        let poses = plan.problem.poses(&plan.result.x);
        let audit = audit_violation(
            &poses,
            &scenario.obstacles,
            &scenario.vessel.footprint,
            formulation.body,
            &scenario.settings.sd,
        )?;
        let counts = plan.problem.obstacle_counts();
        let max_sway = plan.problem.forces(&plan.result.x).iter().map(|t| t.y.abs()).fold(0.0, f64::max);
        let replay_error = resimulate(&plan.trajectory, &scenario.vessel, &options.replay)?;
        let report = RunReport {
            id: id.clone(),
            status: Some(plan.result.status),
            error: None,
            obstacle_constraints: counts.obstacle_constraints,
            variables: plan.problem.spline_variables() + counts.extra_variables,
            constraint_calls: plan.result.constraint_calls,
            audit,
            cost: plan.result.cost,
            max_violation: plan.result.max_violation,
            kkt: plan.result.kkt_residual,
            boundary_error: boundary_error(&plan.trajectory, scenario),
            max_sway,
            replay_error,
            solver_time: plan.result.solver_time,
            total_time,
            relative_time: f64::NAN,
        };
        Ok(Run { formulation, report, sample_times: plan.problem.times().to_vec(), trajectory: Some(plan.trajectory) })
    };
    attempt().unwrap_or_else(|e| {
        log::warn!("run {id} failed: {e}");
        Run { formulation, report: RunReport::failed(id.clone(), e), trajectory: None, sample_times: Vec::new() }
    })
}

/// Solve every selected formulation from the same grid-search initial guess.
/// A failing run is recorded and the matrix continues.
pub fn run_matrix(scenario: &Scenario, selection: &[FormulationKind], options: &MatrixOptions) -> Result<Matrix> {
    let guess = initial_guess(scenario)?;
    let mut runs: Vec<Run> = if options.parallel {
        selection.par_iter().map(|f| run_one(scenario, *f, &guess, options)).collect()
    } else {
        selection.iter().map(|f| run_one(scenario, *f, &guess, options)).collect()
    };
    let fastest = runs
        .iter()
        .filter(|r| r.report.error.is_none())
        .map(|r| r.report.total_time.as_secs_f64())
        .fold(f64::INFINITY, f64::min);
    for r in runs.iter_mut().filter(|r| r.report.error.is_none()) {
        r.report.relative_time = r.report.total_time.as_secs_f64() / fastest;
    }
    Ok(Matrix { scenario: scenario.name.clone(), seed: scenario.seed, guess, runs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

fn status_label(r: &RunReport) -> String {
    match (&r.status, &r.error) {
        (Some(s), _) => serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        (None, _) => "failed".to_string(),
    }
}

/// Render the matrix report. Wall-clock columns appear only with
/// `with_times`, so that reports without them are reproducible.
pub fn render_report(matrix: &Matrix, format: ReportFormat, with_times: bool) -> String {
    let mut header = vec![
        "formulation",
        "status",
        "obstacle constraints",
        "variables",
        "constraint calls",
        "max violation [m]",
        "cost",
        "boundary error",
        "max |tau_v|",
        "replay error [m]",
    ];
    if with_times {
        header.extend(["solver time [s]", "total time [s]", "relative time"]);
    }
    let rows: Vec<Vec<String>> = matrix
        .runs
        .iter()
        .map(|run| {
            let r = &run.report;
            let mut row = vec![
                r.id.clone(),
                status_label(r),
                r.obstacle_constraints.to_string(),
                r.variables.to_string(),
                r.constraint_calls.to_string(),
                format!("{:.3e}", r.audit),
                format!("{:.6}", r.cost),
                format!("{:.3e}", r.boundary_error),
                format!("{:.3e}", r.max_sway),
                format!("{:.3e}", r.replay_error),
            ];
            if with_times {
                row.extend([
                    format!("{:.3}", r.solver_time.as_secs_f64()),
                    format!("{:.3}", r.total_time.as_secs_f64()),
                    format!("{:.2}", r.relative_time),
                ]);
            }
            row
        })
        .collect();

    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(out, "# {} (seed {})\n", matrix.scenario, matrix.seed);
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for row in &rows {
                let _ = writeln!(out, "| {} |", row.join(" | "));
            }
            for r in matrix.runs.iter().filter_map(|r| r.report.error.as_ref().map(|e| (&r.report.id, e))) {
                let _ = writeln!(out, "\n{}: {}", r.0, r.1);
            }
        }
        ReportFormat::Csv => {
            let _ = writeln!(out, "{}", header.join(","));
            for row in &rows {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
    }
    out
}

/// Trajectory table with columns `t,N,E,psi,u,v,r,tau_u,tau_r` at `times`.
pub fn trajectory_csv(trajectory: &FlatTrajectory, params: &VesselParams, times: &[f64]) -> String {
    let mut out = String::from("t,N,E,psi,u,v,r,tau_u,tau_r\n");
    for &t in times {
        let f = trajectory.flat_output(t);
        let s = trajectory.state(t);
        let tau = flat_input(&f, params);
        let _ = writeln!(
            out,
            "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            t, s.eta.x, s.eta.y, s.eta.z, s.nu.x, s.nu.y, s.nu.z, tau.x, tau.z
        );
    }
    out
}
