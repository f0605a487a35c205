//! Trajectory optimization: transcription, initial guess and solver.

pub mod bspline;
pub mod init;
pub mod problem;
pub mod solver;

use crate::error::Result;
use crate::formulations::FormulationKind;
use crate::scenario::Scenario;
use problem::{assemble, FlatTrajectory, NlpProblem};
use solver::{solve, SolveResult};

/// A solved planning problem.
pub struct Plan {
    pub problem: NlpProblem,
    pub initial: Vec<f64>,
    pub result: SolveResult,
    pub trajectory: FlatTrajectory,
}

/// Assemble, initialize from `guess` and solve.
pub fn plan(scenario: &Scenario, formulation: Option<FormulationKind>, guess: &FlatTrajectory) -> Result<Plan> {
    let problem = assemble(scenario, formulation)?;
    let initial = problem.decision_vector(guess);
    let result = solve(&problem, &initial, &scenario.solver)?;
    let trajectory = problem.trajectory(&result.x);
    Ok(Plan { problem, initial, result, trajectory })
}
