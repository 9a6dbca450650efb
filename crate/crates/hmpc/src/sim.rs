//! Closed-loop simulation: solve, apply the first move, step the plant,
//! repeat, collecting per-step solver statistics along the way.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::admm::{solve, AdmmSettings, SolveStatus, SolverState};
use crate::assemble::{assemble, objective_value, Encoding};
use crate::kkt::build_kkt_operators;
use crate::problem::{HarmonicParams, HmpcProblem};

/// One closed-loop experiment: plant, initial state, a piecewise-constant
/// reference schedule and solver settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: HmpcProblem,
    pub x0: DVector<f64>,
    pub schedule: Vec<ReferenceStep>,
    pub steps: usize,
    pub settings: AdmmSettings,
    pub encoding: Encoding,
    /// Reuse the previous step's iterates as the next initial point.
    pub warm_start: bool,
}

/// Reference active from `start_step` until the next entry takes over.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStep {
    pub start_step: usize,
    pub x_r: DVector<f64>,
    pub u_r: DVector<f64>,
}

/// Invalid scenario data or a failed run.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] crate::problem::ProblemError),
    #[error(transparent)]
    Setup(#[from] crate::kkt::SetupError),
    #[error("solver diverged at step {step}: {source}; partial trace retained")]
    Diverged {
        step: usize,
        source: crate::admm::Divergence,
        trace: Box<ClosedLoopTrace>,
    },
}

/// Per-step record of the loop.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub x_r: DVector<f64>,
    pub u_r: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub solve_time: Duration,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub theta: HarmonicParams,
}

/// Whole-run record; `setup_time` covers assembly and factorization, which
/// happen once and are excluded from the per-step solve times.
#[derive(Debug, Clone, Default)]
pub struct ClosedLoopTrace {
    pub records: Vec<StepRecord>,
    pub setup_time: Duration,
}

impl ClosedLoopTrace {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }

    pub fn iteration_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.iterations).collect()
    }
}

/// One plant update `x' = Ax + Bu`.
pub fn plant_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    assert_eq!(a.ncols(), x.len(), "dimension mismatch: x");
    assert_eq!(b.ncols(), u.len(), "dimension mismatch: u");
    a * x + b * u
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        self.problem.validate()?;
        if self.steps == 0 {
            return Err(SimError::Invalid("steps must be at least 1".into()));
        }
        if self.x0.len() != self.problem.n_x() {
            return Err(SimError::Invalid(format!(
                "x0: expected {} entries, got {}",
                self.problem.n_x(),
                self.x0.len()
            )));
        }
        if self.schedule.is_empty() {
            return Err(SimError::Invalid("reference_schedule must not be empty".into()));
        }
        if self.schedule[0].start_step != 0 {
            return Err(SimError::Invalid(
                "reference_schedule must start at step 0".into(),
            ));
        }
        for pair in self.schedule.windows(2) {
            if pair[1].start_step <= pair[0].start_step {
                return Err(SimError::Invalid(
                    "reference_schedule steps must be strictly increasing".into(),
                ));
            }
        }
        for (i, entry) in self.schedule.iter().enumerate() {
            if entry.x_r.len() != self.problem.n_x() || entry.u_r.len() != self.problem.n_u() {
                return Err(SimError::Invalid(format!(
                    "reference_schedule[{i}]: reference dimensions do not match the plant"
                )));
            }
        }
        Ok(())
    }

    fn reference_at(&self, step: usize) -> &ReferenceStep {
        self.schedule
            .iter()
            .rev()
            .find(|r| r.start_step <= step)
            .expect("schedule starts at 0")
    }
}

/// Run the loop. Constraint violations of the applied trajectory are
/// recorded, never rejected; per-step convergence failures are recorded in
/// the trace, only non-finite iterates abort.
pub fn run_closed_loop(sc: &Scenario) -> Result<ClosedLoopTrace, SimError> {
    sc.validate()?;

    let mut qp = assemble(&sc.problem, sc.encoding)?;
    let ops = build_kkt_operators(&qp.h, &qp.g, &qp.c, sc.settings.rho, qp.dims.n_x)?;
    let mut trace = ClosedLoopTrace {
        records: Vec::with_capacity(sc.steps),
        setup_time: ops.setup_time(),
    };

    let mut x = sc.x0.clone();
    let mut warm: Option<SolverState> = None;

    for step in 0..sc.steps {
        let reference = sc.reference_at(step);
        qp.update_online(&x, &reference.x_r, &reference.u_r);

        let carried = if sc.warm_start { warm.take() } else { None };
        let result = match solve(&qp, &ops, &sc.settings, carried) {
            Ok(result) => result,
            Err(source) => {
                return Err(SimError::Diverged {
                    step,
                    source,
                    trace: Box::new(trace),
                })
            }
        };

        let extracted = qp.extract_solution(result.z().as_slice());
        let objective =
            objective_value(&sc.problem, result.z().as_slice(), &reference.x_r, &reference.u_r);
        trace.records.push(StepRecord {
            step,
            x: x.clone(),
            u: extracted.u0.clone(),
            x_r: reference.x_r.clone(),
            u_r: reference.u_r.clone(),
            iterations: result.iterations,
            converged: result.status == SolveStatus::Converged,
            solve_time: result.solve_time,
            primal_residual: result.primal_residual,
            dual_residual: result.dual_residual,
            objective,
            theta: extracted.theta,
        });

        x = plant_step(&sc.problem.a, &sc.problem.b, &x, &extracted.u0);
        warm = Some(result.state);
    }

    Ok(trace)
}
