//! ADMM loop over the condensed program, generic over the slack partition.
//!
//! Each iteration performs, in order: the penalized gradient
//! `qhat = q + C'(rho (s - d) + lambda)`, the equality-QP solve through the
//! cached dense operators, a single `Cz` product shared by the slack and
//! dual updates, the blockwise projection of `-(c) - lambda/rho`, and the
//! dual ascent `lambda += rho (Cz + s - d)`. Exit tests the infinity norm
//! of the combined residual buffer against `eps_p` and the slack delta
//! against `eps_d`.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::assemble::{CondensedQP, ConstraintBlock};
use crate::cones::inf_norm_diff;
use crate::kkt::KktOperators;

/// Penalty parameter and exit tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmSettings {
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iter: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 15.0,
            eps_primal: 1e-5,
            eps_dual: 1e-5,
            max_iter: 20_000,
        }
    }
}

impl AdmmSettings {
    pub fn validate(&self) {
        assert!(self.rho > 0.0, "rho must be positive");
        assert!(self.eps_primal > 0.0, "eps_primal must be positive");
        assert!(self.eps_dual > 0.0, "eps_dual must be positive");
        assert!(self.max_iter >= 1, "max_iter must be at least 1");
    }
}

/// Working iterates of one solve. Reusable across solves as a warm start;
/// after a completed iteration `c` holds `Cz + s - d` and `lambda` equals
/// its previous value plus `rho * c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub s_prev: DVector<f64>,
    pub lambda: DVector<f64>,
    pub c: DVector<f64>,
    pub q_hat: DVector<f64>,
    pub iteration: usize,
}

impl SolverState {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            z: DVector::zeros(n),
            s: DVector::zeros(m),
            s_prev: DVector::zeros(m),
            lambda: DVector::zeros(m),
            c: DVector::zeros(m),
            q_hat: DVector::zeros(n),
            iteration: 0,
        }
    }
}

/// Termination cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

/// Non-finite iterates; reports the iteration that tripped the scan.
/// Iteration 0 means the problem data or warm start was already bad.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("solver diverged: non-finite values detected at iteration {iteration}")]
pub struct Divergence {
    pub iteration: usize,
}

/// Final iterates and run statistics. `state` can be handed to the next
/// solve as a warm start.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: SolverState,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub setup_time: Duration,
    pub solve_time: Duration,
}

impl SolveResult {
    #[inline]
    pub fn z(&self) -> &DVector<f64> {
        &self.state.z
    }

    #[inline]
    pub fn s(&self) -> &DVector<f64> {
        &self.state.s
    }

    #[inline]
    pub fn lambda(&self) -> &DVector<f64> {
        &self.state.lambda
    }

    #[inline]
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

const DIVERGENCE_SCAN_PERIOD: usize = 100;

/// Run the loop from a cold start (all-zero iterates) or the given warm
/// state. `ops` must have been built from `qp` with `settings.rho`.
pub fn solve(
    qp: &CondensedQP,
    ops: &KktOperators,
    settings: &AdmmSettings,
    warm: Option<SolverState>,
) -> Result<SolveResult, Divergence> {
    solve_observed(qp, ops, settings, warm, |_| {})
}

/// [`solve`] with a per-iteration observer; the observer sees the state
/// after the dual update of each iteration. Intended for diagnostics and
/// tests; the closure compiles away when empty.
pub fn solve_observed<F>(
    qp: &CondensedQP,
    ops: &KktOperators,
    settings: &AdmmSettings,
    warm: Option<SolverState>,
    mut observe: F,
) -> Result<SolveResult, Divergence>
where
    F: FnMut(&SolverState),
{
    settings.validate();
    let (n, m) = (qp.dims.n, qp.dims.m);
    assert_eq!(ops.n(), n, "operators do not match this problem");
    assert_eq!(
        ops.rho(),
        settings.rho,
        "operators were factorized for a different rho"
    );

    let mut st = match warm {
        Some(st) => {
            assert_eq!(st.z.len(), n, "warm state dimension mismatch: z");
            assert_eq!(st.s.len(), m, "warm state dimension mismatch: s");
            assert_eq!(st.lambda.len(), m, "warm state dimension mismatch: lambda");
            st
        }
        None => SolverState::zeros(n, m),
    };
    st.iteration = 0;

    // data-borne garbage would otherwise flow through the projections
    let data_finite = qp.q.iter().chain(qp.b.iter()).chain(qp.d.iter()).all(|v| v.is_finite());
    if !data_finite || !iterates_finite(&st) {
        return Err(Divergence { iteration: 0 });
    }

    let rho = settings.rho;
    let inv_rho = 1.0 / rho;
    let started = Instant::now();

    let mut status = SolveStatus::MaxIterations;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    for k in 1..=settings.max_iter {
        // qhat = q + C'(rho (s - d) + lambda); c doubles as the scratch for
        // the inner vector
        for i in 0..m {
            st.c[i] = rho * (st.s[i] - qp.d[i]) + st.lambda[i];
        }
        st.q_hat.copy_from(&qp.q);
        qp.c
            .matvec_transpose_acc(st.c.as_slice(), st.q_hat.as_mut_slice());

        // equality-constrained z-update
        ops.solve_into(&st.q_hat, &qp.b.as_slice()[..ops.b_head_len()], &mut st.z);

        // the single Cz of the iteration
        qp.c.matvec(st.z.as_slice(), st.c.as_mut_slice());
        for i in 0..m {
            st.c[i] -= qp.d[i];
        }

        // blockwise slack projection of -(c) - lambda/rho
        st.s_prev.copy_from(&st.s);
        for i in 0..m {
            st.s[i] = -st.c[i] - inv_rho * st.lambda[i];
        }
        project_blocks(st.s.as_mut_slice(), &qp.blocks);

        // c <- Cz + s - d, then dual ascent
        for i in 0..m {
            st.c[i] += st.s[i];
        }
        for i in 0..m {
            st.lambda[i] += rho * st.c[i];
        }

        st.iteration = k;
        (primal, dual) = residuals(&st);
        observe(&st);

        if primal <= settings.eps_primal && dual <= settings.eps_dual {
            status = SolveStatus::Converged;
            break;
        }
        if k % DIVERGENCE_SCAN_PERIOD == 0 && !iterates_finite(&st) {
            return Err(Divergence { iteration: k });
        }
    }

    if !iterates_finite(&st) {
        return Err(Divergence { iteration: st.iteration });
    }

    Ok(SolveResult {
        status,
        iterations: st.iteration,
        primal_residual: primal,
        dual_residual: dual,
        setup_time: ops.setup_time(),
        solve_time: started.elapsed(),
        state: st,
    })
}

/// Project a slack vector onto the partitioned constraint set, segment by
/// segment and in place. The caller supplies `v` already holding
/// `-(Cz - d) - lambda/rho`.
pub fn project_blocks(v: &mut [f64], blocks: &[ConstraintBlock]) {
    let mut offset = 0;
    for block in blocks {
        let len = block.len();
        block.project(&mut v[offset..offset + len]);
        offset += len;
    }
    assert_eq!(offset, v.len(), "partition does not cover the slack vector");
}

/// Residual pair of a completed iteration: the infinity norm of
/// `Cz + s - d` (held in the `c` buffer) and of the slack delta.
pub fn residuals(state: &SolverState) -> (f64, f64) {
    let primal = state.c.amax();
    let dual = inf_norm_diff(state.s.as_slice(), state.s_prev.as_slice());
    (primal, dual)
}

fn iterates_finite(st: &SolverState) -> bool {
    st.z.iter().all(|v| v.is_finite())
        && st.s.iter().all(|v| v.is_finite())
        && st.lambda.iter().all(|v| v.is_finite())
}
