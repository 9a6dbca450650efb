//! Equality-constrained QP sub-solver used by the ADMM z-update.
//!
//! The subproblem `min 0.5 z'Hhat z + qhat'z  s.t. Gz = b` with
//! `Hhat = H + rho C'C` is solved through the explicit operators
//!
//! ```text
//! z = Mq qhat + Mb b
//! Mq = Hhat^-1 G' (G Hhat^-1 G')^-1 G Hhat^-1 - Hhat^-1
//! Mb = Hhat^-1 G' (G Hhat^-1 G')^-1
//! ```
//!
//! Both operators are dense and formed once per `(problem, rho)` pair; at
//! solve time the update is two dense matrix-vector products. Only the
//! leading `n_x` columns of `Mb` are kept, since everything past the first
//! `n_x` entries of `b` is structurally zero.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::sparse::CsrMatrix;

/// Which factorization failed during setup.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SetupError {
    #[error("penalized Hessian H + rho*C'C is not positive definite")]
    PenalizedHessianNotPd,
    #[error("Schur complement G*(H + rho*C'C)^-1*G' is not positive definite (G rank-deficient?)")]
    SchurComplementNotPd,
}

/// Cached solve operators for one `(H, G, C, rho)` combination.
#[derive(Debug, Clone)]
pub struct KktOperators {
    m_q: DMatrix<f64>,
    m_b_head: DMatrix<f64>,
    rho: f64,
    setup_time: Duration,
}

impl KktOperators {
    #[inline]
    pub fn m_q(&self) -> &DMatrix<f64> {
        &self.m_q
    }

    #[inline]
    pub fn m_b_head(&self) -> &DMatrix<f64> {
        &self.m_b_head
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.m_q.nrows()
    }

    /// Number of retained `Mb` columns (= state dimension).
    #[inline]
    pub fn b_head_len(&self) -> usize {
        self.m_b_head.ncols()
    }

    #[inline]
    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn setup_time(&self) -> Duration {
        self.setup_time
    }

    /// `z = Mq qhat + Mb_head b_head` written into caller storage;
    /// allocation-free, this runs once per solver iteration.
    pub fn solve_into(&self, q_hat: &DVector<f64>, b_head: &[f64], z: &mut DVector<f64>) {
        assert_eq!(q_hat.len(), self.n(), "dimension mismatch: q_hat");
        assert_eq!(b_head.len(), self.b_head_len(), "dimension mismatch: b_head");
        assert_eq!(z.len(), self.n(), "dimension mismatch: z");
        z.gemv(1.0, &self.m_q, q_hat, 0.0);
        let b = nalgebra::DVectorView::from_slice(b_head, b_head.len());
        z.gemv(1.0, &self.m_b_head, &b, 1.0);
    }
}

/// Factorize once and materialize the dense solve operators.
pub fn build_kkt_operators(
    h: &DMatrix<f64>,
    g: &CsrMatrix,
    c: &CsrMatrix,
    rho: f64,
    n_x: usize,
) -> Result<KktOperators, SetupError> {
    let n = h.nrows();
    assert_eq!(h.ncols(), n, "H must be square");
    assert_eq!(g.cols(), n, "dimension mismatch: G");
    assert_eq!(c.cols(), n, "dimension mismatch: C");
    assert!(rho > 0.0, "rho must be positive");
    assert!(n_x <= g.rows(), "n_x exceeds the equality row count");

    let started = Instant::now();

    let mut h_hat = c.gram_dense();
    h_hat *= rho;
    h_hat += h;

    let chol_h = Cholesky::new(h_hat).ok_or(SetupError::PenalizedHessianNotPd)?;

    // W = Hhat^-1 G'   (n x n_eq)
    let g_dense = g.to_dense();
    let mut w = g_dense.transpose();
    chol_h.solve_mut(&mut w);

    // Schur complement S = G W, SPD iff G has full row rank
    let schur = &g_dense * &w;
    let chol_s = Cholesky::new(schur).ok_or(SetupError::SchurComplementNotPd)?;

    // Mb = W S^-1, formed as (S^-1 W')'
    let mut m_b_t = w.transpose();
    chol_s.solve_mut(&mut m_b_t);
    let m_b = m_b_t.transpose();

    // Mq = Mb W' - Hhat^-1
    let m_q = &m_b * w.transpose() - chol_h.inverse();
    let m_b_head = m_b.columns(0, n_x).into_owned();

    Ok(KktOperators {
        m_q,
        m_b_head,
        rho,
        setup_time: started.elapsed(),
    })
}

/// One equality-QP solve; allocates the output (hot paths use
/// [`KktOperators::solve_into`]).
pub fn solve_equality_qp(
    ops: &KktOperators,
    q_hat: &DVector<f64>,
    b_head: &[f64],
) -> DVector<f64> {
    let mut z = DVector::zeros(ops.n());
    ops.solve_into(q_hat, b_head, &mut z);
    z
}
