//! Instance generators and repair helpers shared by the test suites and
//! the benchmark harness. Not part of the solver API.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::problem::{HarmonicParams, HmpcProblem};

/// The surrogate benchmark plant; see [`crate::bench::surrogate_problem`].
pub fn double_integrator_problem(horizon: usize, freq: f64) -> HmpcProblem {
    crate::bench::surrogate_problem(horizon, freq)
}

/// A stable two-state plant for tracking experiments: damped velocity,
/// position bounded together with the input.
pub fn stable_second_order_problem(horizon: usize, freq: f64) -> HmpcProblem {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.7]);
    let b = DMatrix::from_row_slice(2, 1, &[0.1, 0.5]);
    let mut e = DMatrix::zeros(3, 2);
    e[(0, 0)] = 1.0;
    e[(1, 1)] = 1.0;
    let mut f = DMatrix::zeros(3, 1);
    f[(2, 0)] = 1.0;
    HmpcProblem {
        a,
        b,
        e,
        f,
        y_lower: DVector::from_column_slice(&[-1.0, -2.0, -1.5]),
        y_upper: DVector::from_column_slice(&[1.0, 2.0, 1.5]),
        q: DMatrix::identity(2, 2),
        r: DMatrix::identity(1, 1) * 0.5,
        t_e: DMatrix::identity(2, 2) * 5.0,
        s_e: DMatrix::identity(1, 1) * 0.5,
        t_h: DVector::from_element(2, 0.3),
        s_h: DVector::from_element(1, 0.3),
        horizon,
        freq,
    }
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize, ridge: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    m.transpose() * m * 0.3 + DMatrix::identity(dim, dim) * ridge
}

/// Random instance with a stable-ish plant, identity-selector outputs on
/// every state and input, and generic SPD weights.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    n_x: usize,
    n_u: usize,
    horizon: usize,
    freq: f64,
) -> HmpcProblem {
    let raw = DMatrix::from_fn(n_x, n_x, |_, _| rng.random_range(-1.0..1.0));
    let spectral_radius = raw
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let target: f64 = rng.random_range(0.5..0.95);
    let a = raw * (target / spectral_radius);
    let b = DMatrix::from_fn(n_x, n_u, |_, _| rng.random_range(-1.0..1.0));

    let n_y = n_x + n_u;
    let mut e = DMatrix::zeros(n_y, n_x);
    for i in 0..n_x {
        e[(i, i)] = 1.0;
    }
    let mut f = DMatrix::zeros(n_y, n_u);
    for i in 0..n_u {
        f[(n_x + i, i)] = 1.0;
    }

    let mut y_upper = DVector::zeros(n_y);
    let mut y_lower = DVector::zeros(n_y);
    for i in 0..n_y {
        let half: f64 = rng.random_range(1.5..3.0);
        let center: f64 = rng.random_range(-0.3..0.3);
        y_upper[i] = center + half;
        y_lower[i] = center - half;
    }

    // weight floors keep the objective well-curved in every direction, so
    // solver slack at loose tolerances stays small in solution space
    HmpcProblem {
        a,
        b,
        e,
        f,
        y_lower,
        y_upper,
        q: random_spd(rng, n_x, 1.0),
        r: random_spd(rng, n_u, 1.0),
        t_e: random_spd(rng, n_x, 1.5),
        s_e: random_spd(rng, n_u, 1.0),
        t_h: DVector::from_fn(n_x, |_, _| rng.random_range(0.3..0.8)),
        s_h: DVector::from_fn(n_u, |_, _| rng.random_range(0.3..0.8)),
        horizon,
        freq,
    }
}

/// The three harmonic-consistency row blocks over
/// `theta = (x_e, x_s, x_c, u_e, u_s, u_c)`.
pub fn harmonic_constraint_matrix(prob: &HmpcProblem) -> DMatrix<f64> {
    let (n_x, n_u) = (prob.n_x(), prob.n_u());
    let (sin_w, cos_w) = prob.freq.sin_cos();
    let eye = DMatrix::identity(n_x, n_x);
    let a_minus_i = &prob.a - &eye;
    let a_minus_cos = &prob.a - &eye * cos_w;

    let cols = 3 * (n_x + n_u);
    let mut g = DMatrix::zeros(3 * n_x, cols);
    let xe = 0;
    let xs = n_x;
    let xc = 2 * n_x;
    let ue = 3 * n_x;
    let us = 3 * n_x + n_u;
    let uc = 3 * n_x + 2 * n_u;

    g.view_mut((0, xe), (n_x, n_x)).copy_from(&a_minus_i);
    g.view_mut((0, ue), (n_x, n_u)).copy_from(&prob.b);

    g.view_mut((n_x, xs), (n_x, n_x)).copy_from(&a_minus_cos);
    g.view_mut((n_x, xc), (n_x, n_x)).copy_from(&(&eye * sin_w));
    g.view_mut((n_x, us), (n_x, n_u)).copy_from(&prob.b);

    g.view_mut((2 * n_x, xs), (n_x, n_x)).copy_from(&(&eye * -sin_w));
    g.view_mut((2 * n_x, xc), (n_x, n_x)).copy_from(&a_minus_cos);
    g.view_mut((2 * n_x, uc), (n_x, n_u)).copy_from(&prob.b);

    g
}

/// Random harmonic parameters repaired by a minimum-norm least-squares
/// correction so the consistency rows hold to `tol`.
pub fn harmonic_consistent_theta(
    prob: &HmpcProblem,
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> HarmonicParams {
    let (n_x, n_u) = (prob.n_x(), prob.n_u());
    let g = harmonic_constraint_matrix(prob);
    let mut theta = DVector::from_fn(3 * (n_x + n_u), |_, _| rng.random_range(-1.0..1.0));

    let resid = &g * &theta;
    let svd = g.clone().svd(true, true);
    let delta = svd.solve(&resid, 1e-13).expect("svd solve");
    theta -= delta;

    let final_resid = (&g * &theta).amax();
    assert!(
        final_resid <= tol,
        "harmonic repair left residual {final_resid}"
    );

    let seg = |start: usize, len: usize| DVector::from_column_slice(&theta.as_slice()[start..start + len]);
    HarmonicParams {
        x_e: seg(0, n_x),
        x_s: seg(n_x, n_x),
        x_c: seg(2 * n_x, n_x),
        u_e: seg(3 * n_x, n_u),
        u_s: seg(3 * n_x + n_u, n_u),
        u_c: seg(3 * n_x + 2 * n_u, n_u),
    }
}
