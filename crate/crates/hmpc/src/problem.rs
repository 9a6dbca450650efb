//! Problem data for the harmonic MPC program: plant, two-sided output
//! constraints, weights, horizon and base frequency, plus the harmonic
//! reference signal and the controller objective.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Invalid problem data, named by field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("{matrix}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Shape {
        matrix: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("{matrix}: not symmetric positive definite")]
    NotSpd { matrix: &'static str },
    #[error("{vector}[{index}]: diagonal weight must be positive, got {value}")]
    NonPositiveDiagonal {
        vector: &'static str,
        index: usize,
        value: f64,
    },
    #[error("output bound {index}: lower {lower} must be strictly below upper {upper}")]
    BoundOrder { index: usize, lower: f64, upper: f64 },
    #[error("horizon N must be at least 2, got {0}")]
    HorizonTooShort(usize),
    #[error("base frequency w must be non-negative and finite, got {0}")]
    BadFrequency(f64),
    #[error("{field}: entries must be finite")]
    NonFinite { field: &'static str },
}

/// Plant, constraint and tuning data defining one harmonic MPC instance.
///
/// `T_h` and `S_h` are diagonal and stored as their diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct HmpcProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub y_lower: DVector<f64>,
    pub y_upper: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub t_e: DMatrix<f64>,
    pub t_h: DVector<f64>,
    pub s_e: DMatrix<f64>,
    pub s_h: DVector<f64>,
    pub horizon: usize,
    pub freq: f64,
}

impl HmpcProblem {
    #[inline]
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    #[inline]
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    #[inline]
    pub fn n_y(&self) -> usize {
        self.e.nrows()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let n_x = self.n_x();
        let n_u = self.n_u();
        let n_y = self.n_y();

        check_shape("A", &self.a, n_x, n_x)?;
        check_shape("B", &self.b, n_x, n_u)?;
        check_shape("E", &self.e, n_y, n_x)?;
        check_shape("F", &self.f, n_y, n_u)?;
        check_len("y_lower", &self.y_lower, n_y)?;
        check_len("y_upper", &self.y_upper, n_y)?;
        check_spd("Q", &self.q, n_x)?;
        check_spd("R", &self.r, n_u)?;
        check_spd("T_e", &self.t_e, n_x)?;
        check_spd("S_e", &self.s_e, n_u)?;
        check_positive_diag("T_h", &self.t_h, n_x)?;
        check_positive_diag("S_h", &self.s_h, n_u)?;

        for (field, m) in [("A", &self.a), ("B", &self.b), ("E", &self.e), ("F", &self.f)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::NonFinite { field });
            }
        }
        for i in 0..n_y {
            let (lo, hi) = (self.y_lower[i], self.y_upper[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ProblemError::NonFinite { field: "output bounds" });
            }
            if lo >= hi {
                return Err(ProblemError::BoundOrder { index: i, lower: lo, upper: hi });
            }
        }
        if self.horizon < 2 {
            return Err(ProblemError::HorizonTooShort(self.horizon));
        }
        if !self.freq.is_finite() || self.freq < 0.0 {
            return Err(ProblemError::BadFrequency(self.freq));
        }
        Ok(())
    }
}

fn check_shape(
    name: &'static str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<(), ProblemError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(ProblemError::Shape {
            matrix: name,
            expected_rows: rows,
            expected_cols: cols,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_len(name: &'static str, v: &DVector<f64>, len: usize) -> Result<(), ProblemError> {
    if v.len() != len {
        return Err(ProblemError::Shape {
            matrix: name,
            expected_rows: len,
            expected_cols: 1,
            rows: v.len(),
            cols: 1,
        });
    }
    Ok(())
}

fn check_spd(name: &'static str, m: &DMatrix<f64>, dim: usize) -> Result<(), ProblemError> {
    check_shape(name, m, dim, dim)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite { field: name });
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-10 * scale {
        return Err(ProblemError::NotSpd { matrix: name });
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(ProblemError::NotSpd { matrix: name });
    }
    Ok(())
}

fn check_positive_diag(
    name: &'static str,
    v: &DVector<f64>,
    len: usize,
) -> Result<(), ProblemError> {
    check_len(name, v, len)?;
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() || x <= 0.0 {
            return Err(ProblemError::NonPositiveDiagonal { vector: name, index: i, value: x });
        }
    }
    Ok(())
}

/// Parameters of the harmonic reference signal: center, sine and cosine
/// amplitudes for both state and input.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicParams {
    pub x_e: DVector<f64>,
    pub x_s: DVector<f64>,
    pub x_c: DVector<f64>,
    pub u_e: DVector<f64>,
    pub u_s: DVector<f64>,
    pub u_c: DVector<f64>,
}

impl HarmonicParams {
    pub fn zeros(n_x: usize, n_u: usize) -> Self {
        Self {
            x_e: DVector::zeros(n_x),
            x_s: DVector::zeros(n_x),
            x_c: DVector::zeros(n_x),
            u_e: DVector::zeros(n_u),
            u_s: DVector::zeros(n_u),
            u_c: DVector::zeros(n_u),
        }
    }
}

/// Evaluate the harmonic reference at prediction time `j`:
/// `x = x_e + x_s sin(w (j - N)) + x_c cos(w (j - N))`, same shape for `u`.
pub fn harmonic_reference(
    theta: &HarmonicParams,
    j: i64,
    horizon: usize,
    freq: f64,
) -> (DVector<f64>, DVector<f64>) {
    let phase = freq * (j - horizon as i64) as f64;
    let (s, c) = phase.sin_cos();
    let x = &theta.x_e + &theta.x_s * s + &theta.x_c * c;
    let u = &theta.u_e + &theta.u_s * s + &theta.u_c * c;
    (x, u)
}

/// Weighted squared norm `||v||^2_M = v' M v`.
pub(crate) fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (m * v).dot(v)
}

pub(crate) fn diag_quad_form(diag: &DVector<f64>, v: &DVector<f64>) -> f64 {
    diag.iter().zip(v.iter()).map(|(d, x)| d * x * x).sum()
}
