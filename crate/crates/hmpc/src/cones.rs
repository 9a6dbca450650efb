//! Shifted second-order cones, their opposed intersections, and the
//! closed-form Euclidean projections onto both.
//!
//! A shifted cone is the set `{(z0, z1) : ||z1|| <= sign * (z0 - apex)}`
//! with `sign` in `{+1, -1}`. The intersection of a downward cone and an
//! upward cone with compatible apexes forms a lens-shaped band whose
//! projection is simply the composition of the two single-cone
//! projections, which is what makes these sets cheap inside a first-order
//! solver. A Dykstra alternating-projection oracle is included for
//! validating that composition; it is never used in the solver hot path.

/// Orientation of a shifted cone along its first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSign {
    /// Opens towards `+inf`: `||z1|| <= z0 - apex`.
    Plus,
    /// Opens towards `-inf`: `||z1|| <= apex - z0`.
    Minus,
}

impl ConeSign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            ConeSign::Plus => 1.0,
            ConeSign::Minus => -1.0,
        }
    }
}

/// A second-order cone translated along its axis by `apex`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedCone {
    sign: ConeSign,
    apex: f64,
    dim: usize,
}

/// Below this, the tail is treated as having no direction and the
/// projection is resolved by the exact case comparisons alone.
const TAIL_NORM_FLOOR: f64 = 1e-14;

impl ShiftedCone {
    /// A cone of dimension `dim >= 2` (axis coordinate plus tail).
    pub fn new(sign: ConeSign, apex: f64, dim: usize) -> Self {
        assert!(dim >= 2, "shifted cone needs dim >= 2, got {dim}");
        assert!(apex.is_finite(), "cone apex must be finite");
        Self { sign, apex, dim }
    }

    pub fn plus(apex: f64, dim: usize) -> Self {
        Self::new(ConeSign::Plus, apex, dim)
    }

    pub fn minus(apex: f64, dim: usize) -> Self {
        Self::new(ConeSign::Minus, apex, dim)
    }

    #[inline]
    pub fn sign(&self) -> ConeSign {
        self.sign
    }

    #[inline]
    pub fn apex(&self) -> f64 {
        self.apex
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Membership test: `||z1|| <= sign * (z0 - apex) + tol`.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        assert_eq!(z.len(), self.dim, "dimension mismatch");
        tail_norm(z) <= self.sign.value() * (z[0] - self.apex) + tol
    }

    /// Euclidean projection, in place.
    ///
    /// Case order matters: membership first (returns `z` unchanged, which
    /// also resolves boundary ties), then the polar side (maps to the
    /// apex), then the closed-form tilt onto the cone surface.
    pub fn project(&self, z: &mut [f64]) {
        assert_eq!(z.len(), self.dim, "dimension mismatch");
        debug_assert!(z.iter().all(|v| v.is_finite()), "non-finite input");

        let alpha = self.sign.value();
        let axis = alpha * (z[0] - self.apex);
        let tail = tail_norm(z);

        if tail <= axis {
            return;
        }
        if tail <= -axis {
            z[0] = self.apex;
            z[1..].fill(0.0);
            return;
        }
        // Both cases failing forces tail > 0, but guard the division anyway.
        if tail <= TAIL_NORM_FLOOR {
            z[0] = self.apex;
            z[1..].fill(0.0);
            return;
        }
        let tau = 0.5 * (axis + tail);
        z[0] = tau * alpha + self.apex;
        let scale = tau / tail;
        for v in &mut z[1..] {
            *v *= scale;
        }
    }

    /// Projection returning a fresh vector; convenience for tests and oracles.
    pub fn projection(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        self.project(&mut out);
        out
    }
}

/// The intersection of a downward cone at `upper` and an upward cone at
/// `lower`; non-empty exactly when `lower <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeBand {
    upper: f64,
    lower: f64,
    dim: usize,
}

/// Rejected band bounds (`lower > upper` describes the empty set).
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("empty band: lower bound {lower} exceeds upper bound {upper}")]
pub struct EmptyBand {
    pub upper: f64,
    pub lower: f64,
}

impl ConeBand {
    pub fn new(upper: f64, lower: f64, dim: usize) -> Result<Self, EmptyBand> {
        assert!(dim >= 2, "band needs dim >= 2, got {dim}");
        assert!(upper.is_finite() && lower.is_finite(), "band bounds must be finite");
        if !band_nonempty(upper, lower) {
            return Err(EmptyBand { upper, lower });
        }
        Ok(Self { upper, lower, dim })
    }

    #[inline]
    pub fn upper(&self) -> f64 {
        self.upper
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.lower
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper_cone(&self) -> ShiftedCone {
        ShiftedCone::minus(self.upper, self.dim)
    }

    pub fn lower_cone(&self) -> ShiftedCone {
        ShiftedCone::plus(self.lower, self.dim)
    }

    /// Member of both cones, up to `tol` on each inequality.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.upper_cone().contains(z, tol) && self.lower_cone().contains(z, tol)
    }

    /// Exact projection onto the band: project onto the upward cone, then
    /// project the result onto the downward cone. The composition is the
    /// true Euclidean projection; the Dykstra oracle below exists to check
    /// exactly this claim.
    pub fn project(&self, z: &mut [f64]) {
        self.lower_cone().project(z);
        self.upper_cone().project(z);
    }

    pub fn projection(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        self.project(&mut out);
        out
    }
}

/// Lens-shaped band non-emptiness: `lower <= upper`.
#[inline]
pub fn band_nonempty(upper: f64, lower: f64) -> bool {
    lower <= upper
}

/// Outcome of the alternating-projection oracle.
#[derive(Debug, Clone)]
pub struct DykstraOutcome {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Dykstra's alternating projections for the intersection of two closed
/// convex sets, given their individual (in-place) projectors.
///
/// Terminates once `||w_k - w_{k-1}||_inf <= tol` and
/// `||v_k - w_k||_inf <= tol`, returning `w_k`; if `max_iter` runs out the
/// best iterate is returned flagged as non-converged. Validation oracle
/// only — not for hot paths.
pub fn dykstra_project<P1, P2>(
    z: &[f64],
    mut project_1: P1,
    mut project_2: P2,
    tol: f64,
    max_iter: usize,
) -> DykstraOutcome
where
    P1: FnMut(&mut [f64]),
    P2: FnMut(&mut [f64]),
{
    assert!(tol > 0.0, "tol must be positive");
    assert!(max_iter >= 1, "max_iter must be at least 1");

    let n = z.len();
    let mut w = z.to_vec();
    let mut w_prev = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut v = vec![0.0; n];

    for k in 1..=max_iter {
        // v_k = P1(w_{k-1} + p_{k-1});  p_k = w_{k-1} + p_{k-1} - v_k
        for i in 0..n {
            v[i] = w[i] + p[i];
        }
        project_1(&mut v);
        for i in 0..n {
            p[i] = w[i] + p[i] - v[i];
        }
        // w_k = P2(v_k + q_{k-1});  q_k = v_k + q_{k-1} - w_k
        w_prev.copy_from_slice(&w);
        for i in 0..n {
            w[i] = v[i] + q[i];
        }
        project_2(&mut w);
        for i in 0..n {
            q[i] = v[i] + q[i] - w[i];
        }

        let dw = inf_norm_diff(&w, &w_prev);
        let dvw = inf_norm_diff(&v, &w);
        if dw <= tol && dvw <= tol {
            return DykstraOutcome {
                point: w,
                iterations: k,
                converged: true,
            };
        }
    }

    DykstraOutcome {
        point: w,
        iterations: max_iter,
        converged: false,
    }
}

#[inline]
fn tail_norm(z: &[f64]) -> f64 {
    z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}
