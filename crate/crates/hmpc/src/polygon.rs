//! Regular polygon constraints over a two-dimensional position subspace.
//!
//! Each side contributes one half-space row `a' p <= b` over the two
//! position coordinates; the paired lower bound is `-b`, so every row fits
//! the two-sided output-constraint form. The first outward normal points
//! along the positive first axis and the vertices sit midway between
//! consecutive normals, at `circumradius` from the origin.

/// Rejected polygon parameters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolygonError {
    #[error("polygon needs at least 3 sides, got {0}")]
    TooFewSides(usize),
    #[error("polygon radius must be positive and finite, got {0}")]
    BadRadius(f64),
}

/// Half-space rows of a regular polygon: `rows[k] . p <= bound` for every
/// side `k`, with lower bounds `-bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonRows {
    pub rows: Vec<[f64; 2]>,
    pub bound: f64,
    pub circumradius: f64,
}

impl PolygonRows {
    pub fn sides(&self) -> usize {
        self.rows.len()
    }

    /// Vertex `k`, on the boundary of sides `k` and `k+1`.
    pub fn vertex(&self, k: usize) -> [f64; 2] {
        let l = self.sides() as f64;
        let angle = std::f64::consts::PI * (2.0 * k as f64 + 1.0) / l;
        [self.circumradius * angle.cos(), self.circumradius * angle.sin()]
    }

    /// Apothem: distance from the center to every side.
    pub fn apothem(&self) -> f64 {
        self.bound
    }
}

/// Build the `l` half-space rows of a regular `l`-gon with the given
/// circumradius, centered at the origin.
pub fn gen_polygon(sides: usize, radius: f64) -> Result<PolygonRows, PolygonError> {
    if sides < 3 {
        return Err(PolygonError::TooFewSides(sides));
    }
    if !radius.is_finite() || radius <= 0.0 {
        return Err(PolygonError::BadRadius(radius));
    }
    let l = sides as f64;
    let bound = radius * (std::f64::consts::PI / l).cos();
    let rows = (0..sides)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / l;
            [angle.cos(), angle.sin()]
        })
        .collect();
    Ok(PolygonRows { rows, bound, circumradius: radius })
}
