//! Condensed QP assembly for the harmonic MPC program.
//!
//! The decision vector is laid out as
//! `z = (u0, x1, u1, ..., x_{N-1}, u_{N-1}, x_e, x_s, x_c, u_e, u_s, u_c)`;
//! the initial state is not a variable (the first dynamics row absorbs it
//! through `b`). Equalities `Gz = b` carry the dynamics, the terminal
//! coupling and the three harmonic-consistency conditions; the coupling
//! rows `Cz + s = d` expose stage outputs (box slacks) and the per-output
//! amplitude triples `(y_e, y_s, y_c)` (cone slacks).
//!
//! Two interchangeable encodings of the amplitude constraints exist: the
//! band encoding keeps one 3-row block per output whose slack lives in the
//! cone intersection, the split encoding duplicates each block so the two
//! copies carry one shifted cone each. Both describe the same feasible set;
//! the band encoding is smaller.

use nalgebra::{DMatrix, DVector};

use crate::cones::{ConeBand, ShiftedCone};
use crate::problem::{diag_quad_form, harmonic_reference, quad_form, HarmonicParams, HmpcProblem, ProblemError};
use crate::sparse::{CsrBuilder, CsrMatrix};

/// How the per-output amplitude-triple constraints are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    /// One slack triple per output, constrained to the cone intersection.
    #[default]
    Band,
    /// Two slack triples per output, one shifted cone each.
    SocSplit,
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Band => "band",
            Encoding::SocSplit => "soc-split",
        }
    }
}

/// One block of the slack partition, in row order of `C`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBlock {
    /// Componentwise bounds on a stage output.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Amplitude triple constrained to a cone intersection.
    Band(ConeBand),
    /// Amplitude triple constrained to a single shifted cone.
    SplitCone(ShiftedCone),
}

impl ConstraintBlock {
    pub fn len(&self) -> usize {
        match self {
            ConstraintBlock::Box { lower, .. } => lower.len(),
            ConstraintBlock::Band(band) => band.dim(),
            ConstraintBlock::SplitCone(cone) => cone.dim(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Membership of a slack segment, up to `tol`.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self {
            ConstraintBlock::Box { lower, upper } => v
                .iter()
                .enumerate()
                .all(|(i, &x)| x >= lower[i] - tol && x <= upper[i] + tol),
            ConstraintBlock::Band(band) => band.contains(v, tol),
            ConstraintBlock::SplitCone(cone) => cone.contains(v, tol),
        }
    }

    /// Project a slack segment onto the block's set, in place.
    pub fn project(&self, v: &mut [f64]) {
        match self {
            ConstraintBlock::Box { lower, upper } => {
                for (i, x) in v.iter_mut().enumerate() {
                    *x = x.clamp(lower[i], upper[i]);
                }
            }
            ConstraintBlock::Band(band) => band.project(v),
            ConstraintBlock::SplitCone(cone) => cone.project(v),
        }
    }
}

/// Index arithmetic for the fixed decision-vector layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionLayout {
    pub n_x: usize,
    pub n_u: usize,
    pub horizon: usize,
}

impl DecisionLayout {
    pub fn new(n_x: usize, n_u: usize, horizon: usize) -> Self {
        assert!(horizon >= 2, "horizon must be at least 2");
        Self { n_x, n_u, horizon }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n_u + (self.horizon + 2) * (self.n_x + self.n_u)
    }

    #[inline]
    fn stage(&self) -> usize {
        self.n_x + self.n_u
    }

    #[inline]
    pub fn u0(&self) -> std::ops::Range<usize> {
        0..self.n_u
    }

    /// Predicted state `x^j`, `1 <= j <= N-1`.
    #[inline]
    pub fn state(&self, j: usize) -> std::ops::Range<usize> {
        debug_assert!((1..self.horizon).contains(&j));
        let start = self.n_u + (j - 1) * self.stage();
        start..start + self.n_x
    }

    /// Predicted input `u^j`, `1 <= j <= N-1` (`u^0` is [`Self::u0`]).
    #[inline]
    pub fn input(&self, j: usize) -> std::ops::Range<usize> {
        debug_assert!((1..self.horizon).contains(&j));
        let start = self.n_u + (j - 1) * self.stage() + self.n_x;
        start..start + self.n_u
    }

    #[inline]
    fn harmonic_base(&self) -> usize {
        self.n_u + (self.horizon - 1) * self.stage()
    }

    #[inline]
    pub fn x_e(&self) -> std::ops::Range<usize> {
        let s = self.harmonic_base();
        s..s + self.n_x
    }

    #[inline]
    pub fn x_s(&self) -> std::ops::Range<usize> {
        let s = self.harmonic_base() + self.n_x;
        s..s + self.n_x
    }

    #[inline]
    pub fn x_c(&self) -> std::ops::Range<usize> {
        let s = self.harmonic_base() + 2 * self.n_x;
        s..s + self.n_x
    }

    #[inline]
    pub fn u_e(&self) -> std::ops::Range<usize> {
        let s = self.harmonic_base() + 3 * self.n_x;
        s..s + self.n_u
    }

    #[inline]
    pub fn u_s(&self) -> std::ops::Range<usize> {
        let s = self.harmonic_base() + 3 * self.n_x + self.n_u;
        s..s + self.n_u
    }

    #[inline]
    pub fn u_c(&self) -> std::ops::Range<usize> {
        let s = self.harmonic_base() + 3 * self.n_x + 2 * self.n_u;
        s..s + self.n_u
    }

    pub fn theta(&self, z: &[f64]) -> HarmonicParams {
        HarmonicParams {
            x_e: DVector::from_column_slice(&z[self.x_e()]),
            x_s: DVector::from_column_slice(&z[self.x_s()]),
            x_c: DVector::from_column_slice(&z[self.x_c()]),
            u_e: DVector::from_column_slice(&z[self.u_e()]),
            u_s: DVector::from_column_slice(&z[self.u_s()]),
            u_c: DVector::from_column_slice(&z[self.u_c()]),
        }
    }
}

/// Problem and iterate dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub n_eq: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub horizon: usize,
}

/// Everything extracted from a solved decision vector.
#[derive(Debug, Clone)]
pub struct ExtractedSolution {
    /// The control move applied to the plant.
    pub u0: DVector<f64>,
    /// Predicted `(x^j, u^j)` pairs for `j = 1..N-1`.
    pub trajectory: Vec<(DVector<f64>, DVector<f64>)>,
    pub theta: HarmonicParams,
}

/// Assembled QP data plus the slack partition and online-update slots.
#[derive(Debug, Clone)]
pub struct CondensedQP {
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    pub g: CsrMatrix,
    pub b: DVector<f64>,
    pub c: CsrMatrix,
    pub d: DVector<f64>,
    pub blocks: Vec<ConstraintBlock>,
    pub dims: Dims,
    pub layout: DecisionLayout,
    pub encoding: Encoding,
    // retained problem pieces for the O(n_x^2 + n_y n_x) online update
    a: DMatrix<f64>,
    e: DMatrix<f64>,
    t_e: DMatrix<f64>,
    s_e: DMatrix<f64>,
}

/// Build the condensed program. `q`, `b` and `d` come back with their
/// state/reference slots zeroed; [`CondensedQP::update_online`] fills them.
pub fn assemble(prob: &HmpcProblem, encoding: Encoding) -> Result<CondensedQP, ProblemError> {
    prob.validate()?;

    let (n_x, n_u, n_y, big_n) = (prob.n_x(), prob.n_u(), prob.n_y(), prob.horizon);
    let layout = DecisionLayout::new(n_x, n_u, big_n);
    let n = layout.n();
    let n_eq = n_x * (big_n + 3);
    let m = match encoding {
        Encoding::Band => n_y * (big_n + 3),
        Encoding::SocSplit => n_y * (big_n + 6),
    };

    // trig coefficients sin(w(i - N)), cos(w(i - N)); shared by H, G and
    // the reference signal
    let trig: Vec<(f64, f64)> = (0..big_n)
        .map(|i| (prob.freq * (i as f64 - big_n as f64)).sin_cos())
        .collect();

    let h = assemble_h(prob, &layout, &trig);
    let g = assemble_g(prob, &layout, n_eq);
    let (c, blocks) = assemble_c(prob, &layout, encoding, m);

    let dims = Dims { n, m, n_eq, n_x, n_u, n_y, horizon: big_n };

    Ok(CondensedQP {
        h,
        q: DVector::zeros(n),
        g,
        b: DVector::zeros(n_eq),
        c,
        d: DVector::zeros(m),
        blocks,
        dims,
        layout,
        encoding,
        a: prob.a.clone(),
        e: prob.e.clone(),
        t_e: prob.t_e.clone(),
        s_e: prob.s_e.clone(),
    })
}

fn assemble_h(prob: &HmpcProblem, layout: &DecisionLayout, trig: &[(f64, f64)]) -> DMatrix<f64> {
    let n = layout.n();
    let big_n = layout.horizon;
    let mut h = DMatrix::zeros(n, n);

    let set_block = |h: &mut DMatrix<f64>, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, block: &DMatrix<f64>| {
        h.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
            .copy_from(block);
    };
    let set_sym = |h: &mut DMatrix<f64>, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, block: &DMatrix<f64>| {
        set_block(h, rows.clone(), cols.clone(), block);
        let t = block.transpose();
        set_block(h, cols, rows, &t);
    };

    // stage diagonal: R for u0, then (Q, R) per stage
    set_block(&mut h, layout.u0(), layout.u0(), &prob.r);
    for j in 1..big_n {
        set_block(&mut h, layout.state(j), layout.state(j), &prob.q);
        set_block(&mut h, layout.input(j), layout.input(j), &prob.r);
    }

    // stage-to-harmonic coupling
    let (sin0, cos0) = trig[0];
    set_sym(&mut h, layout.u0(), layout.u_e(), &(-&prob.r));
    set_sym(&mut h, layout.u0(), layout.u_s(), &(&prob.r * -sin0));
    set_sym(&mut h, layout.u0(), layout.u_c(), &(&prob.r * -cos0));
    for (j, &(s, c)) in trig.iter().enumerate().skip(1) {
        set_sym(&mut h, layout.state(j), layout.x_e(), &(-&prob.q));
        set_sym(&mut h, layout.state(j), layout.x_s(), &(&prob.q * -s));
        set_sym(&mut h, layout.state(j), layout.x_c(), &(&prob.q * -c));
        set_sym(&mut h, layout.input(j), layout.u_e(), &(-&prob.r));
        set_sym(&mut h, layout.input(j), layout.u_s(), &(&prob.r * -s));
        set_sym(&mut h, layout.input(j), layout.u_c(), &(&prob.r * -c));
    }

    // trig sums over the stage indices each signal couples to
    let sums = |range: std::ops::Range<usize>| {
        let mut s = 0.0;
        let mut c = 0.0;
        let mut ss = 0.0;
        let mut cc = 0.0;
        let mut sc = 0.0;
        for i in range {
            let (si, ci) = trig[i];
            s += si;
            c += ci;
            ss += si * si;
            cc += ci * ci;
            sc += si * ci;
        }
        (s, c, ss, cc, sc)
    };

    let t_h = DMatrix::from_diagonal(&prob.t_h);
    let (s, c, ss, cc, sc) = sums(1..big_n);
    set_block(&mut h, layout.x_e(), layout.x_e(), &(&prob.t_e + &prob.q * (big_n - 1) as f64));
    set_sym(&mut h, layout.x_e(), layout.x_s(), &(&prob.q * s));
    set_sym(&mut h, layout.x_e(), layout.x_c(), &(&prob.q * c));
    set_block(&mut h, layout.x_s(), layout.x_s(), &(&t_h + &prob.q * ss));
    set_sym(&mut h, layout.x_s(), layout.x_c(), &(&prob.q * sc));
    set_block(&mut h, layout.x_c(), layout.x_c(), &(&t_h + &prob.q * cc));

    let s_h = DMatrix::from_diagonal(&prob.s_h);
    let (s, c, ss, cc, sc) = sums(0..big_n);
    set_block(&mut h, layout.u_e(), layout.u_e(), &(&prob.s_e + &prob.r * big_n as f64));
    set_sym(&mut h, layout.u_e(), layout.u_s(), &(&prob.r * s));
    set_sym(&mut h, layout.u_e(), layout.u_c(), &(&prob.r * c));
    set_block(&mut h, layout.u_s(), layout.u_s(), &(&s_h + &prob.r * ss));
    set_sym(&mut h, layout.u_s(), layout.u_c(), &(&prob.r * sc));
    set_block(&mut h, layout.u_c(), layout.u_c(), &(&s_h + &prob.r * cc));

    h
}

fn assemble_g(prob: &HmpcProblem, layout: &DecisionLayout, n_eq: usize) -> CsrMatrix {
    let (n_x, big_n) = (layout.n_x, layout.horizon);
    let (sin_w, cos_w) = prob.freq.sin_cos();
    let mut g = CsrBuilder::new(n_eq, layout.n());

    // x^1 = A x(t) + B u^0, as B u^0 - x^1 = -A x(t)
    g.push_dense(0, layout.u0().start, &prob.b);
    g.push_scaled_identity(0, layout.state(1).start, n_x, -1.0);
    // interior dynamics rows
    for r in 1..big_n - 1 {
        let row = r * n_x;
        g.push_dense(row, layout.state(r).start, &prob.a);
        g.push_dense(row, layout.input(r).start, &prob.b);
        g.push_scaled_identity(row, layout.state(r + 1).start, n_x, -1.0);
    }
    // terminal row folds the horizon-end condition into the last dynamics step
    let row = (big_n - 1) * n_x;
    g.push_dense(row, layout.state(big_n - 1).start, &prob.a);
    g.push_dense(row, layout.input(big_n - 1).start, &prob.b);
    g.push_scaled_identity(row, layout.x_e().start, n_x, -1.0);
    g.push_scaled_identity(row, layout.x_c().start, n_x, -1.0);

    // harmonic consistency: (A - I) x_e + B u_e = 0
    let row = big_n * n_x;
    let a_minus_i = &prob.a - DMatrix::identity(n_x, n_x);
    g.push_dense(row, layout.x_e().start, &a_minus_i);
    g.push_dense(row, layout.u_e().start, &prob.b);
    // (A - cos w) x_s + sin(w) x_c + B u_s = 0
    let row = (big_n + 1) * n_x;
    let a_minus_cos = &prob.a - DMatrix::identity(n_x, n_x) * cos_w;
    g.push_dense(row, layout.x_s().start, &a_minus_cos);
    g.push_scaled_identity(row, layout.x_c().start, n_x, sin_w);
    g.push_dense(row, layout.u_s().start, &prob.b);
    // -sin(w) x_s + (A - cos w) x_c + B u_c = 0
    let row = (big_n + 2) * n_x;
    g.push_scaled_identity(row, layout.x_s().start, n_x, -sin_w);
    g.push_dense(row, layout.x_c().start, &a_minus_cos);
    g.push_dense(row, layout.u_c().start, &prob.b);

    g.build()
}

fn assemble_c(
    prob: &HmpcProblem,
    layout: &DecisionLayout,
    encoding: Encoding,
    m: usize,
) -> (CsrMatrix, Vec<ConstraintBlock>) {
    let (n_y, big_n) = (prob.n_y(), layout.horizon);
    let mut c = CsrBuilder::new(m, layout.n());
    let mut blocks = Vec::with_capacity(big_n + 2 * n_y);

    let neg_e = -&prob.e;
    let neg_f = -&prob.f;

    // stage 0 sees only u^0; the state part enters through d
    c.push_dense(0, layout.u0().start, &neg_f);
    for j in 1..big_n {
        c.push_dense(j * n_y, layout.state(j).start, &neg_e);
        c.push_dense(j * n_y, layout.input(j).start, &neg_f);
    }
    for _ in 0..big_n {
        blocks.push(ConstraintBlock::Box {
            lower: prob.y_lower.clone(),
            upper: prob.y_upper.clone(),
        });
    }

    // per-output amplitude triples (y_e, y_s, y_c)(i)
    let mut row = big_n * n_y;
    let push_triple = |c: &mut CsrBuilder, row: usize, i: usize| {
        for (k, (x_cols, u_cols)) in [
            (layout.x_e(), layout.u_e()),
            (layout.x_s(), layout.u_s()),
            (layout.x_c(), layout.u_c()),
        ]
        .into_iter()
        .enumerate()
        {
            for col in 0..layout.n_x {
                c.push(row + k, x_cols.start + col, -prob.e[(i, col)]);
            }
            for col in 0..layout.n_u {
                c.push(row + k, u_cols.start + col, -prob.f[(i, col)]);
            }
        }
    };

    for i in 0..n_y {
        let (upper, lower) = (prob.y_upper[i], prob.y_lower[i]);
        match encoding {
            Encoding::Band => {
                push_triple(&mut c, row, i);
                row += 3;
                blocks.push(ConstraintBlock::Band(
                    ConeBand::new(upper, lower, 3).expect("bounds validated"),
                ));
            }
            Encoding::SocSplit => {
                push_triple(&mut c, row, i);
                push_triple(&mut c, row + 3, i);
                row += 6;
                blocks.push(ConstraintBlock::SplitCone(ShiftedCone::plus(lower, 3)));
                blocks.push(ConstraintBlock::SplitCone(ShiftedCone::minus(upper, 3)));
            }
        }
    }
    debug_assert_eq!(row, m);

    (c.build(), blocks)
}

impl CondensedQP {
    /// Write the measured state and the reference into their `q`, `b`, `d`
    /// slots. Overwrites; never re-factorizes.
    pub fn update_online(&mut self, x_t: &DVector<f64>, x_r: &DVector<f64>, u_r: &DVector<f64>) {
        let dims = self.dims;
        assert_eq!(x_t.len(), dims.n_x, "dimension mismatch: x_t");
        assert_eq!(x_r.len(), dims.n_x, "dimension mismatch: x_r");
        assert_eq!(u_r.len(), dims.n_u, "dimension mismatch: u_r");

        let q_xe = -(&self.t_e * x_r);
        self.q.rows_mut(self.layout.x_e().start, dims.n_x).copy_from(&q_xe);
        let q_ue = -(&self.s_e * u_r);
        self.q.rows_mut(self.layout.u_e().start, dims.n_u).copy_from(&q_ue);

        let b_head = -(&self.a * x_t);
        self.b.rows_mut(0, dims.n_x).copy_from(&b_head);

        let d_head = &self.e * x_t;
        self.d.rows_mut(0, dims.n_y).copy_from(&d_head);
    }

    /// `0.5 z'Hz + q'z` for the currently loaded `q`.
    pub fn quadratic_form(&self, z: &DVector<f64>) -> f64 {
        0.5 * (&self.h * z).dot(z) + self.q.dot(z)
    }

    /// Slice a decision vector into the applied move, the predicted
    /// trajectory and the harmonic parameters.
    pub fn extract_solution(&self, z: &[f64]) -> ExtractedSolution {
        assert_eq!(z.len(), self.dims.n, "dimension mismatch: z");
        let layout = self.layout;
        let trajectory = (1..layout.horizon)
            .map(|j| {
                (
                    DVector::from_column_slice(&z[layout.state(j)]),
                    DVector::from_column_slice(&z[layout.input(j)]),
                )
            })
            .collect();
        ExtractedSolution {
            u0: DVector::from_column_slice(&z[layout.u0()]),
            trajectory,
            theta: layout.theta(z),
        }
    }

    /// Inverse of [`Self::extract_solution`]; mostly for round-trip checks.
    pub fn pack_solution(&self, sol: &ExtractedSolution) -> DVector<f64> {
        let layout = self.layout;
        let mut z = DVector::zeros(self.dims.n);
        z.rows_mut(0, layout.n_u).copy_from(&sol.u0);
        for (j, (x, u)) in sol.trajectory.iter().enumerate() {
            z.rows_mut(layout.state(j + 1).start, layout.n_x).copy_from(x);
            z.rows_mut(layout.input(j + 1).start, layout.n_u).copy_from(u);
        }
        z.rows_mut(layout.x_e().start, layout.n_x).copy_from(&sol.theta.x_e);
        z.rows_mut(layout.x_s().start, layout.n_x).copy_from(&sol.theta.x_s);
        z.rows_mut(layout.x_c().start, layout.n_x).copy_from(&sol.theta.x_c);
        z.rows_mut(layout.u_e().start, layout.n_u).copy_from(&sol.theta.u_e);
        z.rows_mut(layout.u_s().start, layout.n_u).copy_from(&sol.theta.u_s);
        z.rows_mut(layout.u_c().start, layout.n_u).copy_from(&sol.theta.u_c);
        z
    }
}

/// True tracking objective of a decision vector: stage deviations from the
/// harmonic reference plus the offset cost. The fixed initial state carries
/// no stage term, so the state sum starts at `j = 1`; the input sum starts
/// at `j = 0`.
pub fn objective_value(
    prob: &HmpcProblem,
    z: &[f64],
    x_r: &DVector<f64>,
    u_r: &DVector<f64>,
) -> f64 {
    let layout = DecisionLayout::new(prob.n_x(), prob.n_u(), prob.horizon);
    assert_eq!(z.len(), layout.n(), "dimension mismatch: z");
    let theta = layout.theta(z);

    let mut total = 0.0;
    for j in 1..prob.horizon {
        let (x_h, u_h) = harmonic_reference(&theta, j as i64, prob.horizon, prob.freq);
        let dx = DVector::from_column_slice(&z[layout.state(j)]) - x_h;
        let du = DVector::from_column_slice(&z[layout.input(j)]) - u_h;
        total += quad_form(&prob.q, &dx) + quad_form(&prob.r, &du);
    }
    let (_, u_h0) = harmonic_reference(&theta, 0, prob.horizon, prob.freq);
    let du0 = DVector::from_column_slice(&z[layout.u0()]) - u_h0;
    total += quad_form(&prob.r, &du0);

    total += quad_form(&prob.t_e, &(&theta.x_e - x_r));
    total += quad_form(&prob.s_e, &(&theta.u_e - u_r));
    total += diag_quad_form(&prob.t_h, &theta.x_s);
    total += diag_quad_form(&prob.t_h, &theta.x_c);
    total += diag_quad_form(&prob.s_h, &theta.u_s);
    total += diag_quad_form(&prob.s_h, &theta.u_c);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{double_integrator_problem, random_problem};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimension_formulas() {
        let mut p = double_integrator_problem(3, 0.2);
        // n_x=2, n_u=1, n_y=2 variant for the worked example
        p.a = DMatrix::identity(2, 2);
        p.b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
        p.e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        p.f = DMatrix::zeros(2, 1);
        p.y_lower = DVector::from_column_slice(&[-1.0, -1.0]);
        p.y_upper = DVector::from_column_slice(&[1.0, 1.0]);
        p.q = DMatrix::identity(2, 2);
        p.r = DMatrix::identity(1, 1);
        p.t_e = DMatrix::identity(2, 2);
        p.t_h = DVector::from_element(2, 1.0);
        p.s_e = DMatrix::identity(1, 1);
        p.s_h = DVector::from_element(1, 1.0);

        let qp = assemble(&p, Encoding::Band).unwrap();
        assert_eq!(qp.dims.n, 16); // 1 + 5*3
        assert_eq!(qp.dims.n_eq, 12); // 2*6
        assert_eq!(qp.dims.m, 12); // 2*6

        let qp = assemble(&p, Encoding::SocSplit).unwrap();
        assert_eq!(qp.dims.m, 18); // 2*9
        assert_eq!(qp.blocks.iter().map(|b| b.len()).sum::<usize>(), 18);
    }

    #[test]
    fn dimension_formulas_over_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n_x in [2usize, 3, 4] {
            for n_u in [1usize, 2] {
                for big_n in [2usize, 3, 5, 7] {
                    let p = random_problem(&mut rng, n_x, n_u, big_n, 0.25);
                    let n_y = p.n_y();
                    let qp = assemble(&p, Encoding::Band).unwrap();
                    assert_eq!(qp.dims.n, n_u + (big_n + 2) * (n_x + n_u));
                    assert_eq!(qp.dims.n_eq, n_x * (big_n + 3));
                    assert_eq!(qp.dims.m, n_y * (big_n + 3));
                    assert_eq!(qp.g.rows(), qp.dims.n_eq);
                    assert_eq!(qp.c.rows(), qp.dims.m);
                    let qp = assemble(&p, Encoding::SocSplit).unwrap();
                    assert_eq!(qp.dims.m, n_y * (big_n + 6));
                }
            }
        }
    }

    #[test]
    fn h_is_symmetric_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let w = rng.random_range(0.0..1.0);
            let p = random_problem(&mut rng, 3, 2, 4, w);
            let qp = assemble(&p, Encoding::Band).unwrap();
            let asym = (&qp.h - qp.h.transpose()).abs().max();
            assert!(asym <= 1e-12, "H asymmetry {asym}");
            let eig = qp.h.clone().symmetric_eigen();
            let min_eig = eig.eigenvalues.min();
            assert!(min_eig > 0.0, "H not PD, min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn zero_frequency_collapses_trig_structure() {
        let p = double_integrator_problem(4, 0.0);
        let qp = assemble(&p, Encoding::Band).unwrap();
        let layout = qp.layout;
        // sine columns of the stage coupling vanish, cosine columns are -Q
        for j in 1..p.horizon {
            for r in 0..p.n_x() {
                for c in 0..p.n_x() {
                    let row = layout.state(j).start + r;
                    assert_eq!(qp.h[(row, layout.x_s().start + c)], 0.0);
                    assert_eq!(qp.h[(row, layout.x_c().start + c)], -p.q[(r, c)]);
                }
            }
        }
        // harmonic rows reduce to steady-state-style conditions:
        // (A - I) x_s + B u_s = 0 and (A - I) x_c + B u_c = 0
        let g = qp.g.to_dense();
        let n_x = p.n_x();
        let a_minus_i = &p.a - DMatrix::identity(n_x, n_x);
        let row_s = (p.horizon + 1) * n_x;
        let row_c = (p.horizon + 2) * n_x;
        for r in 0..n_x {
            for c in 0..n_x {
                assert_eq!(g[(row_s + r, layout.x_s().start + c)], a_minus_i[(r, c)]);
                assert_eq!(g[(row_s + r, layout.x_c().start + c)], 0.0);
                assert_eq!(g[(row_c + r, layout.x_c().start + c)], a_minus_i[(r, c)]);
                assert_eq!(g[(row_c + r, layout.x_s().start + c)], 0.0);
            }
        }
    }

    #[test]
    fn update_online_is_overwrite_not_accumulate() {
        let p = double_integrator_problem(3, 0.4);
        let mut qp = assemble(&p, Encoding::Band).unwrap();
        let zero_x = DVector::zeros(p.n_x());
        let zero_u = DVector::zeros(p.n_u());

        qp.update_online(&zero_x, &zero_x, &zero_u);
        assert_eq!(qp.q.amax(), 0.0);
        assert_eq!(qp.b.amax(), 0.0);
        assert_eq!(qp.d.amax(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x_t = DVector::from_fn(p.n_x(), |_, _| rng.random_range(-1.0..1.0));
        let x_r = DVector::from_fn(p.n_x(), |_, _| rng.random_range(-1.0..1.0));
        let u_r = DVector::from_fn(p.n_u(), |_, _| rng.random_range(-1.0..1.0));
        qp.update_online(&x_t, &x_r, &u_r);
        let q1 = qp.q.clone();
        let b1 = qp.b.clone();
        let d1 = qp.d.clone();
        qp.update_online(&x_t, &x_r, &u_r);
        assert_eq!(qp.q, q1);
        assert_eq!(qp.b, b1);
        assert_eq!(qp.d, d1);

        // with T_e = I the q slot is exactly -x_r
        let mut p_eye = p.clone();
        p_eye.t_e = DMatrix::identity(p.n_x(), p.n_x());
        let mut qp = assemble(&p_eye, Encoding::Band).unwrap();
        qp.update_online(&zero_x, &x_r, &zero_u);
        let slot = qp.q.rows(qp.layout.x_e().start, p.n_x());
        assert_eq!(slot, -&x_r);
    }

    #[test]
    fn objective_zero_cases() {
        let p = double_integrator_problem(4, 0.3);
        let layout = DecisionLayout::new(p.n_x(), p.n_u(), p.horizon);
        let zero_x = DVector::zeros(p.n_x());
        let zero_u = DVector::zeros(p.n_u());
        let z = vec![0.0; layout.n()];
        assert_eq!(objective_value(&p, &z, &zero_x, &zero_u), 0.0);

        // perfect tracking of a pure steady-state harmonic costs nothing
        let x_e = DVector::from_column_slice(&[0.4, 0.0, -0.2, 0.0]);
        // u_e must hold x_e steady; for the double integrator x_e with zero
        // velocity and zero input is a steady state
        let mut z = vec![0.0; layout.n()];
        z[layout.x_e()].copy_from_slice(x_e.as_slice());
        for j in 1..p.horizon {
            z[layout.state(j)].copy_from_slice(x_e.as_slice());
        }
        let val = objective_value(&p, &z, &x_e, &zero_u);
        assert!(val.abs() < 1e-24);
    }

    #[test]
    fn quadratic_form_tracks_objective_up_to_reference_constant() {
        // the assembled quadratic form is half the true objective minus the
        // reference-only constant: J = 2*(0.5 z'Hz + q'z) + x_r'T_e x_r + u_r'S_e u_r
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_problem(&mut rng, 3, 2, 5, 0.45);
        let mut qp = assemble(&p, Encoding::Band).unwrap();
        let x_t = DVector::from_fn(p.n_x(), |_, _| rng.random_range(-1.0..1.0));
        let x_r = DVector::from_fn(p.n_x(), |_, _| rng.random_range(-1.0..1.0));
        let u_r = DVector::from_fn(p.n_u(), |_, _| rng.random_range(-1.0..1.0));
        qp.update_online(&x_t, &x_r, &u_r);

        let constant = quad_form(&p.t_e, &x_r) + quad_form(&p.s_e, &u_r);
        for _ in 0..100 {
            let z = DVector::from_fn(qp.dims.n, |_, _| rng.random_range(-2.0..2.0));
            let j = objective_value(&p, z.as_slice(), &x_r, &u_r);
            let offset = j - 2.0 * qp.quadratic_form(&z);
            assert!(
                (offset - constant).abs() <= 1e-8 * constant.abs().max(1.0),
                "offset {offset} vs constant {constant}"
            );
        }
    }

    #[test]
    fn harmonic_rows_imply_reference_dynamics() {
        // any theta satisfying the three harmonic row blocks propagates
        // through the plant exactly
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let w = rng.random_range(0.0..1.0);
            let p = random_problem(&mut rng, 3, 2, 4, w);
            let theta = crate::testutil::harmonic_consistent_theta(&p, &mut rng, 1e-10);
            for j in 0..=(2 * p.horizon as i64) {
                let (x_j, u_j) = harmonic_reference(&theta, j, p.horizon, p.freq);
                let (x_next, _) = harmonic_reference(&theta, j + 1, p.horizon, p.freq);
                let resid = (&p.a * &x_j + &p.b * &u_j - x_next).amax();
                assert!(resid <= 1e-9, "reference dynamics residual {resid} at j={j}");
            }
        }
    }

    #[test]
    fn equality_rows_hold_on_an_exact_harmonic_trajectory() {
        // starting the plant on the harmonic reference keeps it there, so
        // packing that trajectory into z must satisfy every equality row:
        // the dynamics rows by rollout, the terminal row because the
        // reference at the horizon equals x_e + x_c, and the consistency
        // rows by construction of theta
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let w = rng.random_range(0.0..1.0);
            let p = random_problem(&mut rng, 3, 2, 5, w);
            let theta = crate::testutil::harmonic_consistent_theta(&p, &mut rng, 1e-10);
            let mut qp = assemble(&p, Encoding::Band).unwrap();

            let (x0, _) = harmonic_reference(&theta, 0, p.horizon, p.freq);
            qp.update_online(&x0, &DVector::zeros(3), &DVector::zeros(2));

            let mut z = DVector::zeros(qp.dims.n);
            let layout = qp.layout;
            let (_, u0) = harmonic_reference(&theta, 0, p.horizon, p.freq);
            z.rows_mut(0, layout.n_u).copy_from(&u0);
            for j in 1..p.horizon {
                let (x_j, u_j) = harmonic_reference(&theta, j as i64, p.horizon, p.freq);
                z.rows_mut(layout.state(j).start, layout.n_x).copy_from(&x_j);
                z.rows_mut(layout.input(j).start, layout.n_u).copy_from(&u_j);
            }
            z.rows_mut(layout.x_e().start, layout.n_x).copy_from(&theta.x_e);
            z.rows_mut(layout.x_s().start, layout.n_x).copy_from(&theta.x_s);
            z.rows_mut(layout.x_c().start, layout.n_x).copy_from(&theta.x_c);
            z.rows_mut(layout.u_e().start, layout.n_u).copy_from(&theta.u_e);
            z.rows_mut(layout.u_s().start, layout.n_u).copy_from(&theta.u_s);
            z.rows_mut(layout.u_c().start, layout.n_u).copy_from(&theta.u_c);

            let mut gz = vec![0.0; qp.dims.n_eq];
            qp.g.matvec(z.as_slice(), &mut gz);
            for (i, v) in gz.iter().enumerate() {
                assert!(
                    (v - qp.b[i]).abs() <= 1e-9,
                    "equality row {i} off by {}",
                    (v - qp.b[i]).abs()
                );
            }
        }
    }

    #[test]
    fn cone_membership_transfers_to_output_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let w = rng.random_range(0.0..1.0);
            let p = random_problem(&mut rng, 2, 1, 3, w);
            // sample per-output member triples of the band, then check the
            // implied output signal over a long window
            let n_y = p.n_y();
            let mut y_e = DVector::zeros(n_y);
            let mut y_s = DVector::zeros(n_y);
            let mut y_c = DVector::zeros(n_y);
            for i in 0..n_y {
                let band = ConeBand::new(p.y_upper[i], p.y_lower[i], 3).unwrap();
                // random point pushed into the band by projection
                let v = band.projection(&[
                    rng.random_range(p.y_lower[i]..p.y_upper[i]),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]);
                assert!(band.contains(&v, 1e-12));
                y_e[i] = v[0];
                y_s[i] = v[1];
                y_c[i] = v[2];
            }
            for j in 0..=(2 * p.horizon as i64) {
                let phase = p.freq * (j - p.horizon as i64) as f64;
                let (s, c) = phase.sin_cos();
                for i in 0..n_y {
                    let y = y_e[i] + y_s[i] * s + y_c[i] * c;
                    assert!(y >= p.y_lower[i] - 1e-9 && y <= p.y_upper[i] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn slack_residual_reproduces_stage_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = random_problem(&mut rng, 3, 2, 4, 0.3);
        for encoding in [Encoding::Band, Encoding::SocSplit] {
            let mut qp = assemble(&p, encoding).unwrap();
            let x_t = DVector::from_fn(p.n_x(), |_, _| rng.random_range(-1.0..1.0));
            qp.update_online(&x_t, &DVector::zeros(p.n_x()), &DVector::zeros(p.n_u()));

            let z = DVector::from_fn(qp.dims.n, |_, _| rng.random_range(-1.0..1.0));
            let mut cz = vec![0.0; qp.dims.m];
            qp.c.matvec(z.as_slice(), &mut cz);
            let s: Vec<f64> = (0..qp.dims.m).map(|i| qp.d[i] - cz[i]).collect();

            let n_y = p.n_y();
            let layout = qp.layout;
            // stage 0 with x^0 = x_t
            let u0 = DVector::from_column_slice(&z.as_slice()[layout.u0()]);
            let y0 = &p.e * &x_t + &p.f * &u0;
            for i in 0..n_y {
                assert!((s[i] - y0[i]).abs() < 1e-12);
            }
            for j in 1..p.horizon {
                let xj = DVector::from_column_slice(&z.as_slice()[layout.state(j)]);
                let uj = DVector::from_column_slice(&z.as_slice()[layout.input(j)]);
                let yj = &p.e * &xj + &p.f * &uj;
                for i in 0..n_y {
                    assert!((s[j * n_y + i] - yj[i]).abs() < 1e-12);
                }
            }
            // amplitude triples
            let theta = layout.theta(z.as_slice());
            let y_e = &p.e * &theta.x_e + &p.f * &theta.u_e;
            let y_s = &p.e * &theta.x_s + &p.f * &theta.u_s;
            let y_c = &p.e * &theta.x_c + &p.f * &theta.u_c;
            let triple_len = match encoding {
                Encoding::Band => 3,
                Encoding::SocSplit => 6,
            };
            for i in 0..n_y {
                let base = p.horizon * n_y + i * triple_len;
                for copy in 0..triple_len / 3 {
                    assert!((s[base + 3 * copy] - y_e[i]).abs() < 1e-12);
                    assert!((s[base + 3 * copy + 1] - y_s[i]).abs() < 1e-12);
                    assert!((s[base + 3 * copy + 2] - y_c[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn encodings_describe_the_same_feasible_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let p = random_problem(&mut rng, 2, 1, 3, 0.5);
        let mut band = assemble(&p, Encoding::Band).unwrap();
        let mut split = assemble(&p, Encoding::SocSplit).unwrap();
        let x_t = DVector::from_fn(p.n_x(), |_, _| rng.random_range(-0.3..0.3));
        band.update_online(&x_t, &DVector::zeros(2), &DVector::zeros(1));
        split.update_online(&x_t, &DVector::zeros(2), &DVector::zeros(1));

        let feasible = |qp: &CondensedQP, z: &DVector<f64>| -> bool {
            let mut cz = vec![0.0; qp.dims.m];
            qp.c.matvec(z.as_slice(), &mut cz);
            let s: Vec<f64> = (0..qp.dims.m).map(|i| qp.d[i] - cz[i]).collect();
            let mut offset = 0;
            qp.blocks.iter().all(|blk| {
                let seg = &s[offset..offset + blk.len()];
                offset += blk.len();
                blk.contains(seg, 1e-9)
            })
        };

        for _ in 0..500 {
            let z = DVector::from_fn(band.dims.n, |_, _| rng.random_range(-1.5..1.5));
            assert_eq!(feasible(&band, &z), feasible(&split, &z));
        }
    }

    #[test]
    fn extract_pack_round_trip() {
        let p = double_integrator_problem(5, 0.3);
        let qp = assemble(&p, Encoding::Band).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let z = DVector::from_fn(qp.dims.n, |_, _| rng.random_range(-2.0..2.0));
        let sol = qp.extract_solution(z.as_slice());
        assert_eq!(sol.trajectory.len(), p.horizon - 1);
        let back = qp.pack_solution(&sol);
        assert_eq!(z, back);

        let zero = qp.extract_solution(&vec![0.0; qp.dims.n]);
        assert_eq!(zero.u0.amax(), 0.0);
        assert!(zero.trajectory.iter().all(|(x, u)| x.amax() == 0.0 && u.amax() == 0.0));
    }
}
