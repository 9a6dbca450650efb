//! Benchmark harness comparing the band encoding against the split-cone
//! encoding while polygon constraints grow the output dimension.
//!
//! For each side count the base problem gains one polygon row per side,
//! both encodings are assembled and factorized once, and the same batch of
//! randomized feasible initial states is solved cold under each. Ratio
//! rows (split over band) of total time, iterations and time per iteration
//! are reported wherever both encodings produced usable runs. Solves run
//! serially so the wall-clock per solve stays meaningful.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admm::{solve, AdmmSettings, SolveStatus};
use crate::assemble::{assemble, Encoding};
use crate::kkt::build_kkt_operators;
use crate::polygon::{gen_polygon, PolygonError};
use crate::problem::{HmpcProblem, ProblemError};

/// Position coordinates of [`surrogate_problem`].
pub const SURROGATE_POSITION_STATES: [usize; 2] = [0, 2];

/// The shipped default benchmark plant: two decoupled double integrators
/// (a positioning stage per axis) with box constraints on every state and
/// input. Positions live at indices 0 and 2.
pub fn surrogate_problem(horizon: usize, freq: f64) -> HmpcProblem {
    let ts = 0.2;
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, ts, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, ts, //
            0.0, 0.0, 0.0, 1.0,
        ],
    );
    let b = DMatrix::from_row_slice(
        4,
        2,
        &[
            0.5 * ts * ts, 0.0, //
            ts, 0.0, //
            0.0, 0.5 * ts * ts, //
            0.0, ts,
        ],
    );
    let mut e = DMatrix::zeros(6, 4);
    for i in 0..4 {
        e[(i, i)] = 1.0;
    }
    let mut f = DMatrix::zeros(6, 2);
    f[(4, 0)] = 1.0;
    f[(5, 1)] = 1.0;

    HmpcProblem {
        a,
        b,
        e,
        f,
        y_lower: DVector::from_column_slice(&[-2.0, -2.0, -2.0, -2.0, -1.0, -1.0]),
        y_upper: DVector::from_column_slice(&[2.0, 2.0, 2.0, 2.0, 1.0, 1.0]),
        q: DMatrix::identity(4, 4),
        r: DMatrix::identity(2, 2) * 0.5,
        t_e: DMatrix::identity(4, 4) * 5.0,
        s_e: DMatrix::identity(2, 2) * 0.5,
        t_h: DVector::from_element(4, 0.3),
        s_h: DVector::from_element(2, 0.3),
        horizon,
        freq,
    }
}

/// Bad benchmark inputs or a setup failure.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Polygon(#[from] PolygonError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Setup(#[from] crate::kkt::SetupError),
    #[error("position_states: {0}")]
    BadPositionStates(String),
}

/// Append one two-sided polygon row per side over the designated position
/// coordinates. The original rows are kept.
pub fn with_polygon(
    base: &HmpcProblem,
    position_states: [usize; 2],
    sides: usize,
    radius: f64,
) -> Result<HmpcProblem, BenchError> {
    let [px, py] = position_states;
    if px >= base.n_x() || py >= base.n_x() || px == py {
        return Err(BenchError::BadPositionStates(format!(
            "indices [{px}, {py}] must be distinct states below {}",
            base.n_x()
        )));
    }
    let poly = gen_polygon(sides, radius)?;

    let n_y = base.n_y();
    let n_new = n_y + sides;
    let mut e = DMatrix::zeros(n_new, base.n_x());
    e.view_mut((0, 0), (n_y, base.n_x())).copy_from(&base.e);
    let mut f = DMatrix::zeros(n_new, base.n_u());
    f.view_mut((0, 0), (n_y, base.n_u())).copy_from(&base.f);
    let mut y_upper = DVector::zeros(n_new);
    let mut y_lower = DVector::zeros(n_new);
    y_upper.rows_mut(0, n_y).copy_from(&base.y_upper);
    y_lower.rows_mut(0, n_y).copy_from(&base.y_lower);

    for (k, row) in poly.rows.iter().enumerate() {
        e[(n_y + k, px)] = row[0];
        e[(n_y + k, py)] = row[1];
        y_upper[n_y + k] = poly.bound;
        y_lower[n_y + k] = -poly.bound;
    }

    let mut augmented = base.clone();
    augmented.e = e;
    augmented.f = f;
    augmented.y_upper = y_upper;
    augmented.y_lower = y_lower;
    Ok(augmented)
}

/// Benchmark parameters.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sides: Vec<usize>,
    pub runs: usize,
    pub radius: f64,
    pub seed: u64,
    pub settings: AdmmSettings,
    pub position_states: [usize; 2],
}

/// Aggregated statistics for one `(sides, encoding)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub sides: usize,
    pub encoding: String,
    pub n_y: usize,
    pub runs_requested: usize,
    pub runs_converged: usize,
    /// Fewer converged runs than requested.
    pub low_confidence: bool,
    pub avg_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
    pub min_ms: f64,
    pub avg_iters: f64,
    pub median_iters: f64,
    pub max_iters: usize,
    pub min_iters: usize,
    /// Mean over runs of (solve time / iterations).
    pub avg_us_per_iter: f64,
}

/// Split-over-band ratios for one side count.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub sides: usize,
    pub total_time_ratio: f64,
    pub iteration_ratio: f64,
    pub time_per_iter_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<RatioRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "sides,encoding,n_y,runs_requested,runs_converged,low_confidence,\
             avg_ms,median_ms,max_ms,min_ms,avg_iters,median_iters,max_iters,min_iters,avg_us_per_iter\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.sides,
                r.encoding,
                r.n_y,
                r.runs_requested,
                r.runs_converged,
                r.low_confidence,
                r.avg_ms,
                r.median_ms,
                r.max_ms,
                r.min_ms,
                r.avg_iters,
                r.median_iters,
                r.max_iters,
                r.min_iters,
                r.avg_us_per_iter
            ));
        }
        out.push_str("\nsides,total_time_ratio,iteration_ratio,time_per_iter_ratio\n");
        for r in &self.ratios {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.sides, r.total_time_ratio, r.iteration_ratio, r.time_per_iter_ratio
            ));
        }
        out
    }
}

struct CellStats {
    times_ms: Vec<f64>,
    iters: Vec<usize>,
    us_per_iter: Vec<f64>,
    converged: usize,
}

/// Run the comparison. For every side count the identical batch of initial
/// states is solved under both encodings.
pub fn run_bench(base: &HmpcProblem, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    base.validate()?;
    assert!(cfg.runs >= 1, "runs must be at least 1");

    let mut report = BenchReport::default();

    for &sides in &cfg.sides {
        let prob = with_polygon(base, cfg.position_states, sides, cfg.radius)?;
        let states = initial_states(&prob, cfg, sides);
        let x_r = DVector::zeros(prob.n_x());
        let u_r = DVector::zeros(prob.n_u());

        let encodings = [Encoding::Band, Encoding::SocSplit];
        let mut problems = Vec::new();
        for &encoding in &encodings {
            let qp = assemble(&prob, encoding)?;
            let ops = build_kkt_operators(&qp.h, &qp.g, &qp.c, cfg.settings.rho, qp.dims.n_x)?;
            problems.push((qp, ops));
            problems.last_mut().unwrap().0.update_online(&states[0], &x_r, &u_r);
        }

        // one unrecorded warmup per encoding, then paired timed runs so
        // machine noise hits both encodings symmetrically
        for (qp, ops) in &problems {
            let _ = solve(qp, ops, &cfg.settings, None);
        }

        let mut stats: Vec<CellStats> = encodings
            .iter()
            .map(|_| CellStats {
                times_ms: Vec::with_capacity(cfg.runs),
                iters: Vec::with_capacity(cfg.runs),
                us_per_iter: Vec::with_capacity(cfg.runs),
                converged: 0,
            })
            .collect();
        for (run, x0) in states.iter().enumerate() {
            // alternate which encoding goes first so residual machine-state
            // drift cannot systematically favor one side of the pair
            let order = if run.is_multiple_of(2) { [0, 1] } else { [1, 0] };
            for idx in order {
                let (qp, ops) = &mut problems[idx];
                qp.update_online(x0, &x_r, &u_r);
                let started = Instant::now();
                let result = match solve(qp, ops, &cfg.settings, None) {
                    Ok(result) => result,
                    Err(_) => continue,
                };
                let elapsed = started.elapsed();
                if result.status != SolveStatus::Converged {
                    continue;
                }
                let cell = &mut stats[idx];
                cell.converged += 1;
                let ms = elapsed.as_secs_f64() * 1e3;
                cell.times_ms.push(ms);
                cell.iters.push(result.iterations);
                cell.us_per_iter.push(ms * 1e3 / result.iterations as f64);
            }
        }

        for (&encoding, cell) in encodings.iter().zip(&stats) {
            report.rows.push(make_row(sides, encoding, prob.n_y(), cfg.runs, cell));
        }
        let (band, split) = (&stats[0], &stats[1]);
        if band.converged > 0 && split.converged > 0 {
            report.ratios.push(RatioRow {
                sides,
                total_time_ratio: mean(&split.times_ms) / mean(&band.times_ms),
                iteration_ratio: mean_usize(&split.iters) / mean_usize(&band.iters),
                time_per_iter_ratio: mean(&split.us_per_iter) / mean(&band.us_per_iter),
            });
        }
    }

    Ok(report)
}

/// Initial states drawn uniformly from a box inscribed in the feasible
/// position region, with mild velocities; deterministic in the seed and
/// side count so both encodings see the same batch.
fn initial_states(prob: &HmpcProblem, cfg: &BenchConfig, sides: usize) -> Vec<DVector<f64>> {
    let poly = gen_polygon(sides, cfg.radius).expect("validated earlier");
    // a box inside the polygon's inscribed circle, shrunk for headroom
    let half = 0.8 * poly.apothem() / std::f64::consts::SQRT_2;
    let [px, py] = cfg.position_states;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (sides as u64).wrapping_mul(0x9e37_79b9));
    (0..cfg.runs)
        .map(|_| {
            let mut x0 = DVector::zeros(prob.n_x());
            for i in 0..prob.n_x() {
                x0[i] = if i == px || i == py {
                    rng.random_range(-half..half)
                } else {
                    rng.random_range(-0.3..0.3)
                };
            }
            x0
        })
        .collect()
}

fn make_row(
    sides: usize,
    encoding: Encoding,
    n_y: usize,
    requested: usize,
    stats: &CellStats,
) -> BenchRow {
    BenchRow {
        sides,
        encoding: encoding.as_str().to_string(),
        n_y,
        runs_requested: requested,
        runs_converged: stats.converged,
        low_confidence: stats.converged < requested,
        avg_ms: mean(&stats.times_ms),
        median_ms: median(&stats.times_ms),
        max_ms: stats.times_ms.iter().cloned().fold(f64::NAN, f64::max),
        min_ms: stats.times_ms.iter().cloned().fold(f64::NAN, f64::min),
        avg_iters: mean_usize(&stats.iters),
        median_iters: median(&stats.iters.iter().map(|&i| i as f64).collect::<Vec<_>>()),
        max_iters: stats.iters.iter().copied().max().unwrap_or(0),
        min_iters: stats.iters.iter().copied().min().unwrap_or(0),
        avg_us_per_iter: mean(&stats.us_per_iter),
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn mean_usize(v: &[usize]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    }
}
