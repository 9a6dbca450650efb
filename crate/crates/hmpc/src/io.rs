//! JSON schemas for problem and scenario files.
//!
//! Matrices arrive as row-major nested arrays under their conventional
//! names (`A`, `B`, `E`, `F`, `Q`, `R`, `T_e`, `S_e`); the diagonal
//! weights `T_h` and `S_h` are plain vectors. Validation failures carry
//! the JSON path of the offending field.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::AdmmSettings;
use crate::assemble::Encoding;
use crate::problem::{HmpcProblem, ProblemError};
use crate::sim::{ReferenceStep, Scenario};

/// A schema violation, carrying the path into the document.
#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Problem(#[from] ProblemError),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError::Invalid { path: path.into(), message: message.into() }
}

/// On-disk form of a problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    pub y_lower: Vec<f64>,
    pub y_upper: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "T_e")]
    pub t_e: Vec<Vec<f64>>,
    #[serde(rename = "T_h")]
    pub t_h: Vec<f64>,
    #[serde(rename = "S_e")]
    pub s_e: Vec<Vec<f64>>,
    #[serde(rename = "S_h")]
    pub s_h: Vec<f64>,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub w: f64,
    /// Two state indices spanning the position plane; required only by the
    /// polygon benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_states: Option<[usize; 2]>,
}

fn matrix_from_rows(path: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, SchemaError> {
    if rows.is_empty() {
        return Err(invalid(path, "matrix must have at least one row"));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(invalid(format!("{path}[0]"), "row must not be empty"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(invalid(
                format!("{path}[{i}]"),
                format!("expected {cols} entries, got {}", row.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ProblemFile {
    pub fn to_problem(&self) -> Result<HmpcProblem, SchemaError> {
        let problem = HmpcProblem {
            a: matrix_from_rows("A", &self.a)?,
            b: matrix_from_rows("B", &self.b)?,
            e: matrix_from_rows("E", &self.e)?,
            f: matrix_from_rows("F", &self.f)?,
            y_lower: DVector::from_column_slice(&self.y_lower),
            y_upper: DVector::from_column_slice(&self.y_upper),
            q: matrix_from_rows("Q", &self.q)?,
            r: matrix_from_rows("R", &self.r)?,
            t_e: matrix_from_rows("T_e", &self.t_e)?,
            t_h: DVector::from_column_slice(&self.t_h),
            s_e: matrix_from_rows("S_e", &self.s_e)?,
            s_h: DVector::from_column_slice(&self.s_h),
            horizon: self.horizon,
            freq: self.w,
        };
        problem.validate()?;
        if let Some([px, py]) = self.position_states {
            if px >= problem.n_x() || py >= problem.n_x() || px == py {
                return Err(invalid(
                    "position_states",
                    format!("indices must be distinct states below {}", problem.n_x()),
                ));
            }
        }
        Ok(problem)
    }

    pub fn from_problem(problem: &HmpcProblem, position_states: Option<[usize; 2]>) -> Self {
        Self {
            a: matrix_to_rows(&problem.a),
            b: matrix_to_rows(&problem.b),
            e: matrix_to_rows(&problem.e),
            f: matrix_to_rows(&problem.f),
            y_lower: problem.y_lower.as_slice().to_vec(),
            y_upper: problem.y_upper.as_slice().to_vec(),
            q: matrix_to_rows(&problem.q),
            r: matrix_to_rows(&problem.r),
            t_e: matrix_to_rows(&problem.t_e),
            t_h: problem.t_h.as_slice().to_vec(),
            s_e: matrix_to_rows(&problem.s_e),
            s_h: problem.s_h.as_slice().to_vec(),
            horizon: problem.horizon,
            w: problem.freq,
            position_states,
        }
    }
}

pub fn parse_problem(json: &str) -> Result<(HmpcProblem, Option<[usize; 2]>), SchemaError> {
    let file: ProblemFile = serde_json::from_str(json)?;
    let problem = file.to_problem()?;
    Ok((problem, file.position_states))
}

/// Solver settings as they appear in files and flags; unset fields take
/// the defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl SettingsFile {
    pub fn resolve(&self) -> Result<AdmmSettings, SchemaError> {
        let defaults = AdmmSettings::default();
        let settings = AdmmSettings {
            rho: self.rho.unwrap_or(defaults.rho),
            eps_primal: self.eps_p.unwrap_or(defaults.eps_primal),
            eps_dual: self.eps_d.unwrap_or(defaults.eps_dual),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
        };
        if !settings.rho.is_finite() || settings.rho <= 0.0 {
            return Err(invalid("settings.rho", "must be positive"));
        }
        if !settings.eps_primal.is_finite() || settings.eps_primal <= 0.0 {
            return Err(invalid("settings.eps_p", "must be positive"));
        }
        if !settings.eps_dual.is_finite() || settings.eps_dual <= 0.0 {
            return Err(invalid("settings.eps_d", "must be positive"));
        }
        if settings.max_iter == 0 {
            return Err(invalid("settings.max_iter", "must be at least 1"));
        }
        Ok(settings)
    }
}

pub fn parse_encoding(name: &str) -> Result<Encoding, SchemaError> {
    match name {
        "band" => Ok(Encoding::Band),
        "soc-split" => Ok(Encoding::SocSplit),
        other => Err(invalid(
            "encoding",
            format!("expected \"band\" or \"soc-split\", got \"{other}\""),
        )),
    }
}

/// One schedule entry of a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceEntryFile {
    pub start_step: usize,
    pub x_r: Vec<f64>,
    #[serde(default)]
    pub u_r: Option<Vec<f64>>,
}

/// On-disk form of a closed-loop scenario; embeds its problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub problem: ProblemFile,
    pub x0: Vec<f64>,
    pub reference_schedule: Vec<ReferenceEntryFile>,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<SettingsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<String>,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

fn default_true() -> bool {
    true
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario, SchemaError> {
        let problem = self.problem.to_problem()?;
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.x0.len() != problem.n_x() {
            return Err(invalid(
                "x0",
                format!("expected {} entries, got {}", problem.n_x(), self.x0.len()),
            ));
        }
        if self.reference_schedule.is_empty() {
            return Err(invalid("reference_schedule", "must not be empty"));
        }
        let mut schedule = Vec::with_capacity(self.reference_schedule.len());
        for (i, entry) in self.reference_schedule.iter().enumerate() {
            if entry.x_r.len() != problem.n_x() {
                return Err(invalid(
                    format!("reference_schedule[{i}].x_r"),
                    format!("expected {} entries, got {}", problem.n_x(), entry.x_r.len()),
                ));
            }
            let u_r = match &entry.u_r {
                Some(u) if u.len() != problem.n_u() => {
                    return Err(invalid(
                        format!("reference_schedule[{i}].u_r"),
                        format!("expected {} entries, got {}", problem.n_u(), u.len()),
                    ));
                }
                Some(u) => DVector::from_column_slice(u),
                None => DVector::zeros(problem.n_u()),
            };
            schedule.push(ReferenceStep {
                start_step: entry.start_step,
                x_r: DVector::from_column_slice(&entry.x_r),
                u_r,
            });
        }
        let settings = self.settings.clone().unwrap_or_default().resolve()?;
        let encoding = match &self.encoding {
            Some(name) => parse_encoding(name)?,
            None => Encoding::Band,
        };
        let scenario = Scenario {
            problem,
            x0: DVector::from_column_slice(&self.x0),
            schedule,
            steps: self.steps,
            settings,
            encoding,
            warm_start: self.warm_start,
        };
        scenario
            .validate()
            .map_err(|e| invalid("scenario", e.to_string()))?;
        Ok(scenario)
    }
}

pub fn parse_scenario(json: &str) -> Result<Scenario, SchemaError> {
    let file: ScenarioFile = serde_json::from_str(json)?;
    file.to_scenario()
}
