//! Run configuration files.
//!
//! A configuration is a single JSON object. Matrices are arrays of rows; a
//! bare number is accepted for a 1×1 matrix. Vectors are flat arrays.
//!
//! ```json
//! {
//!   "A": [[1, -0.7], [1, -0.3]], "B1": [[-5], [-1]], "B2": [[0], [1]],
//!   "H1": [[1, 0]], "H2": [[0, 1]],
//!   "Q1": [[1, 0], [0, 1]], "Q2": [[2, 0], [0, 1]],
//!   "R11": 1, "R12": 0, "R21": 0, "R22": 1,
//!   "x0": [1, -1],
//!   "solver": { "tol": 1e-12, "max_iter": 100000 },
//!   "observer": { "method": "auto", "margin": 1e-6 },
//!   "sim": { "steps": 200 },
//!   "analysis": { "N_list": [0, 10, 20] }
//! }
//! ```
//!
//! Unknown keys are rejected. A top-level `"comment"` string is allowed and
//! ignored.

use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value};
use stackelberg_core::observer::{LmiOptions, LyapunovStructure, MethodChoice};
use stackelberg_core::solver::SolverOptions;
use stackelberg_core::{CostWeights, Error as CoreError, Matrix, SystemModel};
use thiserror::Error;

use crate::report::{matrix_value, vector_value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn into_matrix(self, field: &str) -> Result<Matrix, ConfigError> {
        match self {
            MatrixSpec::Scalar(v) => Matrix::new(1, 1, vec![v]).map_err(|_| invalid(field, "entries must be finite")),
            MatrixSpec::Rows(rows) => {
                let cols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || cols == 0 {
                    return Err(invalid(field, "must be non-empty"));
                }
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(invalid(field, "rows have different lengths"));
                }
                let count = rows.len();
                Matrix::new(count, cols, rows.into_iter().flatten().collect())
                    .map_err(|_| invalid(field, "entries must be finite"))
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    method: Option<String>,
    margin: Option<f64>,
    max_iter: Option<usize>,
    lyapunov_structure: Option<String>,
    leader_stacked_output: Option<bool>,
    #[serde(rename = "L1")]
    l1: Option<MatrixSpec>,
    #[serde(rename = "L2")]
    l2: Option<MatrixSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    #[serde(rename = "N_list")]
    n_list: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[allow(dead_code)]
    comment: Option<String>,
    #[serde(rename = "A")]
    a: Option<MatrixSpec>,
    #[serde(rename = "B1")]
    b1: Option<MatrixSpec>,
    #[serde(rename = "B2")]
    b2: Option<MatrixSpec>,
    #[serde(rename = "H1")]
    h1: Option<MatrixSpec>,
    #[serde(rename = "H2")]
    h2: Option<MatrixSpec>,
    #[serde(rename = "Q1")]
    q1: Option<MatrixSpec>,
    #[serde(rename = "Q2")]
    q2: Option<MatrixSpec>,
    #[serde(rename = "R11")]
    r11: Option<MatrixSpec>,
    #[serde(rename = "R12")]
    r12: Option<MatrixSpec>,
    #[serde(rename = "R21")]
    r21: Option<MatrixSpec>,
    #[serde(rename = "R22")]
    r22: Option<MatrixSpec>,
    x0: Option<Vec<f64>>,
    xhat1_0: Option<Vec<f64>>,
    xhat2_0: Option<Vec<f64>>,
    solver: Option<RawSolver>,
    observer: Option<RawObserver>,
    sim: Option<RawSim>,
    analysis: Option<RawAnalysis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub method: MethodChoice,
    pub lmi: LmiOptions,
    /// Drive the leader's observer with `[y1; y2]`.
    pub leader_stacked_output: bool,
    /// User-supplied `(L1, L2)`; bypasses synthesis when present.
    pub gains: Option<(Matrix, Matrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: SystemModel,
    pub weights: CostWeights,
    pub x0: Matrix,
    pub xhat1_0: Matrix,
    pub xhat2_0: Matrix,
    pub solver: SolverOptions,
    pub observer: ObserverConfig,
    pub steps: usize,
    pub n_list: Vec<usize>,
}

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_HORIZON: usize = 200;

/// `[1, −1, 1, …]`.
pub fn alternating_state(n: usize) -> Matrix {
    Matrix::column(&(0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>())
}

fn parse_method(s: &str) -> Result<MethodChoice, ConfigError> {
    match s {
        "lmi" => Ok(MethodChoice::Lmi),
        "dual-riccati" => Ok(MethodChoice::DualRiccati),
        "auto" => Ok(MethodChoice::Auto),
        _ => Err(invalid("observer.method", "expected lmi, dual-riccati or auto")),
    }
}

pub fn method_name(m: MethodChoice) -> &'static str {
    match m {
        MethodChoice::Lmi => "lmi",
        MethodChoice::DualRiccati => "dual-riccati",
        MethodChoice::Auto => "auto",
    }
}

pub fn parse_method_flag(s: &str) -> Result<MethodChoice, ConfigError> {
    parse_method(s).map_err(|_| invalid("--method", "expected lmi, dual-riccati or auto"))
}

fn core_to_config(err: CoreError) -> ConfigError {
    match err {
        CoreError::Invalid { field, reason } => invalid(field, reason),
        other => invalid("config", other.to_string()),
    }
}

fn required(spec: Option<MatrixSpec>, field: &str) -> Result<Matrix, ConfigError> {
    spec.ok_or_else(|| invalid(field, "required"))?.into_matrix(field)
}

fn state(values: Option<Vec<f64>>, field: &str, n: usize, default: Matrix) -> Result<Matrix, ConfigError> {
    match values {
        None => Ok(default),
        Some(v) if v.len() != n => Err(invalid(field, format!("expected {n} entries, found {}", v.len()))),
        Some(v) => Matrix::new(n, 1, v).map_err(|_| invalid(field, "entries must be finite")),
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let model = SystemModel::new(
            required(raw.a, "A")?,
            required(raw.b1, "B1")?,
            required(raw.b2, "B2")?,
            required(raw.h1, "H1")?,
            required(raw.h2, "H2")?,
        )
        .map_err(core_to_config)?;
        let weights = CostWeights::new(
            required(raw.q1, "Q1")?,
            required(raw.q2, "Q2")?,
            required(raw.r11, "R11")?,
            required(raw.r12, "R12")?,
            required(raw.r21, "R21")?,
            required(raw.r22, "R22")?,
        );
        weights.validate(&model).map_err(core_to_config)?;

        let n = model.n();
        let x0 = state(raw.x0, "x0", n, alternating_state(n))?;
        let xhat1_0 = state(raw.xhat1_0, "xhat1_0", n, Matrix::zeros(n, 1))?;
        let xhat2_0 = state(raw.xhat2_0, "xhat2_0", n, Matrix::zeros(n, 1))?;

        let raw_solver = raw.solver.unwrap_or_default();
        let defaults = SolverOptions::default();
        let solver = SolverOptions {
            tol: raw_solver.tol.unwrap_or(defaults.tol),
            max_iter: raw_solver.max_iter.unwrap_or(defaults.max_iter),
        };
        if !(solver.tol > 0.0) || !solver.tol.is_finite() {
            return Err(invalid("solver.tol", "must be positive"));
        }
        if solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }

        let raw_obs = raw.observer.unwrap_or_default();
        let method = match raw_obs.method.as_deref() {
            None => MethodChoice::Auto,
            Some(s) => parse_method(s)?,
        };
        let lmi_defaults = LmiOptions::default();
        let structure = match raw_obs.lyapunov_structure.as_deref() {
            None | Some("shared") => LyapunovStructure::Shared,
            Some("per-player") => LyapunovStructure::PerPlayer,
            Some(_) => return Err(invalid("observer.lyapunov_structure", "expected shared or per-player")),
        };
        let lmi = LmiOptions {
            margin: raw_obs.margin.unwrap_or(lmi_defaults.margin),
            max_iter: raw_obs.max_iter.unwrap_or(lmi_defaults.max_iter),
            structure,
            ..lmi_defaults
        };
        if !(lmi.margin > 0.0) || !lmi.margin.is_finite() {
            return Err(invalid("observer.margin", "must be positive"));
        }
        let leader_stacked_output = raw_obs.leader_stacked_output.unwrap_or(false);
        let gains = match (raw_obs.l1, raw_obs.l2) {
            (None, None) => None,
            (Some(l1), Some(l2)) => {
                let design_model = if leader_stacked_output {
                    model.with_stacked_leader_output()
                } else {
                    model.clone()
                };
                let l1 = l1.into_matrix("L1")?;
                let l2 = l2.into_matrix("L2")?;
                if l1.shape() != (n, design_model.s1()) {
                    return Err(invalid("L1", "dimension mismatch"));
                }
                if l2.shape() != (n, design_model.s2()) {
                    return Err(invalid("L2", "dimension mismatch"));
                }
                Some((l1, l2))
            }
            (Some(_), None) => return Err(invalid("L2", "required when L1 is given")),
            (None, Some(_)) => return Err(invalid("L1", "required when L2 is given")),
        };

        let steps = raw.sim.and_then(|s| s.steps).unwrap_or(DEFAULT_STEPS);
        let n_list = raw
            .analysis
            .and_then(|a| a.n_list)
            .unwrap_or_else(|| (0..=DEFAULT_HORIZON).collect());
        if n_list.is_empty() {
            return Err(invalid("analysis.N_list", "must be non-empty"));
        }
        if n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("analysis.N_list", "must be strictly ascending"));
        }

        Ok(Self {
            model,
            weights,
            x0,
            xhat1_0,
            xhat2_0,
            solver,
            observer: ObserverConfig {
                method,
                lmi,
                leader_stacked_output,
                gains,
            },
            steps,
            n_list,
        })
    }

    /// Model used by the observers, with the stacked leader output applied
    /// when requested.
    pub fn observer_model(&self) -> SystemModel {
        if self.observer.leader_stacked_output {
            self.model.with_stacked_leader_output()
        } else {
            self.model.clone()
        }
    }

    /// Every setting written out explicitly, defaults included.
    pub fn to_value(&self) -> Value {
        let m = &self.model;
        let w = &self.weights;
        let mut observer = Map::new();
        observer.insert("method".into(), json!(method_name(self.observer.method)));
        observer.insert("margin".into(), json!(self.observer.lmi.margin));
        observer.insert("max_iter".into(), json!(self.observer.lmi.max_iter));
        observer.insert("lyapunov_structure".into(), json!(self.observer.lmi.structure.as_str()));
        observer.insert(
            "leader_stacked_output".into(),
            json!(self.observer.leader_stacked_output),
        );
        if let Some((l1, l2)) = &self.observer.gains {
            observer.insert("L1".into(), matrix_value(l1));
            observer.insert("L2".into(), matrix_value(l2));
        }
        json!({
            "A": matrix_value(m.a()),
            "B1": matrix_value(m.b1()),
            "B2": matrix_value(m.b2()),
            "H1": matrix_value(m.h1()),
            "H2": matrix_value(m.h2()),
            "Q1": matrix_value(&w.q1),
            "Q2": matrix_value(&w.q2),
            "R11": matrix_value(&w.r11),
            "R12": matrix_value(&w.r12),
            "R21": matrix_value(&w.r21),
            "R22": matrix_value(&w.r22),
            "x0": vector_value(&self.x0),
            "xhat1_0": vector_value(&self.xhat1_0),
            "xhat2_0": vector_value(&self.xhat2_0),
            "solver": { "tol": self.solver.tol, "max_iter": self.solver.max_iter },
            "observer": Value::Object(observer),
            "sim": { "steps": self.steps },
            "analysis": { "N_list": self.n_list },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "A": [[1, -0.7], [1, -0.3]], "B1": [[-5], [-1]], "B2": [[0], [1]],
        "H1": [[1, 0]], "H2": [[0, 1]],
        "Q1": [[1, 0], [0, 1]], "Q2": [[2, 0], [0, 1]],
        "R11": 1, "R12": 0, "R21": 0, "R22": [[1]]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.x0, Matrix::column(&[1.0, -1.0]));
        assert_eq!(c.xhat1_0, Matrix::zeros(2, 1));
        assert_eq!(c.steps, 200);
        assert_eq!(c.n_list.len(), 201);
        assert_eq!(c.observer.method, MethodChoice::Auto);
        assert_eq!(c.solver.tol, 1e-12);
        assert_eq!(c.solver.max_iter, 100_000);
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace(r#", "R22": [[1]]"#, "");
        assert_eq!(RunConfig::from_json(&text), Err(invalid("R22", "required")));
    }

    #[test]
    fn indefinite_weight_is_rejected() {
        let text = MINIMAL.replace(r#""Q1": [[1, 0], [0, 1]]"#, r#""Q1": [[1, 0], [0, -1]]"#);
        assert_eq!(
            RunConfig::from_json(&text),
            Err(invalid("Q1", "not positive semidefinite"))
        );
    }

    #[test]
    fn unknown_keys_and_syntax_errors() {
        let text = MINIMAL.replace(r#""R11": 1"#, r#""R11": 1, "R13": 0"#);
        assert!(matches!(RunConfig::from_json(&text), Err(ConfigError::Parse { .. })));
        let broken = "{\n\"A\": [[1, 2]\n";
        assert!(matches!(
            RunConfig::from_json(broken),
            Err(ConfigError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = MINIMAL.replace(r#""A": [[1, -0.7], [1, -0.3]]"#, r#""A": [[1, -0.7], [1]]"#);
        assert_eq!(
            RunConfig::from_json(&text),
            Err(invalid("A", "rows have different lengths"))
        );
    }

    #[test]
    fn round_trip_through_json() {
        let text = MINIMAL.replace(
            r#""R22": [[1]]"#,
            r#""R22": [[1]], "x0": [0.1, 0.30000000000000004], "observer": {"L1": [[1.2364], [0.4246]], "L2": [[0.0039], [0.1925]]}, "analysis": {"N_list": [0, 5, 50]}"#,
        );
        let c = RunConfig::from_json(&text).unwrap();
        let written = crate::report::to_json_string(&c.to_value());
        assert_eq!(RunConfig::from_json(&written).unwrap(), c);
    }
}
