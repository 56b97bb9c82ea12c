//! The bundled two-state example run end to end, with a comparison table
//! against reference values.

use std::fmt::Write as _;

use serde_json::Value;
use stackelberg_core::linalg::{determinant, spectral_norm};
use stackelberg_core::observer::{
    assemble_error_matrix, certify, synthesize_lmi, LmiOptions, LyapunovStructure, ObserverDesign,
};
use stackelberg_core::solver::{solve_are, StackelbergSolution};
use stackelberg_core::{Error as CoreError, Matrix, StabilityVerdict};

use crate::config::RunConfig;
use crate::report::{self, to_json_string};
use crate::run::{self, Analysis, Outputs, RunError};

/// The example configuration shipped with the tool.
pub const FIXTURE: &str = include_str!("../fixtures/paper_section5.json");

pub const REFERENCE_K1: [f64; 2] = [0.2028, -0.1374];
pub const REFERENCE_K2: [f64; 2] = [-0.4005, 0.0791];
pub const REFERENCE_L1: [f64; 2] = [1.2364, 0.4246];
pub const REFERENCE_L2: [f64; 2] = [0.0039, 0.1925];
pub const REFERENCE_EIGENVALUES: [f64; 4] = [0.1949, 0.6791, 0.7317, 0.7317];
pub const REFERENCE_TRACE: f64 = 2.3374;

pub const GAIN_TOL: f64 = 1e-3;
pub const TRACE_TOL: f64 = 5e-3;
pub const DET_TOL: f64 = 2e-3;
pub const CHAR_POLY_TOL: f64 = 1e-2;
pub const TAIL_RATIO_TOL: f64 = 1e-8;
pub const TAIL_N: usize = 200;

pub fn fixture_config() -> RunConfig {
    RunConfig::from_json(FIXTURE).expect("bundled fixture is valid")
}

pub fn reference_det() -> f64 {
    REFERENCE_EIGENVALUES.iter().product()
}

/// `det(λI − M)`.
pub fn char_poly(m: &Matrix, lambda: f64) -> f64 {
    let shifted = &Matrix::identity(m.rows()).scale(lambda) - m;
    determinant(&shifted).unwrap_or(f64::NAN)
}

/// `‖Mᵏ‖^{1/k}` at `k = 256`, an upper estimate of the spectral radius.
pub fn radius_estimate(m: &Matrix) -> f64 {
    let k = 256;
    spectral_norm(&m.pow(k)).powf(1.0 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub computed: String,
    pub reference: String,
    pub tolerance: String,
    pub status: Status,
}

fn row(quantity: impl Into<String>, computed: String, reference: String, tolerance: String, status: Status) -> Row {
    Row {
        quantity: quantity.into(),
        computed,
        reference,
        tolerance,
        status,
    }
}

fn gain_rows(rows: &mut Vec<Row>, name: &str, gain: &Matrix, reference: [f64; 2]) {
    for (j, &r) in reference.iter().enumerate() {
        let v = gain[(0, j)];
        rows.push(row(
            format!("{name}[{}]", j + 1),
            format!("{v:.6}"),
            format!("{r:.4}"),
            format!("{GAIN_TOL:.0e}"),
            Status::from_bool((v - r).abs() <= GAIN_TOL),
        ));
    }
}

fn verdict_text(v: &StabilityVerdict) -> String {
    v.to_string()
}

fn lmi_text(result: &Result<ObserverDesign, CoreError>) -> String {
    match result {
        Ok(d) => match &d.certificate {
            Some(c) => format!("feasible, max eig {:.3e}, {} iters", c.lmi_max_eigenvalue, c.iterations),
            None => "feasible".to_string(),
        },
        Err(CoreError::Infeasible { iterations, gap }) => format!("infeasible, gap {gap:.3e} after {iterations} iters"),
        Err(e) => e.to_string(),
    }
}

/// Everything `reproduce-paper` computes.
#[derive(Debug)]
pub struct Reproduction {
    pub rows: Vec<Row>,
    pub outputs: Outputs,
}

impl Reproduction {
    /// Rows that carry a tolerance and failed.
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::Fail).count()
    }

    pub fn table(&self) -> String {
        let header = ["quantity", "computed", "reference", "tolerance", "status"];
        let mut widths = header.map(str::len);
        for r in &self.rows {
            for (w, cell) in widths
                .iter_mut()
                .zip([&r.quantity, &r.computed, &r.reference, &r.tolerance])
            {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: [&str; 5]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                cells[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
            );
        };
        line(&mut out, header);
        for r in &self.rows {
            line(
                &mut out,
                [&r.quantity, &r.computed, &r.reference, &r.tolerance, r.status.as_str()],
            );
        }
        let _ = writeln!(
            out,
            "{} of {} checked rows failed",
            self.failures(),
            self.rows.iter().filter(|r| r.status != Status::Info).count()
        );
        out
    }
}

fn reference_gains() -> (Matrix, Matrix) {
    (Matrix::column(&REFERENCE_L1), Matrix::column(&REFERENCE_L2))
}

fn error_matrix_rows(rows: &mut Vec<Row>, cfg: &RunConfig, sol: &StackelbergSolution) -> Result<(), RunError> {
    let (l1, l2) = reference_gains();
    let script_a = assemble_error_matrix(&cfg.model, &sol.k1, &sol.k2, &l1, &l2).map_err(RunError::Observer)?;
    let trace = script_a.trace();
    rows.push(row(
        "trace(error matrix), reference L",
        format!("{trace:.6}"),
        format!("{REFERENCE_TRACE:.4}"),
        format!("{TRACE_TOL:.0e}"),
        Status::from_bool((trace - REFERENCE_TRACE).abs() <= TRACE_TOL),
    ));
    let det = determinant(&script_a).unwrap_or(f64::NAN);
    rows.push(row(
        "det(error matrix), reference L",
        format!("{det:.6}"),
        format!("{:.6}", reference_det()),
        format!("{DET_TOL:.0e}"),
        Status::from_bool((det - reference_det()).abs() <= DET_TOL),
    ));
    for &lambda in &REFERENCE_EIGENVALUES[..3] {
        let v = char_poly(&script_a, lambda).abs();
        rows.push(row(
            format!("|det(lI - error matrix)| at l={lambda}"),
            format!("{v:.3e}"),
            "0".into(),
            format!("{CHAR_POLY_TOL:.0e}"),
            Status::from_bool(v < CHAR_POLY_TOL),
        ));
    }
    let verdict = certify(&script_a).map_err(RunError::Observer)?;
    rows.push(row(
        "certify(error matrix), reference L",
        verdict_text(&verdict),
        "Stable".into(),
        "-".into(),
        Status::from_bool(verdict.is_stable()),
    ));
    for &lambda in &REFERENCE_EIGENVALUES[..2] {
        let v = char_poly(&script_a, -lambda).abs();
        rows.push(row(
            format!("|det(lI - error matrix)| at l=-{lambda}"),
            format!("{v:.3e}"),
            "0".into(),
            format!("{CHAR_POLY_TOL:.0e}"),
            Status::Info,
        ));
    }
    rows.push(row(
        "spectral radius estimate, reference L",
        format!("{:.6}", radius_estimate(&script_a)),
        format!("{:.4}", REFERENCE_EIGENVALUES[3]),
        "-".into(),
        Status::Info,
    ));
    Ok(())
}

fn lmi_rows(rows: &mut Vec<Row>, cfg: &RunConfig, sol: &StackelbergSolution) {
    for (label, structure) in [
        ("LMI, shared Lyapunov block", LyapunovStructure::Shared),
        ("LMI, per-player Lyapunov blocks", LyapunovStructure::PerPlayer),
    ] {
        let options = LmiOptions {
            structure,
            ..cfg.observer.lmi
        };
        let result = synthesize_lmi(&cfg.observer_model(), &sol.k1, &sol.k2, &options);
        rows.push(row(
            label,
            lmi_text(&result),
            "feasible".into(),
            "-".into(),
            Status::Info,
        ));
    }
}

fn alternate_weight_rows(rows: &mut Vec<Row>, cfg: &RunConfig) {
    let mut weights = cfg.weights.clone();
    weights.r12 = Matrix::filled(weights.r12.rows(), weights.r12.cols(), 2.0);
    let text = match solve_are(&cfg.model, &weights, cfg.solver) {
        Ok(s) => format!(
            "K1 [{:.4}, {:.4}] K2 [{:.4}, {:.4}]",
            s.k1[(0, 0)],
            s.k1[(0, 1)],
            s.k2[(0, 0)],
            s.k2[(0, 1)]
        ),
        Err(e) => e.to_string(),
    };
    rows.push(row("gains with R12 = 2", text, "-".into(), "-".into(), Status::Info));
}

fn analysis_rows(rows: &mut Vec<Row>, analysis: &Analysis) {
    let c = &analysis.corrections;
    for i in 0..2 {
        rows.push(row(
            format!("delta J{} (exact)", i + 1),
            format!("{:.6e}", analysis.costs.delta[i]),
            "-".into(),
            "-".into(),
            Status::Info,
        ));
        rows.push(row(
            format!("reconciliation gap J{}, reference correction", i + 1),
            format!("{:.3e}", c.reference_gap[i]),
            "0".into(),
            "1e-8 rel".into(),
            Status::Info,
        ));
        rows.push(row(
            format!("reconciliation gap J{}, cross-term correction", i + 1),
            format!("{:.3e}", c.cross_term_gap[i]),
            "0".into(),
            "1e-8 rel".into(),
            Status::Info,
        ));
    }
    let p = &analysis.profile;
    rows.push(row(
        "decay rate estimate",
        format!("{:.6}", p.lambda_hat),
        "-".into(),
        "-".into(),
        Status::Info,
    ));
    for i in 0..2 {
        let ratio = p
            .n_values
            .iter()
            .position(|&n| n == TAIL_N)
            .map_or(f64::NAN, |j| p.delta_at_n[i][j].abs() / p.delta_at_n[i][0].abs());
        rows.push(row(
            format!("|delta J{}(N={TAIL_N})| / |delta J{}(0)|", i + 1, i + 1),
            format!("{ratio:.3e}"),
            "0".into(),
            format!("{TAIL_RATIO_TOL:.0e}"),
            Status::from_bool(ratio < TAIL_RATIO_TOL),
        ));
        rows.push(row(
            format!("decay bound holds for J{} past burn-in", i + 1),
            format!("{} (burn-in N={})", p.bound_holds[i], p.n_values[p.burn_in[i]]),
            "true".into(),
            "1e-6 rel".into(),
            Status::from_bool(p.bound_holds[i]),
        ));
    }
}

/// Runs the full pipeline on `cfg` and builds the comparison table and
/// every output file.
pub fn reproduce(cfg: &RunConfig) -> Result<Reproduction, RunError> {
    let sol = run::solve(cfg)?;
    let mut rows = Vec::new();
    gain_rows(&mut rows, "K1", &sol.k1, REFERENCE_K1);
    gain_rows(&mut rows, "K2", &sol.k2, REFERENCE_K2);
    error_matrix_rows(&mut rows, cfg, &sol)?;
    lmi_rows(&mut rows, cfg, &sol);
    alternate_weight_rows(&mut rows, cfg);

    let design = run::design(cfg, &sol)?;
    rows.push(row(
        "observer design used for simulation",
        format!("{} via {}", verdict_text(&design.verdict), design.method.as_str()),
        "Stable".into(),
        "-".into(),
        Status::Info,
    ));
    let trajectory = run::trajectory(cfg, &sol, &design)?;
    let analysis = run::analyze(cfg, &sol, &design, 0)?;
    analysis_rows(&mut rows, &analysis);

    let m = cfg.observer_model();
    let mut outputs = Outputs::default();
    outputs.add("solution.json", to_json_string(&report::solution_value(&sol)));
    outputs.add("observer.json", to_json_string(&report::observer_value(&design)));
    outputs.add(
        "trajectory.csv",
        report::trajectory_csv(&trajectory, m.n(), m.m1(), m.m2(), m.s1(), m.s2()),
    );
    outputs.add("cost_report.json", to_json_string(&cost_report_value(&analysis)));
    outputs.add("decay.csv", report::decay_csv(&analysis.profile));
    let mut reproduction = Reproduction { rows, outputs };
    let table = reproduction.table();
    reproduction.outputs.add("comparison.txt", table);
    Ok(reproduction)
}

pub fn cost_report_value(analysis: &Analysis) -> Value {
    let mut value = report::cost_value(&analysis.costs, &analysis.corrections, analysis.from, analysis.tail_gap);
    if let Value::Object(map) = &mut value {
        map.insert("decay".into(), report::decay_summary_value(&analysis.profile));
    }
    value
}
