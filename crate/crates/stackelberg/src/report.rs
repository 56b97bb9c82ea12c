//! Output files: pretty JSON with round-trip floats, and CSV tables.
//!
//! Every `f64` is written as `{:.16e}` (17 significant digits), so parsing
//! the output gives back the exact value and repeated runs are
//! byte-identical. Non-finite values become `null` in JSON and `NaN`/`inf`
//! in CSV.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};
use stackelberg_core::cost::{CorrectionReport, CostReport, DecayProfile};
use stackelberg_core::observer::ObserverDesign;
use stackelberg_core::sim::Trajectory;
use stackelberg_core::solver::StackelbergSolution;
use stackelberg_core::{Matrix, StabilityVerdict};

/// Pretty printer that writes floats in fixed scientific notation.
struct ExactFloats<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl Formatter for ExactFloats<'_> {
    delegate! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }

    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", float(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// `{:.16e}` for finite values.
pub fn float(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else if value.is_nan() {
        "NaN".to_string()
    } else if value > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Serializes with two-space indentation and a trailing newline.
pub fn to_json_string(value: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("serializing a JSON value cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn matrix_value(m: &Matrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array(m.row(i).iter().map(|&v| number(v)).collect()))
            .collect(),
    )
}

pub fn vector_value(m: &Matrix) -> Value {
    Value::Array(m.as_slice().iter().map(|&v| number(v)).collect())
}

pub fn verdict_value(v: &StabilityVerdict) -> Value {
    match *v {
        StabilityVerdict::Stable { witness_power } => json!({ "status": "stable", "witness_power": witness_power }),
        StabilityVerdict::NotCertified { max_power_checked } => {
            json!({ "status": "not-certified", "max_power_checked": max_power_checked })
        }
        StabilityVerdict::Diverged { power, norm } => {
            json!({ "status": "diverged", "power": power, "norm": number(norm) })
        }
    }
}

pub fn solution_value(sol: &StackelbergSolution) -> Value {
    json!({
        "P1": matrix_value(&sol.p1),
        "P2": matrix_value(&sol.p2),
        "K1": matrix_value(&sol.k1),
        "K2": matrix_value(&sol.k2),
        "Gamma1": matrix_value(&sol.gamma1),
        "Gamma2": matrix_value(&sol.gamma2),
        "iterations": sol.iterations,
        "residuals": { "P1": number(sol.residuals.0), "P2": number(sol.residuals.1) },
        "monotone": sol.monotone,
    })
}

pub fn observer_value(design: &ObserverDesign) -> Value {
    let certificate = match &design.certificate {
        None => Value::Null,
        Some(c) => json!({
            "structure": c.structure.as_str(),
            "P1": matrix_value(&c.p1),
            "P2": matrix_value(&c.p2),
            "W1": matrix_value(&c.w1),
            "W2": matrix_value(&c.w2),
            "margin": number(c.margin),
            "lmi_max_eigenvalue": number(c.lmi_max_eigenvalue),
            "p_min_eigenvalue": number(c.p_min_eigenvalue),
            "extraction_residual": number(c.extraction_residual),
            "iterations": c.iterations,
        }),
    };
    json!({
        "method": design.method.as_str(),
        "L1": matrix_value(&design.l1),
        "L2": matrix_value(&design.l2),
        "error_matrix": matrix_value(&design.script_a),
        "verdict": verdict_value(&design.verdict),
        "certificate": certificate,
    })
}

pub fn cost_value(costs: &CostReport, corrections: &CorrectionReport, from: usize, tail_gap: [f64; 2]) -> Value {
    let pair = |v: [f64; 2]| json!([number(v[0]), number(v[1])]);
    let (reference_ok, cross_ok) = corrections.matches(costs, 1e-8);
    let blocks: Vec<Value> = corrections
        .blocks
        .iter()
        .map(|b| json!({ "T": matrix_value(&b.t), "S": matrix_value(&b.s) }))
        .collect();
    json!({
        "J1_star_fb": number(costs.j_feedback[0]),
        "J2_star_fb": number(costs.j_feedback[1]),
        "J1_obs": number(costs.j_observer[0]),
        "J2_obs": number(costs.j_observer[1]),
        "delta_J1": number(costs.delta[0]),
        "delta_J2": number(costs.delta[1]),
        "correction_reference": pair(corrections.reference),
        "correction_cross_term": pair(corrections.cross_term),
        "reconciliation_gap_reference": pair(corrections.reference_gap),
        "reconciliation_gap_cross_term": pair(corrections.cross_term_gap),
        "reference_matches_within_1e-8": reference_ok,
        "cross_term_matches_within_1e-8": cross_ok,
        "reference_state_block": [
            matrix_value(&corrections.reference_state_block[0]),
            matrix_value(&corrections.reference_state_block[1])
        ],
        "correction_blocks": blocks,
        "analysis_from": from,
        "delta_J_at_from": pair(tail_gap),
    })
}

pub fn decay_summary_value(profile: &DecayProfile) -> Value {
    json!({
        "lambda_hat": number(profile.lambda_hat),
        "rate_power": profile.rate_power,
        "c": number(profile.c),
        "c_bar": [number(profile.c_bar[0]), number(profile.c_bar[1])],
        "burn_in_index": profile.burn_in,
        "burn_in_N": [profile.n_values[profile.burn_in[0]], profile.n_values[profile.burn_in[1]]],
        "bound_holds": profile.bound_holds,
        "mean_log_slope": [
            profile.mean_log_slope[0].map_or(Value::Null, number),
            profile.mean_log_slope[1].map_or(Value::Null, number)
        ],
    })
}

/// `N,delta_J1,delta_J2,bound_1,bound_2`.
pub fn decay_csv(profile: &DecayProfile) -> String {
    let mut out = String::from("N,delta_J1,delta_J2,bound_1,bound_2\n");
    for (j, &n) in profile.n_values.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            n,
            float(profile.delta_at_n[0][j]),
            float(profile.delta_at_n[1][j]),
            float(profile.bound(0, n)),
            float(profile.bound(1, n)),
        );
    }
    out
}

fn indexed(out: &mut Vec<String>, prefix: &str, count: usize) {
    out.extend((1..=count).map(|i| format!("{prefix}_{i}")));
}

/// Header for the trajectory table.
pub fn trajectory_header(n: usize, m1: usize, m2: usize, s1: usize, s2: usize) -> String {
    let mut cols = vec!["k".to_string()];
    for prefix in ["x", "xhat1", "xhat2", "xtilde1", "xtilde2"] {
        indexed(&mut cols, prefix, n);
    }
    indexed(&mut cols, "u1", m1);
    indexed(&mut cols, "u2", m2);
    indexed(&mut cols, "y1", s1);
    indexed(&mut cols, "y2", s2);
    cols.push("stage_cost_1".into());
    cols.push("stage_cost_2".into());
    cols.join(",")
}

pub fn trajectory_csv(traj: &Trajectory, n: usize, m1: usize, m2: usize, s1: usize, s2: usize) -> String {
    let mut out = trajectory_header(n, m1, m2, s1, s2);
    out.push('\n');
    for r in &traj.records {
        out.push_str(&r.k.to_string());
        for m in [
            &r.x, &r.xhat1, &r.xhat2, &r.xtilde1, &r.xtilde2, &r.u1, &r.u2, &r.y1, &r.y2,
        ] {
            for &v in m.as_slice() {
                out.push(',');
                out.push_str(&float(v));
            }
        }
        for v in [r.stage_cost_1, r.stage_cost_2] {
            out.push(',');
            out.push_str(&float(v));
        }
        out.push('\n');
    }
    out
}
