//! The invariant suite behind `stackelberg verify`.

use serde_json::{json, Value};
use stackelberg_core::cost::{exact_costs, lyapunov_solve, stage_cost_matrices};
use stackelberg_core::sim::{augmented_matrix, error_dynamics_defect, simulate, LoopGains, SimState};
use stackelberg_core::solver::{
    riccati_residuals, solve_are, stackelberg_iterate, stagewise_optimality_check, SolverOptions, StackelbergSolution,
};
use stackelberg_core::{CostWeights, Matrix, SystemModel};

use crate::config::RunConfig;
use crate::random::{solved_games, InstanceShape};
use crate::run::{self, RunError};

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const SCALING_TOL: f64 = 1e-9;
pub const TELESCOPING_TOL: f64 = 1e-9;
pub const GRID_RADIUS: f64 = 0.5;
pub const GRID_POINTS: usize = 41;
pub const TELESCOPING_HORIZONS: [usize; 4] = [0, 1, 10, 100];
pub const RANDOM_SEED: u64 = 1000;
pub const RANDOM_COUNT: usize = 10;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds `1e-3` to the first entry of `K1` after solving.
    K1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn gain_drift(sol: &StackelbergSolution, model: &SystemModel, weights: &CostWeights) -> f64 {
    match stackelberg_iterate(&sol.p1, &sol.p2, model, weights) {
        Ok(step) => (&step.gains.k1 - &sol.k1)
            .max_abs()
            .max((&step.gains.k2 - &sol.k2).max_abs()),
        Err(_) => f64::INFINITY,
    }
}

/// Residual, gain-consistency and stagewise checks for one solved game.
fn solution_checks(
    label: &str,
    sol: &StackelbergSolution,
    model: &SystemModel,
    weights: &CostWeights,
    x: &Matrix,
) -> Vec<Check> {
    let (r1, r2) = riccati_residuals(sol, model, weights);
    let drift = gain_drift(sol, model, weights);
    let stage = stagewise_optimality_check(sol, model, weights, x, GRID_RADIUS, GRID_POINTS);
    vec![
        check(
            format!("{label}: riccati residuals"),
            r1 < RESIDUAL_TOL && r2 < RESIDUAL_TOL,
            format!("{r1:.3e} {r2:.3e}"),
        ),
        check(
            format!("{label}: gains consistent with P"),
            drift < RESIDUAL_TOL,
            format!("{drift:.3e}"),
        ),
        check(
            format!("{label}: stagewise equilibrium"),
            stage.passed(RESIDUAL_TOL),
            format!(
                "residuals {:.3e} {:.3e}, best grid improvement {:.3e} {:.3e}",
                stage.follower_best_response_residual,
                stage.leader_first_order_residual,
                stage.follower_max_improvement,
                stage.leader_max_improvement
            ),
        ),
    ]
}

/// Largest relative violation of `z0ᵀXz0 = Σ_{k≤M} stage cost + z(M+1)ᵀXz(M+1)`.
pub fn telescoping_violation(
    model: &SystemModel,
    gains: &LoopGains,
    weights: &CostWeights,
    initial: &SimState,
    horizons: &[usize],
) -> Result<f64, stackelberg_core::Error> {
    let aug = augmented_matrix(model, gains, None)?;
    let (o1, o2) = stage_cost_matrices(model, gains, weights);
    let xs = [lyapunov_solve(&aug.a_bar, &o1)?, lyapunov_solve(&aug.a_bar, &o2)?];
    let last = horizons.iter().copied().max().unwrap_or(0);
    let traj = simulate(model, gains, weights, initial, last + 1)?;
    let mut worst: f64 = 0.0;
    for &m in horizons {
        let r = &traj.records[m + 1];
        let z = Matrix::vstack(&[&r.x, &r.xtilde1, &r.xtilde2]);
        for (i, x) in xs.iter().enumerate() {
            let total = x.quad_form(&initial.stacked());
            let partial = traj.accumulated_cost(i + 1, m) + x.quad_form(&z);
            worst = worst.max((total - partial).abs() / total.abs().max(1.0));
        }
    }
    Ok(worst)
}

fn scaling_drift(base: &StackelbergSolution, model: &SystemModel, weights: &CostWeights, alpha: f64) -> f64 {
    let opts = SolverOptions {
        max_iter: 20_000,
        ..SolverOptions::default()
    };
    let (Ok(f), Ok(l)) = (
        solve_are(model, &weights.scale_follower(alpha), opts),
        solve_are(model, &weights.scale_leader(alpha), opts),
    ) else {
        return f64::INFINITY;
    };
    let scale = 1.0 + base.p1.max_abs().max(base.p2.max_abs());
    let gains = [&f, &l]
        .iter()
        .map(|s| {
            (&s.k1 - &base.k1).max_abs().max((&s.k2 - &base.k2).max_abs())
                / (1.0 + base.k1.max_abs().max(base.k2.max_abs()))
        })
        .fold(0.0, f64::max);
    let values = [
        (&f.p1 - &base.p1.scale(alpha)).max_abs(),
        (&f.p2 - &base.p2).max_abs(),
        (&l.p1 - &base.p1).max_abs(),
        (&l.p2 - &base.p2.scale(alpha)).max_abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
        / scale;
    gains.max(values)
}

/// Runs every check on `cfg` and on the seeded random instances.
pub fn run_checks(cfg: &RunConfig, fault: Option<Fault>) -> Result<Vec<Check>, RunError> {
    let mut checks = Vec::new();
    let mut sol = run::solve(cfg)?;
    if fault == Some(Fault::K1) {
        sol.k1[(0, 0)] += 1e-3;
    }
    let model = cfg.observer_model();
    checks.extend(solution_checks("config", &sol, &cfg.model, &cfg.weights, &cfg.x0));

    let design = run::design(cfg, &sol)?;
    checks.push(check(
        "config: observer certified",
        design.verdict.is_stable(),
        format!("{} via {}", design.verdict, design.method.as_str()),
    ));
    let gains = run::loop_gains(&sol, &design);
    let aug = augmented_matrix(&model, &gains, Some(&sol)).map_err(RunError::Analysis)?;
    let coupling = aug.coupling_defect.unwrap_or(f64::INFINITY);
    checks.push(check(
        "config: follower reaction in augmented loop",
        coupling < RESIDUAL_TOL * (1.0 + aug.a_bar.max_abs()),
        format!("{coupling:.3e}"),
    ));

    let initial = run::initial_state(cfg);
    let traj = simulate(&model, &gains, &cfg.weights, &initial, cfg.steps.max(1)).map_err(RunError::Analysis)?;
    let error_scale = traj
        .records
        .iter()
        .map(|r| r.xtilde1.vec_norm().max(r.xtilde2.vec_norm()))
        .fold(1.0, f64::max);
    let defect = error_dynamics_defect(&traj, &design.script_a);
    checks.push(check(
        "config: error dynamics follow the error matrix",
        defect < RESIDUAL_TOL * error_scale,
        format!("{defect:.3e}"),
    ));
    let negative = traj
        .records
        .iter()
        .filter(|r| r.stage_cost_1 < 0.0 || r.stage_cost_2 < 0.0)
        .count();
    checks.push(check(
        "config: stage costs nonnegative",
        negative == 0,
        format!("{negative} negative"),
    ));

    let telescoping = telescoping_violation(&model, &gains, &cfg.weights, &initial, &TELESCOPING_HORIZONS)
        .map_err(RunError::Analysis)?;
    checks.push(check(
        "config: cost telescoping",
        telescoping < TELESCOPING_TOL,
        format!("{telescoping:.3e}"),
    ));

    let exact =
        exact_costs(&model, &sol, &gains, &cfg.weights, &cfg.x0, &cfg.x0, &cfg.x0).map_err(RunError::Analysis)?;
    let exact_gap = (0..2)
        .map(|i| exact.delta[i].abs() / (1.0 + exact.j_feedback[i].abs()))
        .fold(0.0, f64::max);
    checks.push(check(
        "config: exact observers close the gap",
        exact_gap < TELESCOPING_TOL,
        format!("{exact_gap:.3e}"),
    ));

    let analysis = run::analyze(cfg, &sol, &design, 0)?;
    let p = &analysis.profile;
    checks.push(check(
        "config: decay bound past burn-in",
        p.bound_holds[0] && p.bound_holds[1],
        format!(
            "lambda {:.4}, burn-in N {} {}",
            p.lambda_hat, p.n_values[p.burn_in[0]], p.n_values[p.burn_in[1]]
        ),
    ));
    let (_, cross_ok) = analysis.corrections.matches(&analysis.costs, 1e-8);
    checks.push(check(
        "config: cross-term correction matches exact cost",
        cross_ok[0] && cross_ok[1],
        format!(
            "{:.3e} {:.3e}",
            analysis.corrections.cross_term_gap[0], analysis.corrections.cross_term_gap[1]
        ),
    ));

    for game in solved_games(RANDOM_SEED, RANDOM_COUNT, InstanceShape::default()) {
        let label = format!("seed {}", game.game.seed);
        let (m, w) = (&game.game.model, &game.game.weights);
        let n = m.n();
        let x = crate::config::alternating_state(n);
        checks.extend(solution_checks(&label, &game.solution, m, w, &x));
        let drift = [0.1, 3.0]
            .into_iter()
            .map(|alpha| scaling_drift(&game.solution, m, w, alpha))
            .fold(0.0, f64::max);
        checks.push(check(
            format!("{label}: weight scaling invariance"),
            drift < SCALING_TOL,
            format!("{drift:.3e}"),
        ));
        let gains = run::loop_gains(&game.solution, &game.design);
        let start = SimState::new(x, Matrix::zeros(n, 1), Matrix::zeros(n, 1));
        let t = telescoping_violation(m, &gains, w, &start, &TELESCOPING_HORIZONS).map_err(RunError::Analysis)?;
        checks.push(check(
            format!("{label}: cost telescoping"),
            t < TELESCOPING_TOL,
            format!("{t:.3e}"),
        ));
    }
    Ok(checks)
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub fn checks_value(checks: &[Check]) -> Value {
    json!({
        "passed": all_passed(checks),
        "failures": checks.iter().filter(|c| !c.passed).count(),
        "checks": checks
            .iter()
            .map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
            .collect::<Vec<_>>(),
    })
}
