//! Coupled algebraic Riccati equations of the infinite-horizon feedback
//! Stackelberg game.
//!
//! One backward step from value matrices `(P1, P2)`:
//!
//! ```text
//! Γ1 = R11 + B1'P1B1            S  = Γ1⁻¹B1'P1          M1 = I − B1 S
//! Γ2 = R22 + B2'M1'P2M1B2 + B2'S'R21SB2
//! Y2 = B2'M1'P2M1A + B2'S'R21SA   K2 = −Γ2⁻¹Y2
//! Y1 = B1'P1A + B1'P1B2K2         K1 = −Γ1⁻¹Y1
//! P1⁺ = Q1 + (A+B2K2)'P1(A+B2K2) − Y1'Γ1⁻¹Y1 + K2'R12K2
//! P2⁺ = Q2 + A'M1'P2M1A + A'S'R21SA − Y2'Γ2⁻¹Y2
//! ```
//!
//! The leader anticipates the follower's reaction `u1 = −S(Ax + B2u2)`,
//! which is why `M1` and `S` enter the leader's stage matrices.
//! [`solve_are`] iterates the step from `P1 = P2 = 0`, i.e. the
//! finite-horizon recursion with zero terminal cost run backwards until it
//! stops moving.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Player};
use crate::game::{CostWeights, SystemModel};
use crate::linalg::{is_positive_definite, spectral_norm, Cholesky};
use crate::matrix::Matrix;

/// Stage quantities produced by one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBundle {
    pub gamma1: Matrix,
    pub gamma2: Matrix,
    pub s: Matrix,
    pub m1: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub k1: Matrix,
    pub k2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateOutput {
    pub p1_next: Matrix,
    pub p2_next: Matrix,
    pub gains: GainBundle,
}

fn check_value_matrix(name: &'static str, p: &Matrix, n: usize) -> Result<(), Error> {
    if p.shape() != (n, n) {
        return Err(Error::Invalid {
            field: name,
            reason: "value matrix must be n x n",
        });
    }
    Ok(())
}

/// One backward step of the coupled recursion. Both outputs are
/// symmetrized as `(M + Mᵀ)/2`.
pub fn stackelberg_iterate(
    p1: &Matrix,
    p2: &Matrix,
    model: &SystemModel,
    weights: &CostWeights,
) -> Result<IterateOutput, Error> {
    let n = model.n();
    check_value_matrix("P1", p1, n)?;
    check_value_matrix("P2", p2, n)?;
    let (a, b1, b2) = (model.a(), model.b1(), model.b2());
    let b1t = b1.transpose();
    let b2t = b2.transpose();

    let b1t_p1 = &b1t * p1;
    let gamma1 = (&weights.r11 + &(&b1t_p1 * b1)).symmetrize();
    let chol1 = Cholesky::factor(&gamma1).map_err(|_| Error::GammaNotInvertible(Player::Follower))?;
    let s = chol1.solve(&b1t_p1)?;
    let m1 = &Matrix::identity(n) - &(b1 * &s);

    let m1t_p2_m1 = &(&m1.transpose() * p2) * &m1;
    let st_r21_s = &(&s.transpose() * &weights.r21) * &s;
    let leader_weight = &m1t_p2_m1 + &st_r21_s;
    let gamma2 = (&weights.r22 + &(&(&b2t * &leader_weight) * b2)).symmetrize();
    let chol2 = Cholesky::factor(&gamma2).map_err(|_| Error::GammaNotInvertible(Player::Leader))?;
    let y2 = &(&b2t * &leader_weight) * a;
    let k2 = -chol2.solve(&y2)?;

    let y1 = &(&b1t_p1 * a) + &(&(&b1t_p1 * b2) * &k2);
    let k1 = -chol1.solve(&y1)?;

    let a_lead = a + &(b2 * &k2);
    // Y1'Γ1⁻¹Y1 = −Y1'K1 and Y2'Γ2⁻¹Y2 = −Y2'K2.
    let p1_next = &(&(&weights.q1 + &(&(&a_lead.transpose() * p1) * &a_lead)) + &(&y1.transpose() * &k1))
        + &(&(&k2.transpose() * &weights.r12) * &k2);
    let p2_next = &(&weights.q2 + &(&(&a.transpose() * &leader_weight) * a)) + &(&y2.transpose() * &k2);

    Ok(IterateOutput {
        p1_next: p1_next.symmetrize(),
        p2_next: p2_next.symmetrize(),
        gains: GainBundle {
            gamma1,
            gamma2,
            s,
            m1,
            y1,
            y2,
            k1,
            k2,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once successive iterates differ by less than
    /// `tol · max(1, ‖P‖₂)` in spectral norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackelbergSolution {
    pub p1: Matrix,
    pub p2: Matrix,
    pub k1: Matrix,
    pub k2: Matrix,
    pub gamma1: Matrix,
    pub gamma2: Matrix,
    pub s: Matrix,
    pub m1: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub iterations: usize,
    /// `(‖RHS1 − P1‖₂, ‖RHS2 − P2‖₂)` at the returned point.
    pub residuals: (f64, f64),
    /// Every iterate stayed nondecreasing in the PSD order. Diagnostic only.
    pub monotone: bool,
}

impl StackelbergSolution {
    fn from_parts(p1: Matrix, p2: Matrix, gains: GainBundle, iterations: usize, monotone: bool) -> Self {
        Self {
            p1,
            p2,
            k1: gains.k1,
            k2: gains.k2,
            gamma1: gains.gamma1,
            gamma2: gains.gamma2,
            s: gains.s,
            m1: gains.m1,
            y1: gains.y1,
            y2: gains.y2,
            iterations,
            residuals: (f64::NAN, f64::NAN),
            monotone,
        }
    }

    /// State-feedback closed loop `A + B1K1 + B2K2`.
    pub fn closed_loop(&self, model: &SystemModel) -> Matrix {
        &(model.a() + &(model.b1() * &self.k1)) + &(model.b2() * &self.k2)
    }
}

fn increment_is_psd(next: &Matrix, prev: &Matrix) -> bool {
    let diff = next - prev;
    let slack = 1e-10 * next.max_abs().max(1.0);
    is_positive_definite(&diff, slack)
}

pub fn solve_are(
    model: &SystemModel,
    weights: &CostWeights,
    options: SolverOptions,
) -> Result<StackelbergSolution, Error> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive"));
    }
    weights.validate(model)?;
    let n = model.n();
    let mut p1 = Matrix::zeros(n, n);
    let mut p2 = Matrix::zeros(n, n);
    let mut monotone = true;
    let mut last_delta = f64::INFINITY;
    for iteration in 1..=options.max_iter {
        let step = stackelberg_iterate(&p1, &p2, model, weights)?;
        let d1 = spectral_norm(&(&step.p1_next - &p1));
        let d2 = spectral_norm(&(&step.p2_next - &p2));
        monotone &= increment_is_psd(&step.p1_next, &p1) && increment_is_psd(&step.p2_next, &p2);
        let scale = spectral_norm(&step.p1_next).max(spectral_norm(&step.p2_next)).max(1.0);
        last_delta = d1.max(d2);
        p1 = step.p1_next;
        p2 = step.p2_next;
        if !p1.is_finite() || !p2.is_finite() {
            break;
        }
        if last_delta < options.tol * scale {
            let gains = stackelberg_iterate(&p1, &p2, model, weights)?.gains;
            let mut sol = StackelbergSolution::from_parts(p1, p2, gains, iteration, monotone);
            sol.residuals = riccati_residuals(&sol, model, weights);
            return Ok(sol);
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_iter,
        last_delta,
    })
}

/// Residuals of both coupled equations at the stored `(P1, P2)`,
/// recomputed from scratch. Infinite when a stage matrix is singular.
pub fn riccati_residuals(sol: &StackelbergSolution, model: &SystemModel, weights: &CostWeights) -> (f64, f64) {
    match stackelberg_iterate(&sol.p1, &sol.p2, model, weights) {
        Ok(step) => (
            spectral_norm(&(&step.p1_next - &sol.p1)),
            spectral_norm(&(&step.p2_next - &sol.p2)),
        ),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    }
}

/// Outcome of [`stagewise_optimality_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct StagewiseReport {
    /// `‖K1 + Γ1⁻¹B1'P1(A + B2K2)‖₂`.
    pub follower_best_response_residual: f64,
    /// `‖Γ2K2 + Y2‖₂`.
    pub leader_first_order_residual: f64,
    /// Largest cost decrease any follower grid deviation achieved (≤ 0 is ideal).
    pub follower_max_improvement: f64,
    /// Largest cost decrease any leader grid deviation achieved.
    pub leader_max_improvement: f64,
    pub grid_evaluations: usize,
    pub grid_passed: bool,
}

impl StagewiseReport {
    pub fn passed(&self, residual_tol: f64) -> bool {
        self.follower_best_response_residual < residual_tol
            && self.leader_first_order_residual < residual_tol
            && self.grid_passed
    }
}

/// Tolerance on grid deviations counted as improving.
pub const GRID_IMPROVEMENT_TOL: f64 = 1e-10;

/// Cube grid `[-r, r]^dim` with `points` values per axis.
fn grid_offsets(dim: usize, radius: f64, points: usize) -> Vec<Matrix> {
    let axis: Vec<f64> = if points <= 1 {
        vec![0.0]
    } else {
        (0..points)
            .map(|i| -radius + 2.0 * radius * i as f64 / (points - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        out.push(Matrix::column(&idx.iter().map(|&i| axis[i]).collect::<Vec<_>>()));
        let mut d = 0;
        loop {
            if d == dim {
                return out;
            }
            idx[d] += 1;
            if idx[d] < axis.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Checks that the stored gains are a stagewise Stackelberg equilibrium of
/// the one-step game with continuation values `P1`, `P2`, at state `x`.
pub fn stagewise_optimality_check(
    sol: &StackelbergSolution,
    model: &SystemModel,
    weights: &CostWeights,
    x: &Matrix,
    grid_radius: f64,
    grid_points: usize,
) -> StagewiseReport {
    let (a, b1, b2) = (model.a(), model.b1(), model.b2());
    let a_lead = a + &(b2 * &sol.k2);

    let chol1 = Cholesky::factor(&sol.gamma1);
    let follower_best_response_residual = match &chol1 {
        Ok(c) => match c.solve(&(&(&b1.transpose() * &sol.p1) * &a_lead)) {
            Ok(v) => spectral_norm(&(&sol.k1 + &v)),
            Err(_) => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };
    let leader_first_order_residual = spectral_norm(&(&(&sol.gamma2 * &sol.k2) + &sol.y2));

    let follower_cost = |u1: &Matrix, u2: &Matrix| {
        let next = &(&(a * x) + &(b1 * u1)) + &(b2 * u2);
        weights.q1.quad_form(x) + weights.r11.quad_form(u1) + weights.r12.quad_form(u2) + sol.p1.quad_form(&next)
    };
    // Follower's rational reaction to u2 under continuation P1.
    let reaction = |u2: &Matrix| -> Matrix { -(&sol.s * &(&(a * x) + &(b2 * u2))) };
    let leader_cost = |u2: &Matrix| {
        let u1 = reaction(u2);
        let next = &(&(a * x) + &(b1 * &u1)) + &(b2 * u2);
        weights.q2.quad_form(x) + weights.r21.quad_form(&u1) + weights.r22.quad_form(u2) + sol.p2.quad_form(&next)
    };

    let u1_star = &sol.k1 * x;
    let u2_star = &sol.k2 * x;
    let follower_base = follower_cost(&u1_star, &u2_star);
    let leader_base = leader_cost(&u2_star);

    let mut evaluations = 0;
    let mut follower_max_improvement = f64::NEG_INFINITY;
    for delta in grid_offsets(model.m1(), grid_radius, grid_points) {
        let c = follower_cost(&(&u1_star + &delta), &u2_star);
        follower_max_improvement = follower_max_improvement.max(follower_base - c);
        evaluations += 1;
    }
    let mut leader_max_improvement = f64::NEG_INFINITY;
    for delta in grid_offsets(model.m2(), grid_radius, grid_points) {
        let c = leader_cost(&(&u2_star + &delta));
        leader_max_improvement = leader_max_improvement.max(leader_base - c);
        evaluations += 1;
    }
    let grid_passed = follower_max_improvement <= GRID_IMPROVEMENT_TOL
        && leader_max_improvement <= GRID_IMPROVEMENT_TOL
        && chol1.is_ok();

    StagewiseReport {
        follower_best_response_residual,
        leader_first_order_residual,
        follower_max_improvement,
        leader_max_improvement,
        grid_evaluations: evaluations,
        grid_passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    fn scalar_game() -> (SystemModel, CostWeights) {
        let model = SystemModel::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let weights = CostWeights::new(
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(0.0),
            scalar(0.0),
            scalar(1.0),
        );
        (model, weights)
    }

    /// Scalar evaluation of one backward step, written out longhand.
    fn scalar_step(a: f64, b1: f64, b2: f64, q: (f64, f64), r: (f64, f64, f64, f64), p1: f64, p2: f64) -> (f64, f64) {
        let (r11, r12, r21, r22) = r;
        let g1 = r11 + b1 * b1 * p1;
        let s = b1 * p1 / g1;
        let m1 = 1.0 - b1 * s;
        let g2 = r22 + b2 * b2 * m1 * m1 * p2 + b2 * b2 * s * s * r21;
        let y2 = b2 * m1 * m1 * p2 * a + b2 * s * s * r21 * a;
        let k2 = -y2 / g2;
        let y1 = b1 * p1 * a + b1 * p1 * b2 * k2;
        let al = a + b2 * k2;
        let p1n = q.0 + al * al * p1 - y1 * y1 / g1 + k2 * k2 * r12;
        let p2n = q.1 + a * a * m1 * m1 * p2 + a * a * s * s * r21 - y2 * y2 / g2;
        (p1n, p2n)
    }

    #[test]
    fn zero_start_step_returns_state_weights() {
        let model = SystemModel::new(
            Matrix::from_rows(&[[1.0, -0.7], [1.0, -0.3]]),
            Matrix::column(&[-5.0, -1.0]),
            Matrix::column(&[0.0, 1.0]),
            Matrix::from_rows(&[[1.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 1.0]]),
        )
        .unwrap();
        let weights = CostWeights::new(
            Matrix::identity(2),
            Matrix::from_diag(&[2.0, 1.0]),
            scalar(1.0),
            scalar(2.0),
            scalar(0.0),
            scalar(1.0),
        );
        let z = Matrix::zeros(2, 2);
        let out = stackelberg_iterate(&z, &z, &model, &weights).unwrap();
        assert_eq!(out.gains.gamma1, weights.r11);
        assert_eq!(out.gains.s, Matrix::zeros(1, 2));
        assert_eq!(out.gains.m1, Matrix::identity(2));
        assert_eq!(out.gains.k1, Matrix::zeros(1, 2));
        assert_eq!(out.gains.k2, Matrix::zeros(1, 2));
        assert_eq!(out.p1_next, weights.q1);
        assert_eq!(out.p2_next, weights.q2);
    }

    #[test]
    fn no_dynamics_means_no_control() {
        let model = SystemModel::new(
            Matrix::zeros(2, 2),
            Matrix::column(&[1.0, 2.0]),
            Matrix::column(&[0.5, -1.0]),
            Matrix::from_rows(&[[1.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 1.0]]),
        )
        .unwrap();
        let weights = CostWeights::new(
            Matrix::identity(2),
            Matrix::from_diag(&[2.0, 1.0]),
            scalar(1.0),
            scalar(2.0),
            scalar(0.5),
            scalar(1.0),
        );
        let p = Matrix::from_rows(&[[3.0, 1.0], [1.0, 2.0]]);
        let out = stackelberg_iterate(&p, &p, &model, &weights).unwrap();
        assert_eq!(out.gains.k1.max_abs(), 0.0);
        assert_eq!(out.gains.k2.max_abs(), 0.0);
        assert_eq!(out.p1_next, weights.q1);
        assert_eq!(out.p2_next, weights.q2);

        let sol = solve_are(&model, &weights, SolverOptions::default()).unwrap();
        assert_eq!(sol.p1, weights.q1);
        assert_eq!(sol.p2, weights.q2);
        assert_eq!(sol.k1.max_abs(), 0.0);
        assert_eq!(sol.k2.max_abs(), 0.0);
        assert_eq!(riccati_residuals(&sol, &model, &weights), (0.0, 0.0));
        let report = stagewise_optimality_check(&sol, &model, &weights, &Matrix::column(&[1.0, -1.0]), 0.5, 11);
        assert!(report.passed(1e-10));
    }

    #[test]
    fn scalar_second_step_matches_longhand() {
        let (model, weights) = scalar_game();
        let z = scalar(0.0);
        let first = stackelberg_iterate(&z, &z, &model, &weights).unwrap();
        assert_eq!(first.p1_next, scalar(1.0));
        assert_eq!(first.p2_next, scalar(1.0));
        let second = stackelberg_iterate(&first.p1_next, &first.p2_next, &model, &weights).unwrap();
        let (p1, p2) = scalar_step(1.0, 1.0, 1.0, (1.0, 1.0), (1.0, 0.0, 0.0, 1.0), 1.0, 1.0);
        assert!((p1 - 1.32).abs() < 1e-15 && (p2 - 1.2).abs() < 1e-15);
        assert!((second.p1_next[(0, 0)] - p1).abs() < 1e-14);
        assert!((second.p2_next[(0, 0)] - p2).abs() < 1e-14);
        assert!((second.gains.k2[(0, 0)] + 0.2).abs() < 1e-15);
        assert!((second.gains.k1[(0, 0)] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn scalar_fixed_point_matches_longhand_iteration() {
        let (model, weights) = scalar_game();
        let (mut p1, mut p2) = (0.0, 0.0);
        for _ in 0..200 {
            (p1, p2) = scalar_step(1.0, 1.0, 1.0, (1.0, 1.0), (1.0, 0.0, 0.0, 1.0), p1, p2);
        }
        let sol = solve_are(&model, &weights, SolverOptions::default()).unwrap();
        assert!((sol.p1[(0, 0)] - p1).abs() < 1e-11);
        assert!((sol.p2[(0, 0)] - p2).abs() < 1e-11);
    }

    /// Plain LQR value iteration for (A, B, Q, R), written independently.
    fn lqr_value(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Matrix {
        let mut p = Matrix::zeros(a.rows(), a.rows());
        for _ in 0..5000 {
            let btpb = &(&b.transpose() * &p) * b;
            let g = r + &btpb;
            let btpa = &(&b.transpose() * &p) * a;
            let gain = crate::linalg::solve_linear(&g, &btpa).unwrap();
            p = (&(q + &(&(&a.transpose() * &p) * a)) - &(&btpa.transpose() * &gain)).symmetrize();
        }
        p
    }

    #[test]
    fn absent_leader_reduces_to_lqr() {
        let a = Matrix::from_rows(&[[1.1, 0.3], [-0.2, 0.9]]);
        let b1 = Matrix::column(&[0.0, 1.0]);
        let model = SystemModel::new(
            a.clone(),
            b1.clone(),
            Matrix::zeros(2, 1),
            Matrix::from_rows(&[[1.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 1.0]]),
        )
        .unwrap();
        let q1 = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
        let weights = CostWeights::new(
            q1.clone(),
            Matrix::identity(2),
            scalar(0.7),
            scalar(0.0),
            scalar(0.0),
            scalar(1.0),
        );
        let sol = solve_are(&model, &weights, SolverOptions::default()).unwrap();
        assert_eq!(sol.k2.max_abs(), 0.0);
        let lqr = lqr_value(&a, &b1, &q1, &scalar(0.7));
        assert!((&sol.p1 - &lqr).max_abs() < 1e-10);
    }

    #[test]
    fn grid_includes_center_and_corners() {
        let g = grid_offsets(2, 0.5, 3);
        assert_eq!(g.len(), 9);
        assert!(g.contains(&Matrix::column(&[0.0, 0.0])));
        assert!(g.contains(&Matrix::column(&[-0.5, 0.5])));
        assert_eq!(grid_offsets(1, 1.0, 1), vec![Matrix::column(&[0.0])]);
    }

    #[test]
    fn zero_state_grid_costs_are_nonnegative() {
        let (model, weights) = scalar_game();
        let sol = solve_are(&model, &weights, SolverOptions::default()).unwrap();
        let report = stagewise_optimality_check(&sol, &model, &weights, &scalar(0.0), 0.5, 41);
        assert_eq!(report.follower_max_improvement, 0.0);
        assert_eq!(report.leader_max_improvement, 0.0);
        assert!(report.passed(1e-10));
        assert_eq!(report.grid_evaluations, 82);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let (model, weights) = scalar_game();
        let opts = SolverOptions { tol: 0.0, max_iter: 10 };
        assert!(matches!(
            solve_are(&model, &weights, opts),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn reports_no_convergence() {
        let (model, weights) = scalar_game();
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 2,
        };
        assert!(matches!(
            solve_are(&model, &weights, opts),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
    }
}
