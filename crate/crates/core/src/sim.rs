//! Closed-loop simulation with both observers running.
//!
//! Player `i` applies `ui = Ki x̂i` and updates its estimate with its own
//! measurement and its model of the other player's feedback. The stacked
//! state `z = [x; x̃1; x̃2]` then evolves as `z⁺ = Ā z` with
//!
//! ```text
//! Ā = [ A + B1K1 + B2K2   𝓑 ]      𝓑 = [−B1K1, −B2K2]
//!     [        0          𝒜 ]
//! ```

use alloc::vec::Vec;

use crate::error::{Error, LinalgError};
use crate::game::{CostWeights, SystemModel};
use crate::matrix::Matrix;
use crate::observer::{assemble_error_matrix, check_gain_shapes};
use crate::solver::StackelbergSolution;

/// Feedback and observer gains of both players.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopGains {
    pub k1: Matrix,
    pub k2: Matrix,
    pub l1: Matrix,
    pub l2: Matrix,
}

impl LoopGains {
    pub fn new(k1: Matrix, k2: Matrix, l1: Matrix, l2: Matrix) -> Self {
        Self { k1, k2, l1, l2 }
    }

    pub fn check(&self, model: &SystemModel) -> Result<(), LinalgError> {
        check_gain_shapes(model, &self.k1, &self.k2)?;
        self.l1.check_shape("L1", (model.n(), model.s1()))?;
        self.l2.check_shape("L2", (model.n(), model.s2()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: Matrix,
    pub xhat1: Matrix,
    pub xhat2: Matrix,
}

impl SimState {
    pub fn new(x: Matrix, xhat1: Matrix, xhat2: Matrix) -> Self {
        Self { x, xhat1, xhat2 }
    }

    pub fn check(&self, n: usize) -> Result<(), LinalgError> {
        self.x.check_shape("x", (n, 1))?;
        self.xhat1.check_shape("xhat1", (n, 1))?;
        self.xhat2.check_shape("xhat2", (n, 1))
    }

    /// `x − x̂1`.
    pub fn error1(&self) -> Matrix {
        &self.x - &self.xhat1
    }

    /// `x − x̂2`.
    pub fn error2(&self) -> Matrix {
        &self.x - &self.xhat2
    }

    /// `[x; x̃1; x̃2]`.
    pub fn stacked(&self) -> Matrix {
        Matrix::vstack(&[&self.x, &self.error1(), &self.error2()])
    }
}

/// One step of plant and both observers; all inputs must already be
/// shape-checked.
fn advance(model: &SystemModel, gains: &LoopGains, s: &SimState) -> (SimState, Matrix, Matrix, Matrix, Matrix) {
    let (a, b1, b2) = (model.a(), model.b1(), model.b2());
    let y1 = model.h1() * &s.x;
    let y2 = model.h2() * &s.x;
    let u1 = &gains.k1 * &s.xhat1;
    let u2 = &gains.k2 * &s.xhat2;

    let x = &(&(a * &s.x) + &(b1 * &u1)) + &(b2 * &u2);
    let innovation1 = &y1 - &(model.h1() * &s.xhat1);
    let xhat1 = &(&(&(a * &s.xhat1) + &(b1 * &u1)) + &(b2 * &(&gains.k2 * &s.xhat1))) + &(&gains.l1 * &innovation1);
    let innovation2 = &y2 - &(model.h2() * &s.xhat2);
    let xhat2 = &(&(&(a * &s.xhat2) + &(b1 * &(&gains.k1 * &s.xhat2))) + &(b2 * &u2)) + &(&gains.l2 * &innovation2);
    (SimState { x, xhat1, xhat2 }, u1, u2, y1, y2)
}

pub fn step(model: &SystemModel, gains: &LoopGains, state: &SimState) -> Result<SimState, Error> {
    gains.check(model)?;
    state.check(model.n())?;
    Ok(advance(model, gains, state).0)
}

/// Signals at one time index. Inputs, outputs and stage costs are those
/// applied at `k`, before the transition to `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub x: Matrix,
    pub xhat1: Matrix,
    pub xhat2: Matrix,
    pub xtilde1: Matrix,
    pub xtilde2: Matrix,
    pub u1: Matrix,
    pub u2: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub stage_cost_1: f64,
    pub stage_cost_2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `Σ_{k ≤ last} stage_cost_i(k)` for player 1 or 2.
    pub fn accumulated_cost(&self, player: usize, last: usize) -> f64 {
        self.records
            .iter()
            .take(last + 1)
            .map(|r| if player == 1 { r.stage_cost_1 } else { r.stage_cost_2 })
            .sum()
    }
}

/// Runs `steps` transitions and records `steps + 1` time indices.
pub fn simulate(
    model: &SystemModel,
    gains: &LoopGains,
    weights: &CostWeights,
    initial: &SimState,
    steps: usize,
) -> Result<Trajectory, Error> {
    gains.check(model)?;
    initial.check(model.n())?;
    weights.validate(model)?;
    let mut records = Vec::with_capacity(steps + 1);
    let mut state = initial.clone();
    for k in 0..=steps {
        let (next, u1, u2, y1, y2) = advance(model, gains, &state);
        let stage_cost_1 = weights.q1.quad_form(&state.x) + weights.r11.quad_form(&u1) + weights.r12.quad_form(&u2);
        let stage_cost_2 = weights.q2.quad_form(&state.x) + weights.r21.quad_form(&u1) + weights.r22.quad_form(&u2);
        records.push(TrajectoryRecord {
            k,
            xtilde1: state.error1(),
            xtilde2: state.error2(),
            x: state.x,
            xhat1: state.xhat1,
            xhat2: state.xhat2,
            u1,
            u2,
            y1,
            y2,
            stage_cost_1,
            stage_cost_2,
        });
        state = next;
    }
    Ok(Trajectory { records })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub a_bar: Matrix,
    /// `[−B1K1, −B2K2]`.
    pub script_b: Matrix,
    /// `‖−B1K1 − B1S(A + B2K2)‖_F` when a full solution was supplied.
    pub coupling_defect: Option<f64>,
}

impl AugmentedSystem {
    /// State feedback block `A + B1K1 + B2K2`.
    pub fn state_block(&self) -> Matrix {
        let n = self.script_b.rows();
        self.a_bar.block(0, 0, n, n)
    }

    /// Error block `𝒜`.
    pub fn error_block(&self) -> Matrix {
        let n = self.script_b.rows();
        self.a_bar.block(n, n, 2 * n, 2 * n)
    }
}

pub fn augmented_matrix(
    model: &SystemModel,
    gains: &LoopGains,
    solution: Option<&StackelbergSolution>,
) -> Result<AugmentedSystem, Error> {
    gains.check(model)?;
    let n = model.n();
    let b1k1 = model.b1() * &gains.k1;
    let b2k2 = model.b2() * &gains.k2;
    let state_block = &(model.a() + &b1k1) + &b2k2;
    let script_b = Matrix::hstack(&[&-&b1k1, &-&b2k2]);
    let script_a = assemble_error_matrix(model, &gains.k1, &gains.k2, &gains.l1, &gains.l2)?;
    let a_bar = Matrix::from_blocks(&[&[&state_block, &script_b], &[&Matrix::zeros(2 * n, n), &script_a]]);
    let coupling_defect = solution.map(|sol| {
        let reaction = &(model.b1() * &sol.s) * &(model.a() + &b2k2);
        (&(-&b1k1) - &reaction).frobenius_norm()
    });
    Ok(AugmentedSystem {
        a_bar,
        script_b,
        coupling_defect,
    })
}

/// `max_k ‖x̃(k+1) − 𝒜 x̃(k)‖₂` over consecutive records, with
/// `x̃ = [x̃1; x̃2]`.
pub fn error_dynamics_defect(trajectory: &Trajectory, script_a: &Matrix) -> f64 {
    trajectory
        .records
        .windows(2)
        .map(|w| {
            let now = Matrix::vstack(&[&w[0].xtilde1, &w[0].xtilde2]);
            let next = Matrix::vstack(&[&w[1].xtilde1, &w[1].xtilde2]);
            (&next - &(script_a * &now)).vec_norm()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SystemModel {
        SystemModel::new(
            Matrix::from_rows(&[[1.0, -0.7], [1.0, -0.3]]),
            Matrix::column(&[-5.0, -1.0]),
            Matrix::column(&[0.0, 1.0]),
            Matrix::from_rows(&[[1.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 1.0]]),
        )
        .unwrap()
    }

    fn gains() -> LoopGains {
        LoopGains::new(
            Matrix::from_rows(&[[0.2028, -0.1374]]),
            Matrix::from_rows(&[[-0.4005, 0.0791]]),
            Matrix::column(&[1.2364, 0.4246]),
            Matrix::column(&[0.0039, 0.1925]),
        )
    }

    fn weights() -> CostWeights {
        CostWeights::new(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::from_rows(&[[1.0]]),
            Matrix::from_rows(&[[0.0]]),
            Matrix::from_rows(&[[0.5]]),
            Matrix::from_rows(&[[1.0]]),
        )
    }

    fn state(x: [f64; 2], h1: [f64; 2], h2: [f64; 2]) -> SimState {
        SimState::new(Matrix::column(&x), Matrix::column(&h1), Matrix::column(&h2))
    }

    #[test]
    fn zero_state_stays_zero() {
        let s = state([0.0; 2], [0.0; 2], [0.0; 2]);
        assert_eq!(step(&model(), &gains(), &s).unwrap(), s);
    }

    #[test]
    fn zero_steps_give_one_record() {
        let t = simulate(
            &model(),
            &gains(),
            &weights(),
            &state([1.0, -1.0], [0.0; 2], [0.0; 2]),
            0,
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records[0].k, 0);
    }

    #[test]
    fn step_matches_augmented_matrix() {
        let m = model();
        let g = gains();
        let aug = augmented_matrix(&m, &g, None).unwrap();
        let s = state([0.3, -1.7], [2.0, 0.1], [-0.4, 0.9]);
        let next = step(&m, &g, &s).unwrap();
        assert!((&next.stacked() - &(&aug.a_bar * &s.stacked())).max_abs() < 1e-12);
        assert_eq!(aug.a_bar.block(2, 0, 4, 2).max_abs(), 0.0);
    }

    #[test]
    fn zero_feedback_gives_block_diagonal() {
        let m = model();
        let mut g = gains();
        g.k1 = Matrix::zeros(1, 2);
        g.k2 = Matrix::zeros(1, 2);
        let aug = augmented_matrix(&m, &g, None).unwrap();
        let expected = Matrix::block_diag(&[m.a(), &(m.a() - &(&g.l1 * m.h1())), &(m.a() - &(&g.l2 * m.h2()))]);
        assert_eq!(aug.a_bar, expected);
        assert_eq!(aug.script_b.max_abs(), 0.0);
    }

    #[test]
    fn exact_observers_reduce_to_state_feedback() {
        let m = model();
        let g = gains();
        let x0 = [1.0, -1.0];
        let t = simulate(&m, &g, &weights(), &state(x0, x0, x0), 30).unwrap();
        let closed = &(m.a() + &(m.b1() * &g.k1)) + &(m.b2() * &g.k2);
        let mut x = Matrix::column(&x0);
        for r in &t.records {
            assert_eq!(r.xtilde1.max_abs(), 0.0);
            assert_eq!(r.xtilde2.max_abs(), 0.0);
            assert!((&r.x - &x).max_abs() < 1e-12);
            assert!((&r.u1 - &(&g.k1 * &r.x)).max_abs() < 1e-12);
            x = &closed * &x;
        }
    }

    #[test]
    fn defect_of_simulation_is_tiny_and_catches_violations() {
        let m = model();
        let g = gains();
        let script_a = assemble_error_matrix(&m, &g.k1, &g.k2, &g.l1, &g.l2).unwrap();
        let mut t = simulate(&m, &g, &weights(), &state([1.0, -1.0], [0.0; 2], [0.0; 2]), 50).unwrap();
        assert!(error_dynamics_defect(&t, &script_a) < 1e-10);

        t.records.truncate(2);
        t.records[1].xtilde1[(0, 0)] += 0.25;
        t.records[1].xtilde2[(1, 0)] -= 1.0;
        let expected = libm::sqrt(0.25 * 0.25 + 1.0);
        let d = error_dynamics_defect(&t, &script_a);
        assert!((d - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_start_has_zero_costs() {
        let t = simulate(&model(), &gains(), &weights(), &state([0.0; 2], [0.0; 2], [0.0; 2]), 5).unwrap();
        assert!(t.records.iter().all(|r| r.stage_cost_1 == 0.0 && r.stage_cost_2 == 0.0));
    }

    #[test]
    fn shape_errors() {
        let bad = SimState::new(Matrix::zeros(3, 1), Matrix::zeros(2, 1), Matrix::zeros(2, 1));
        assert!(matches!(
            step(&model(), &gains(), &bad),
            Err(Error::Linalg(LinalgError::DimensionMismatch { context: "x", .. }))
        ));
    }
}
