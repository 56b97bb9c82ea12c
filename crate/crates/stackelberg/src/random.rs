//! Seeded random games for invariant checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackelberg_core::linalg::spectral_norm;
use stackelberg_core::observer::{synthesize_dual_riccati, DualRiccatiOptions, ObserverDesign};
use stackelberg_core::solver::{solve_are, SolverOptions, StackelbergSolution};
use stackelberg_core::{CostWeights, Matrix, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub max_states: usize,
    pub max_inputs: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_states: 4,
            max_inputs: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomGame {
    pub seed: u64,
    pub model: SystemModel,
    pub weights: CostWeights,
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// `GᵀG + shift·I`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let g = uniform_matrix(rng, n, n, 1.0);
    (&(&g.transpose() * &g) + &Matrix::identity(n).scale(shift)).symmetrize()
}

/// Draws a game with `1 ≤ n ≤ max_states`, `1 ≤ mi ≤ max_inputs`, an open
/// loop with spectral norm in `[0.3, 1.2)`, and random definite weights.
pub fn random_game(seed: u64, shape: InstanceShape) -> RandomGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=shape.max_states);
    let m1 = rng.gen_range(1..=shape.max_inputs);
    let m2 = rng.gen_range(1..=shape.max_inputs);
    let s1 = rng.gen_range(1..=n);
    let s2 = rng.gen_range(1..=n);
    let raw = uniform_matrix(&mut rng, n, n, 1.0);
    let a = raw.scale(rng.gen_range(0.3..1.2) / spectral_norm(&raw).max(1e-3));
    let model = SystemModel::new(
        a,
        uniform_matrix(&mut rng, n, m1, 1.0),
        uniform_matrix(&mut rng, n, m2, 1.0),
        uniform_matrix(&mut rng, s1, n, 1.0),
        uniform_matrix(&mut rng, s2, n, 1.0),
    )
    .expect("generated shapes are consistent");
    let weights = CostWeights::new(
        random_psd(&mut rng, n, 0.5),
        random_psd(&mut rng, n, 0.5),
        random_psd(&mut rng, m1, 0.5),
        random_psd(&mut rng, m2, 0.0),
        random_psd(&mut rng, m1, 0.0),
        random_psd(&mut rng, m2, 0.5),
    );
    RandomGame { seed, model, weights }
}

/// A random game whose Riccati iteration converged and whose dual-Riccati
/// observer certified.
#[derive(Debug, Clone)]
pub struct SolvedGame {
    pub game: RandomGame,
    pub solution: StackelbergSolution,
    pub design: ObserverDesign,
}

/// The first `count` seeds from `first_seed` upward that yield a solved,
/// certified game.
pub fn solved_games(first_seed: u64, count: usize, shape: InstanceShape) -> Vec<SolvedGame> {
    let mut out = Vec::with_capacity(count);
    let mut seed = first_seed;
    while out.len() < count {
        let game = random_game(seed, shape);
        seed += 1;
        let opts = SolverOptions {
            max_iter: 20_000,
            ..SolverOptions::default()
        };
        let Ok(solution) = solve_are(&game.model, &game.weights, opts) else {
            continue;
        };
        let Ok(design) =
            synthesize_dual_riccati(&game.model, &solution.k1, &solution.k2, &DualRiccatiOptions::default())
        else {
            continue;
        };
        out.push(SolvedGame { game, solution, design });
    }
    out
}
