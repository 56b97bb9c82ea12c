use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackelberg_core::cost::{exact_costs, lyapunov_solve, stage_cost_matrices};
use stackelberg_core::game::is_positive_semidefinite;
use stackelberg_core::linalg::{is_positive_definite, spectral_norm};
use stackelberg_core::observer::{synthesize_dual_riccati, DualRiccatiOptions};
use stackelberg_core::sim::{augmented_matrix, simulate, LoopGains, SimState};
use stackelberg_core::solver::{riccati_residuals, solve_are, stackelberg_iterate, SolverOptions, StackelbergSolution};
use stackelberg_core::{CostWeights, Matrix, SystemModel};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::new(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let g = random_matrix(rng, n, n, 1.0);
    (&(&g.transpose() * &g) + &Matrix::identity(n).scale(shift)).symmetrize()
}

struct Instance {
    model: SystemModel,
    weights: CostWeights,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=4);
    let m1 = rng.gen_range(1..=2);
    let m2 = rng.gen_range(1..=2);
    let s1 = rng.gen_range(1..=n);
    let s2 = rng.gen_range(1..=n);
    let raw = random_matrix(&mut rng, n, n, 1.0);
    let a = raw.scale(rng.gen_range(0.3..1.2) / spectral_norm(&raw).max(1e-3));
    let model = SystemModel::new(
        a,
        random_matrix(&mut rng, n, m1, 1.0),
        random_matrix(&mut rng, n, m2, 1.0),
        random_matrix(&mut rng, s1, n, 1.0),
        random_matrix(&mut rng, s2, n, 1.0),
    )
    .unwrap();
    let weights = CostWeights::new(
        random_psd(&mut rng, n, 0.5),
        random_psd(&mut rng, n, 0.5),
        random_psd(&mut rng, m1, 0.5),
        random_psd(&mut rng, m2, 0.0),
        random_psd(&mut rng, m1, 0.0),
        random_psd(&mut rng, m2, 0.5),
    );
    Instance { model, weights }
}

fn solved(inst: &Instance) -> Option<StackelbergSolution> {
    let opts = SolverOptions {
        max_iter: 20_000,
        ..SolverOptions::default()
    };
    solve_are(&inst.model, &inst.weights, opts).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterate_keeps_value_matrices_symmetric_psd(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let n = inst.model.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
        let p1 = random_psd(&mut rng, n, 0.0);
        let p2 = random_psd(&mut rng, n, 0.0);
        let out = stackelberg_iterate(&p1, &p2, &inst.model, &inst.weights).unwrap();
        prop_assert_eq!(out.p1_next.asymmetry(), 0.0);
        prop_assert_eq!(out.p2_next.asymmetry(), 0.0);
        prop_assert!(is_positive_semidefinite(&out.p1_next));
        prop_assert!(is_positive_semidefinite(&out.p2_next));
    }

    #[test]
    fn weight_scaling_invariances(seed in any::<u64>(), alpha in prop::sample::select(vec![0.1, 3.0])) {
        let inst = random_instance(seed);
        let Some(base) = solved(&inst) else { return Ok(()) };
        let follower = Instance { model: inst.model.clone(), weights: inst.weights.scale_follower(alpha) };
        let leader = Instance { model: inst.model.clone(), weights: inst.weights.scale_leader(alpha) };
        let f = solved(&follower).expect("follower-scaled game must converge");
        let l = solved(&leader).expect("leader-scaled game must converge");
        let scale = 1.0 + base.p1.max_abs().max(base.p2.max_abs());
        for s in [&f, &l] {
            prop_assert!((&s.k1 - &base.k1).max_abs() < 1e-9 * (1.0 + base.k1.max_abs()));
            prop_assert!((&s.k2 - &base.k2).max_abs() < 1e-9 * (1.0 + base.k2.max_abs()));
        }
        prop_assert!((&f.p1 - &base.p1.scale(alpha)).max_abs() < 1e-9 * scale);
        prop_assert!((&f.p2 - &base.p2).max_abs() < 1e-9 * scale);
        prop_assert!((&l.p1 - &base.p1).max_abs() < 1e-9 * scale);
        prop_assert!((&l.p2 - &base.p2.scale(alpha)).max_abs() < 1e-9 * scale);
    }

    #[test]
    fn converged_solutions_satisfy_equations(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let Some(sol) = solved(&inst) else { return Ok(()) };
        let (r1, r2) = riccati_residuals(&sol, &inst.model, &inst.weights);
        prop_assert!(r1 < 1e-10 * (1.0 + sol.p1.max_abs()), "r1 {}", r1);
        prop_assert!(r2 < 1e-10 * (1.0 + sol.p2.max_abs()), "r2 {}", r2);
        // −B1K1 = B1 S (A + B2K2)
        let gains = LoopGains::new(
            sol.k1.clone(),
            sol.k2.clone(),
            Matrix::zeros(inst.model.n(), inst.model.s1()),
            Matrix::zeros(inst.model.n(), inst.model.s2()),
        );
        let aug = augmented_matrix(&inst.model, &gains, Some(&sol)).unwrap();
        prop_assert!(aug.coupling_defect.unwrap() < 1e-10 * (1.0 + aug.a_bar.max_abs()));
    }

    #[test]
    fn simulation_is_linear_in_initial_conditions(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let n = inst.model.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let gains = LoopGains::new(
            random_matrix(&mut rng, inst.model.m1(), n, 0.5),
            random_matrix(&mut rng, inst.model.m2(), n, 0.5),
            random_matrix(&mut rng, n, inst.model.s1(), 0.5),
            random_matrix(&mut rng, n, inst.model.s2(), 0.5),
        );
        let mut draw = || SimState::new(
            random_matrix(&mut rng, n, 1, 1.0),
            random_matrix(&mut rng, n, 1, 1.0),
            random_matrix(&mut rng, n, 1, 1.0),
        );
        let a = draw();
        let b = draw();
        let sum = SimState::new(&a.x + &b.x, &a.xhat1 + &b.xhat1, &a.xhat2 + &b.xhat2);
        let ta = simulate(&inst.model, &gains, &inst.weights, &a, 12).unwrap();
        let tb = simulate(&inst.model, &gains, &inst.weights, &b, 12).unwrap();
        let ts = simulate(&inst.model, &gains, &inst.weights, &sum, 12).unwrap();
        for ((ra, rb), rs) in ta.records.iter().zip(&tb.records).zip(&ts.records) {
            let scale = 1.0 + ra.x.max_abs() + rb.x.max_abs();
            prop_assert!((&(&ra.x + &rb.x) - &rs.x).max_abs() < 1e-10 * scale);
            prop_assert!((&(&ra.xtilde1 + &rb.xtilde1) - &rs.xtilde1).max_abs() < 1e-10 * scale);
            prop_assert!((&(&ra.u2 + &rb.u2) - &rs.u2).max_abs() < 1e-10 * scale);
            prop_assert!(rs.stage_cost_1 >= 0.0 && rs.stage_cost_2 >= 0.0);
        }
    }

    #[test]
    fn lyapunov_solution_is_psd_for_psd_weight(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=5);
        let raw = random_matrix(&mut rng, n, n, 1.0);
        let m = raw.scale(rng.gen_range(0.1..0.95) / spectral_norm(&raw).max(1e-3));
        let omega = random_psd(&mut rng, n, 1e-3);
        let x = lyapunov_solve(&m, &omega).unwrap();
        prop_assert!(is_positive_definite(&x, 1e-12));
        let residual = &(&(&(&m.transpose() * &x) * &m) - &x) + &omega;
        prop_assert!(residual.frobenius_norm() <= 1e-10 * (1.0 + omega.frobenius_norm()));
    }

    #[test]
    fn telescoping_and_exact_observer_identities(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let Some(sol) = solved(&inst) else { return Ok(()) };
        let Ok(design) = synthesize_dual_riccati(&inst.model, &sol.k1, &sol.k2, &DualRiccatiOptions::default()) else {
            return Ok(());
        };
        let n = inst.model.n();
        let gains = LoopGains::new(sol.k1.clone(), sol.k2.clone(), design.l1, design.l2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3));
        let x0 = random_matrix(&mut rng, n, 1, 1.0);
        let zero = Matrix::zeros(n, 1);
        let costs = exact_costs(&inst.model, &sol, &gains, &inst.weights, &x0, &zero, &zero).unwrap();
        let aug = augmented_matrix(&inst.model, &gains, None).unwrap();
        let (o1, o2) = stage_cost_matrices(&inst.model, &gains, &inst.weights);
        let xs = [lyapunov_solve(&aug.a_bar, &o1).unwrap(), lyapunov_solve(&aug.a_bar, &o2).unwrap()];
        let traj = simulate(&inst.model, &gains, &inst.weights, &SimState::new(x0.clone(), zero.clone(), zero.clone()), 20).unwrap();
        let mut z = costs.z0.clone();
        for m in 0..=20 {
            z = &aug.a_bar * &z;
            for i in 0..2 {
                let lhs = traj.accumulated_cost(i + 1, m) + xs[i].quad_form(&z);
                prop_assert!((lhs - costs.j_observer[i]).abs() <= 1e-9 * costs.j_observer[i].abs().max(1.0));
            }
        }
        let exact = exact_costs(&inst.model, &sol, &gains, &inst.weights, &x0, &x0, &x0).unwrap();
        for i in 0..2 {
            prop_assert!(exact.delta[i].abs() <= 1e-9 * (1.0 + exact.j_feedback[i].abs()));
        }
    }
}
