//! Exact infinite-horizon costs and the observer optimality gap.
//!
//! With `z = [x; x̃1; x̃2]` and `z⁺ = Āz`, each player's stage cost is a
//! quadratic form `zᵀΩiz`, so the total cost is `z0ᵀXiz0` with `Xi` the
//! solution of the discrete Lyapunov equation `ĀᵀXiĀ − Xi = −Ωi`.
//!
//! The stationary value matrices satisfy
//! `Pi = Qi + FᵀPiF + K1ᵀRi1K1 + K2ᵀRi2K2` with `F = A + B1K1 + B2K2`.
//! Telescoping `xᵀPix` along the observer loop gives the gap
//! `δJi = Σk zkᵀΘizk` with
//!
//! ```text
//! Θi = [ 0              Ti − Di                  ]
//!      [ (Ti − Di)ᵀ     𝓑ᵀPi𝓑 + diag(K1ᵀRi1K1, K2ᵀRi2K2) ]
//! ```
//!
//! where `Ti = FᵀPi𝓑 = (A+B2K2)ᵀM1ᵀPi𝓑` and `Di = [K1ᵀRi1K1, K2ᵀRi2K2]`.
//! The reference form drops `Di` and flips the sign on the diagonal block.
//! Both are evaluated and reconciled against the Lyapunov costs.

use alloc::vec::Vec;

use crate::error::Error;
use crate::game::{CostWeights, SystemModel};
use crate::linalg::{spectral_norm, Lu};
use crate::matrix::Matrix;
use crate::sim::{augmented_matrix, AugmentedSystem, LoopGains};
use crate::solver::StackelbergSolution;
use crate::stability;

/// Solves `MᵀXM − X = −Ω` for a certified-stable `M` through the Kronecker
/// system `(I − Mᵀ⊗Mᵀ) vec X = vec Ω`.
pub fn lyapunov_solve(m: &Matrix, omega: &Matrix) -> Result<Matrix, Error> {
    let n = m.rows();
    m.check_shape("M", (n, n))?;
    omega.check_shape("Omega", (n, n))?;
    let verdict = stability::certify(m)?;
    if !verdict.is_stable() {
        return Err(Error::NotStable(verdict));
    }
    let mt = m.transpose();
    let system = &Matrix::identity(n * n) - &mt.kron(&mt);
    let rhs = Matrix::column(omega.as_slice());
    let lu = Lu::factor(&system)?;
    let x = Matrix::new(n, n, lu.solve_unchecked(&rhs).into_vec())
        .map_err(|_| Error::InvalidArgument("non-finite Lyapunov solution"))?
        .symmetrize();
    let residual = (&(&(&(&mt * &x) * m) - &x) + omega).frobenius_norm();
    debug_assert!(
        residual <= 1e-10 * (1.0 + omega.frobenius_norm()),
        "Lyapunov residual {residual}"
    );
    Ok(x)
}

/// `[x0; x0 − x̂1(0); x0 − x̂2(0)]`.
pub fn stacked_initial_state(x0: &Matrix, xhat1_0: &Matrix, xhat2_0: &Matrix) -> Matrix {
    Matrix::vstack(&[x0, &(x0 - xhat1_0), &(x0 - xhat2_0)])
}

/// Stage-cost matrices `(Ω1, Ω2)` on `z`.
pub fn stage_cost_matrices(model: &SystemModel, gains: &LoopGains, weights: &CostWeights) -> (Matrix, Matrix) {
    let n = model.n();
    let i = Matrix::identity(n);
    let o = Matrix::zeros(n, n);
    let e0 = Matrix::hstack(&[&i, &o, &o]);
    let e1 = Matrix::hstack(&[&i, &-&i, &o]);
    let e2 = Matrix::hstack(&[&i, &o, &-&i]);
    let u1 = &gains.k1 * &e1;
    let u2 = &gains.k2 * &e2;
    let omega = |q: &Matrix, ra: &Matrix, rb: &Matrix| {
        let state = &(&e0.transpose() * q) * &e0;
        let first = &(&u1.transpose() * ra) * &u1;
        let second = &(&u2.transpose() * rb) * &u2;
        (&(&state + &first) + &second).symmetrize()
    };
    (
        omega(&weights.q1, &weights.r11, &weights.r12),
        omega(&weights.q2, &weights.r21, &weights.r22),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// `x0ᵀPix0`, the full-information optimum.
    pub j_feedback: [f64; 2],
    /// `z0ᵀXiz0`, the cost under observer feedback.
    pub j_observer: [f64; 2],
    /// `j_observer − j_feedback`.
    pub delta: [f64; 2],
    pub x: [Matrix; 2],
    pub z0: Matrix,
}

pub fn exact_costs(
    model: &SystemModel,
    solution: &StackelbergSolution,
    gains: &LoopGains,
    weights: &CostWeights,
    x0: &Matrix,
    xhat1_0: &Matrix,
    xhat2_0: &Matrix,
) -> Result<CostReport, Error> {
    let n = model.n();
    x0.check_shape("x0", (n, 1))?;
    xhat1_0.check_shape("xhat1_0", (n, 1))?;
    xhat2_0.check_shape("xhat2_0", (n, 1))?;
    let aug = augmented_matrix(model, gains, None)?;
    let (omega1, omega2) = stage_cost_matrices(model, gains, weights);
    let x1 = lyapunov_solve(&aug.a_bar, &omega1)?;
    let x2 = lyapunov_solve(&aug.a_bar, &omega2)?;
    let z0 = stacked_initial_state(x0, xhat1_0, xhat2_0);
    let j_observer = [x1.quad_form(&z0), x2.quad_form(&z0)];
    let j_feedback = [solution.p1.quad_form(x0), solution.p2.quad_form(x0)];
    Ok(CostReport {
        delta: [j_observer[0] - j_feedback[0], j_observer[1] - j_feedback[1]],
        j_feedback,
        j_observer,
        x: [x1, x2],
        z0,
    })
}

/// Blocks of the closed-form gap for one player.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionBlocks {
    /// `(A+B2K2)ᵀM1ᵀPi𝓑`, n×2n.
    pub t: Matrix,
    /// `𝓑ᵀPi𝓑 − diag(K1ᵀRi1K1, K2ᵀRi2K2)`, 2n×2n.
    pub s: Matrix,
    /// `[K1ᵀRi1K1, K2ᵀRi2K2]`, n×2n.
    pub d: Matrix,
    /// `𝓑ᵀPi𝓑`.
    pub btpb: Matrix,
    /// `diag(K1ᵀRi1K1, K2ᵀRi2K2)`.
    pub control_diag: Matrix,
}

impl CorrectionBlocks {
    /// `[[0, T], [Tᵀ, S]]`.
    pub fn reference_weight(&self) -> Matrix {
        let n = self.t.rows();
        Matrix::from_blocks(&[&[&Matrix::zeros(n, n), &self.t], &[&self.t.transpose(), &self.s]])
    }

    /// `[[0, T − D], [(T − D)ᵀ, 𝓑ᵀP𝓑 + diag(KᵀRK)]]`.
    pub fn cross_term_weight(&self) -> Matrix {
        let n = self.t.rows();
        let off = &self.t - &self.d;
        let diag = &self.btpb + &self.control_diag;
        Matrix::from_blocks(&[&[&Matrix::zeros(n, n), &off], &[&off.transpose(), &diag]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionReport {
    pub blocks: [CorrectionBlocks; 2],
    /// `z0ᵀX̃iz0` for the reference weight.
    pub reference: [f64; 2],
    /// `z0ᵀX̃iz0` for the cross-term weight.
    pub cross_term: [f64; 2],
    /// `|J_fb + reference − J_obs|`.
    pub reference_gap: [f64; 2],
    /// `|J_fb + cross_term − J_obs|`.
    pub cross_term_gap: [f64; 2],
    /// Upper-left n×n block of the reference `X̃i`.
    pub reference_state_block: [Matrix; 2],
}

impl CorrectionReport {
    /// Whether each form reproduces the exact cost within `rel_tol`
    /// relative to `max(1, |J_obs|)`.
    pub fn matches(&self, costs: &CostReport, rel_tol: f64) -> ([bool; 2], [bool; 2]) {
        let ok = |gap: f64, j: f64| gap <= rel_tol * j.abs().max(1.0);
        (
            [
                ok(self.reference_gap[0], costs.j_observer[0]),
                ok(self.reference_gap[1], costs.j_observer[1]),
            ],
            [
                ok(self.cross_term_gap[0], costs.j_observer[0]),
                ok(self.cross_term_gap[1], costs.j_observer[1]),
            ],
        )
    }
}

pub fn correction_blocks(
    model: &SystemModel,
    solution: &StackelbergSolution,
    gains: &LoopGains,
    weights: &CostWeights,
    aug: &AugmentedSystem,
) -> [CorrectionBlocks; 2] {
    let k1 = &gains.k1;
    let k2 = &gains.k2;
    let pre = &(model.a() + &(model.b2() * k2)).transpose() * &solution.m1.transpose();
    let b = &aug.script_b;
    let make = |p: &Matrix, ra: &Matrix, rb: &Matrix| {
        let c1 = &(&k1.transpose() * ra) * k1;
        let c2 = &(&k2.transpose() * rb) * k2;
        let control_diag = Matrix::block_diag(&[&c1, &c2]);
        let btpb = (&(&b.transpose() * p) * b).symmetrize();
        CorrectionBlocks {
            t: &(&pre * p) * b,
            s: &btpb - &control_diag,
            d: Matrix::hstack(&[&c1, &c2]),
            btpb,
            control_diag,
        }
    };
    [
        make(&solution.p1, &weights.r11, &weights.r12),
        make(&solution.p2, &weights.r21, &weights.r22),
    ]
}

pub fn corrections(
    model: &SystemModel,
    solution: &StackelbergSolution,
    gains: &LoopGains,
    weights: &CostWeights,
    costs: &CostReport,
) -> Result<CorrectionReport, Error> {
    let aug = augmented_matrix(model, gains, None)?;
    let blocks = correction_blocks(model, solution, gains, weights, &aug);
    let n = model.n();
    let z0 = &costs.z0;
    let mut reference = [0.0; 2];
    let mut cross_term = [0.0; 2];
    let mut reference_state_block = [Matrix::zeros(n, n), Matrix::zeros(n, n)];
    for i in 0..2 {
        let xr = lyapunov_solve(&aug.a_bar, &blocks[i].reference_weight())?;
        let xc = lyapunov_solve(&aug.a_bar, &blocks[i].cross_term_weight())?;
        reference[i] = xr.quad_form(z0);
        cross_term[i] = xc.quad_form(z0);
        reference_state_block[i] = xr.block(0, 0, n, n);
    }
    let gap = |corr: [f64; 2]| {
        [
            (costs.j_feedback[0] + corr[0] - costs.j_observer[0]).abs(),
            (costs.j_feedback[1] + corr[1] - costs.j_observer[1]).abs(),
        ]
    };
    Ok(CorrectionReport {
        reference_gap: gap(reference),
        cross_term_gap: gap(cross_term),
        blocks,
        reference,
        cross_term,
        reference_state_block,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub n_values: Vec<usize>,
    pub delta_at_n: [Vec<f64>; 2],
    /// Geometric rate with `‖Āᵏ‖ ≤ c·λ̂ᵏ` for every `k`.
    pub lambda_hat: f64,
    /// Power at which `λ̂ = ‖Āᵐ‖^{1/m}` was measured.
    pub rate_power: usize,
    pub c: f64,
    pub c_bar: [f64; 2],
    /// Index into `n_values` from which the profile is monotone and bounded.
    pub burn_in: [usize; 2],
    /// Whether `|δJi(N)| ≤ c̄i·λ̂^{2N}·(1+1e-6)` holds past burn-in.
    pub bound_holds: [bool; 2],
    /// Whether the bound holds at every listed `N`.
    pub bound_holds_everywhere: [bool; 2],
    /// `(log|δJ(N_last)| − log|δJ(N_burn)|)/(N_last − N_burn)` over the
    /// resolvable tail; `None` when fewer than two points remain.
    pub mean_log_slope: [Option<f64>; 2],
}

impl DecayProfile {
    pub fn bound(&self, player: usize, n: usize) -> f64 {
        self.c_bar[player] * libm::pow(self.lambda_hat, 2.0 * n as f64)
    }
}

const BOUND_SLACK: f64 = 1e-6;
const LAMBDA_FLOOR: f64 = 1e-3;

/// `(λ̂, m, c)` with `λ̂ = max(‖Āᵐ‖^{1/m}, floor)` at the largest power of
/// two `m ≤ horizon` whose norm is below one (doubled past `horizon` if
/// needed), and `c = max_{r<m} ‖Āʳ‖/λ̂ʳ`, so `‖Āᵏ‖ ≤ c·λ̂ᵏ` for all `k`.
pub fn geometric_rate(a_bar: &Matrix, horizon: usize) -> Result<(f64, usize, f64), Error> {
    let verdict = stability::certify(a_bar)?;
    if !verdict.is_stable() {
        return Err(Error::NotStable(verdict));
    }
    let mut m = 1usize;
    while m * 2 <= horizon.max(1) {
        m *= 2;
    }
    let mut power = a_bar.pow(m as u32);
    let mut norm = spectral_norm(&power);
    while !(norm < 1.0) {
        power = &power * &power;
        m *= 2;
        norm = spectral_norm(&power);
        if m > stability::DEFAULT_K_MAX as usize * 2 {
            return Err(Error::NotStable(verdict));
        }
    }
    let lambda = libm::pow(norm, 1.0 / m as f64).max(LAMBDA_FLOOR);
    let mut c: f64 = 1.0;
    let mut running = Matrix::identity(a_bar.rows());
    for r in 1..m {
        running = &running * a_bar;
        c = c.max(spectral_norm(&running) / libm::pow(lambda, r as f64));
    }
    Ok((lambda, m, c))
}

pub fn decay_profile(
    model: &SystemModel,
    solution: &StackelbergSolution,
    gains: &LoopGains,
    weights: &CostWeights,
    z0: &Matrix,
    n_list: &[usize],
) -> Result<DecayProfile, Error> {
    let n = model.n();
    z0.check_shape("z0", (3 * n, 1))?;
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("N list must be strictly ascending"));
    }
    let aug = augmented_matrix(model, gains, None)?;
    let (omega1, omega2) = stage_cost_matrices(model, gains, weights);
    let xs = [
        lyapunov_solve(&aug.a_bar, &omega1)?,
        lyapunov_solve(&aug.a_bar, &omega2)?,
    ];
    let ps = [&solution.p1, &solution.p2];

    let horizon = n_list.last().copied().unwrap_or(1);
    let (lambda_hat, rate_power, c) = geometric_rate(&aug.a_bar, horizon)?;
    let blocks = correction_blocks(model, solution, gains, weights, &aug);
    let z_norm_sq = z0.vec_norm() * z0.vec_norm();
    let geometric = 1.0 - lambda_hat * lambda_hat;
    let c_bar = [0, 1].map(|i| c * c * spectral_norm(&blocks[i].cross_term_weight()) * z_norm_sq / geometric);

    let mut delta_at_n = [Vec::with_capacity(n_list.len()), Vec::with_capacity(n_list.len())];
    let mut noise = [Vec::with_capacity(n_list.len()), Vec::with_capacity(n_list.len())];
    let mut z = z0.clone();
    let mut at = 0usize;
    for &target in n_list {
        while at < target {
            z = &aug.a_bar * &z;
            at += 1;
        }
        let x = z.block(0, 0, n, 1);
        for i in 0..2 {
            let total = xs[i].quad_form(&z);
            let feedback = ps[i].quad_form(&x);
            delta_at_n[i].push(total - feedback);
            noise[i].push(1e-13 * (total.abs() + feedback.abs()));
        }
    }

    let mut burn_in = [0usize; 2];
    let mut bound_holds = [true; 2];
    let mut bound_holds_everywhere = [true; 2];
    let mut mean_log_slope = [None, None];
    for i in 0..2 {
        let d = &delta_at_n[i];
        let within = |j: usize| d[j] <= c_bar[i] * libm::pow(lambda_hat, 2.0 * n_list[j] as f64) * (1.0 + BOUND_SLACK);
        bound_holds_everywhere[i] = (0..d.len()).all(&within);
        // Walk back from the end while the tail stays monotone and bounded.
        let mut start = d.len();
        while start > 0 {
            let j = start - 1;
            let monotone = j + 1 >= d.len() || d[j + 1].abs() <= d[j].abs() + noise[i][j];
            if monotone && within(j) {
                start = j;
            } else {
                break;
            }
        }
        burn_in[i] = start.min(d.len().saturating_sub(1));
        bound_holds[i] = (start..d.len()).all(&within) && start < d.len().max(1);
        let tail: Vec<usize> = (start..d.len())
            .filter(|&j| d[j].abs() > noise[i][j] && d[j] != 0.0)
            .collect();
        if let (Some(&first), Some(&last)) = (tail.first(), tail.last()) {
            if last > first {
                let span = (n_list[last] - n_list[first]) as f64;
                mean_log_slope[i] = Some((libm::log(d[last].abs()) - libm::log(d[first].abs())) / span);
            }
        }
    }

    Ok(DecayProfile {
        n_values: n_list.to_vec(),
        delta_at_n,
        lambda_hat,
        rate_power,
        c,
        c_bar,
        burn_in,
        bound_holds,
        bound_holds_everywhere,
        mean_log_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_positive_definite;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    #[test]
    fn lyapunov_trivial_cases() {
        let omega = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]);
        assert!((&lyapunov_solve(&Matrix::zeros(2, 2), &omega).unwrap() - &omega).max_abs() < 1e-15);
        let x = lyapunov_solve(&scalar(0.5), &scalar(1.0)).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            lyapunov_solve(&scalar(1.0), &scalar(1.0)),
            Err(Error::NotStable(_))
        ));
    }

    #[test]
    fn lyapunov_matches_truncated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let raw = Matrix::new(4, 4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let m = raw.scale(0.8 / spectral_norm(&raw));
            let g = Matrix::new(4, 4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let omega = &g.transpose() * &g;
            let x = lyapunov_solve(&m, &omega).unwrap();
            let mut sum = Matrix::zeros(4, 4);
            let mut term = omega.clone();
            for _ in 0..400 {
                sum = &sum + &term;
                term = &(&m.transpose() * &term) * &m;
            }
            assert!((&x - &sum).max_abs() < 1e-8);
            assert!(is_positive_definite(&x, 1e-12));
        }
    }

    #[test]
    fn geometric_rate_bounds_every_power() {
        let a = Matrix::from_rows(&[[0.9, 5.0], [0.0, 0.5]]);
        let (lambda, m, c) = geometric_rate(&a, 64).unwrap();
        assert!(lambda < 1.0 && m >= 1);
        let mut p = Matrix::identity(2);
        for k in 0..300 {
            assert!(spectral_norm(&p) <= c * libm::pow(lambda, k as f64) * (1.0 + 1e-9));
            p = &p * &a;
        }
    }
}
