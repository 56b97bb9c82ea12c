//! Structured LMI feasibility by Dykstra alternating projections.
//!
//! With `P̃ = diag(P, P)`, `W̃ = diag(W1, W2)`, `Ã` the uninjected error
//! matrix and `H̃ = diag(H1, H2)`, the error matrix `𝒜 = Ã − L̃H̃` is Schur
//! stable whenever
//!
//! ```text
//! G(P, W) = [ −P̃            (P̃Ã − W̃H̃)ᵀ ]  ≺ 0,   P ≻ 0,
//!           [ P̃Ã − W̃H̃       −P̃         ]
//! ```
//!
//! and the gains are recovered as `Li = P⁻¹Wi`. `G` is linear in the free
//! entries of `(P, W1, W2)`, so the realizable pairs `(G(θ), P(θ))` form a
//! subspace; the constraints form a convex set built from two shifted
//! semidefinite cones. Dykstra's method alternates the two projections.
//! The subspace projection is a least-squares solve over `θ` and the cone
//! projections clamp eigenvalues.
//!
//! The shared block `P̃ = diag(P, P)` is the default. It can be infeasible
//! even when stabilizing gains exist, so [`LyapunovStructure::PerPlayer`]
//! relaxes it to `diag(P1, P2)` with `Li = Pi⁻¹Wi`.

use alloc::vec;
use alloc::vec::Vec;

use super::{assemble_error_matrix, stacked_output_matrix, uninjected_error_matrix, DesignMethod, ObserverDesign};
use crate::error::Error;
use crate::game::SystemModel;
use crate::linalg::{solve_linear, sym_eig, Cholesky};
use crate::matrix::Matrix;
use crate::stability;

/// Block pattern of the Lyapunov variable `P̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LyapunovStructure {
    /// `diag(P, P)`.
    #[default]
    Shared,
    /// `diag(P1, P2)`.
    PerPlayer,
}

impl LyapunovStructure {
    pub fn as_str(&self) -> &'static str {
        match self {
            LyapunovStructure::Shared => "shared",
            LyapunovStructure::PerPlayer => "per-player",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiOptions {
    /// Required gap: `G ⪯ −margin·I`.
    pub margin: f64,
    pub max_iter: usize,
    /// Lower bound on `P`.
    pub p_floor: f64,
    pub structure: LyapunovStructure,
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            margin: 1e-6,
            max_iter: 20_000,
            p_floor: 1e-6,
            structure: LyapunovStructure::Shared,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiCertificate {
    pub structure: LyapunovStructure,
    /// Follower block of `P̃`; equal to `p2` under the shared structure.
    pub p1: Matrix,
    pub p2: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub margin: f64,
    /// Largest eigenvalue of `G(P, W)`.
    pub lmi_max_eigenvalue: f64,
    /// Smallest eigenvalue over the blocks of `P̃`.
    pub p_min_eigenvalue: f64,
    /// `max_i ‖Pi Li − Wi‖_F` after extraction.
    pub extraction_residual: f64,
    pub iterations: usize,
}

/// `G(P, W)` for `P̃ = diag(p1, p2)`.
pub fn lmi_matrix(model: &SystemModel, a_tilde: &Matrix, p1: &Matrix, p2: &Matrix, w1: &Matrix, w2: &Matrix) -> Matrix {
    let p_tilde = Matrix::block_diag(&[p1, p2]);
    let w_tilde = Matrix::block_diag(&[w1, w2]);
    let h_tilde = stacked_output_matrix(model);
    let coupling = &(&p_tilde * a_tilde) - &(&w_tilde * &h_tilde);
    let neg_p = -&p_tilde;
    Matrix::from_blocks(&[&[&neg_p, &coupling.transpose()], &[&coupling, &neg_p]])
}

/// Unknowns of the LMI.
struct Unknowns {
    p1: Matrix,
    p2: Matrix,
    w1: Matrix,
    w2: Matrix,
}

impl Unknowns {
    fn p_tilde(&self) -> Matrix {
        Matrix::block_diag(&[&self.p1, &self.p2])
    }
}

/// Free parameters: upper triangle of each distinct `P` block, then `W1`
/// and `W2` row-major.
struct Parameterization {
    n: usize,
    s1: usize,
    s2: usize,
    structure: LyapunovStructure,
}

impl Parameterization {
    fn p_blocks(&self) -> usize {
        match self.structure {
            LyapunovStructure::Shared => 1,
            LyapunovStructure::PerPlayer => 2,
        }
    }

    fn len(&self) -> usize {
        self.p_blocks() * self.n * (self.n + 1) / 2 + self.n * (self.s1 + self.s2)
    }

    fn unpack(&self, theta: &[f64]) -> Unknowns {
        let n = self.n;
        let mut it = theta.iter().copied();
        let mut symmetric = || {
            let mut p = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = it.next().unwrap_or(0.0);
                    p[(i, j)] = v;
                    p[(j, i)] = v;
                }
            }
            p
        };
        let p1 = symmetric();
        let p2 = match self.structure {
            LyapunovStructure::Shared => p1.clone(),
            LyapunovStructure::PerPlayer => symmetric(),
        };
        let offset = self.p_blocks() * n * (n + 1) / 2;
        let w1 = Matrix::from_fn(n, self.s1, |i, j| theta[offset + i * self.s1 + j]);
        let offset = offset + n * self.s1;
        let w2 = Matrix::from_fn(n, self.s2, |i, j| theta[offset + i * self.s2 + j]);
        Unknowns { p1, p2, w1, w2 }
    }

    fn pack(&self, u: &Unknowns) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        let blocks: &[&Matrix] = match self.structure {
            LyapunovStructure::Shared => &[&u.p1],
            LyapunovStructure::PerPlayer => &[&u.p1, &u.p2],
        };
        for p in blocks {
            for i in 0..self.n {
                for j in i..self.n {
                    theta.push(p[(i, j)]);
                }
            }
        }
        theta.extend_from_slice(u.w1.as_slice());
        theta.extend_from_slice(u.w2.as_slice());
        theta
    }
}

/// A point of the product space: the LMI block and `P̃`, both symmetric.
#[derive(Clone)]
struct Point {
    g: Matrix,
    p: Matrix,
}

impl Point {
    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.g.as_slice().iter().chain(self.p.as_slice()).copied()
    }

    fn add(&self, o: &Point) -> Point {
        Point {
            g: &self.g + &o.g,
            p: &self.p + &o.p,
        }
    }

    fn sub(&self, o: &Point) -> Point {
        Point {
            g: &self.g - &o.g,
            p: &self.p - &o.p,
        }
    }

    fn norm(&self) -> f64 {
        libm::sqrt(self.flat().map(|v| v * v).sum())
    }
}

/// Orthogonal projector onto the realizable subspace `{(G(θ), P(θ))}`.
struct SubspaceProjector<'a> {
    params: Parameterization,
    model: &'a SystemModel,
    a_tilde: &'a Matrix,
    basis: Vec<Vec<f64>>,
    normal: Cholesky,
}

impl<'a> SubspaceProjector<'a> {
    fn new(model: &'a SystemModel, a_tilde: &'a Matrix, structure: LyapunovStructure) -> Result<Self, Error> {
        let params = Parameterization {
            n: model.n(),
            s1: model.s1(),
            s2: model.s2(),
            structure,
        };
        let count = params.len();
        let mut basis = Vec::with_capacity(count);
        for j in 0..count {
            let mut theta = vec![0.0; count];
            theta[j] = 1.0;
            let point = realize(model, a_tilde, &params.unpack(&theta));
            basis.push(point.flat().collect::<Vec<f64>>());
        }
        let mut gram = Matrix::zeros(count, count);
        for i in 0..count {
            for j in i..count {
                let v: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        // Parameters the LMI does not see (e.g. `W` columns against a zero
        // output row) make the Gram matrix singular; a tiny ridge keeps
        // them at zero.
        let ridge = 1e-14 * (0..count).map(|i| gram[(i, i)]).fold(1.0, f64::max);
        for i in 0..count {
            gram[(i, i)] += ridge;
        }
        let normal = Cholesky::factor(&gram)?;
        Ok(Self {
            params,
            model,
            a_tilde,
            basis,
            normal,
        })
    }

    fn realize(&self, theta: &[f64]) -> Point {
        realize(self.model, self.a_tilde, &self.params.unpack(theta))
    }

    /// Least-squares parameters of the subspace point nearest to `x`.
    fn project(&self, x: &Point) -> Result<Vec<f64>, Error> {
        let flat: Vec<f64> = x.flat().collect();
        let rhs: Vec<f64> = self
            .basis
            .iter()
            .map(|col| col.iter().zip(&flat).map(|(a, b)| a * b).sum())
            .collect();
        let theta = self.normal.solve(&Matrix::column(&rhs))?;
        Ok(theta.into_vec())
    }
}

fn realize(model: &SystemModel, a_tilde: &Matrix, u: &Unknowns) -> Point {
    Point {
        g: lmi_matrix(model, a_tilde, &u.p1, &u.p2, &u.w1, &u.w2),
        p: u.p_tilde(),
    }
}

/// Projection onto `{G ⪯ −g_margin·I} × {P̃ ⪰ p_floor·I}`.
fn project_cones(x: &Point, g_margin: f64, p_floor: f64) -> Result<Point, Error> {
    let ge = sym_eig(&x.g.symmetrize())?;
    let pe = sym_eig(&x.p.symmetrize())?;
    Ok(Point {
        g: ge.reconstruct_with(|l| l.min(-g_margin)),
        p: pe.reconstruct_with(|l| l.max(p_floor)),
    })
}

/// Searches for `(P, W1, W2)` satisfying the LMI with margin and extracts
/// `Li = P⁻¹Wi`. The design is returned only when the power test certifies
/// the resulting `𝒜`.
pub fn synthesize_lmi(
    model: &SystemModel,
    k1: &Matrix,
    k2: &Matrix,
    options: &LmiOptions,
) -> Result<ObserverDesign, Error> {
    if !(options.margin > 0.0) || !(options.p_floor > 0.0) {
        return Err(Error::InvalidArgument("LMI margin and P floor must be positive"));
    }
    const TOLERANCE: f64 = 1e-9;
    let a_tilde = uninjected_error_matrix(model, k1, k2)?;
    let projector = SubspaceProjector::new(model, &a_tilde, options.structure)?;
    let params = &projector.params;

    // Aim past the acceptance thresholds so the subspace iterates, which
    // approach the intersection from outside, cross them in finite time.
    let g_target = 2.0 * options.margin;
    let p_target = 2.0 * options.p_floor;

    let n = model.n();
    let mut theta = params.pack(&Unknowns {
        p1: Matrix::identity(n),
        p2: Matrix::identity(n),
        w1: Matrix::zeros(n, model.s1()),
        w2: Matrix::zeros(n, model.s2()),
    });
    let mut x = projector.realize(&theta);
    let zero = Point {
        g: Matrix::zeros(x.g.rows(), x.g.cols()),
        p: Matrix::zeros(2 * n, 2 * n),
    };
    let mut cone_increment = zero.clone();
    let mut subspace_increment = zero;
    let mut gap = f64::INFINITY;
    let mut gap_history: Vec<f64> = Vec::new();

    for iteration in 0..=options.max_iter {
        if let Some(cert) = accept(model, &a_tilde, params, &theta, options, iteration)? {
            return finish(model, k1, k2, cert);
        }
        if iteration == options.max_iter {
            break;
        }
        let shifted = x.add(&cone_increment);
        let y = project_cones(&shifted, g_target, p_target)?;
        cone_increment = shifted.sub(&y);

        let shifted = y.add(&subspace_increment);
        theta = projector.project(&shifted)?;
        let x_next = projector.realize(&theta);
        subspace_increment = shifted.sub(&x_next);
        gap = x_next.sub(&y).norm();
        x = x_next;

        gap_history.push(gap);
        let len = gap_history.len();
        if len > 500 && gap > TOLERANCE {
            let earlier = gap_history[len - 251];
            if (earlier - gap).abs() <= 1e-12 * gap {
                return Err(Error::Infeasible {
                    iterations: iteration + 1,
                    gap,
                });
            }
        }
    }
    Err(Error::Infeasible {
        iterations: options.max_iter,
        gap,
    })
}

/// Returns a certificate when the realizable point `θ` meets both
/// thresholds and yields well-conditioned gains.
fn accept(
    model: &SystemModel,
    a_tilde: &Matrix,
    params: &Parameterization,
    theta: &[f64],
    options: &LmiOptions,
    iterations: usize,
) -> Result<Option<LmiCertificate>, Error> {
    let u = params.unpack(theta);
    let p_min = sym_eig(&u.p1)?.min().min(sym_eig(&u.p2)?.min());
    if !(p_min >= options.p_floor) {
        return Ok(None);
    }
    let g = lmi_matrix(model, a_tilde, &u.p1, &u.p2, &u.w1, &u.w2);
    let g_max = sym_eig(&g)?.max();
    if !(g_max <= -options.margin) {
        return Ok(None);
    }
    Ok(Some(LmiCertificate {
        structure: params.structure,
        p1: u.p1,
        p2: u.p2,
        w1: u.w1,
        w2: u.w2,
        margin: options.margin,
        lmi_max_eigenvalue: g_max,
        p_min_eigenvalue: p_min,
        extraction_residual: f64::NAN,
        iterations,
    }))
}

fn finish(model: &SystemModel, k1: &Matrix, k2: &Matrix, mut cert: LmiCertificate) -> Result<ObserverDesign, Error> {
    let l1 = solve_linear(&cert.p1, &cert.w1)?;
    let l2 = solve_linear(&cert.p2, &cert.w2)?;
    let r1 = (&(&cert.p1 * &l1) - &cert.w1).frobenius_norm();
    let r2 = (&(&cert.p2 * &l2) - &cert.w2).frobenius_norm();
    cert.extraction_residual = r1.max(r2);
    let script_a = assemble_error_matrix(model, k1, k2, &l1, &l2)?;
    let verdict = stability::certify(&script_a)?;
    if !verdict.is_stable() {
        return Err(Error::CertifiedButUnstable(verdict));
    }
    Ok(ObserverDesign {
        l1,
        l2,
        script_a,
        certificate: Some(cert),
        verdict,
        method: DesignMethod::Lmi,
    })
}
