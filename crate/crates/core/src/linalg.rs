//! Factorizations and spectral routines on small dense matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::LinalgError;
use crate::matrix::Matrix;

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

const SINGULAR_PIVOT_REL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

fn require_square(m: &Matrix) -> Result<usize, LinalgError> {
    if m.is_square() {
        Ok(m.rows())
    } else {
        Err(LinalgError::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        })
    }
}

fn require_symmetric(m: &Matrix) -> Result<usize, LinalgError> {
    let n = require_square(m)?;
    if m.is_symmetric(SYMMETRY_TOL) {
        Ok(n)
    } else {
        Err(LinalgError::NonSymmetric {
            asymmetry: m.asymmetry(),
        })
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(m: &Matrix) -> Result<Self, LinalgError> {
        let n = require_symmetric(m)?;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
            }
            let d = libm::sqrt(d);
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn into_l(self) -> Matrix {
        self.l
    }

    /// Solves `(L Lᵀ) X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix, LinalgError> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(LinalgError::DimensionMismatch {
                context: "cholesky solve rhs",
                expected: (n, b.cols()),
                found: b.shape(),
            });
        }
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Returns `L` with `L Lᵀ = M`. Failure is the positive-definiteness test.
pub fn cholesky(m: &Matrix) -> Result<Matrix, LinalgError> {
    Cholesky::factor(m).map(Cholesky::into_l)
}

/// `true` when `M + shift·I` admits a Cholesky factorization.
pub fn is_positive_definite(m: &Matrix, shift: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let shifted = m + &Matrix::identity(m.rows()).scale(shift);
    Cholesky::factor(&shifted).is_ok()
}

/// LU factorization with partial pivoting, `P A = L U` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    min_pivot: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        let n = require_square(a)?;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            min_pivot = min_pivot.min(pmax);
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            sign,
            min_pivot,
        })
    }

    pub fn determinant(&self) -> f64 {
        let n = self.lu.rows();
        (0..n).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    pub fn solve_unchecked(&self, b: &Matrix) -> Matrix {
        let n = self.lu.rows();
        let mut x = Matrix::zeros(n, b.cols());
        for c in 0..b.cols() {
            let mut y: Vec<f64> = self.perm.iter().map(|&p| b[(p, c)]).collect();
            for i in 0..n {
                for k in 0..i {
                    y[i] -= self.lu[(i, k)] * y[k];
                }
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    y[i] -= self.lu[(i, k)] * y[k];
                }
                y[i] /= self.lu[(i, i)];
            }
            for (i, v) in y.into_iter().enumerate() {
                x[(i, c)] = v;
            }
        }
        x
    }
}

/// Solves `A X = B` by partially pivoted LU.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    let n = require_square(a)?;
    if b.rows() != n {
        return Err(LinalgError::DimensionMismatch {
            context: "solve_linear rhs",
            expected: (n, b.cols()),
            found: b.shape(),
        });
    }
    let lu = Lu::factor(a)?;
    let threshold = SINGULAR_PIVOT_REL * a.inf_norm();
    if n > 0 && !(lu.min_pivot > threshold) {
        let column = (0..n).find(|&i| !(lu.lu[(i, i)].abs() > threshold)).unwrap_or(0);
        return Err(LinalgError::Singular {
            column,
            pivot: lu.min_pivot,
        });
    }
    let x = lu.solve_unchecked(b);
    debug_assert!(
        (&(a * &x) - b).frobenius_norm() <= 1e-10 * (1.0 + b.frobenius_norm()),
        "solve_linear residual contract violated"
    );
    Ok(x)
}

pub fn determinant(m: &Matrix) -> Result<f64, LinalgError> {
    Ok(Lu::factor(m)?.determinant())
}

/// Symmetric eigendecomposition `M = V diag(λ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub vectors: Matrix,
}

impl SymEig {
    /// Rebuilds `V diag(f(λ)) Vᵀ`, exactly symmetric.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (k, &lk) in mapped.iter().enumerate() {
                    s += self.vectors[(i, k)] * lk * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    libm::sqrt(s)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(m: &Matrix) -> Result<SymEig, LinalgError> {
    let n = require_symmetric(m)?;
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    let target = 1e-15 * scale;

    let mut sweeps = 0;
    while off_diagonal_norm(&a) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::EigenNoConvergence { sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Skip entries already negligible against both diagonals.
                if apq.abs() <= 1e-18 * (app.abs() + aqq.abs()) && sweeps > 4 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + libm::sqrt(1.0 + tau * tau))
                } else {
                    -1.0 / (-tau + libm::sqrt(1.0 + tau * tau))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Nearest symmetric matrix (Frobenius) whose spectrum is bounded below by
/// `floor`: eigenvalues below it are clamped.
pub fn psd_project(m: &Matrix, floor: f64) -> Result<Matrix, LinalgError> {
    let eig = sym_eig(m)?;
    Ok(eig.reconstruct_with(|l| l.max(floor)))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn gram_power_iteration(g: &Matrix, start: Vec<f64>) -> f64 {
    const MAX_ITERS: usize = 200_000;
    let n = g.rows();
    let mut v = start;
    if normalize(&mut v) == 0.0 {
        return 0.0;
    }
    let mut w = vec![0.0; n];
    let mut mu: f64 = 0.0;
    for _ in 0..MAX_ITERS {
        for i in 0..n {
            w[i] = g.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        if normalize(&mut w) == 0.0 {
            return mu.max(0.0);
        }
        core::mem::swap(&mut v, &mut w);
        let done = next <= mu || next - mu <= 1e-15 * next;
        mu = mu.max(next);
        if done {
            break;
        }
    }
    mu
}

/// Largest singular value, by power iteration on `MᵀM`.
///
/// Starts from the all-ones direction, then repeats from a fixed alternating
/// ramp so a start orthogonal to the dominant singular vector cannot stall the
/// estimate; the larger Rayleigh quotient wins.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.rows() == 0 || m.cols() == 0 || m.max_abs() == 0.0 {
        return 0.0;
    }
    let gram = &m.transpose() * m;
    let n = gram.rows();
    let ones = vec![1.0; n];
    let ramp: Vec<f64> = (0..n)
        .map(|i| {
            let v = (i + 1) as f64;
            if i % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect();
    let mu = gram_power_iteration(&gram, ones).max(gram_power_iteration(&gram, ramp));
    libm::sqrt(mu.max(0.0))
}
