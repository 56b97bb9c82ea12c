//! Heuristic observer gains from two decoupled filtering Riccati equations.
//!
//! Each diagonal block of `𝒜` is stabilized on its own, with the other
//! player's feedback folded into the dynamics: `(A + B2K2, H1)` for the
//! follower and `(A + B1K1, H2)` for the leader. The off-diagonal coupling
//! is ignored during design, so the coupled matrix is certified afterwards.

use super::{assemble_error_matrix, check_gain_shapes, DesignMethod, ObserverDesign};
use crate::error::Error;
use crate::game::SystemModel;
use crate::linalg::{spectral_norm, Cholesky};
use crate::matrix::Matrix;
use crate::stability;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualRiccatiOptions {
    /// Process weight `q·I`.
    pub q_scale: f64,
    /// Measurement weight `r·I`.
    pub r_scale: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DualRiccatiOptions {
    fn default() -> Self {
        Self {
            q_scale: 1.0,
            r_scale: 1.0,
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Iterates `X ← AXAᵀ − AXHᵀ(HXHᵀ + rI)⁻¹HXAᵀ + qI` from `X = 0` and
/// returns the steady-state gain `AXHᵀ(HXHᵀ + rI)⁻¹` with `X`.
pub fn filtering_gain(a: &Matrix, h: &Matrix, options: &DualRiccatiOptions) -> Result<(Matrix, Matrix), Error> {
    let n = a.rows();
    let s = h.rows();
    let q = Matrix::identity(n).scale(options.q_scale);
    let r = Matrix::identity(s).scale(options.r_scale);
    let at = a.transpose();
    let ht = h.transpose();
    let gain_at = |x: &Matrix| -> Result<Matrix, Error> {
        let innov = (&r + &(&(h * x) * &ht)).symmetrize();
        let chol = Cholesky::factor(&innov)?;
        // (HXHᵀ + rI)⁻¹ H X Aᵀ, transposed gives A X Hᵀ (HXHᵀ + rI)⁻¹.
        Ok(chol.solve(&(&(h * x) * &at))?.transpose())
    };
    let mut x = Matrix::zeros(n, n);
    let mut last_delta = f64::INFINITY;
    for _ in 0..options.max_iter {
        let l = gain_at(&x)?;
        let axat = &(a * &x) * &at;
        let correction = &(&l * h) * &(&x * &at);
        let next = (&(&axat - &correction) + &q).symmetrize();
        last_delta = spectral_norm(&(&next - &x));
        let scale = spectral_norm(&next).max(1.0);
        x = next;
        if !x.is_finite() {
            break;
        }
        if last_delta < options.tol * scale {
            return Ok((gain_at(&x)?, x));
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_iter,
        last_delta,
    })
}

pub fn synthesize_dual_riccati(
    model: &SystemModel,
    k1: &Matrix,
    k2: &Matrix,
    options: &DualRiccatiOptions,
) -> Result<ObserverDesign, Error> {
    if !(options.q_scale > 0.0) || !(options.r_scale > 0.0) {
        return Err(Error::InvalidArgument("dual Riccati weights must be positive"));
    }
    check_gain_shapes(model, k1, k2)?;
    let follower_dynamics = model.a() + &(model.b2() * k2);
    let leader_dynamics = model.a() + &(model.b1() * k1);
    let (l1, _) = filtering_gain(&follower_dynamics, model.h1(), options)?;
    let (l2, _) = filtering_gain(&leader_dynamics, model.h2(), options)?;
    let script_a = assemble_error_matrix(model, k1, k2, &l1, &l2)?;
    let verdict = stability::certify(&script_a)?;
    if !verdict.is_stable() {
        return Err(Error::NotCertified(verdict));
    }
    Ok(ObserverDesign {
        l1,
        l2,
        script_a,
        certificate: None,
        verdict,
        method: DesignMethod::DualRiccati,
    })
}
