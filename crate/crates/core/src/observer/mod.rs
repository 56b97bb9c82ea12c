//! Observer gains for the coupled estimation-error dynamics.
//!
//! Each player runs a Luenberger observer that substitutes its model of the
//! *other* player's feedback for the unseen input:
//!
//! ```text
//! x̂1⁺ = A x̂1 + B1 u1 + B2 K2 x̂1 + L1 (y1 − H1 x̂1)
//! x̂2⁺ = A x̂2 + B1 K1 x̂2 + B2 u2 + L2 (y2 − H2 x̂2)
//! ```
//!
//! so the errors `x̃i = x − x̂i` obey `x̃⁺ = 𝒜 x̃` with
//!
//! ```text
//! 𝒜 = [ A + B2K2 − L1H1        −B2K2      ]
//!     [     −B1K1         A + B1K1 − L2H2 ]
//! ```
//!
//! The two errors are coupled through the gains, so stabilizing each diagonal
//! block separately is not enough; every accepted design is certified on the
//! full `𝒜`.

mod dual;
mod lmi;

pub use dual::{synthesize_dual_riccati, DualRiccatiOptions};
pub use lmi::{lmi_matrix, synthesize_lmi, LmiCertificate, LmiOptions, LyapunovStructure};

use crate::error::{Error, LinalgError};
use crate::game::SystemModel;
use crate::matrix::Matrix;
use crate::stability::{self, StabilityVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMethod {
    Lmi,
    DualRiccati,
    UserSupplied,
}

impl DesignMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignMethod::Lmi => "lmi",
            DesignMethod::DualRiccati => "dual-riccati",
            DesignMethod::UserSupplied => "user-supplied",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    pub l1: Matrix,
    pub l2: Matrix,
    pub script_a: Matrix,
    pub certificate: Option<LmiCertificate>,
    pub verdict: StabilityVerdict,
    pub method: DesignMethod,
}

pub(crate) fn check_gain_shapes(model: &SystemModel, k1: &Matrix, k2: &Matrix) -> Result<(), LinalgError> {
    let n = model.n();
    k1.check_shape("K1", (model.m1(), n))?;
    k2.check_shape("K2", (model.m2(), n))
}

/// `[[A+B2K2, −B2K2], [−B1K1, A+B1K1]]`, the error matrix before output
/// injection.
pub fn uninjected_error_matrix(model: &SystemModel, k1: &Matrix, k2: &Matrix) -> Result<Matrix, Error> {
    check_gain_shapes(model, k1, k2)?;
    let b1k1 = model.b1() * k1;
    let b2k2 = model.b2() * k2;
    let top_left = model.a() + &b2k2;
    let bottom_right = model.a() + &b1k1;
    Ok(Matrix::from_blocks(&[&[&top_left, &-&b2k2], &[&-&b1k1, &bottom_right]]))
}

/// `diag(H1, H2)`.
pub fn stacked_output_matrix(model: &SystemModel) -> Matrix {
    Matrix::block_diag(&[model.h1(), model.h2()])
}

/// Assembles the coupled error matrix `𝒜` from its parts.
pub fn assemble_error_matrix(
    model: &SystemModel,
    k1: &Matrix,
    k2: &Matrix,
    l1: &Matrix,
    l2: &Matrix,
) -> Result<Matrix, Error> {
    check_gain_shapes(model, k1, k2)?;
    let n = model.n();
    l1.check_shape("L1", (n, model.s1()))?;
    l2.check_shape("L2", (n, model.s2()))?;
    let b1k1 = model.b1() * k1;
    let b2k2 = model.b2() * k2;
    let top_left = &(model.a() + &b2k2) - &(l1 * model.h1());
    let bottom_right = &(model.a() + &b1k1) - &(l2 * model.h2());
    Ok(Matrix::from_blocks(&[&[&top_left, &-&b2k2], &[&-&b1k1, &bottom_right]]))
}

/// Power-test certificate for `𝒜` with the default limits.
pub fn certify(script_a: &Matrix) -> Result<StabilityVerdict, Error> {
    Ok(stability::certify(script_a)?)
}

/// Wraps caller-provided gains; fails with [`Error::NotCertified`] unless
/// the coupled error matrix is certified stable.
pub fn certify_user_gains(
    model: &SystemModel,
    k1: &Matrix,
    k2: &Matrix,
    l1: &Matrix,
    l2: &Matrix,
) -> Result<ObserverDesign, Error> {
    let script_a = assemble_error_matrix(model, k1, k2, l1, l2)?;
    let verdict = certify(&script_a)?;
    if !verdict.is_stable() {
        return Err(Error::NotCertified(verdict));
    }
    Ok(ObserverDesign {
        l1: l1.clone(),
        l2: l2.clone(),
        script_a,
        certificate: None,
        verdict,
        method: DesignMethod::UserSupplied,
    })
}

/// Which synthesis routes to try, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Lmi,
    DualRiccati,
    /// LMI first, dual Riccati if it fails.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DesignOptions {
    pub lmi: LmiOptions,
    pub dual: DualRiccatiOptions,
}

/// Runs the chosen synthesis route(s). With [`MethodChoice::Auto`] the LMI
/// error is returned when both routes fail.
pub fn design_observer(
    model: &SystemModel,
    k1: &Matrix,
    k2: &Matrix,
    choice: MethodChoice,
    options: &DesignOptions,
) -> Result<ObserverDesign, Error> {
    match choice {
        MethodChoice::Lmi => synthesize_lmi(model, k1, k2, &options.lmi),
        MethodChoice::DualRiccati => synthesize_dual_riccati(model, k1, k2, &options.dual),
        MethodChoice::Auto => match synthesize_lmi(model, k1, k2, &options.lmi) {
            Ok(design) => Ok(design),
            Err(lmi_err) => synthesize_dual_riccati(model, k1, k2, &options.dual).map_err(|_| lmi_err),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    fn example_model() -> SystemModel {
        SystemModel::new(
            Matrix::from_rows(&[[1.0, -0.7], [1.0, -0.3]]),
            Matrix::column(&[-5.0, -1.0]),
            Matrix::column(&[0.0, 1.0]),
            Matrix::from_rows(&[[1.0, 0.0]]),
            Matrix::from_rows(&[[0.0, 1.0]]),
        )
        .unwrap()
    }

    #[test]
    fn zero_gains_give_block_diagonal() {
        let m = example_model();
        let z = Matrix::zeros(1, 2);
        let zl = Matrix::zeros(2, 1);
        let sa = assemble_error_matrix(&m, &z, &z, &zl, &zl).unwrap();
        assert_eq!(sa, Matrix::block_diag(&[m.a(), m.a()]));
    }

    #[test]
    fn shapes_are_checked() {
        let m = example_model();
        let z = Matrix::zeros(1, 2);
        let bad = Matrix::zeros(2, 2);
        assert!(matches!(
            assemble_error_matrix(&m, &z, &z, &bad, &Matrix::zeros(2, 1)),
            Err(Error::Linalg(LinalgError::DimensionMismatch { context: "L1", .. }))
        ));
        assert!(assemble_error_matrix(&m, &bad, &z, &Matrix::zeros(2, 1), &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn injection_is_linear_in_observer_gains() {
        let m = example_model();
        let k1 = Matrix::from_rows(&[[0.2, -0.1]]);
        let k2 = Matrix::from_rows(&[[-0.4, 0.08]]);
        let l1 = Matrix::column(&[1.2, 0.4]);
        let l2 = Matrix::column(&[0.004, 0.19]);
        let once = assemble_error_matrix(&m, &k1, &k2, &l1, &l2).unwrap();
        let twice = assemble_error_matrix(&m, &k1, &k2, &l1.scale(2.0), &l2.scale(2.0)).unwrap();
        let injected = Matrix::block_diag(&[&(&l1 * m.h1()), &(&l2 * m.h2())]);
        assert!((&(&once - &twice) - &injected).max_abs() < 1e-15);
        let base = uninjected_error_matrix(&m, &k1, &k2).unwrap();
        let rebuilt = &base - &(&Matrix::block_diag(&[&l1, &l2]) * &stacked_output_matrix(&m));
        assert!((&rebuilt - &once).max_abs() < 1e-15);
    }

    #[test]
    fn certify_examples() {
        assert!(matches!(
            certify(&Matrix::identity(4)).unwrap(),
            StabilityVerdict::NotCertified { .. }
        ));
        assert!(matches!(
            certify(&Matrix::identity(4).scale(1.5)).unwrap(),
            StabilityVerdict::Diverged { .. }
        ));
    }

    #[test]
    fn user_gains_must_certify() {
        let m = SystemModel::new(scalar(2.0), scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let z = scalar(0.0);
        assert!(matches!(
            certify_user_gains(&m, &z, &z, &z, &z),
            Err(Error::NotCertified(_))
        ));
        let d = certify_user_gains(&m, &z, &z, &scalar(1.5), &scalar(2.2)).unwrap();
        assert_eq!(d.method, DesignMethod::UserSupplied);
        assert!(d.verdict.is_stable());
    }
}
