//! Plant and cost data for the two-player game.
//!
//! ```text
//! x(k+1) = A x(k) + B1 u1(k) + B2 u2(k)
//! y1(k)  = H1 x(k),   y2(k) = H2 x(k)
//! J1 = Σ x'Q1x + u1'R11u1 + u2'R12u2
//! J2 = Σ x'Q2x + u1'R21u1 + u2'R22u2
//! ```
//!
//! Player 1 (`u1`) is the follower, player 2 (`u2`) the leader.

use crate::error::Error;
use crate::linalg::{is_positive_definite, sym_eig, SYMMETRY_TOL};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: Matrix,
    b1: Matrix,
    b2: Matrix,
    h1: Matrix,
    h2: Matrix,
}

fn invalid(field: &'static str, reason: &'static str) -> Error {
    Error::Invalid { field, reason }
}

impl SystemModel {
    pub fn new(a: Matrix, b1: Matrix, b2: Matrix, h1: Matrix, h2: Matrix) -> Result<Self, Error> {
        let n = a.rows();
        if n == 0 || !a.is_square() {
            return Err(invalid("A", "must be a non-empty square matrix"));
        }
        if b1.rows() != n || b1.cols() == 0 {
            return Err(invalid("B1", "must have n rows and at least one column"));
        }
        if b2.rows() != n || b2.cols() == 0 {
            return Err(invalid("B2", "must have n rows and at least one column"));
        }
        if h1.cols() != n || h1.rows() == 0 {
            return Err(invalid("H1", "must have n columns and at least one row"));
        }
        if h2.cols() != n || h2.rows() == 0 {
            return Err(invalid("H2", "must have n columns and at least one row"));
        }
        for (field, m) in [("A", &a), ("B1", &b1), ("B2", &b2), ("H1", &h1), ("H2", &h2)] {
            if !m.is_finite() {
                return Err(invalid(field, "entries must be finite"));
            }
        }
        Ok(Self { a, b1, b2, h1, h2 })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b1(&self) -> &Matrix {
        &self.b1
    }
    pub fn b2(&self) -> &Matrix {
        &self.b2
    }
    pub fn h1(&self) -> &Matrix {
        &self.h1
    }
    pub fn h2(&self) -> &Matrix {
        &self.h2
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.rows()
    }
    pub fn m1(&self) -> usize {
        self.b1.cols()
    }
    pub fn m2(&self) -> usize {
        self.b2.cols()
    }
    pub fn s1(&self) -> usize {
        self.h1.rows()
    }
    pub fn s2(&self) -> usize {
        self.h2.rows()
    }

    /// `[B1 B2]`.
    pub fn b(&self) -> Matrix {
        Matrix::hstack(&[&self.b1, &self.b2])
    }

    /// Variant in which the leader's observer is driven by the stacked output
    /// `[y1; y2]`, i.e. `H2` is replaced by `[H1; H2]`. The leader's
    /// information set contains `y1`, but the default observer uses only
    /// `y2`; this opt-in model exploits the extra measurement.
    pub fn with_stacked_leader_output(&self) -> Self {
        Self {
            h2: Matrix::vstack(&[&self.h1, &self.h2]),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q1: Matrix,
    pub q2: Matrix,
    pub r11: Matrix,
    pub r12: Matrix,
    pub r21: Matrix,
    pub r22: Matrix,
}

/// Positive semidefinite up to a `1e-12` relative eigenvalue slack.
pub fn is_positive_semidefinite(m: &Matrix) -> bool {
    match sym_eig(m) {
        Ok(e) => e.min() >= -1e-12 * m.max_abs().max(1.0),
        Err(_) => false,
    }
}

impl CostWeights {
    pub fn new(q1: Matrix, q2: Matrix, r11: Matrix, r12: Matrix, r21: Matrix, r22: Matrix) -> Self {
        Self {
            q1,
            q2,
            r11,
            r12,
            r21,
            r22,
        }
    }

    /// Shapes against `model`, symmetry, `Q1, Q2, R12, R21 ⪰ 0` and
    /// `R11, R22 ≻ 0`.
    pub fn validate(&self, model: &SystemModel) -> Result<(), Error> {
        let (n, m1, m2) = (model.n(), model.m1(), model.m2());
        let entries: [(&'static str, &Matrix, usize); 6] = [
            ("Q1", &self.q1, n),
            ("Q2", &self.q2, n),
            ("R11", &self.r11, m1),
            ("R12", &self.r12, m2),
            ("R21", &self.r21, m1),
            ("R22", &self.r22, m2),
        ];
        for (field, m, dim) in entries {
            if m.shape() != (dim, dim) {
                return Err(invalid(field, "dimension mismatch"));
            }
            if !m.is_finite() {
                return Err(invalid(field, "entries must be finite"));
            }
            if !m.is_symmetric(SYMMETRY_TOL) {
                return Err(invalid(field, "not symmetric"));
            }
        }
        for (field, m) in [
            ("Q1", &self.q1),
            ("Q2", &self.q2),
            ("R12", &self.r12),
            ("R21", &self.r21),
        ] {
            if !is_positive_semidefinite(m) {
                return Err(invalid(field, "not positive semidefinite"));
            }
        }
        for (field, m) in [("R11", &self.r11), ("R22", &self.r22)] {
            if !is_positive_definite(m, 0.0) {
                return Err(invalid(field, "not positive definite"));
            }
        }
        Ok(())
    }

    /// `(αQ1, αR11, αR12)` with the leader's weights untouched.
    pub fn scale_follower(&self, alpha: f64) -> Self {
        Self {
            q1: self.q1.scale(alpha),
            r11: self.r11.scale(alpha),
            r12: self.r12.scale(alpha),
            ..self.clone()
        }
    }

    /// `(αQ2, αR21, αR22)` with the follower's weights untouched.
    pub fn scale_leader(&self, alpha: f64) -> Self {
        Self {
            q2: self.q2.scale(alpha),
            r21: self.r21.scale(alpha),
            r22: self.r22.scale(alpha),
            ..self.clone()
        }
    }
}
