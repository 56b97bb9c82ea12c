//! Schur-stability certificates from matrix powers.
//!
//! `ρ(M) ≤ ‖Mᵏ‖₂^{1/k}` for every `k`, so a single power with `‖Mᵏ‖₂ < 1`
//! proves `ρ(M) < 1`. Powers are visited as `k = 1, 2, 4, …` by repeated
//! squaring.

use crate::error::LinalgError;
use crate::linalg::spectral_norm;
use crate::matrix::Matrix;

pub const DEFAULT_K_MAX: u32 = 4096;
pub const DEFAULT_BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityVerdict {
    /// `‖M^witness_power‖₂ < 1`.
    Stable { witness_power: u32 },
    /// No power up to the limit dropped below one, none blew up.
    NotCertified { max_power_checked: u32 },
    /// `‖M^power‖₂ = norm` exceeded the blow-up threshold.
    Diverged { power: u32, norm: f64 },
}

impl StabilityVerdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityVerdict::Stable { .. })
    }

    pub fn witness_power(&self) -> Option<u32> {
        match *self {
            StabilityVerdict::Stable { witness_power } => Some(witness_power),
            _ => None,
        }
    }
}

impl core::fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StabilityVerdict::Stable { witness_power } => write!(f, "Stable({witness_power})"),
            StabilityVerdict::NotCertified { max_power_checked } => {
                write!(f, "NotCertified({max_power_checked})")
            }
            StabilityVerdict::Diverged { power, norm } => write!(f, "Diverged({power}, {norm:e})"),
        }
    }
}

pub fn power_stability(m: &Matrix, k_max: u32, blowup: f64) -> Result<StabilityVerdict, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let k_max = k_max.max(1);
    let mut power = m.clone();
    let mut k: u32 = 1;
    loop {
        let norm = spectral_norm(&power);
        if norm < 1.0 {
            return Ok(StabilityVerdict::Stable { witness_power: k });
        }
        if !(norm <= blowup) {
            return Ok(StabilityVerdict::Diverged { power: k, norm });
        }
        match k.checked_mul(2) {
            Some(next) if next <= k_max => {
                power = &power * &power;
                k = next;
            }
            _ => return Ok(StabilityVerdict::NotCertified { max_power_checked: k }),
        }
    }
}

/// [`power_stability`] with the default limits.
pub fn certify(m: &Matrix) -> Result<StabilityVerdict, LinalgError> {
    power_stability(m, DEFAULT_K_MAX, DEFAULT_BLOWUP)
}
