//! Numerical policy. Every tolerance the crate applies lives here.

/// Maximum entry-wise `|H - H†|` accepted for a Hermitian operator.
pub const HERM_TOL: f64 = 1e-10;
/// Minimum eigenvalue slack accepted for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-9;
/// Eigen-reconstruction accuracy target.
pub const EIG_TOL: f64 = 1e-9;
/// Entry-wise tolerance for `sum of effects == identity`.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Idempotence tolerance used to recognise projective measurements.
pub const PROJECTOR_TOL: f64 = 1e-9;
/// `mu*` band treated as neither compatible nor incompatible.
pub const DECIDE_EPS: f64 = 1e-6;
/// Marginal residual tolerance for a returned (or certified) parent POVM.
pub const MARGINAL_TOL: f64 = 1e-7;
/// A commutator counts as non-zero above this max-entry magnitude.
pub const COMMUTATOR_TOL: f64 = 1e-9;
/// Overlaps at or below this modulus count as zero.
pub const OVERLAP_TOL: f64 = 1e-9;
/// Determinant magnitude below which three Bloch vectors count as coplanar.
pub const PLANARITY_TOL: f64 = 1e-9;
/// Strict-advantage margin for RAC success probabilities.
pub const ADVANTAGE_EPS: f64 = 1e-12;

/// Overridable copy of the tolerances that callers may tune at runtime
/// (the CLI reads these from the environment).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub psd: f64,
    pub completeness: f64,
    pub decide_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            psd: PSD_TOL,
            completeness: COMPLETENESS_TOL,
            decide_eps: DECIDE_EPS,
        }
    }
}
