//! Numerical tolerances shared by every module.

/// Primal feasibility of LP rows and bounds.
pub const FEAS: f64 = 1e-7;
/// Generic comparisons between computed quantities.
pub const CMP: f64 = 1e-9;
/// Residual above which an LP solve is reported as a numerical failure.
pub const RESIDUAL_FAIL: f64 = 1e-6;
/// Probability mass below which an atom is dropped.
pub const MASS: f64 = 1e-12;
/// Tolerance for identities such as D_F = 2 LP.
pub const IDENTITY: f64 = 1e-6;
