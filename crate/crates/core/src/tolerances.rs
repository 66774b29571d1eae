//! Default thresholds for the exact and statistical checks.
//!
//! Identity checks on chains are algebraic, so their thresholds sit a few
//! digits above f64 roundoff. Statistical checks use z-scores.

/// Detailed balance `m(x)Q(x,y) = m(y)Q(y,x)`, relative.
pub const DETAILED_BALANCE: f64 = 1e-12;

/// Excessiveness of `f` for the killed chain: `Q00 f <= tol * |f|_inf`.
pub const EXCESSIVE: f64 = 1e-12;

/// Symmetry of the Feller matrix, relative to its max entry.
pub const FELLER_SYMMETRY: f64 = 1e-12;

/// Agreement of the energy route and the Schur route for the trace form.
pub const TRACE_ROUTES: f64 = 1e-12;

/// Relative residual for the trace identities (jump/killing balance,
/// trace decomposition, Beurling-Deny data, time-change invariance).
pub const IDENTITY: f64 = 1e-10;

/// Magnitudes below this fraction of the chain's energy scale count as zero
/// when a relative residual is formed, so that vanishing quantities are not
/// compared against round-off.
pub const RESIDUAL_FLOOR: f64 = 1e-6;

/// Negative off-diagonal slack tolerated in a computed trace generator.
pub const MARKOV_SLACK: f64 = 1e-10;

/// |z| bound for Monte Carlo estimators against exact references.
pub const Z_BOUND: f64 = 4.0;

/// Sphere identity residual for low-degree harmonics.
pub const SPHERE_IDENTITY: f64 = 1e-3;

/// Disagreement between two quadrature resolutions that flags a rule as
/// too coarse.
pub const QUADRATURE_AGREEMENT: f64 = 1e-2;

/// Number of batches for batch-means standard errors.
pub const BATCHES: usize = 32;

/// Minimum event count before an estimator reports a value.
pub const MIN_EVENTS: u64 = 100;

/// Relative error allowed for the extrapolated sphere shell densities.
pub const SHELL_REL: f64 = 0.10;
