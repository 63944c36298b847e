//! Numerical tolerances shared across the crate.

/// Relative asymmetry accepted before a matrix is treated as non-symmetric.
pub const SYM_TOL: f64 = 1e-9;
/// Relative reconstruction/orthogonality tolerance of the symmetric eigensolver.
pub const EIG_TOL: f64 = 1e-10;
/// Relative tolerance of the Riccati fixed-point iteration.
pub const ARE_TOL: f64 = 1e-10;
/// Iteration cap for the Riccati fixed-point iteration.
pub const ARE_MAX_ITER: usize = 100_000;
/// Residual accepted when checking a closed-form Riccati solution.
pub const ARE_CHECK_TOL: f64 = 1e-9;
/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-9;
/// Relative tolerance on the power constraint.
pub const POW_TOL: f64 = 1e-8;
/// Absolute tolerance of scalar bisections.
pub const BISECT_TOL: f64 = 1e-12;
/// Iteration cap of golden-section searches.
pub const GOLDEN_MAX_ITER: usize = 200;
/// Tolerance on the Bode/Jensen rate quadrature, in bits.
pub const QUAD_TOL: f64 = 1e-6;
/// Default number of quadrature nodes.
pub const QUAD_NODES: usize = 1 << 14;
/// Relative size of the last impulse-response tap at truncation.
pub const TRUNC_TOL: f64 = 1e-12;
/// Hard cap on impulse-response length.
pub const MAX_TAPS: usize = 10_000;
/// Tolerance for the `Chat = I` design check.
pub const CHAT_TOL: f64 = 1e-9;
/// State norm beyond which a simulation is aborted.
pub const OVERFLOW_GUARD: f64 = 1e9;
/// Monte Carlo relative tolerance at one million steps.
pub const MC_TOL: f64 = 0.02;
/// Step count at which [`MC_TOL`] applies unscaled.
pub const MC_REFERENCE_STEPS: usize = 1_000_000;
/// Below this many steps Monte Carlo checks are reported as inconclusive.
pub const MC_MIN_CONCLUSIVE_STEPS: usize = 100_000;

/// Monte Carlo tolerance for a run of `steps` steps, scaled as `1/sqrt(steps)`.
pub fn mc_tol(steps: usize) -> f64 {
    if steps >= MC_REFERENCE_STEPS {
        MC_TOL
    } else {
        MC_TOL * (MC_REFERENCE_STEPS as f64 / steps.max(1) as f64).sqrt()
    }
}
