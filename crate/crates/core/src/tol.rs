//! Shared tolerances. Exact identities are checked near round-off; iterative
//! solvers get their own inner tolerances; probe thresholds scale with the
//! sampled magnitude where that matters (see call sites).

/// Identities that hold exactly in exact arithmetic (restriction algebra,
/// corner compatibility of analytic data, characteristic residuals of flat
/// metrics).
pub const EXACT: f64 = 1e-12;

/// Structural probes comparing floating-point evaluations that cancel
/// algebraically (linearity second differences, symmetry of assembled
/// tensors), relative to the sampled scale.
pub const STRUCTURAL: f64 = 1e-10;

/// Inner fixed-point iteration of the box scheme: sup-change between sweeps.
pub const INNER_FIXED_POINT: f64 = 1e-10;

/// Root refinement for retarded-time and quadrature-node solves.
pub const ROOT: f64 = 1e-12;

/// Transversal-derivative blow-up guard of the constraint transport march.
pub const TRANSPORT_BOUND: f64 = 1e8;

/// Sweep cap of the inner fixed point before reporting divergence.
pub const MAX_INNER_SWEEPS: usize = 50;

/// Consecutive residual growths that count as divergence.
pub const DIVERGENCE_STREAK: usize = 5;
