//! Numerical tolerances shared across modules.

/// Absolute tolerance used to snap sheets before exact-equality tests.
pub const SNAP_TOL: f64 = 1e-12;

/// Relative slack allowed on the 1-Lipschitz bound of the retraction.
pub const LIPSCHITZ_SLACK: f64 = 1e-12;

/// Relative tolerance for triangle-inequality checks on the metric.
pub const TRIANGLE_REL_TOL: f64 = 1e-9;

/// Relative agreement between the Hungarian and exhaustive metric.
pub const METRIC_REL_TOL: f64 = 1e-12;

/// Relative slack when asserting the separation postconditions.
pub const SEPARATION_SLACK: f64 = 1e-12;

/// Tolerance for node-on-sphere tests in grid geometry.
pub const GEOM_TOL: f64 = 1e-12;
