//! Numerical tolerances shared across the crate.

/// Allowed deviation of `‖u‖₂` from one.
pub const UNIT_NORM: f64 = 1e-12;

/// Orthonormality residual allowed for `[u ⋮ Γ_u]`.
pub const ORTHONORMAL: f64 = 1e-10;

/// Reconstruction residual `Y − u·y_u − Γ·y_perp`.
pub const RECONSTRUCTION: f64 = 1e-10;

/// Symmetry tolerance for prior covariance matrices.
pub const SYMMETRY: f64 = 1e-10;

/// Off-block entries treated as zero when checking block-diagonal priors.
pub const BLOCK_ZERO: f64 = 1e-12;

/// Lower guard on latent mixing scales `W_i`.
pub const LATENT_FLOOR: f64 = 1e-12;

/// Entries below this are treated as zero when fixing column signs.
pub const SIGN_ZERO: f64 = 1e-14;

/// Polygon vertices closer than this are merged.
pub const VERTEX_DEDUP: f64 = 1e-9;

/// Orientation/containment slack in the halfplane intersection.
pub const ORIENTATION: f64 = 1e-12;

/// Generating-halfplane feasibility check for returned vertices.
pub const VERTEX_FEASIBILITY: f64 = 1e-8;

/// Kernel mass below this (max weight) is a degenerate window.
pub const KERNEL_MASS: f64 = 1e-300;

/// Relative eigenvalue floor for declaring a covariance singular.
pub const SINGULAR_RELATIVE: f64 = 1e-14;

/// Relative eigenvalue floor for declaring a design rank-deficient.
pub const RANK_RELATIVE: f64 = 1e-12;

/// Bisection tolerance for the uniform-ball contour radius.
pub const BISECTION: f64 = 1e-12;
