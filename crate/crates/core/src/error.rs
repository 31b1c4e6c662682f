//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Binary mask with no true cell where one is required.
    #[error("empty mask")]
    EmptyMask,

    /// Shape or dimensionality mismatch between inputs.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A parameter was outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Otsu thresholding cannot split a constant image.
    #[error("no threshold separates classes")]
    NoThreshold,

    /// Interaction-parameter fit failed to reach the residual tolerance.
    #[error("interaction fit did not converge; best residual norm {residual:.3e}")]
    FitDiverged { residual: f64 },

    /// The V-band filter removed every admissible start cell.
    #[error("V_band excludes entire object")]
    EmptyVBand,

    /// Adaptive integrator drove the step size below the hard floor.
    #[error("step size underflow at t={t:.6e} (h={h:.3e}, {steps} accepted steps)")]
    StepUnderflow { t: f64, h: f64, steps: usize },

    /// Evaluation inputs disagree on object identity.
    #[error("object id mismatch: {0}")]
    IdMismatch(String),

    /// Thresholding produced no foreground.
    #[error("empty mask after threshold")]
    EmptyForeground,

    /// Point set too sparse for the requested binning.
    #[error("all binned counts fall below the density threshold")]
    SparsePoints,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (image, csv, config).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
