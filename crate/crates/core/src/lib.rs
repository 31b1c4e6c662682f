//! Seed-point detection for clumped convex objects and scatter-point
//! clusters by SALR (short-range attractive, long-range repulsive)
//! particle clustering.
//!
//! Particles confined to a data-derived potential well interact through a
//! short-range attractive, long-range repulsive pair potential; damped
//! dynamics drive them into one cluster per convex sub-object, and the
//! cluster centers are the seed points.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`];
//! the aliases below fix the common concrete choices.

pub mod cluster;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod particles;
pub mod pipeline;
pub mod plot;
pub mod potential;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{real, Real};

/// Double-precision scalar field (the pipeline default).
pub type Field64 = field::ScalarField<f64>;
/// Single-precision scalar field for memory-bound grids.
pub type Field32 = field::ScalarField<f32>;
/// Double-precision particle system.
pub type Particles64 = particles::ParticleSystem<f64>;
/// Double-precision pipeline configuration.
pub type Config64 = pipeline::PipelineConfig<f64>;
/// Double-precision detection result.
pub type Detection64 = pipeline::DetectionResult<f64>;
