//! Particle-based solver for Wasserstein gradient flows with an implicit
//! trapezoidal time discretization, first-order baselines, stability
//! diagnostics, closed-form error-bound calculators, and a time-step
//! convergence laboratory.

pub mod bounds;
pub mod convergence;
pub mod diagnostics;
pub mod energy;
pub mod ensemble;
pub mod error;
pub mod rng;
pub mod stepper;

pub use energy::{EnergySpec, GradientField, RadialPotential, ScalarField1D};
pub use ensemble::ParticleEnsemble;
pub use error::{Result, WgError};
pub use stepper::{InnerConfig, InnerKind, SchemeConfig, SchemeKind, StepResult, TrajectoryRecord};

/// Formats a float with 17 significant digits, the fixed width used by every
/// CSV emitted by this crate. Byte-stable for identical inputs.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}
