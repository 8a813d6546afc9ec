//! Temporal score rescaling for diffusion and flow samplers.
//!
//! Multiplying the score of a noisy marginal by a time-dependent factor
//! `r_t(k, sigma)` steers a sampler toward a locally temperature-scaled
//! target: every mode of a well-separated mixture keeps its mean and weight
//! while its variance shrinks by `k`. This crate provides the schedules,
//! closed-form score fields, rescaling policies, reference samplers, metrics
//! and theory checks needed to verify that behaviour exactly.

pub mod error;
pub mod metrics;
pub mod rescale;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod scorefield;
pub mod theory;

pub use error::{Error, Result};
pub use metrics::{assign_modes, grid_coverage, wasserstein1, Coverage, ModeStats, ModeSummary};
pub use rescale::{tsr_factor, RescalePolicy};
pub use sampler::{run, Integrator, SampleBatch, SampleMeta, SamplerConfig, SamplerKind};
pub use schedule::{NoiseLevel, Schedule, ScheduleKind};
pub use scorefield::{
    CellGrid, ClassConditional, EmpiricalField, GaussianMixture, MixtureGeometry, MixtureSpec, ScoreField,
    TemperedMixture,
};
pub use theory::BoundReport;
