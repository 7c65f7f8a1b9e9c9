//! Parameter identification for generalized Maxwell materials from
//! relaxation experiments.
//!
//! * [`rheology`]: closed-form strain, inelastic strain and stress of a
//!   spring in parallel with Maxwell elements under ramp-and-hold loading,
//!   plus the analytic parameter Jacobian.
//! * [`oracle`]: an independent time-stepping reference for the same model.
//! * [`synth`]: synthetic datasets, noise injection, truncation, file I/O.
//! * [`optimize`]: multi-start, bound-constrained, optionally regularized
//!   Levenberg-Marquardt fitting with a fixed element budget.
//! * [`cluster`]: decade clustering that reduces the budget to the
//!   recovered element count.
//! * [`experiments`]: reproducible studies, reports and SVG plots.

pub mod cluster;
pub mod error;
pub mod experiments;
pub mod optimize;
pub mod oracle;
pub mod rheology;
pub mod synth;

pub use error::{Error, Result};
pub use rheology::{LoadingProgram, MaterialModel, MaxwellElement, TimeGrid};
pub use synth::StressDataset;
