//! Simulator for crosspoint resistive-memory feedback circuits that solve `A x = b`.
//!
//! The pipeline is: build or program a matrix ([`device`], [`generators`]),
//! form the feedback system and integrate it ([`dynamics`]), then compare
//! against the direct solution, the analytic time bound and CG
//! ([`spectral`], [`baseline`]). [`experiment`] runs whole scenarios.

pub mod baseline;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod generators;
mod linalg;
pub mod scaling;
pub mod spectral;

pub use baseline::{conjugate_gradient, CgResult};
pub use device::{
    build_level_set, program, program_on_levels, read_effective, ConductanceMatrix, DevicePolicy,
    LevelSet, NoiseRule,
};
pub use dynamics::{
    analytic_trajectory, build_feedback, invert_matrix, resolve_step, simulate, slew_check,
    stability_report, time_bound, AlphaRule, Circuit, FeedbackSystem, NormKind, OpAmpModel,
    SolveConfig, SolveResult, StabilityReport,
};
pub use error::{Error, Result};
pub use generators::{
    covariance_matrix, random_discrete_pd, random_vector, sparse_pd, CovarianceSpec,
    DiscretePdSpec, SparsePdSpec,
};
pub use linalg::{is_symmetric, CsrMatrix};
pub use scaling::{fit_scaling, ModelKind, ScalingFit};
pub use spectral::{a_norm, direct_solve, spectral_report, SpectralReport};
