//! Particle samplers driven by kernelized Wasserstein gradient flows.
//!
//! The crate provides SVGD with a median-bandwidth RBF kernel, LAWGD with a
//! spectral kernel assembled from the eigendecomposition of the Langevin
//! generator, grid solvers for the chi-squared and LAWGD density flows, and
//! the divergence diagnostics used to check their convergence rates.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod basis_io;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod flows;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod particles;
pub mod presets;
pub mod spectral;
pub mod target;

pub use config::{parse_config, ExperimentConfig, Method};
pub use diagnostics::{DecayFit, DivergenceReport};
pub use error::{Error, Result};
pub use experiment::{run_experiment, RunManifest};
pub use flows::{FlowKind, FlowRecord};
pub use grid::{Grid, Grid1D, Grid2D, GridFunction, VectorGridFunction};
pub use kernels::Kernel;
pub use particles::{ParticleEnsemble, RunRecord, StepSchedule};
pub use spectral::{GridBasis, HermiteBasis, SpectralBasis};
pub use target::{GaussianMixtureSpec, GridDensity, TargetDistribution};
