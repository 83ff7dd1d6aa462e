//! Moderately interacting particles driven by Hölder (fractional Brownian)
//! noise, the compressible Euler system with pressure `rho^2 / 2` that they
//! approach, and the tooling to measure the gap.
//!
//! Numerical types are generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the scalar.
//!
//! ```
//! use holderflow::{sample_fbm, NoiseSpec};
//!
//! let path = sample_fbm(&NoiseSpec { hurst: 0.75, dim: 1, horizon: 1.0, steps: 256, seed: 7 }).unwrap();
//! assert_eq!(path.steps(), 256);
//! assert_eq!(path.at(0, 0), 0.0);
//! ```

// `!(x > 0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exact;
pub mod real;
pub mod spectral;
pub mod noise;
pub mod stats;
pub mod young;
pub mod kernel;
pub mod field;
pub mod particles;
pub mod fluid;
pub mod lp;
pub mod config;
pub mod lab;
pub mod selfcheck;

pub use config::{BackendChoice, ExperimentConfig, InitChoice, SigmaChoice};
pub use error::{Error, Result};
pub use exact::ExactSum;
pub use field::{Field, VectorField};
pub use fluid::{FluidSolver, FluidState};
pub use kernel::{BaseDensity, KernelFamily};
pub use lp::{DyadicPartition, NormKind};
pub use noise::{sample_fbm, FbmMethod, NoiseSpec, SampledPath};
pub use particles::{ForceBackend, InitStrategy, ParticleEnsemble, ParticleStepper, SigmaField};
pub use real::Real;
pub use spectral::{Grid, Spectral};
pub use young::{IntegrandPath, Tag};

pub type SampledPath64 = SampledPath<f64>;
pub type SampledPath32 = SampledPath<f32>;
pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type Field64 = Field<f64>;
pub type Field32 = Field<f32>;
pub type VectorField64 = VectorField<f64>;
pub type VectorField32 = VectorField<f32>;
pub type KernelFamily64 = KernelFamily<f64>;
pub type KernelFamily32 = KernelFamily<f32>;
pub type ParticleEnsemble64 = ParticleEnsemble<f64>;
pub type ParticleEnsemble32 = ParticleEnsemble<f32>;
pub type FluidState64 = FluidState<f64>;
pub type FluidState32 = FluidState<f32>;
pub type FluidSolver64 = FluidSolver<f64>;
pub type FluidSolver32 = FluidSolver<f32>;
