//! Closed-form 2D class-conditional flow generator.
//!
//! Each class is an isotropic Gaussian `N(m, s² I)` reached from `N(0, I)`
//! along the linear interpolant, so the marginal velocity field is known
//! exactly. Guidance composes the class field with a moment-matched
//! unconditional field. The generator speaks the adapter protocol and encodes
//! samples as PNGs (layout in [`codec`]), so the whole evaluation pipeline can
//! run without neural networks.

pub mod adapter;
pub mod codec;
mod field;
pub mod reference;
mod sampler;

pub use field::{cfg_velocity, conditional_velocity, Point, Target, ToyClassSpec, ToyModel};
pub use sampler::{
    analytic_frechet, empirical_stats, euler_sample, initial_noise, integrate, nfe_per_sample,
    points_to_matrix, sample_rng,
};
