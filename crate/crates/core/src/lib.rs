//! Patch-group image denoising with an external Gaussian-mixture prior guiding
//! per-image orthogonal dictionary learning.
//!
//! The crate is `no_std` (it needs `alloc`). Enable `std` for runtime CPU
//! feature detection in the matrix kernels, and `parallel` to spread block
//! matching, EM and per-cluster learning over a rayon pool. Results do not
//! depend on which features are enabled.
//!
//! Pipeline overview:
//!
//! 1. [`patch::extract_patch_groups`] block-matches every reference patch and
//!    subtracts the group mean.
//! 2. [`prior::train_gmm`] fits a zero-mean mixture over clean groups; each
//!    component carries the eigenbasis of its covariance.
//! 3. [`denoise::denoise`] assigns noisy groups to components by MAP score,
//!    learns a hybrid dictionary per cluster
//!    ([`dictionary::learn_hybrid_dictionary`]) and aggregates the shrunk
//!    reconstructions.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod config;
pub mod denoise;
pub mod dictionary;
pub mod error;
pub mod image;
mod linalg;
mod math;
pub mod metrics;
mod par;
pub mod patch;
pub mod prior;
mod rng;

pub use config::DenoiseConfig;
pub use denoise::{denoise, denoise_with, reconstruct_patch};
pub use dictionary::{
    build_lambda, learn_hybrid_dictionary, update_internal_dict, weighted_soft_threshold,
    HybridDictionary, SparseCodes,
};
pub use error::{Error, Result};
pub use image::Image;
pub use metrics::{psnr, ssim, QualityReport};
pub use patch::{aggregate, extract_patch_groups, PatchGroup};
pub use prior::{
    eigendecompose, log_group_likelihood, map_assign, train_gmm, EmOptions, GmmComponent, GmmPrior,
};

pub use nalgebra::{DMatrix, DVector};
