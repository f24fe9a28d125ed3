//! Tunables shared by extraction, dictionary learning and the denoising loop.

use alloc::format;

use crate::error::{Error, Result};

/// All parameters of the denoiser. `Default` gives the reference settings:
/// 6x6 patches, groups of 10 in a 31x31 window, 54 external atoms,
/// λ = 0.001, two dictionary iterations and four outer iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    /// Patch side `p`; patch vectors have `3p²` entries.
    pub patch_size: usize,
    /// Patches per group `M`, including the reference patch.
    pub group_size: usize,
    /// Side `W` of the block-matching window (odd).
    pub window: usize,
    /// Mixture size `K` used when training a prior.
    pub components: usize,
    /// Number `r` of leading eigenvectors kept frozen in every dictionary.
    pub external_atoms: usize,
    /// Sparsity weight λ, expressed for intensities on the unit scale.
    pub lambda: f64,
    /// Offset ε in the per-atom weight denominator.
    pub eps: f64,
    /// Alternations `T` of coding and internal-dictionary update.
    pub dict_iters: usize,
    /// Outer iterations of extract, cluster, learn, aggregate.
    pub iterations: usize,
    /// Reference-patch grid step.
    pub stride: usize,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            patch_size: 6,
            group_size: 10,
            window: 31,
            components: 32,
            external_atoms: 54,
            lambda: 0.001,
            eps: 1e-6,
            dict_iters: 2,
            iterations: 4,
            stride: 3,
            seed: 0,
        }
    }
}

impl DenoiseConfig {
    /// Length `3p²` of a patch vector.
    pub fn dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.patch_size == 0 {
            return bad("patch size must be at least 1".into());
        }
        if self.group_size == 0 {
            return bad("group size must be at least 1".into());
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return bad(format!("search window must be odd, got {}", self.window));
        }
        if self.components == 0 {
            return bad("mixture size must be at least 1".into());
        }
        if self.external_atoms > self.dim() {
            return bad(format!(
                "external atom count {} exceeds patch dimension {}",
                self.external_atoms,
                self.dim()
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be finite and positive, got {}", self.eps));
        }
        if self.iterations == 0 {
            return bad("at least one denoising iteration is required".into());
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return bad(format!(
                "stride must lie in [1, {}], got {}",
                self.patch_size, self.stride
            ));
        }
        Ok(())
    }
}
