//! The outer denoising loop: extract groups from the current estimate,
//! assign them to mixture components, learn one hybrid dictionary per
//! non-empty cluster, rebuild every patch and aggregate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::config::DenoiseConfig;
use crate::dictionary::{learn_hybrid_dictionary, HybridDictionary, LearnParams};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;
use crate::patch::{aggregate, extract_patch_groups, PatchGroup};
use crate::prior::{map_assign, GmmPrior};

/// Multiplier turning the configured λ (unit-intensity scale) into the
/// weight used on 8-bit-scale patches: thresholds scale with intensity and
/// `√S` does too, so λ scales with its square.
pub const LAMBDA_SCALE: f64 = 255.0 * 255.0;

/// `D α + μ`.
pub fn reconstruct_patch(
    dictionary: &HybridDictionary,
    code: &DVector<f64>,
    mean: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dim = dictionary.dim();
    if code.len() != dim || mean.len() != dim {
        return Err(Error::Dimension(format!(
            "dictionary has {dim} atoms, code has {} entries, mean has {}",
            code.len(),
            mean.len()
        )));
    }
    Ok(dictionary.matrix() * code + mean)
}

/// Denoises `img` with the default (silent) observer.
pub fn denoise(img: &Image, prior: &GmmPrior, cfg: &DenoiseConfig) -> Result<Image> {
    denoise_with(img, prior, cfg, |_, _| {})
}

/// Like [`denoise`], calling `observer(iteration, estimate)` after each outer
/// iteration (1-based).
pub fn denoise_with(
    img: &Image,
    prior: &GmmPrior,
    cfg: &DenoiseConfig,
    mut observer: impl FnMut(usize, &Image),
) -> Result<Image> {
    cfg.validate()?;
    if prior.patch_size() != cfg.patch_size {
        return Err(Error::Dimension(format!(
            "prior was trained on {0}x{0} patches but the config uses {1}x{1}",
            prior.patch_size(),
            cfg.patch_size
        )));
    }
    let mut estimate = img.clone();
    for ite in 1..=cfg.iterations {
        estimate = denoise_step(&estimate, prior, cfg, ite)?;
        observer(ite, &estimate);
    }
    Ok(estimate)
}

/// Cluster members of each component, in group order.
pub fn cluster_groups(groups: &[PatchGroup], prior: &GmmPrior) -> Result<Vec<Vec<usize>>> {
    let labels = par::map(groups, |g| map_assign(g, prior))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut clusters = vec![Vec::new(); prior.len()];
    for (g, &k) in labels.iter().enumerate() {
        clusters[k].push(g);
    }
    Ok(clusters)
}

fn denoise_step(
    estimate: &Image,
    prior: &GmmPrior,
    cfg: &DenoiseConfig,
    ite: usize,
) -> Result<Image> {
    let groups = extract_patch_groups(estimate, cfg)?;
    let clusters = cluster_groups(&groups, prior)?;
    let active: Vec<usize> = (0..clusters.len())
        .filter(|&k| !clusters[k].is_empty())
        .collect();

    let base = LearnParams::from(cfg);
    let learned = par::map(&active, |&k| -> Result<DMatrix<f64>> {
        let component = &prior.components()[k];
        let members: Vec<&PatchGroup> = clusters[k].iter().map(|&g| &groups[g]).collect();
        let params = LearnParams {
            lambda: cfg.lambda * LAMBDA_SCALE,
            seed: cluster_seed(cfg.seed, ite, k),
            ..base.clone()
        };
        let out = learn_hybrid_dictionary(
            &members,
            &component.eigenvectors,
            &component.eigenvalues,
            &params,
        )?;
        Ok(out.dictionary.matrix() * out.codes.matrix())
    });

    let mut rebuilt: Vec<Option<PatchGroup>> = vec![None; groups.len()];
    for (&k, recon) in active.iter().zip(learned) {
        let recon = recon?;
        let mut at = 0;
        for &g in &clusters[k] {
            let m = groups[g].len();
            rebuilt[g] = Some(groups[g].with_members(recon.columns(at, m).into_owned()));
            at += m;
        }
    }
    let rebuilt: Vec<PatchGroup> = rebuilt
        .into_iter()
        .map(|g| g.expect("every group belongs to exactly one cluster"))
        .collect();
    let out = aggregate(&rebuilt, estimate.height(), estimate.width())?;
    if out.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "iteration {ite} produced non-finite pixels"
        )));
    }
    Ok(out)
}

fn cluster_seed(seed: u64, ite: usize, k: usize) -> u64 {
    seed ^ ((ite as u64) << 32 | k as u64).wrapping_mul(0xd134_2543_de82_ef95)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::build_lambda;
    use crate::prior::{EmOptions, GmmComponent};
    use crate::rng::SeededRng;

    fn small_cfg() -> DenoiseConfig {
        DenoiseConfig {
            patch_size: 2,
            group_size: 4,
            window: 7,
            components: 2,
            external_atoms: 6,
            dict_iters: 2,
            iterations: 2,
            stride: 1,
            ..Default::default()
        }
    }

    fn textured(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = SeededRng::new(seed, 1);
        Image::from_fn(h, w, |r, c, ch| {
            100.0 + 40.0 * ((r + 2 * c + ch) % 5) as f64 + 10.0 * rng.symmetric()
        })
    }

    fn small_prior(cfg: &DenoiseConfig) -> GmmPrior {
        let groups = extract_patch_groups(&textured(24, 24, 3), cfg).unwrap();
        crate::prior::train_gmm(&groups, 2, &EmOptions::default())
            .unwrap()
            .prior
    }

    #[test]
    fn reconstruct_zero_code_is_mean() {
        let d =
            HybridDictionary::from_basis(&DMatrix::identity(3, 3), 1, DVector::zeros(3)).unwrap();
        let mu = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(reconstruct_patch(&d, &DVector::zeros(3), &mu).unwrap(), mu);
        assert!(reconstruct_patch(&d, &DVector::zeros(2), &mu).is_err());
    }

    #[test]
    fn reconstruct_with_zero_threshold_restores_patch() {
        let comp = GmmComponent::new(
            1.0,
            DMatrix::from_fn(3, 3, |i, j| if i == j { 3.0 } else { 1.0 }),
        )
        .unwrap();
        let d = HybridDictionary::from_basis(
            &comp.eigenvectors,
            2,
            build_lambda(&comp.eigenvalues, 0.0, 1e-6),
        )
        .unwrap();
        let y = DVector::from_vec(vec![4.0, -1.0, 2.5]);
        let mu = DVector::from_vec(vec![10.0, 20.0, 30.0]);
        let code = crate::dictionary::weighted_soft_threshold(&d.matrix(), &y, &d.thresholds);
        let back = reconstruct_patch(&d, &code, &mu).unwrap();
        assert!((back - (y + mu)).amax() < 1e-12);
    }

    #[test]
    fn zero_lambda_is_identity() {
        let cfg = DenoiseConfig {
            lambda: 0.0,
            ..small_cfg()
        };
        let prior = small_prior(&cfg);
        let img = textured(16, 18, 7);
        let out = denoise(&img, &prior, &cfg).unwrap();
        let worst = out
            .as_slice()
            .iter()
            .zip(img.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn deterministic_and_observed() {
        let cfg = DenoiseConfig {
            lambda: 0.01,
            ..small_cfg()
        };
        let prior = small_prior(&cfg);
        let img = textured(16, 16, 9);
        let mut seen = Vec::new();
        let a = denoise_with(&img, &prior, &cfg, |i, _| seen.push(i)).unwrap();
        let b = denoise(&img, &prior, &cfg).unwrap();
        assert_eq!(seen, vec![1, 2]);
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn clusters_partition_groups() {
        let cfg = small_cfg();
        let prior = small_prior(&cfg);
        let groups = extract_patch_groups(&textured(16, 16, 2), &cfg).unwrap();
        let clusters = cluster_groups(&groups, &prior).unwrap();
        let mut all: Vec<usize> = clusters.concat();
        all.sort_unstable();
        assert_eq!(all, (0..groups.len()).collect::<Vec<_>>());
    }

    #[test]
    fn prior_patch_size_mismatch() {
        let cfg = small_cfg();
        let prior = small_prior(&cfg);
        let other = DenoiseConfig {
            patch_size: 3,
            external_atoms: 0,
            stride: 1,
            ..cfg
        };
        assert!(matches!(
            denoise(&textured(16, 16, 1), &prior, &other),
            Err(Error::Dimension(_))
        ));
    }
}
