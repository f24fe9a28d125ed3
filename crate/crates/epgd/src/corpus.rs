//! Collects mean-subtracted patch groups from a set of clean training images.

use std::path::{Path, PathBuf};

use epgd_core::patch::{extract_patch_groups_at, reference_positions};
use epgd_core::{DenoiseConfig, Image, PatchGroup};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::io::{load_image, ImageIoError};

/// PNG/PPM files directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension()
                        .and_then(|e| e.to_str())
                        .map(str::to_ascii_lowercase)
                        .as_deref(),
                    Some("png" | "ppm" | "pnm")
                )
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn load_images(paths: &[PathBuf]) -> Result<Vec<Image>, ImageIoError> {
    paths.iter().map(load_image).collect()
}

/// Block-matches reference patches on the `cfg.stride` grid of every image.
/// With `max_groups`, a seeded uniform sample of that many references is
/// taken across the whole corpus (kept in image, then raster, order).
pub fn training_groups(
    images: &[Image],
    cfg: &DenoiseConfig,
    max_groups: Option<usize>,
    seed: u64,
) -> epgd_core::Result<Vec<PatchGroup>> {
    let per_image: Vec<Vec<(usize, usize)>> = images
        .iter()
        .map(|img| reference_positions(img.height(), img.width(), cfg.patch_size, cfg.stride))
        .collect();
    let total: usize = per_image.iter().map(Vec::len).sum();
    let mut keep: Option<Vec<usize>> = None;
    if let Some(cap) = max_groups {
        if cap < total {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, total, cap).into_vec();
            picked.sort_unstable();
            keep = Some(picked);
        }
    }

    let mut groups = Vec::new();
    let mut offset = 0;
    let mut cursor = 0;
    for (img, positions) in images.iter().zip(&per_image) {
        let selected: Vec<(usize, usize)> = match &keep {
            None => positions.clone(),
            Some(picked) => {
                let mut sel = Vec::new();
                while cursor < picked.len() && picked[cursor] < offset + positions.len() {
                    sel.push(positions[picked[cursor] - offset]);
                    cursor += 1;
                }
                sel
            }
        };
        offset += positions.len();
        if !selected.is_empty() {
            groups.extend(extract_patch_groups_at(img, cfg, &selected)?);
        }
    }
    Ok(groups)
}
