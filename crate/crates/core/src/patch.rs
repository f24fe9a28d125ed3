//! Block matching into patch groups, and aggregation of patches back onto
//! the pixel grid.
//!
//! A patch vector holds the R plane of the `p x p` patch in row-major order,
//! then the G plane, then the B plane.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::config::DenoiseConfig;
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::par;

/// `M` similar patches with their group mean removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    /// `3p² x M` matrix, one mean-subtracted patch per column.
    pub members: DMatrix<f64>,
    /// Group mean μ of the raw patches.
    pub mean: DVector<f64>,
    /// Top-left `(row, col)` of each member.
    pub coords: Vec<(usize, usize)>,
    /// Squared distance of each member to the reference patch (ascending).
    pub distances: Vec<f64>,
    /// Column of the seed patch among `members`.
    pub reference_index: usize,
}

impl PatchGroup {
    /// Groups raw (not yet centred) patch columns, subtracting their mean.
    pub fn from_patches(
        mut patches: DMatrix<f64>,
        coords: Vec<(usize, usize)>,
        distances: Vec<f64>,
        reference_index: usize,
    ) -> Self {
        let n = patches.ncols().max(1) as f64;
        let mean = patches.column_sum() / n;
        for mut col in patches.column_iter_mut() {
            col -= &mean;
        }
        PatchGroup {
            members: patches,
            mean,
            coords,
            distances,
            reference_index,
        }
    }

    pub fn len(&self) -> usize {
        self.members.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.members.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    /// Same geometry and mean, new (mean-subtracted) member columns.
    pub fn with_members(&self, members: DMatrix<f64>) -> Self {
        PatchGroup {
            members,
            mean: self.mean.clone(),
            coords: self.coords.clone(),
            distances: self.distances.clone(),
            reference_index: self.reference_index,
        }
    }
}

/// Top-left corners on a `stride` grid, plus the last valid row/column so
/// that every pixel is covered.
pub fn reference_positions(
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
) -> Vec<(usize, usize)> {
    let rows = grid(height, patch, stride);
    let cols = grid(width, patch, stride);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push((r, c));
        }
    }
    out
}

fn grid(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    if extent < patch {
        return Vec::new();
    }
    let last = extent - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if v.last() != Some(&last) {
        v.push(last);
    }
    v
}

/// Raw patch vector with top-left corner `(row, col)`.
pub fn patch_vector(img: &Image, row: usize, col: usize, patch: usize) -> DVector<f64> {
    let mut v = DVector::zeros(CHANNELS * patch * patch);
    let mut k = 0;
    for ch in 0..CHANNELS {
        for i in 0..patch {
            for j in 0..patch {
                v[k] = img.get(row + i, col + j, ch);
                k += 1;
            }
        }
    }
    v
}

fn check_geometry(img: &Image, cfg: &DenoiseConfig) -> Result<()> {
    cfg.validate()?;
    let p = cfg.patch_size;
    if img.height() < p || img.width() < p {
        return Err(Error::Dimension(format!(
            "image is {}x{} but the patch size is {p}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// Block-matches every reference position of the `stride` grid.
pub fn extract_patch_groups(img: &Image, cfg: &DenoiseConfig) -> Result<Vec<PatchGroup>> {
    check_geometry(img, cfg)?;
    let positions = reference_positions(img.height(), img.width(), cfg.patch_size, cfg.stride);
    extract_patch_groups_at(img, cfg, &positions)
}

/// Block-matches the given reference positions only.
pub fn extract_patch_groups_at(
    img: &Image,
    cfg: &DenoiseConfig,
    positions: &[(usize, usize)],
) -> Result<Vec<PatchGroup>> {
    check_geometry(img, cfg)?;
    let p = cfg.patch_size;
    let (h, w) = (img.height(), img.width());
    if let Some(&(r, c)) = positions.iter().find(|&&(r, c)| r + p > h || c + p > w) {
        return Err(Error::Dimension(format!(
            "reference patch at ({r}, {c}) does not fit in a {h}x{w} image"
        )));
    }
    let matcher = BlockMatcher::new(img, cfg);
    par::map(positions, |&(r, c)| matcher.group(r, c))
        .into_iter()
        .collect()
}

struct BlockMatcher {
    planes: [Vec<f64>; CHANNELS],
    height: usize,
    width: usize,
    patch: usize,
    group: usize,
    half_window: usize,
}

impl BlockMatcher {
    fn new(img: &Image, cfg: &DenoiseConfig) -> Self {
        BlockMatcher {
            planes: img.planes(),
            height: img.height(),
            width: img.width(),
            patch: cfg.patch_size,
            group: cfg.group_size,
            half_window: cfg.window / 2,
        }
    }

    fn distance(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        let mut acc = 0.0;
        for plane in &self.planes {
            for i in 0..self.patch {
                let ra = &plane[(a.0 + i) * self.width + a.1..][..self.patch];
                let rb = &plane[(b.0 + i) * self.width + b.1..][..self.patch];
                for (x, y) in ra.iter().zip(rb) {
                    let d = x - y;
                    acc += d * d;
                }
            }
        }
        acc
    }

    fn group(&self, row: usize, col: usize) -> Result<PatchGroup> {
        let p = self.patch;
        let r0 = row.saturating_sub(self.half_window);
        let r1 = (row + self.half_window).min(self.height - p);
        let c0 = col.saturating_sub(self.half_window);
        let c1 = (col + self.half_window).min(self.width - p);

        let mut candidates = Vec::with_capacity((r1 - r0 + 1) * (c1 - c0 + 1));
        for r in r0..=r1 {
            for c in c0..=c1 {
                candidates.push((self.distance((row, col), (r, c)), r, c));
            }
        }
        if candidates.len() < self.group {
            return Err(Error::Dimension(format!(
                "search window around ({row}, {col}) holds {} patches, fewer than the group size {}",
                candidates.len(),
                self.group
            )));
        }
        let by_key = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        if candidates.len() > self.group {
            candidates.select_nth_unstable_by(self.group - 1, by_key);
            candidates.truncate(self.group);
        }
        candidates.sort_unstable_by(by_key);

        let dim = CHANNELS * p * p;
        let mut patches = DMatrix::zeros(dim, self.group);
        for (m, &(_, r, c)) in candidates.iter().enumerate() {
            let mut col_view = patches.column_mut(m);
            let mut k = 0;
            for plane in &self.planes {
                for i in 0..p {
                    let src = &plane[(r + i) * self.width + c..][..p];
                    for &v in src {
                        col_view[k] = v;
                        k += 1;
                    }
                }
            }
        }
        let reference_index = candidates
            .iter()
            .position(|&(_, r, c)| (r, c) == (row, col))
            .unwrap_or(0);
        Ok(PatchGroup::from_patches(
            patches,
            candidates.iter().map(|&(_, r, c)| (r, c)).collect(),
            candidates.iter().map(|&(d, _, _)| d).collect(),
            reference_index,
        ))
    }
}

/// Averages every member patch (member + group mean) onto an `height x width`
/// canvas with uniform weights. Accumulation runs in group order, then
/// member order.
pub fn aggregate(groups: &[PatchGroup], height: usize, width: usize) -> Result<Image> {
    let mut sum = vec![0.0; height * width * CHANNELS];
    let mut hits = vec![0u32; height * width];
    let mut patch_side = None;
    for (g, group) in groups.iter().enumerate() {
        let dim = group.dim();
        let p = side_from_dim(dim).ok_or_else(|| {
            Error::Dimension(format!(
                "group {g} has patch dimension {dim}, not of the form 3p²"
            ))
        })?;
        if *patch_side.get_or_insert(p) != p {
            return Err(Error::Dimension(format!(
                "group {g} has patch side {p}, others differ"
            )));
        }
        if group.mean.len() != dim || group.coords.len() != group.len() {
            return Err(Error::Dimension(format!(
                "group {g} is internally inconsistent"
            )));
        }
        for (m, &(row, col)) in group.coords.iter().enumerate() {
            if row + p > height || col + p > width {
                return Err(Error::Dimension(format!(
                    "patch at ({row}, {col}) does not fit in a {height}x{width} canvas"
                )));
            }
            let member = group.members.column(m);
            for i in 0..p {
                for j in 0..p {
                    let px = (row + i) * width + col + j;
                    hits[px] += 1;
                    for ch in 0..CHANNELS {
                        let k = ch * p * p + i * p + j;
                        sum[px * CHANNELS + ch] += member[k] + group.mean[k];
                    }
                }
            }
        }
    }
    if let Some(px) = hits.iter().position(|&n| n == 0) {
        return Err(Error::Coverage {
            row: px / width.max(1),
            col: px % width.max(1),
        });
    }
    for (px, &n) in hits.iter().enumerate() {
        let inv = n as f64;
        for ch in 0..CHANNELS {
            sum[px * CHANNELS + ch] /= inv;
        }
    }
    Image::from_vec(height, width, sum)
}

pub(crate) fn side_from_dim(dim: usize) -> Option<usize> {
    if dim == 0 || !dim.is_multiple_of(CHANNELS) {
        return None;
    }
    let sq = dim / CHANNELS;
    let p = (0..=sq).find(|&p| p * p >= sq)?;
    (p * p == sq).then_some(p)
}
