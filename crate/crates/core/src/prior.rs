//! Zero-mean Gaussian mixture over mean-subtracted patch groups.
//!
//! Every member of a group is scored under the same component, so a group's
//! log-density under component `k` is the sum of its members' log-densities.
//! Densities are evaluated through the eigenbasis `Σ_k = U_k S_k U_kᵀ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::par;
use crate::patch::{side_from_dim, PatchGroup};
use crate::rng::SeededRng;

/// Lower bound applied to covariance eigenvalues.
pub const EIGEN_FLOOR: f64 = 1e-6;
/// Ridge added to every covariance estimate (pixel² scale).
pub const COVARIANCE_RIDGE: f64 = 1e-3;

const SYMMETRY_TOL: f64 = 1e-9;
const CHUNK_GROUPS: usize = 256;
// Components whose total responsibility falls below this are given the
// pooled second moment instead of an undefined weighted average.
const MIN_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub covariance: DMatrix<f64>,
    /// Orthogonal; column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: DMatrix<f64>,
    /// Nonincreasing, floored at [`EIGEN_FLOOR`].
    pub eigenvalues: DVector<f64>,
}

impl GmmComponent {
    /// Builds a component and fills its eigenfactors.
    pub fn new(weight: f64, covariance: DMatrix<f64>) -> Result<Self> {
        let (eigenvalues, eigenvectors) = eigen_factors(&covariance)?;
        Ok(GmmComponent {
            weight,
            covariance,
            eigenvectors,
            eigenvalues,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|&s| math::ln(s)).sum()
    }

    /// `S^{-1/2} Uᵀ`: maps a vector to coordinates with unit variance.
    fn whitening(&self) -> DMatrix<f64> {
        let mut w = self.eigenvectors.transpose();
        for (j, mut row) in w.row_iter_mut().enumerate() {
            row /= math::sqrt(self.eigenvalues[j]);
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    patch_size: usize,
    components: Vec<GmmComponent>,
}

impl GmmPrior {
    /// Checks dimensions, weights (positive, summing to one within 1e-9),
    /// factor shapes and covariance symmetry.
    pub fn new(patch_size: usize, components: Vec<GmmComponent>) -> Result<Self> {
        let dim = 3 * patch_size * patch_size;
        if components.is_empty() {
            return Err(Error::InvalidInput(
                "a prior needs at least one component".into(),
            ));
        }
        for (k, c) in components.iter().enumerate() {
            let shapes_ok = c.covariance.shape() == (dim, dim)
                && c.eigenvectors.shape() == (dim, dim)
                && c.eigenvalues.len() == dim;
            if !shapes_ok {
                return Err(Error::Dimension(format!(
                    "component {k} does not match patch dimension {dim}"
                )));
            }
            check_symmetric(&c.covariance)?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "component {k} has non-positive weight {}",
                    c.weight
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(GmmPrior {
            patch_size,
            components,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

fn check_symmetric(covariance: &DMatrix<f64>) -> Result<()> {
    let scale = covariance.amax().max(1.0);
    let asym = (covariance - covariance.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::DataCorruption(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Eigenvalues (nonincreasing, floored) and sign-canonical eigenvectors of
/// a symmetric covariance.
pub fn eigen_factors(covariance: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, m) = covariance.shape();
    if n != m {
        return Err(Error::Dimension(format!(
            "covariance is {n}x{m}, not square"
        )));
    }
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::DataCorruption(
            "covariance has non-finite entries".into(),
        ));
    }
    check_symmetric(covariance)?;
    let (mut values, vectors) = linalg::symmetric_eigen_desc(covariance.clone());
    for v in values.iter_mut() {
        *v = v.max(EIGEN_FLOOR);
    }
    Ok((values, vectors))
}

/// Recomputes `U_k`, `S_k` for every component from its covariance.
pub fn eigendecompose(prior: GmmPrior) -> Result<GmmPrior> {
    let patch_size = prior.patch_size;
    let components = prior
        .components
        .into_iter()
        .map(|c| GmmComponent::new(c.weight, c.covariance))
        .collect::<Result<Vec<_>>>()?;
    GmmPrior::new(patch_size, components)
}

/// `Σ_m log N(x_m | 0, Σ)` over the member columns of `group`.
pub fn log_group_likelihood(group: &PatchGroup, component: &GmmComponent) -> Result<f64> {
    if group.dim() != component.dim() {
        return Err(Error::Dimension(format!(
            "group dimension {} does not match component dimension {}",
            group.dim(),
            component.dim()
        )));
    }
    let proj = component.eigenvectors.tr_mul(&group.members);
    let mut mahalanobis = 0.0;
    for (j, row) in proj.row_iter().enumerate() {
        mahalanobis += row.norm_squared() / component.eigenvalues[j];
    }
    Ok(gaussian_log_density(
        mahalanobis,
        group.len(),
        component.dim(),
        component.log_det(),
    ))
}

fn gaussian_log_density(mahalanobis: f64, members: usize, dim: usize, log_det: f64) -> f64 {
    -0.5 * (mahalanobis + members as f64 * (log_det + dim as f64 * math::LN_2PI))
}

/// `log π_k + log p(group | k)` for every component.
pub fn log_scores(group: &PatchGroup, prior: &GmmPrior) -> Result<Vec<f64>> {
    prior
        .components
        .iter()
        .map(|c| Ok(math::ln(c.weight) + log_group_likelihood(group, c)?))
        .collect()
}

/// Index of the component with the highest posterior; ties go to the lower
/// index.
pub fn map_assign(group: &PatchGroup, prior: &GmmPrior) -> Result<usize> {
    Ok(argmax(&log_scores(group, prior)?))
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once the log-likelihood gain is below this fraction of its
    /// magnitude.
    pub rel_tol: f64,
    /// Ridge δ added to each covariance.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 100,
            rel_tol: 1e-4,
            ridge: COVARIANCE_RIDGE,
            seed: 0,
        }
    }
}

/// A trained prior and the log-likelihood after each EM iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub prior: GmmPrior,
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl GmmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Fits a `k`-component zero-mean mixture by EM.
///
/// Responsibilities start random (from `opts.seed`). The M-step sets
/// `π_k` to the mean responsibility and `Σ_k` to the responsibility-weighted
/// second moment of the member vectors plus `δI`. Components come back
/// sorted by decreasing weight.
pub fn train_gmm(groups: &[PatchGroup], k: usize, opts: &EmOptions) -> Result<GmmFit> {
    let data = TrainingData::new(groups)?;
    if k == 0 {
        return Err(Error::InvalidInput(
            "mixture size must be at least 1".into(),
        ));
    }
    if k > data.groups {
        return Err(Error::DegenerateCluster(format!(
            "{k} components requested but only {} patch groups available",
            data.groups
        )));
    }
    if data.groups * data.members <= data.dim {
        return Err(Error::DegenerateCluster(format!(
            "{} patches cannot support a {}-dimensional covariance",
            data.groups * data.members,
            data.dim
        )));
    }
    let pooled = data.pooled_second_moment();
    if pooled.trace() == 0.0 {
        return Err(Error::DegenerateCluster(
            "all patch groups are zero after mean subtraction (flat training images?)".into(),
        ));
    }

    let mut rng = SeededRng::new(opts.seed, 0x454d);
    let mut resp: Vec<f64> = (0..data.groups * k)
        .map(|_| rng.next_f64() + f64::EPSILON)
        .collect();
    for row in resp.chunks_exact_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|r| *r /= s);
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut components;
    loop {
        components = data.m_step(&resp, k, opts.ridge, &pooled)?;
        let ll = data.e_step(&components, &mut resp);
        if !ll.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "log-likelihood became {ll} at EM iteration {}",
                trace.len()
            )));
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if ll - prev < opts.rel_tol * prev.abs() {
                converged = true;
            }
        }
        trace.push(ll);
        if converged || trace.len() >= opts.max_iters {
            break;
        }
    }

    components.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    Ok(GmmFit {
        prior: GmmPrior::new(data.patch_size, components)?,
        log_likelihood: trace,
        converged,
    })
}

struct TrainingData {
    /// Member columns packed `CHUNK_GROUPS` groups at a time.
    chunks: Vec<DMatrix<f64>>,
    groups: usize,
    members: usize,
    dim: usize,
    patch_size: usize,
}

impl TrainingData {
    fn new(groups: &[PatchGroup]) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::DegenerateCluster("no patch groups to train on".into()))?;
        let (dim, members) = first.members.shape();
        let patch_size = side_from_dim(dim)
            .ok_or_else(|| Error::Dimension(format!("patch dimension {dim} is not 3p²")))?;
        if members == 0 {
            return Err(Error::DegenerateCluster("patch groups are empty".into()));
        }
        if let Some(i) = groups
            .iter()
            .position(|g| g.members.shape() != (dim, members))
        {
            return Err(Error::Dimension(format!(
                "group {i} is {:?}, expected {dim}x{members}",
                groups[i].members.shape()
            )));
        }
        if groups
            .iter()
            .any(|g| g.members.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidInput(
                "training groups contain non-finite values".into(),
            ));
        }
        let chunks = groups
            .chunks(CHUNK_GROUPS)
            .map(|chunk| {
                let mut m = DMatrix::zeros(dim, chunk.len() * members);
                for (i, g) in chunk.iter().enumerate() {
                    m.columns_mut(i * members, members).copy_from(&g.members);
                }
                m
            })
            .collect();
        Ok(TrainingData {
            chunks,
            groups: groups.len(),
            members,
            dim,
            patch_size,
        })
    }

    fn pooled_second_moment(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for x in &self.chunks {
            acc.gemm(1.0, x, &x.transpose(), 1.0);
        }
        acc /= (self.groups * self.members) as f64;
        symmetrize(acc)
    }

    fn m_step(
        &self,
        resp: &[f64],
        k: usize,
        ridge: f64,
        pooled: &DMatrix<f64>,
    ) -> Result<Vec<GmmComponent>> {
        let masses: Vec<f64> = (0..k)
            .map(|c| resp.chunks_exact(k).map(|row| row[c]).sum::<f64>())
            .collect();
        let eff: Vec<f64> = masses.iter().map(|&m| m.max(MIN_MASS)).collect();
        let total: f64 = eff.iter().sum();

        let covariances = par::map_range(k, |c| {
            if masses[c] < MIN_MASS {
                return pooled.clone();
            }
            let mut acc = DMatrix::zeros(self.dim, self.dim);
            for (ci, x) in self.chunks.iter().enumerate() {
                let first = ci * CHUNK_GROUPS;
                let n_groups = x.ncols() / self.members;
                let picked: Vec<usize> = (0..n_groups)
                    .filter(|&g| resp[(first + g) * k + c] > 0.0)
                    .collect();
                if picked.is_empty() {
                    continue;
                }
                let mut xs = DMatrix::zeros(self.dim, picked.len() * self.members);
                for (j, &g) in picked.iter().enumerate() {
                    let w = math::sqrt(resp[(first + g) * k + c]);
                    let src = x.columns(g * self.members, self.members);
                    xs.columns_mut(j * self.members, self.members)
                        .zip_apply(&src, |d, s| *d = s * w);
                }
                acc.gemm(1.0, &xs, &xs.transpose(), 1.0);
            }
            acc /= masses[c] * self.members as f64;
            symmetrize(acc)
        });

        covariances
            .into_iter()
            .enumerate()
            .map(|(c, mut cov)| {
                for i in 0..self.dim {
                    cov[(i, i)] += ridge;
                }
                GmmComponent::new(eff[c] / total, cov)
            })
            .collect()
    }

    /// Fills `resp` with posterior responsibilities and returns the total
    /// log-likelihood.
    fn e_step(&self, components: &[GmmComponent], resp: &mut [f64]) -> f64 {
        let k = components.len();
        let whitening: Vec<DMatrix<f64>> = components.iter().map(GmmComponent::whitening).collect();
        let offsets: Vec<f64> = components
            .iter()
            .map(|c| {
                math::ln(c.weight) + gaussian_log_density(0.0, self.members, self.dim, c.log_det())
            })
            .collect();

        let scores: Vec<Vec<f64>> = par::map(&self.chunks, |x| {
            let n_groups = x.ncols() / self.members;
            let mut out = vec![0.0; n_groups * k];
            let mut z = DMatrix::zeros(self.dim, x.ncols());
            for c in 0..k {
                z.gemm(1.0, &whitening[c], x, 0.0);
                for g in 0..n_groups {
                    let maha: f64 = z
                        .columns(g * self.members, self.members)
                        .iter()
                        .map(|v| v * v)
                        .sum();
                    out[g * k + c] = offsets[c] - 0.5 * maha;
                }
            }
            out
        });

        let mut total = 0.0;
        for (row, score) in resp
            .chunks_exact_mut(k)
            .zip(scores.iter().flat_map(|s| s.chunks_exact(k)))
        {
            let max = score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (r, &s) in row.iter_mut().zip(score) {
                *r = math::exp(s - max);
                sum += *r;
            }
            row.iter_mut().for_each(|r| *r /= sum);
            total += max + math::ln(sum);
        }
        total
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn group(cols: &[&[f64]]) -> PatchGroup {
        let dim = cols[0].len();
        let m = DMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i]);
        PatchGroup {
            members: m,
            mean: DVector::zeros(dim),
            coords: vec![(0, 0); cols.len()],
            distances: vec![0.0; cols.len()],
            reference_index: 0,
        }
    }

    #[test]
    fn standard_normal_at_origin() {
        let comp = GmmComponent::new(1.0, DMatrix::identity(2, 2)).unwrap();
        let ll = log_group_likelihood(&group(&[&[0.0, 0.0]]), &comp).unwrap();
        assert!((ll + math::LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn duplicating_members_doubles_likelihood() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let comp = GmmComponent::new(1.0, cov).unwrap();
        let a = log_group_likelihood(&group(&[&[1.0, -0.5], &[0.2, 0.7]]), &comp).unwrap();
        let b = log_group_likelihood(
            &group(&[&[1.0, -0.5], &[0.2, 0.7], &[1.0, -0.5], &[0.2, 0.7]]),
            &comp,
        )
        .unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let comp = GmmComponent::new(1.0, DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            log_group_likelihood(&group(&[&[0.0, 0.0]]), &comp),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn eigen_factors_of_identity_and_diagonal() {
        let (s, u) = eigen_factors(&DMatrix::identity(3, 3)).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((u.tr_mul(&u) - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
        let (s, u) = eigen_factors(&DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(s.as_slice(), &[4.0, 1.0]);
        assert_eq!(u, DMatrix::identity(2, 2));
    }

    #[test]
    fn eigen_floor_and_asymmetry() {
        let (s, _) = eigen_factors(&DMatrix::zeros(2, 2)).unwrap();
        assert!(s.iter().all(|&v| v == EIGEN_FLOOR));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eigen_factors(&bad), Err(Error::DataCorruption(_))));
    }

    #[test]
    fn single_component_map_is_zero_and_ties_go_low() {
        let comp = GmmComponent::new(1.0, DMatrix::identity(12, 12)).unwrap();
        let prior = GmmPrior::new(2, vec![comp.clone()]).unwrap();
        let g = group(&[&[1.0; 12]]);
        assert_eq!(map_assign(&g, &prior).unwrap(), 0);
        let twin = GmmComponent {
            weight: 0.5,
            ..comp
        };
        let prior = GmmPrior::new(2, vec![twin.clone(), twin]).unwrap();
        assert_eq!(map_assign(&g, &prior).unwrap(), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn prior_rejects_bad_weights() {
        let comp = GmmComponent::new(0.7, DMatrix::identity(3, 3)).unwrap();
        assert!(GmmPrior::new(1, vec![comp.clone()]).is_err());
        let zero = GmmComponent {
            weight: 0.0,
            ..comp.clone()
        };
        let one = GmmComponent {
            weight: 1.0,
            ..comp
        };
        assert!(GmmPrior::new(1, vec![one, zero]).is_err());
    }

    #[test]
    fn k_one_is_regularized_second_moment() {
        let mut rng = SeededRng::new(9, 1);
        let groups: Vec<PatchGroup> = (0..40)
            .map(|_| {
                let m = DMatrix::from_fn(3, 4, |_, _| 10.0 * rng.symmetric());
                PatchGroup::from_patches(m, vec![(0, 0); 4], vec![0.0; 4], 0)
            })
            .collect();
        let fit = train_gmm(&groups, 1, &EmOptions::default()).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        for g in &groups {
            expected += &g.members * g.members.transpose();
        }
        expected /= 160.0;
        for i in 0..3 {
            expected[(i, i)] += COVARIANCE_RIDGE;
        }
        let c = &fit.prior.components()[0];
        assert_eq!(c.weight, 1.0);
        assert!((&c.covariance - &expected).amax() < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        let zero = PatchGroup::from_patches(DMatrix::zeros(3, 4), vec![(0, 0); 4], vec![0.0; 4], 0);
        let groups = vec![zero; 10];
        assert!(matches!(
            train_gmm(&groups, 2, &EmOptions::default()),
            Err(Error::DegenerateCluster(_))
        ));
        assert!(matches!(
            train_gmm(&groups[..1], 2, &EmOptions::default()),
            Err(Error::DegenerateCluster(_))
        ));
        assert!(matches!(
            train_gmm(&[], 1, &EmOptions::default()),
            Err(Error::DegenerateCluster(_))
        ));
    }
}
