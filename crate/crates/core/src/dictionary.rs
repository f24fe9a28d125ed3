//! Hybrid orthogonal dictionaries: the leading `r` eigenvectors of a mixture
//! component stay frozen while the remaining atoms are re-learned from the
//! image's own patch groups.
//!
//! The learning objective for a cluster with mean-subtracted patch matrix
//! `Y` is
//!
//! ```text
//! ‖Y − D A‖²_F + Σ_j λ_j Σ_i |A_ji|,   D = [D_E D_I],  DᵀD = I,
//! ```
//!
//! with `λ_j = λ / (√S(j) + ε)`. Because `D` is orthogonal, coding is a
//! per-coordinate soft threshold at `λ_j / 2`, and the `D_I` step is an
//! orthogonal Procrustes problem restricted to the complement of `D_E`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::config::DenoiseConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::math;
use crate::patch::PatchGroup;
use crate::rng::SeededRng;

/// Singular values at or below this fraction of the largest are treated as
/// zero when solving for `D_I`.
pub const RANK_RTOL: f64 = 1e-10;
/// Constraint residual that aborts an internal-dictionary update.
pub const CONSTRAINT_FAILURE: f64 = 1e-6;

/// `D = [D_E D_I]` plus the per-atom soft thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridDictionary {
    pub external: DMatrix<f64>,
    pub internal: DMatrix<f64>,
    /// `λ_j / 2` for every atom, external atoms first.
    pub thresholds: DVector<f64>,
}

impl HybridDictionary {
    /// Splits an orthogonal basis after its first `external_atoms` columns.
    pub fn from_basis(
        basis: &DMatrix<f64>,
        external_atoms: usize,
        thresholds: DVector<f64>,
    ) -> Result<Self> {
        let (dim, cols) = basis.shape();
        if dim != cols || thresholds.len() != dim || external_atoms > dim {
            return Err(Error::Dimension(format!(
                "basis {dim}x{cols}, {} thresholds, {external_atoms} external atoms",
                thresholds.len()
            )));
        }
        Ok(HybridDictionary {
            external: basis.columns(0, external_atoms).into_owned(),
            internal: basis
                .columns(external_atoms, dim - external_atoms)
                .into_owned(),
            thresholds,
        })
    }

    pub fn dim(&self) -> usize {
        self.external.nrows()
    }

    /// The full square dictionary `[D_E D_I]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let r = self.external.ncols();
        let mut d = DMatrix::zeros(dim, dim);
        d.columns_mut(0, r).copy_from(&self.external);
        d.columns_mut(r, dim - r).copy_from(&self.internal);
        d
    }

    /// `max |DᵀD − I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        linalg::orthonormality_residual(&self.matrix())
    }
}

/// Codes of every patch in a cluster, one column per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes(pub DMatrix<f64>);

impl SparseCodes {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Per-atom soft thresholds `½ · λ / (√S(j) + ε)`.
pub fn build_lambda(eigenvalues: &DVector<f64>, lambda: f64, eps: f64) -> DVector<f64> {
    eigenvalues.map(|s| 0.5 * lambda / (math::sqrt(s.max(0.0)) + eps))
}

#[inline]
fn shrink(z: f64, t: f64) -> f64 {
    let mag = z.abs() - t;
    if mag > 0.0 {
        mag.copysign(z)
    } else {
        0.0
    }
}

/// Closed-form minimizer of `‖y − Dα‖² + Σ_j 2·thr_j·|α_j|` for orthogonal
/// `D`: soft-threshold `Dᵀy` coordinate-wise.
pub fn weighted_soft_threshold(
    dictionary: &DMatrix<f64>,
    y: &DVector<f64>,
    thresholds: &DVector<f64>,
) -> DVector<f64> {
    let mut z = dictionary.tr_mul(y);
    z.zip_apply(thresholds, |v, t| *v = shrink(*v, t));
    z
}

/// [`weighted_soft_threshold`] applied to every column of `y`.
pub fn soft_threshold_codes(
    dictionary: &DMatrix<f64>,
    y: &DMatrix<f64>,
    thresholds: &DVector<f64>,
) -> DMatrix<f64> {
    let mut z = dictionary.tr_mul(y);
    for mut col in z.column_iter_mut() {
        col.zip_apply(thresholds, |v, t| *v = shrink(*v, t));
    }
    z
}

/// `‖Y − DA‖²_F + Σ_j 2·thr_j Σ_i |A_ji|`.
pub fn objective(
    dictionary: &DMatrix<f64>,
    y: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    thresholds: &DVector<f64>,
) -> f64 {
    let residual = linalg::frobenius_sq(&(y - dictionary * codes));
    let penalty: f64 = codes
        .row_iter()
        .zip(thresholds.iter())
        .map(|(row, &t)| 2.0 * t * row.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    residual + penalty
}

/// Result of one internal-dictionary update.
#[derive(Debug, Clone)]
pub struct InternalUpdate {
    pub internal: DMatrix<f64>,
    /// Singular values of `(I − D_E D_Eᵀ) Y A_Iᵀ`, nonincreasing.
    pub singular_values: DVector<f64>,
    /// Number of singular values above the rank cut-off.
    pub rank: usize,
}

/// Solves `min ‖Y − D_E A_E − D_I A_I‖_F` over `D_I` with `D_IᵀD_I = I` and
/// `D_EᵀD_I = 0`.
///
/// With `(I − D_E D_Eᵀ) Y A_Iᵀ = U S Vᵀ` the minimizer is `D_I = U Vᵀ`.
/// Singular pairs are ordered by decreasing value and oriented so the
/// largest-magnitude entry of each left vector is positive. When the product
/// is rank deficient, the missing left and right directions are completed
/// with orthonormal vectors drawn from `seed`; every such completion attains
/// the same objective.
pub fn update_internal_dict(
    external: &DMatrix<f64>,
    y: &DMatrix<f64>,
    internal_codes: &DMatrix<f64>,
    seed: u64,
) -> Result<InternalUpdate> {
    let (dim, n) = y.shape();
    let r = external.ncols();
    if external.nrows() != dim || r > dim {
        return Err(Error::Dimension(format!(
            "external sub-dictionary is {}x{r}, patches have dimension {dim}",
            external.nrows()
        )));
    }
    let atoms = dim - r;
    if internal_codes.shape() != (atoms, n) {
        return Err(Error::Dimension(format!(
            "internal codes are {:?}, expected {atoms}x{n}",
            internal_codes.shape()
        )));
    }
    if atoms == 0 {
        return Ok(InternalUpdate {
            internal: DMatrix::zeros(dim, 0),
            singular_values: DVector::zeros(0),
            rank: 0,
        });
    }

    let projected = project_out(external, y);
    let target = &projected * internal_codes.transpose();
    let (mut u, s, mut v) = linalg::svd_desc(target)?;
    let cutoff = RANK_RTOL * s.max();
    let rank = s.iter().take_while(|&&x| x > cutoff && x > 0.0).count();

    for i in 0..rank {
        if linalg::canonicalize_sign(u.column_mut(i)) {
            v.column_mut(i).neg_mut();
        }
    }
    let mut left = u.columns(0, rank).into_owned();
    let mut right = v.columns(0, rank).into_owned();
    if rank < atoms {
        let mut rng = SeededRng::new(seed, 0x4449);
        let u_null =
            linalg::orthonormal_completion(dim, atoms - rank, &[external, &left], &mut rng)?;
        let v_null = linalg::orthonormal_completion(atoms, atoms - rank, &[&right], &mut rng)?;
        left = concat_columns(&left, &u_null);
        right = concat_columns(&right, &v_null);
    }

    let mut internal = &left * right.transpose();
    internal = linalg::polish_orthonormal(&project_out(external, &internal));

    let orth = linalg::orthonormality_residual(&internal);
    let cross = linalg::cross_residual(external, &internal);
    if orth > CONSTRAINT_FAILURE || cross > CONSTRAINT_FAILURE {
        return Err(Error::NumericalFailure(format!(
            "internal dictionary violates its constraints (DᵀD−I: {orth:e}, D_EᵀD_I: {cross:e})"
        )));
    }
    debug_assert!(
        orth <= 1e-8 && cross <= 1e-8,
        "orth {orth:e} cross {cross:e}"
    );
    Ok(InternalUpdate {
        internal,
        singular_values: s,
        rank,
    })
}

/// `(I − E Eᵀ) m`.
fn project_out(external: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if external.ncols() == 0 {
        return m.clone();
    }
    let mut out = m.clone();
    let coeffs = external.tr_mul(m);
    out.gemm(-1.0, external, &coeffs, 1.0);
    out
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Settings for [`learn_hybrid_dictionary`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnParams {
    pub external_atoms: usize,
    pub lambda: f64,
    pub eps: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl From<&DenoiseConfig> for LearnParams {
    fn from(cfg: &DenoiseConfig) -> Self {
        LearnParams {
            external_atoms: cfg.external_atoms,
            lambda: cfg.lambda,
            eps: cfg.eps,
            iterations: cfg.dict_iters,
            seed: cfg.seed,
        }
    }
}

/// Output of the alternating minimization for one cluster.
#[derive(Debug, Clone)]
pub struct LearnedDictionary {
    pub dictionary: HybridDictionary,
    pub codes: SparseCodes,
    /// Objective after every half-step: coding, then dictionary update, ...
    pub objective_trace: Vec<f64>,
}

/// Learns a hybrid dictionary for a cluster of patch groups.
pub fn learn_hybrid_dictionary(
    cluster: &[&PatchGroup],
    eigenvectors: &DMatrix<f64>,
    eigenvalues: &DVector<f64>,
    params: &LearnParams,
) -> Result<LearnedDictionary> {
    let first = cluster.first().ok_or_else(|| {
        Error::InvalidInput("cannot learn a dictionary for an empty cluster".into())
    })?;
    let dim = first.dim();
    let total: usize = cluster.iter().map(|g| g.len()).sum();
    let mut y = DMatrix::zeros(dim, total);
    let mut at = 0;
    for g in cluster {
        if g.dim() != dim {
            return Err(Error::Dimension("cluster mixes patch dimensions".into()));
        }
        y.columns_mut(at, g.len()).copy_from(&g.members);
        at += g.len();
    }
    learn_from_matrix(&y, eigenvectors, eigenvalues, params)
}

/// [`learn_hybrid_dictionary`] on a pre-assembled patch matrix.
pub fn learn_from_matrix(
    y: &DMatrix<f64>,
    eigenvectors: &DMatrix<f64>,
    eigenvalues: &DVector<f64>,
    params: &LearnParams,
) -> Result<LearnedDictionary> {
    let dim = y.nrows();
    if eigenvectors.shape() != (dim, dim) || eigenvalues.len() != dim {
        return Err(Error::Dimension(format!(
            "component factors are {:?}/{}, patches have dimension {dim}",
            eigenvectors.shape(),
            eigenvalues.len()
        )));
    }
    let r = params.external_atoms;
    let thresholds = build_lambda(eigenvalues, params.lambda, params.eps);
    let mut dictionary = HybridDictionary::from_basis(eigenvectors, r, thresholds)?;
    let mut full = dictionary.matrix();
    let mut codes = soft_threshold_codes(&full, y, &dictionary.thresholds);
    let mut trace = Vec::with_capacity(2 * params.iterations + 1);
    trace.push(objective(&full, y, &codes, &dictionary.thresholds));

    for t in 0..params.iterations {
        if t > 0 {
            codes = soft_threshold_codes(&full, y, &dictionary.thresholds);
            trace.push(objective(&full, y, &codes, &dictionary.thresholds));
        }
        let internal_codes = codes.rows(r, dim - r).into_owned();
        let seed = params.seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let update = update_internal_dict(&dictionary.external, y, &internal_codes, seed)?;
        dictionary.internal = update.internal;
        full.columns_mut(r, dim - r).copy_from(&dictionary.internal);
        trace.push(objective(&full, y, &codes, &dictionary.thresholds));
    }

    Ok(LearnedDictionary {
        dictionary,
        codes: SparseCodes(codes),
        objective_trace: trace,
    })
}
