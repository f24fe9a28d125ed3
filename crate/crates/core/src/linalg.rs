// Dense helpers on top of nalgebra: ordered decompositions with a fixed sign
// convention, and seeded orthonormal completions.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Flips `v` so that its largest-magnitude entry (first one on ties) is
/// positive. Returns `true` if a flip happened.
pub fn canonicalize_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues nonincreasing,
/// eigenvectors sign-canonical.
pub fn symmetric_eigen_desc(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        canonicalize_sign(vectors.column_mut(dst));
    }
    (values, vectors)
}

/// Thin SVD `m = U diag(s) Vᵀ` with singular values nonincreasing.
/// `U` is `rows x k`, `V` is `cols x k` with `k = min(rows, cols)`.
pub fn svd_desc(m: DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let svd = SVD::try_new(m, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => {
            return Err(Error::NumericalFailure(
                "SVD returned no singular vectors".into(),
            ))
        }
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut uu = DMatrix::zeros(rows, k);
    let mut vv = DMatrix::zeros(cols, k);
    let mut s = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = svd.singular_values[src];
        uu.set_column(dst, &u.column(src));
        vv.set_column(dst, &vt.row(src).transpose());
    }
    Ok((uu, s, vv))
}

/// Projects `v` off the span of the orthonormal columns of each matrix in
/// `bases`, twice for stability.
fn orthogonalize_against(v: &mut DVector<f64>, bases: &[&DMatrix<f64>]) {
    for _ in 0..2 {
        for basis in bases {
            if basis.ncols() == 0 {
                continue;
            }
            let coeffs = basis.tr_mul(v);
            v.gemv(-1.0, basis, &coeffs, 1.0);
        }
    }
}

/// `count` orthonormal vectors of length `n`, orthogonal to the columns of
/// every matrix in `bases` (each assumed orthonormal), drawn from `rng`.
pub fn orthonormal_completion(
    n: usize,
    count: usize,
    bases: &[&DMatrix<f64>],
    rng: &mut SeededRng,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(n, count);
    let mut filled = 0;
    let mut attempts = 0;
    while filled < count {
        attempts += 1;
        if attempts > 16 * (count + 1) {
            return Err(Error::NumericalFailure(
                "could not complete an orthonormal basis; the supplied bases leave too few free directions".into(),
            ));
        }
        let mut v = DVector::from_fn(n, |_, _| rng.symmetric());
        let start_norm = v.norm();
        let done = out.columns(0, filled).into_owned();
        orthogonalize_against(&mut v, bases);
        orthogonalize_against(&mut v, &[&done]);
        let norm = v.norm();
        if norm <= 1e-6 * start_norm {
            continue;
        }
        v /= norm;
        out.set_column(filled, &v);
        filled += 1;
    }
    Ok(out)
}

/// max |mᵀm − I|.
pub fn orthonormality_residual(m: &DMatrix<f64>) -> f64 {
    let g = m.tr_mul(m);
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// max |aᵀb|.
pub fn cross_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    a.tr_mul(b).amax()
}

/// One Newton-Schulz polish step toward the nearest matrix with orthonormal
/// columns: `m (3I − mᵀm) / 2`. Valid when `m` is already close.
pub fn polish_orthonormal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let g = m.tr_mul(m);
    let corr = (DMatrix::<f64>::identity(k, k) * 3.0 - g) * 0.5;
    m * corr
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}
