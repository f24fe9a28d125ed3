//! Reference implementations used as test oracles. They favour directness
//! over speed and share no code with the library.

#![allow(dead_code)]

use epgd_core::{DMatrix, DVector, Image, PatchGroup};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    gaussian_matrix(n, n, rng).qr().q()
}

pub fn group_from(members: DMatrix<f64>) -> PatchGroup {
    let (dim, m) = members.shape();
    PatchGroup {
        members,
        mean: DVector::zeros(dim),
        coords: vec![(0, 0); m],
        distances: vec![0.0; m],
        reference_index: 0,
    }
}

/// Two zero-mean generators in dimension 12 whose dominant subspaces are
/// complementary halves of a random orthonormal basis.
pub struct Generators {
    pub factors: [DMatrix<f64>; 2],
    pub covariances: [DMatrix<f64>; 2],
}

pub fn generators(rng: &mut impl Rng) -> Generators {
    let q = random_orthogonal(12, rng);
    let make = |first: bool| {
        let scales = DVector::from_fn(12, |i, _| if (i < 6) == first { 100.0 } else { 1.0 });
        let f = &q * DMatrix::from_diagonal(&scales.map(f64::sqrt));
        let cov = &f * f.transpose();
        (f, cov)
    };
    let (fa, ca) = make(true);
    let (fb, cb) = make(false);
    Generators {
        factors: [fa, fb],
        covariances: [ca, cb],
    }
}

pub fn sample_groups(
    gens: &Generators,
    n: usize,
    rng: &mut impl Rng,
) -> (Vec<PatchGroup>, Vec<usize>) {
    let mut groups = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = usize::from(rng.random_bool(0.4));
        groups.push(group_from(
            &gens.factors[label] * gaussian_matrix(12, 10, rng),
        ));
        labels.push(label);
    }
    (groups, labels)
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizes `‖y − Dα‖² + Σ_j 2·thr_j·|α_j|` over each coordinate in turn,
/// holding the others at `anchor`, with a grid scan refined by golden section.
pub fn coordinate_oracle(
    d: &DMatrix<f64>,
    y: &DVector<f64>,
    thr: &DVector<f64>,
    anchor: &DVector<f64>,
) -> DVector<f64> {
    let mut out = DVector::zeros(d.ncols());
    for j in 0..d.ncols() {
        let mut rest = anchor.clone();
        rest[j] = 0.0;
        let r = y - d * &rest;
        let dj = d.column(j);
        let rr = r.norm_squared();
        let dr = dj.dot(&r);
        let dd = dj.norm_squared();
        let f = |a: f64| rr - 2.0 * a * dr + a * a * dd + 2.0 * thr[j] * a.abs();
        let bound = dr.abs() / dd + 1.0;
        let steps = 400;
        let h = 2.0 * bound / steps as f64;
        let best = (0..=steps)
            .map(|i| -bound + i as f64 * h)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        out[j] = golden_min(f, best - h, best + h);
    }
    out
}

/// A uniformly random `D_I` with orthonormal columns orthogonal to `external`.
pub fn feasible_internal(external: &DMatrix<f64>, rng: &mut impl Rng) -> DMatrix<f64> {
    let dim = external.nrows();
    let atoms = dim - external.ncols();
    let g = gaussian_matrix(dim, atoms, rng);
    let projected = &g - external * external.transpose() * &g;
    let q = projected.qr().q();
    q.columns(0, atoms).into_owned()
}

/// `D_I = M (MᵀM)^{-1/2}` with `M = (I − D_E D_Eᵀ) Y A_Iᵀ`; valid when `M`
/// has full column rank.
pub fn polar_internal(
    external: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a_internal: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dim = y.nrows();
    let p = DMatrix::<f64>::identity(dim, dim) - external * external.transpose();
    let m = p * y * a_internal.transpose();
    let gram = m.transpose() * &m;
    let eig = gram.symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    m * inv_sqrt
}

/// `‖Y − D_E A_E − D_I A_I‖²_F`.
pub fn split_residual(
    external: &DMatrix<f64>,
    internal: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a_external: &DMatrix<f64>,
    a_internal: &DMatrix<f64>,
) -> f64 {
    (y - external * a_external - internal * a_internal).norm_squared()
}

/// Two-pass PSNR on the 255 peak.
pub fn psnr_two_pass(a: &Image, b: &Image) -> f64 {
    let n = a.as_slice().len() as f64;
    let mut sum = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        sum += (x - y) * (x - y);
    }
    let mse = sum / n;
    10.0 * (255.0 * 255.0 / mse).log10()
}

/// SSIM evaluated window by window with a dense 11×11 Gaussian (σ = 1.5),
/// over positions where the window fits, averaged over the channels.
pub fn ssim_direct(a: &Image, b: &Image) -> f64 {
    let size = 11usize;
    let half = 5.0;
    let mut w = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let di = i as f64 - half;
            let dj = j as f64 - half;
            w[i * size + j] = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let (h, wd) = (a.height(), a.width());
    let mut acc = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for r in 0..=h - size {
            for c in 0..=wd - size {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..size {
                    for j in 0..size {
                        let k = w[i * size + j];
                        let x = a.get(r + i, c + j, ch);
                        let y = b.get(r + i, c + j, ch);
                        mx += k * x;
                        my += k * y;
                        xx += k * x * x;
                        yy += k * y * y;
                        xy += k * x * y;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    acc / count as f64
}
