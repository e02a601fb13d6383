//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything here works on `DMatrix<f64>`; the fiber dimension is a runtime
//! value. The one non-standard piece is the one-sided Jacobi SVD, used for
//! long products where singular values are strongly graded.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;

pub type Mat = DMatrix<f64>;
pub use num_complex::Complex64;

pub const TAU: f64 = 2.0 * PI;

pub fn rot2(theta: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    Mat::from_row_slice(2, 2, &[c, -s, s, c])
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&DVector::from_column_slice(values))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let r = rows.len();
    let c = rows.first()?.len();
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return None;
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Some(Mat::from_row_slice(r, c, &flat))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[Mat]) -> Mat {
    let d: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(d, d);
    let mut k = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((k, k), (n, n)).copy_from(b);
        k += n;
    }
    out
}

/// Largest singular value.
pub fn op_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let s = m.clone().svd(false, false).singular_values;
    s.iter().copied().fold(0.0, f64::max)
}

/// Modified Gram-Schmidt on the columns. The triangular factor has a positive
/// diagonal, so the orientation of the column span is kept.
pub fn orthonormalize(m: &Mat) -> Mat {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let qi = q.column(i).clone_owned();
            let r = qi.dot(&q.column(j));
            let mut cj = q.column_mut(j);
            cj.axpy(-r, &qi, 1.0);
        }
        let n = q.column(j).norm();
        if n > 0.0 {
            q.column_mut(j).unscale_mut(n);
        }
    }
    q
}

/// Orthonormal basis of the orthogonal complement of the span of `basis`.
pub fn complement(basis: &Mat) -> Mat {
    let d = basis.nrows();
    let k = basis.ncols();
    let p = projector(basis);
    let eig = SymmetricEigen::new(Mat::identity(d, d) - p);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<_> = idx[..d - k].iter().map(|&i| eig.eigenvectors.column(i).clone_owned()).collect();
    if cols.is_empty() {
        return Mat::zeros(d, 0);
    }
    orthonormalize(&Mat::from_columns(&cols))
}

pub fn projector(basis: &Mat) -> Mat {
    basis * basis.transpose()
}

/// Sine of the largest principal angle between two orthonormal frames of equal dimension.
pub fn subspace_gap(a: &Mat, b: &Mat) -> f64 {
    let d = a.nrows();
    let r = (Mat::identity(d, d) - projector(b)) * a;
    op_norm(&r)
}

/// Orthonormal basis of the `k`-dimensional (approximate) null space of `m`:
/// the right singular vectors with the `k` smallest singular values.
pub fn null_space(m: &Mat, k: usize) -> Mat {
    let n = m.ncols();
    if k == 0 {
        return Mat::zeros(n, 0);
    }
    // pad to square so the SVD returns a full set of right singular vectors
    let mut sq = Mat::zeros(m.nrows().max(n), n);
    sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors");
    let s = &svd.singular_values;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let cols: Vec<_> = idx[..k].iter().map(|&i| vt.row(i).transpose()).collect();
    Mat::from_columns(&cols)
}

/// Eigenvalues sorted by ascending modulus; conjugate pairs adjacent, positive imaginary part first.
pub fn eigenvalues_by_modulus(m: &Mat) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(b.im.total_cmp(&a.im)));
    ev
}

/// Real invariant subspace of m for the listed eigenvalues (conjugates of
/// non-real entries must be listed too; each counted once per multiplicity).
pub fn invariant_subspace(m: &Mat, eigs: &[Complex64]) -> Mat {
    let d = m.nrows();
    let mut poly = Mat::identity(d, d);
    let scale = op_norm(m).max(1e-300);
    let mut used = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let l = eigs[i] / scale;
        let ms = m / scale;
        if l.im.abs() <= 1e-12 * l.norm().max(1e-300) {
            poly = (&ms - Mat::identity(d, d) * l.re) * poly;
        } else {
            if let Some(j) = (i + 1..eigs.len()).find(|&j| !used[j] && (eigs[j] / scale - l.conj()).norm() < 1e-8) {
                used[j] = true;
            }
            poly = (&ms * &ms - &ms * (2.0 * l.re) + Mat::identity(d, d) * l.norm_sqr()) * poly;
        }
    }
    orthonormalize(&null_space(&poly, eigs.len()))
}

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD. Relative accuracy is good when the input is a
/// well-conditioned matrix times a diagonal scaling, which is exactly the
/// situation in long products.
pub fn jacobi_svd(a: &Mat) -> Svd {
    let m = a.nrows();
    let n = a.ncols();
    let mut u = a.clone();
    let mut v = Mat::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut uu = Mat::zeros(m, n);
    let mut vv = Mat::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let col = u.column(j);
        if s[j] > 0.0 {
            uu.set_column(k, &(col / s[j]));
        }
        vv.set_column(k, &v.column(j));
    }
    // columns of U for zero singular values: complete to an orthonormal set
    let rank = order.iter().filter(|&&j| s[j] > 0.0).count();
    if rank < n.min(m) {
        let comp = complement(&uu.columns(0, rank).into_owned());
        for k in rank..n.min(m) {
            uu.set_column(k, &comp.column(k - rank));
        }
    }
    s = order.iter().map(|&j| s[j]).collect();
    Svd { u: uu, s, v: vv }
}

/// Running SVD of a long product A_n⋯A_1, kept as U·diag(e^ls)·Vᵀ.
#[derive(Debug, Clone)]
pub struct ProductSvd {
    pub u: Mat,
    /// log singular values, descending
    pub log_s: Vec<f64>,
    pub v: Mat,
}

impl ProductSvd {
    pub fn identity(d: usize) -> Self {
        ProductSvd { u: Mat::identity(d, d), log_s: vec![0.0; d], v: Mat::identity(d, d) }
    }

    pub fn push(&mut self, a: &Mat) {
        let top = self.log_s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale: Vec<f64> = self.log_s.iter().map(|l| (l - top).exp().max(1e-300)).collect();
        let c = a * &self.u * diag(&scale);
        let svd = jacobi_svd(&c);
        self.u = svd.u;
        self.log_s = svd.s.iter().map(|s| s.max(1e-300).ln() + top).collect();
        self.v = &self.v * svd.v;
    }

    /// Log singular values, ascending.
    pub fn log_ascending(&self) -> Vec<f64> {
        let mut l = self.log_s.clone();
        l.reverse();
        l
    }
}

pub fn product_svd<'a>(d: usize, factors: impl IntoIterator<Item = &'a Mat>) -> ProductSvd {
    let mut p = ProductSvd::identity(d);
    for a in factors {
        p.push(a);
    }
    p
}

/// Angle of a plane vector in turns, in (−½, ½].
pub fn angle_turns(x: f64, y: f64) -> f64 {
    y.atan2(x) / TAU
}

/// Representative of `x` modulo 1 in (−½, ½].
pub fn wrap_half(x: f64) -> f64 {
    let r = x - x.round();
    if r <= -0.5 {
        r + 1.0
    } else {
        r
    }
}

/// Representative of `x` modulo 1 lying in [lo, lo + 1).
pub fn rep_from(x: f64, lo: f64) -> f64 {
    x - (x - lo).floor()
}

/// Distance in ℝ/2πℤ.
pub fn circle_dist_rad(a: f64, b: f64) -> f64 {
    let r = (a - b).rem_euclid(TAU);
    r.min(TAU - r)
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}
