//! Numerical primitives for orthonormal embeddings: QR re-orthonormalization,
//! top-k symmetric eigendecomposition, spectral norm, and the principal-angle
//! distance between subspaces.
//!
//! The eigensolver is a hand-rolled Householder tridiagonalization followed
//! by implicit-shift QL iteration. A dense O(d³) solver is plenty at desk
//! scale, and owning it guarantees bit-identical results for identical
//! inputs — no blocked or threaded backend gets a say in the output.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::mat::Mat;

#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Frobenius tolerance on `QᵀQ - I` for a valid orthonormal basis.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Relative singular-value floor below which a matrix is treated as rank
/// deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Eigengap below which the top-k invariant subspace is flagged as not
/// uniquely determined.
pub const GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SubspaceError {
    #[error("rank-deficient matrix: sigma_min={sigma_min:.3e} <= {RANK_TOL:.0e} * sigma_max={sigma_max:.3e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("invalid rank k={k} for ambient dimension d={d}")]
    InvalidRank { k: usize, d: usize },
    #[error("dimension mismatch between bases: {a_dim}x{a_rank} vs {b_dim}x{b_rank}")]
    DimensionMismatch {
        a_dim: usize,
        a_rank: usize,
        b_dim: usize,
        b_rank: usize,
    },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("columns are not orthonormal: defect {0:.3e}")]
    NotOrthonormal(f64),
}

/// A `d x k` matrix with orthonormal columns (`k <= d`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    cols: Mat,
}

impl OrthonormalBasis {
    /// Validates orthonormality (`‖QᵀQ - I‖_F <= 1e-10`) and `k <= d`.
    pub fn new(cols: Mat) -> Result<Self, SubspaceError> {
        let (d, k) = cols.shape();
        if k > d || k == 0 {
            return Err(SubspaceError::InvalidRank { k, d });
        }
        let defect = orthonormality_defect(&cols);
        if defect > ORTHONORMALITY_TOL {
            return Err(SubspaceError::NotOrthonormal(defect));
        }
        Ok(Self { cols })
    }

    /// Internal constructor for matrices produced by our own factorizations.
    pub(crate) fn from_factorization(cols: Mat) -> Self {
        debug_assert!(orthonormality_defect(&cols) <= ORTHONORMALITY_TOL);
        Self { cols }
    }

    pub fn cols(&self) -> &Mat {
        &self.cols
    }

    pub fn into_mat(self) -> Mat {
        self.cols
    }

    pub fn ambient_dim(&self) -> usize {
        self.cols.rows()
    }

    pub fn rank(&self) -> usize {
        self.cols.cols()
    }

    /// `‖QᵀQ - I‖_F`, useful for re-checking the invariant after updates.
    pub fn defect(&self) -> f64 {
        orthonormality_defect(&self.cols)
    }
}

fn orthonormality_defect(q: &Mat) -> f64 {
    let gram = q.tr_mul(q);
    gram.sub(&Mat::identity(q.cols())).frob_norm()
}

/// A `k x k` upper-triangular factor; entries strictly below the diagonal are
/// exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriangularFactor {
    entries: Mat,
}

impl UpperTriangularFactor {
    pub fn new(entries: Mat) -> Self {
        let (r, c) = entries.shape();
        assert_eq!(r, c, "triangular factor must be square");
        for i in 1..r {
            for j in 0..i {
                assert_eq!(
                    entries[(i, j)],
                    0.0,
                    "below-diagonal entry must be exactly zero"
                );
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }
}

/// Thin QR factorization `M = QP` with the sign convention that the diagonal
/// of `P` is nonnegative, which makes the factorization unique and runs
/// bit-reproducible.
///
/// Fails with [`SubspaceError::RankDeficient`] when the smallest singular
/// value of `M` is at most `1e-12` times the largest (degenerate gradient
/// step or all-zero input).
pub fn qr_orthonormalize(
    m: &Mat,
) -> Result<(OrthonormalBasis, UpperTriangularFactor), SubspaceError> {
    let (d, k) = m.shape();
    if k > d || k == 0 {
        return Err(SubspaceError::InvalidRank { k, d });
    }

    // Householder reflectors, stored as unit vectors over the trailing rows.
    let mut w = m.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = (j..d).map(|i| w[(i, j)]).collect();
        let norm_x = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm_x } else { norm_x };
        v[0] -= alpha;
        let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_v == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in &mut v {
            *x /= norm_v;
        }
        // Apply H = I - 2vvᵀ to the trailing block of w.
        for c in j..k {
            let mut proj = 0.0;
            for (off, vi) in v.iter().enumerate() {
                proj += vi * w[(j + off, c)];
            }
            for (off, vi) in v.iter().enumerate() {
                w[(j + off, c)] -= 2.0 * proj * vi;
            }
        }
        reflectors.push(v);
    }

    let mut r = Mat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            r[(i, j)] = w[(i, j)];
        }
    }

    // Rank check on the singular values of R (equal to those of M).
    let (sigma_max, sigma_min) = singular_extremes_square(&r)?;
    if sigma_min <= RANK_TOL * sigma_max {
        return Err(SubspaceError::RankDeficient {
            sigma_min,
            sigma_max,
        });
    }

    // Accumulate Q = H_0 · H_1 ··· H_{k-1} · I_{d x k}.
    let mut q = Mat::identity_cols(d, k);
    for j in (0..k).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        for c in 0..k {
            let mut proj = 0.0;
            for (off, vi) in v.iter().enumerate() {
                proj += vi * q[(j + off, c)];
            }
            for (off, vi) in v.iter().enumerate() {
                q[(j + off, c)] -= 2.0 * proj * vi;
            }
        }
    }

    // Fix signs so that diag(P) >= 0.
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for c in j..k {
                r[(j, c)] = -r[(j, c)];
            }
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }

    Ok((
        OrthonormalBasis::from_factorization(q),
        UpperTriangularFactor::new(r),
    ))
}

/// Result of [`top_k_eigvecs`]: the basis, the full eigenvalue spectrum in
/// decreasing order, and whether the gap `λ_k - λ_{k+1}` fell below 1e-12
/// (the spanned subspace is then not unique).
#[derive(Debug, Clone)]
pub struct TopKEig {
    pub basis: OrthonormalBasis,
    pub eigenvalues: Vec<f64>,
    pub degenerate_gap: bool,
}

/// Eigenvectors of the `k` algebraically largest eigenvalues of a symmetric
/// matrix, columns unit-norm, with a deterministic sign convention (the
/// largest-magnitude entry of each column is positive).
pub fn top_k_eigvecs(z: &Mat, k: usize) -> Result<TopKEig, SubspaceError> {
    let (r, c) = z.shape();
    if r != c {
        return Err(SubspaceError::NotSymmetric);
    }
    let d = r;
    if k == 0 || k > d {
        return Err(SubspaceError::InvalidRank { k, d });
    }
    let asym = z.sub(&z.transpose()).frob_norm();
    if asym > 1e-10 * f64::max(1.0, z.frob_norm()) {
        return Err(SubspaceError::NotSymmetric);
    }

    let eig = symmetric_eigen(&z.sym_part())?;
    let mut cols = Mat::zeros(d, k);
    for j in 0..k {
        let mut col = eig.vectors.col(j);
        // Sign convention: largest-magnitude entry positive.
        let mut pivot = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            for x in &mut col {
                *x = -*x;
            }
        }
        cols.set_col(j, &col);
    }
    let degenerate_gap = k < d && (eig.values[k - 1] - eig.values[k]) < GAP_TOL;
    Ok(TopKEig {
        basis: OrthonormalBasis::from_factorization(cols),
        eigenvalues: eig.values,
        degenerate_gap,
    })
}

/// Principal-angle distance `‖(I - AAᵀ)B‖₂` between equal-rank bases.
///
/// Zero iff the spans coincide, one iff `B` contains a direction orthogonal
/// to all of `A`. Symmetric in its arguments for equal ranks.
pub fn principal_dist(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64, SubspaceError> {
    if a.ambient_dim() != b.ambient_dim() || a.rank() != b.rank() {
        return Err(SubspaceError::DimensionMismatch {
            a_dim: a.ambient_dim(),
            a_rank: a.rank(),
            b_dim: b.ambient_dim(),
            b_rank: b.rank(),
        });
    }
    // (I - AAᵀ)B = B - A(AᵀB), formed without the d x d projector.
    let atb = a.cols().tr_mul(b.cols());
    let mut resid = b.cols().clone();
    let correction = a.cols().matmul(&atb);
    resid.add_scaled_in_place(&correction, -1.0);
    Ok(spectral_norm(&resid).clamp(0.0, 1.0))
}

/// Largest singular value, computed from the eigenvalues of the smaller Gram
/// matrix. Deterministic for identical inputs.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let gram = if m.cols() <= m.rows() {
        m.tr_mul(m)
    } else {
        m.matmul(&m.transpose())
    };
    // The Gram matrix of a finite matrix is exactly symmetric by construction.
    let eig = symmetric_eigen(&gram).expect("gram eigensolve cannot fail on finite input");
    eig.values[0].max(0.0).sqrt()
}

/// (largest, k-th largest) singular values of a square k x k matrix.
fn singular_extremes_square(r: &Mat) -> Result<(f64, f64), SubspaceError> {
    let gram = r.tr_mul(r);
    let eig = symmetric_eigen(&gram)?;
    let k = r.cols();
    let s_max = eig.values[0].max(0.0).sqrt();
    let s_min = eig.values[k - 1].max(0.0).sqrt();
    Ok((s_max, s_min))
}

/// Full symmetric eigendecomposition, eigenvalues in decreasing order with
/// matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

/// Dense symmetric eigensolver: Householder reduction to tridiagonal form
/// followed by implicit-shift QL iteration, both with accumulation of the
/// orthogonal transforms.
pub fn symmetric_eigen(a: &Mat) -> Result<SymEigen, SubspaceError> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "eigensolver needs a square matrix");
    assert!(n > 0);
    let mut z = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut z, &mut d, &mut e);
    ql_implicit(&mut d, &mut e, &mut z)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| z[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

/// Householder reduction of a symmetric matrix to tridiagonal form. On exit
/// `z` holds the accumulated orthogonal transform, `d` the diagonal and `e`
/// the subdiagonal (`e[0]` unused).
fn tridiagonalize(z: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += z[(i, k)].abs();
            }
            if scale == 0.0 {
                e[i] = z[(i, l)];
            } else {
                for k in 0..=l {
                    z[(i, k)] /= scale;
                    h += z[(i, k)] * z[(i, k)];
                }
                let f = z[(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[(i, l)] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    z[(j, i)] = z[(i, j)] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += z[(j, k)] * z[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g_acc += z[(k, j)] * z[(i, k)];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z[(i, j)];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * z[(i, k)];
                        z[(j, k)] -= delta;
                    }
                }
            }
        } else {
            e[i] = z[(i, l)];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[(i, k)] * z[(k, j)];
                }
                for k in 0..i {
                    let delta = g * z[(k, i)];
                    z[(k, j)] -= delta;
                }
            }
        }
        d[i] = z[(i, i)];
        z[(i, i)] = 1.0;
        for j in 0..i {
            z[(j, i)] = 0.0;
            z[(i, j)] = 0.0;
        }
    }
}

/// Implicit-shift QL iteration on a tridiagonal matrix with eigenvector
/// accumulation into `z`.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut Mat) -> Result<(), SubspaceError> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(SubspaceError::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + copysign_mag(r, g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..z.rows() {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// `|a| * sign(b)` with `sign(0) = +1`.
fn copysign_mag(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = StreamKey::new(seed, Purpose::MonteCarlo).rng();
        Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        random_mat(n, n, seed).sym_part()
    }

    // ---- independent oracles (implemented first, kept independent of the
    // ---- production Householder/QL path) ----

    /// Modified Gram-Schmidt QR oracle.
    fn mgs_qr(m: &Mat) -> (Mat, Mat) {
        let (d, k) = m.shape();
        let mut q = m.clone();
        let mut r = Mat::zeros(k, k);
        for j in 0..k {
            for i in 0..j {
                let qi = q.col(i);
                let qj = q.col(j);
                let proj = crate::mat::dot(&qi, &qj);
                r[(i, j)] = proj;
                for t in 0..d {
                    q[(t, j)] -= proj * qi[t];
                }
            }
            let norm = crate::mat::norm2(&q.col(j));
            r[(j, j)] = norm;
            for t in 0..d {
                q[(t, j)] /= norm;
            }
        }
        (q, r)
    }

    /// Cyclic Jacobi eigensolver oracle; returns eigenvalues descending with
    /// matching eigenvector columns.
    fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
        let n = a.rows();
        let mut a = a.clone();
        let mut v = Mat::identity(n);
        for _sweep in 0..200 {
            let mut off = 0.0;
            for p in 0..n {
                for q in 0..n {
                    if p != q {
                        off += a[(p, q)] * a[(p, q)];
                    }
                }
            }
            if off.sqrt() <= 1e-14 * (1.0 + a.frob_norm()) {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
        (values, vectors)
    }

    /// One-sided Jacobi SVD oracle: returns all singular values descending.
    fn jacobi_singular_values(m: &Mat) -> Vec<f64> {
        let mut a = if m.rows() >= m.cols() {
            m.clone()
        } else {
            m.transpose()
        };
        let n = a.cols();
        for _sweep in 0..200 {
            let mut rotated = false;
            for i in 0..n - 1 {
                for j in i + 1..n {
                    let ci = a.col(i);
                    let cj = a.col(j);
                    let alpha = crate::mat::dot(&ci, &ci);
                    let beta = crate::mat::dot(&cj, &cj);
                    let gamma = crate::mat::dot(&ci, &cj);
                    if gamma.abs() <= 1e-16 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for r in 0..a.rows() {
                        let air = a[(r, i)];
                        let ajr = a[(r, j)];
                        a[(r, i)] = c * air - s * ajr;
                        a[(r, j)] = s * air + c * ajr;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut sv: Vec<f64> = (0..n).map(|j| crate::mat::norm2(&a.col(j))).collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        sv
    }

    fn basis_from_cols(cols: Vec<Vec<f64>>) -> OrthonormalBasis {
        let d = cols[0].len();
        let k = cols.len();
        let mut m = Mat::zeros(d, k);
        for (j, c) in cols.iter().enumerate() {
            m.set_col(j, c);
        }
        OrthonormalBasis::new(m).unwrap()
    }

    // ---- qr_orthonormalize ----

    #[test]
    fn qr_of_identity_columns_is_identity() {
        let m = Mat::identity_cols(3, 2);
        let (q, p) = qr_orthonormalize(&m).unwrap();
        assert!(q.cols().sub(&Mat::identity_cols(3, 2)).max_abs() < 1e-14);
        assert!(p.entries().sub(&Mat::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn qr_of_scaled_identity_has_positive_diagonal() {
        let m = Mat::identity_cols(3, 2).scale(2.0);
        let (q, p) = qr_orthonormalize(&m).unwrap();
        assert!(q.cols().sub(&Mat::identity_cols(3, 2)).max_abs() < 1e-14);
        assert!(p.entries().sub(&Mat::identity(2).scale(2.0)).max_abs() < 1e-14);
    }

    #[test]
    fn qr_matches_gram_schmidt_oracle_on_well_conditioned_input() {
        // Condition number kept small by adding a strong diagonal.
        let mut m = random_mat(6, 3, 11);
        for j in 0..3 {
            m[(j, j)] += 4.0;
        }
        let (q, p) = qr_orthonormalize(&m).unwrap();
        let (oq, or) = mgs_qr(&m);
        assert!(q.cols().sub(&oq).max_abs() < 1e-9);
        assert!(p.entries().sub(&or).max_abs() < 1e-9);
        assert!(q.defect() < 1e-12);
        let qp = q.cols().matmul(p.entries());
        assert!(qp.sub(&m).frob_norm() <= 1e-9 * m.frob_norm());
    }

    #[test]
    fn qr_rejects_rank_deficient_and_zero_input() {
        let mut dup = Mat::zeros(4, 2);
        dup.set_col(0, &[1.0, 2.0, 3.0, 4.0]);
        dup.set_col(1, &[2.0, 4.0, 6.0, 8.0]);
        assert!(matches!(
            qr_orthonormalize(&dup),
            Err(SubspaceError::RankDeficient { .. })
        ));
        assert!(matches!(
            qr_orthonormalize(&Mat::zeros(3, 2)),
            Err(SubspaceError::RankDeficient { .. })
        ));
    }

    // ---- top_k_eigvecs ----

    #[test]
    fn top_k_of_diagonal_matrix_spans_leading_axes() {
        let z = Mat::from_fn(3, 3, |i, j| if i == j { (3 - i) as f64 } else { 0.0 });
        let out = top_k_eigvecs(&z, 2).unwrap();
        let expected = basis_from_cols(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert!(principal_dist(&out.basis, &expected).unwrap() < 1e-12);
        assert!(!out.degenerate_gap);
        assert_eq!(out.eigenvalues, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn top_1_of_rank_one_matrix_recovers_the_direction() {
        let w = [0.6, 0.0, 0.8];
        let z = Mat::outer(&w, &w);
        let out = top_k_eigvecs(&z, 1).unwrap();
        let dir = out.basis.cols().col(0);
        let align = crate::mat::dot(&dir, &w).abs();
        assert!((align - 1.0).abs() < 1e-12);
        // Sign convention: largest-magnitude entry positive.
        assert!(dir[2] > 0.0);
    }

    #[test]
    fn top_k_matches_jacobi_oracle_on_random_symmetric() {
        let z = random_symmetric(8, 21);
        let out = top_k_eigvecs(&z, 3).unwrap();
        let (ovals, ovecs) = jacobi_eigen(&z);
        let oracle = OrthonormalBasis::new(Mat::from_fn(8, 3, |i, j| ovecs[(i, j)])).unwrap();
        assert!(principal_dist(&out.basis, &oracle).unwrap() <= 1e-8);
        for (a, b) in out.eigenvalues.iter().zip(&ovals) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn top_k_flags_degenerate_gap() {
        let z = Mat::identity(4);
        let out = top_k_eigvecs(&z, 2).unwrap();
        assert!(out.degenerate_gap);
    }

    #[test]
    fn top_k_rejects_asymmetric_input() {
        let mut z = Mat::identity(3);
        z[(0, 1)] = 0.5;
        assert!(matches!(
            top_k_eigvecs(&z, 1),
            Err(SubspaceError::NotSymmetric)
        ));
    }

    #[test]
    fn invariant_subspace_residual_is_small() {
        for seed in 0..5u64 {
            let z = random_symmetric(10, 100 + seed);
            let out = top_k_eigvecs(&z, 4).unwrap();
            let q = out.basis.cols();
            let zq = z.matmul(q);
            let small = q.tr_mul(&zq);
            let resid = zq.sub(&q.matmul(&small));
            assert!(resid.frob_norm() <= 1e-8 * z.frob_norm());
        }
    }

    // ---- principal_dist ----

    #[test]
    fn principal_dist_of_identical_bases_is_zero() {
        let q = qr_orthonormalize(&random_mat(5, 2, 3)).unwrap().0;
        assert!(principal_dist(&q, &q).unwrap() < 1e-12);
    }

    #[test]
    fn principal_dist_of_orthogonal_lines_is_one() {
        let a = basis_from_cols(vec![vec![1.0, 0.0]]);
        let b = basis_from_cols(vec![vec![0.0, 1.0]]);
        assert!((principal_dist(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_dist_of_rotated_line_is_sin_theta() {
        let theta = 0.3_f64;
        let a = basis_from_cols(vec![vec![1.0, 0.0]]);
        let b = basis_from_cols(vec![vec![theta.cos(), theta.sin()]]);
        // 2-D geometry oracle: |sin 0.3| ~= 0.29552.
        assert!((principal_dist(&a, &b).unwrap() - theta.sin().abs()).abs() < 1e-12);
        assert!((principal_dist(&a, &b).unwrap() - 0.29552020666133955).abs() < 1e-9);
    }

    #[test]
    fn principal_dist_is_symmetric_for_equal_ranks() {
        let a = qr_orthonormalize(&random_mat(7, 3, 41)).unwrap().0;
        let b = qr_orthonormalize(&random_mat(7, 3, 42)).unwrap().0;
        let ab = principal_dist(&a, &b).unwrap();
        let ba = principal_dist(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn principal_dist_rejects_mismatched_shapes() {
        let a = qr_orthonormalize(&random_mat(7, 3, 41)).unwrap().0;
        let b = qr_orthonormalize(&random_mat(7, 2, 42)).unwrap().0;
        assert!(matches!(
            principal_dist(&a, &b),
            Err(SubspaceError::DimensionMismatch { .. })
        ));
    }

    // ---- spectral_norm ----

    #[test]
    fn spectral_norm_of_zero_is_zero() {
        assert_eq!(spectral_norm(&Mat::zeros(4, 3)), 0.0);
    }

    #[test]
    fn spectral_norm_of_diagonal_is_max_entry() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, 5.0, 2.0][i] } else { 0.0 });
        assert!((spectral_norm(&m) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_matches_svd_oracle() {
        let m = random_mat(5, 3, 77);
        let oracle = jacobi_singular_values(&m)[0];
        assert!((spectral_norm(&m) - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn eigensolver_reconstructs_matrix() {
        let z = random_symmetric(12, 5);
        let eig = symmetric_eigen(&z).unwrap();
        let lambda = Mat::from_fn(12, 12, |i, j| if i == j { eig.values[i] } else { 0.0 });
        let recon = eig.vectors.matmul(&lambda).matmul(&eig.vectors.transpose());
        assert!(recon.sub(&z).frob_norm() < 1e-11 * (1.0 + z.frob_norm()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_qr_invariants(seed in 0u64..500) {
            let mut m = random_mat(6, 3, seed);
            for j in 0..3 {
                m[(j, j)] += 3.0;
            }
            let (q, p) = qr_orthonormalize(&m).unwrap();
            prop_assert!(q.defect() <= 1e-10);
            let qp = q.cols().matmul(p.entries());
            prop_assert!(qp.sub(&m).frob_norm() <= 1e-9 * m.frob_norm());
            for j in 0..3 {
                prop_assert!(p.entries()[(j, j)] >= 0.0);
            }
        }

        #[test]
        fn prop_principal_dist_in_unit_interval_and_span_invariant(seed in 0u64..500) {
            let a = qr_orthonormalize(&random_mat(6, 2, seed)).unwrap().0;
            let b = qr_orthonormalize(&random_mat(6, 2, seed + 1000)).unwrap().0;
            let dist = principal_dist(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&dist));
            prop_assert!(principal_dist(&a, &a).unwrap() <= 1e-12);

            // Right-multiplying by a 2x2 rotation leaves the span unchanged.
            let theta = (seed as f64) * 0.37;
            let rot = Mat::from_flat(2, 2, vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
            let b_rot = OrthonormalBasis::new(b.cols().matmul(&rot)).unwrap();
            prop_assert!((principal_dist(&a, &b_rot).unwrap() - dist).abs() < 1e-9);
        }
    }
}
