//! Small dense-symmetric helpers shared by the exposing and solver stages:
//! svec packing, sorted eigendecompositions and spectral projections.

use nalgebra::{DMatrix, DVector};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Number of entries on and above the diagonal of an `s`-dimensional
/// symmetric matrix.
pub fn triangular(s: usize) -> usize {
    s * (s + 1) / 2
}

/// Pack a symmetric matrix into svec form (upper triangle, column-major,
/// off-diagonals scaled by sqrt(2)) so that `svec(A) . svec(B) = <A, B>`.
pub fn svec(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut out = DVector::zeros(triangular(n));
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            out[k] = if i == j { a[(i, j)] } else { SQRT2 * a[(i, j)] };
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn svec_to_mat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), triangular(n));
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out[(i, j)] = v[k];
            } else {
                let x = v[k] / SQRT2;
                out[(i, j)] = x;
                out[(j, i)] = x;
            }
            k += 1;
        }
    }
    out
}

/// Eigendecomposition of a symmetric matrix with eigenvalues (and matching
/// eigenvectors) sorted in nondecreasing order.
pub fn eigh_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = nalgebra::linalg::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[i].total_cmp(&sym.eigenvalues[j]));
    let vals: Vec<f64> = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &sym.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Project a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues at zero.
pub fn psd_project(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |lam| {
        lam.iter_mut().for_each(|x| *x = x.max(0.0));
    })
}

/// Project a symmetric matrix onto `{ R >= 0, trace(R) <= tau }`: clip
/// negative eigenvalues, then waterfill the excess trace away.
pub fn psd_trace_cap_project(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    spectral_map(a, |lam| {
        lam.iter_mut().for_each(|x| *x = x.max(0.0));
        let total: f64 = lam.iter().sum();
        if total <= tau {
            return;
        }
        // Project onto the simplex of radius tau.
        let mut sorted = lam.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (i, &v) in sorted.iter().enumerate() {
            cum += v;
            let t = (cum - tau) / (i + 1) as f64;
            if i + 1 == sorted.len() || sorted[i + 1] <= t {
                theta = t;
                break;
            }
        }
        lam.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
    })
}

fn spectral_map(a: &DMatrix<f64>, f: impl Fn(&mut Vec<f64>)) -> DMatrix<f64> {
    let (mut vals, vecs) = eigh_sorted(a);
    f(&mut vals);
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let v = vals[j];
        scaled.column_mut(j).scale_mut(v);
    }
    &scaled * vecs.transpose()
}

/// Frobenius inner product of two equally-sized matrices.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Compact SVD, truncated at `sigma > tol * sigma_max`.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    /// Left singular vectors, `p x k`.
    pub u: DMatrix<f64>,
    /// Retained singular values, descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `q x k`.
    pub v: DMatrix<f64>,
}

/// Compact SVD through the eigendecomposition of the smaller Gram matrix.
///
/// nalgebra's bidiagonal SVD misconverges on a small fraction of low-rank
/// rectangular inputs (reconstruction errors up to 1e-1 observed), while its
/// symmetric eigensolver is reliable; the Gram route sidesteps that at the
/// cost of squaring the spectrum, so singular values below roughly
/// `sqrt(machine eps) * sigma_max` cannot be resolved and the truncation
/// threshold is floored there.
pub fn gram_svd(x: &DMatrix<f64>, tol: f64) -> CompactSvd {
    let (p, q) = x.shape();
    assert!(p > 0 && q > 0, "svd of an empty matrix");
    let tall = p > q;
    let gram = if tall {
        x.transpose() * x
    } else {
        x * x.transpose()
    };
    let (vals, vecs) = eigh_sorted(&gram);
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    let lam_floor = lam_max * (tol * tol).max(1e-14);
    let k = vals.iter().filter(|&&v| v > lam_floor && v > 0.0).count();

    let small = gram.nrows();
    let mut sigma = Vec::with_capacity(k);
    let mut base = DMatrix::zeros(small, k);
    for c in 0..k {
        // descending order: take from the top of the ascending list
        let src = small - 1 - c;
        sigma.push(vals[src].sqrt());
        base.set_column(c, &vecs.column(src));
    }
    // Recover the other side as X v / sigma (or X^T u / sigma).
    let other = {
        let prod = if tall { x * &base } else { x.transpose() * &base };
        let mut o = prod;
        for c in 0..k {
            o.column_mut(c).scale_mut(1.0 / sigma[c]);
        }
        o
    };
    if tall {
        CompactSvd { u: other, sigma, v: base }
    } else {
        CompactSvd { u: base, sigma, v: other }
    }
}

/// Numerical rank by the Gram-route singular values.
pub fn svd_rank(x: &DMatrix<f64>, tol: f64) -> usize {
    gram_svd(x, tol).sigma.len()
}
