//! Exposing vectors for the optimal face of the nuclear-norm SDP.
//!
//! Each fully observed p x q submatrix X with p > r (or q > r) exposes the
//! orthogonal complement of its row (column) range inside the corresponding
//! diagonal block of the big SDP variable. Contributions are weighted by a
//! scaled Eckart-Young distance, accumulated into a block-diagonal exposing
//! matrix, and the face basis is read off its null space.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::eigh_sorted;

#[derive(Debug, Error)]
pub enum ExposingError {
    #[error("over-exposed face (dimension 0): inconsistent cliques or wrong target rank")]
    OverExposed,
}

/// Full rank factorization `X = Pbar Qbar^T` from the compact SVD,
/// truncated at the numerical rank.
#[derive(Debug, Clone)]
pub struct FactorPair {
    pub pbar: DMatrix<f64>,
    pub qbar: DMatrix<f64>,
    pub k: usize,
    pub singular_values: Vec<f64>,
}

/// Compact-SVD factorization with `Pbar = U D^(1/2)`, `Qbar = V D^(1/2)`,
/// keeping the `k` singular values above `tol * sigma_max`.
pub fn full_rank_factor(x: &DMatrix<f64>, tol: f64) -> FactorPair {
    let (p, q) = x.shape();
    assert!(p > 0 && q > 0, "factorizing an empty matrix");
    let svd = crate::linalg::gram_svd(x, tol);
    let k = svd.sigma.len();
    let mut pbar = DMatrix::zeros(p, k);
    let mut qbar = DMatrix::zeros(q, k);
    for c in 0..k {
        let root = svd.sigma[c].sqrt();
        pbar.set_column(c, &(svd.u.column(c) * root));
        qbar.set_column(c, &(svd.v.column(c) * root));
    }
    FactorPair { pbar, qbar, k, singular_values: svd.sigma }
}

/// Orthonormal basis of the orthogonal complement of `range(Pbar)`.
/// Returns a `p x (p - k)` matrix; zero columns when `k = p`.
pub fn complement_basis(pbar: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, k) = pbar.shape();
    assert!(k <= p, "factor has more columns than rows");
    if k == 0 {
        return DMatrix::identity(p, p);
    }
    // Columns of Pbar are orthogonal; the complement is the top eigenspace
    // of I - U U^T with U the normalized factor.
    let mut proj = DMatrix::identity(p, p);
    for c in 0..k {
        let col = pbar.column(c);
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let u = col / norm;
        proj -= &u * u.transpose();
    }
    let (vals, vecs) = eigh_sorted(&proj);
    let keep = vals.iter().filter(|&&v| v > 0.5).count();
    debug_assert_eq!(keep, p - k);
    vecs.columns(p - keep, keep).into_owned()
}

/// Which diagonal block of the SDP variable a contribution lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Row,
    Col,
}

/// One side of one clique: the eigensystem of `Pbar Pbar^T` (row side) or
/// `Qbar Qbar^T` (column side), nondecreasing, plus the clique weight.
#[derive(Debug, Clone)]
pub struct CliqueContribution {
    pub side: Side,
    pub verts: Vec<usize>,
    pub eigvecs: DMatrix<f64>,
    pub eigvals: Vec<f64>,
    pub weight_u: f64,
}

/// Build the contribution of one clique side; `None` when the side is not
/// larger than the target rank (no useful exposing vector).
pub fn side_contribution(
    side: Side,
    verts: &[usize],
    factor_side: &DMatrix<f64>,
    r: usize,
) -> Option<CliqueContribution> {
    let p = verts.len();
    if p <= r {
        return None;
    }
    debug_assert_eq!(factor_side.nrows(), p);
    let w = factor_side * factor_side.transpose();
    let (eigvals, eigvecs) = eigh_sorted(&w);
    let weight_u = clique_weight(&eigvals, r);
    Some(CliqueContribution { side, verts: verts.to_vec(), eigvecs, eigvals, weight_u })
}

/// Clique weight: scaled Eckart-Young distance to the nearest rank-r PSD
/// matrix,
/// `u = (sum_{i<=p-r} lambda_i^2 + sum_{i>p-r} min{0, lambda_i}^2) / (p(p-1)/2)`
/// over eigenvalues sorted nondecreasing. Zero for exact data.
pub fn clique_weight(eigvals: &[f64], r: usize) -> f64 {
    let p = eigvals.len();
    assert!(p > r, "clique weight requires side size above the target rank");
    let cut = p - r;
    let mut num = 0.0;
    for (i, &lam) in eigvals.iter().enumerate() {
        if i < cut {
            num += lam * lam;
        } else {
            let neg = lam.min(0.0);
            num += neg * neg;
        }
    }
    num / (0.5 * p as f64 * (p as f64 - 1.0))
}

/// Exposed-vector weights `w_i = 1 - u_i / sum(u)`.
///
/// Degeneracies: an (almost) all-zero weight list means exact data and every
/// weight becomes 1; a single clique would get `w = 0` from the formula, so
/// it is assigned 1 as well.
pub fn exposing_weights(us: &[f64]) -> Vec<f64> {
    assert!(!us.is_empty(), "no clique weights");
    let total: f64 = us.iter().sum();
    let abs_total: f64 = us.iter().map(|u| u.abs()).sum();
    let eps = 1e-14 * abs_total.max(1.0);
    if total <= eps {
        return vec![1.0; us.len()];
    }
    if us.len() == 1 {
        return vec![1.0];
    }
    us.iter().map(|&u| 1.0 - u / total).collect()
}

/// Block-diagonal exposing matrix: an `m x m` row block and an `n x n`
/// column block, both PSD; the off-diagonal blocks are identically zero.
#[derive(Debug, Clone)]
pub struct ExposingMatrix {
    pub row_block: DMatrix<f64>,
    pub col_block: DMatrix<f64>,
}

impl ExposingMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { row_block: DMatrix::zeros(m, m), col_block: DMatrix::zeros(n, n) }
    }

    /// Apply the block-diagonal matrix to a stacked `(m+n) x k` matrix.
    pub fn mul_stacked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.row_block.nrows();
        let n = self.col_block.nrows();
        assert_eq!(x.nrows(), m + n);
        let mut out = DMatrix::zeros(m + n, x.ncols());
        out.rows_mut(0, m).copy_from(&(&self.row_block * x.rows(0, m)));
        out.rows_mut(m, n).copy_from(&(&self.col_block * x.rows(m, n)));
        out
    }

    pub fn norm(&self) -> f64 {
        (self.row_block.norm_squared() + self.col_block.norm_squared()).sqrt()
    }

    /// Diagonal of the row block (coverage indicator for rows).
    pub fn row_diag(&self) -> Vec<f64> {
        (0..self.row_block.nrows()).map(|i| self.row_block[(i, i)]).collect()
    }

    pub fn col_diag(&self) -> Vec<f64> {
        (0..self.col_block.nrows()).map(|j| self.col_block[(j, j)]).collect()
    }
}

/// Weighted sum of per-clique exposing vectors: for each contribution the
/// outer product of its smallest `side - r` eigenvectors, scaled by its
/// weight, scattered into the matching diagonal block.
pub fn accumulate_exposing(
    contributions: &[CliqueContribution],
    weights: &[f64],
    r: usize,
    m: usize,
    n: usize,
) -> ExposingMatrix {
    assert_eq!(contributions.len(), weights.len());
    let mut out = ExposingMatrix::zeros(m, n);
    for (c, &w) in contributions.iter().zip(weights) {
        let p = c.verts.len();
        debug_assert!(p > r);
        let d = p - r;
        let e = c.eigvecs.columns(0, d);
        let outer = &e * e.transpose();
        let block = match c.side {
            Side::Row => &mut out.row_block,
            Side::Col => &mut out.col_block,
        };
        for (a, &va) in c.verts.iter().enumerate() {
            for (b, &vb) in c.verts.iter().enumerate() {
                block[(va, vb)] += w * outer[(a, b)];
            }
        }
    }
    out
}

/// Orthonormal basis of the face located by the exposing matrix.
///
/// `v_row` and `v_col` are the two blocks of the block-diagonal null-space
/// basis: `v_row = [N_row | 0]`, `v_col = [0 | N_col]`, so the stacked
/// `(m+n) x r_v` matrix has orthonormal columns and is annihilated by the
/// exposing matrix. The completion reads `Zhat = v_row R v_col^T`.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub v_row: DMatrix<f64>,
    pub v_col: DMatrix<f64>,
    pub r_v: usize,
    pub k_row: usize,
    pub k_col: usize,
    pub covered_rows: Vec<usize>,
    pub covered_cols: Vec<usize>,
    /// Whether both side nullities match the target rank, i.e. the maximal
    /// reduction r_v = 2r was reached.
    pub reached_target: bool,
}

impl FaceBasis {
    /// The stacked `(m+n) x r_v` basis.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.v_row.nrows();
        let n = self.v_col.nrows();
        let mut v = DMatrix::zeros(m + n, self.r_v);
        v.rows_mut(0, m).copy_from(&self.v_row);
        v.rows_mut(m, n).copy_from(&self.v_col);
        v
    }
}

/// Extract the face basis from the null space of the exposing matrix,
/// blockwise. Eigenvalues below `tol` times the block's largest eigenvalue
/// count as null; with noisy data that count can fall short of the target
/// rank, in which case the `r` smallest eigenvectors are kept so the face
/// is not over-exposed. With `restrict` set, rows and columns with zero
/// exposing diagonal are removed first.
pub fn face_basis(
    y_expo: &ExposingMatrix,
    r: usize,
    tol: f64,
    restrict: bool,
) -> Result<FaceBasis, ExposingError> {
    let (n_row, row_cov, k_row) = side_null_basis(&y_expo.row_block, r, tol, restrict);
    let (n_col, col_cov, k_col) = side_null_basis(&y_expo.col_block, r, tol, restrict);
    let r_v = k_row + k_col;
    if r_v == 0 {
        return Err(ExposingError::OverExposed);
    }
    let m = y_expo.row_block.nrows();
    let n = y_expo.col_block.nrows();
    let mut v_row = DMatrix::zeros(m, r_v);
    v_row.columns_mut(0, k_row).copy_from(&n_row);
    let mut v_col = DMatrix::zeros(n, r_v);
    v_col.columns_mut(k_row, k_col).copy_from(&n_col);
    Ok(FaceBasis {
        v_row,
        v_col,
        r_v,
        k_row,
        k_col,
        covered_rows: row_cov,
        covered_cols: col_cov,
        reached_target: k_row == r && k_col == r,
    })
}

/// Null basis of one diagonal block. Returns the embedded basis (full side
/// dimension, zero rows outside coverage when restricted), the covered
/// index set, and the kept dimension.
fn side_null_basis(
    block: &DMatrix<f64>,
    r: usize,
    tol: f64,
    restrict: bool,
) -> (DMatrix<f64>, Vec<usize>, usize) {
    let size = block.nrows();
    let diag_max = (0..size).map(|i| block[(i, i)]).fold(0.0f64, f64::max);
    let covered: Vec<usize> = (0..size)
        .filter(|&i| block[(i, i)] > 1e-12 * diag_max.max(1e-300))
        .collect();

    let (active, sub): (Vec<usize>, DMatrix<f64>) = if restrict {
        let idx = covered.clone();
        let mut s = DMatrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                s[(a, b)] = block[(i, j)];
            }
        }
        (idx, s)
    } else {
        ((0..size).collect(), block.clone())
    };

    if active.is_empty() {
        return (DMatrix::zeros(size, 0), covered, 0);
    }

    let (mut vals, vecs) = eigh_sorted(&sub);
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    // Tiny eigenvalues are rounded to zero before classification.
    for v in vals.iter_mut() {
        if v.abs() < 1e-12 * lam_max {
            *v = 0.0;
        }
    }
    let below = vals.iter().filter(|&&v| v <= tol * lam_max).count();
    let k = below.max(r).min(active.len());

    let mut basis = DMatrix::zeros(size, k);
    for c in 0..k {
        for (a, &i) in active.iter().enumerate() {
            basis[(i, c)] = vecs[(a, c)];
        }
    }
    (basis, covered, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cliques::{build_graph, extract_submatrix, find_cliques};
    use crate::partial::generate_instance;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    /// Optimal SDP variable built from the compact SVD of the ground truth:
    /// `Y* = [U; V] D [U; V]^T` with `U = U_M / sqrt(2)`, `D = 2 Sigma`.
    fn optimal_y(z: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
        let svd = crate::linalg::gram_svd(z, 1e-9);
        assert!(svd.sigma.len() >= r);
        let (m, n) = z.shape();
        let mut stacked = DMatrix::zeros(m + n, r);
        let mut d = DVector::zeros(r);
        for c in 0..r {
            let scale = 1.0 / 2.0f64.sqrt();
            stacked.view_mut((0, c), (m, 1)).copy_from(&(svd.u.column(c) * scale));
            stacked.view_mut((m, c), (n, 1)).copy_from(&(svd.v.column(c) * scale));
            d[c] = 2.0 * svd.sigma[c];
        }
        let mut scaled = stacked.clone();
        for c in 0..r {
            scaled.column_mut(c).scale_mut(d[c]);
        }
        &scaled * stacked.transpose()
    }

    #[test]
    fn factor_rank_one_unit() {
        let mut x = DMatrix::zeros(3, 3);
        x[(0, 0)] = 1.0;
        let f = full_rank_factor(&x, 1e-12);
        assert_eq!(f.k, 1);
        assert_relative_eq!(f.pbar[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.qbar[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        let rec = &f.pbar * f.qbar.transpose();
        assert_relative_eq!((rec - x).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn factor_outer_product() {
        let a = randn(6, 1, 1);
        let b = randn(4, 1, 2);
        let x = &a * b.transpose();
        let f = full_rank_factor(&x, 1e-12);
        assert_eq!(f.k, 1);
        let rec = &f.pbar * f.qbar.transpose();
        assert!((rec - &x).norm() < 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn factor_zero_matrix_contributes_nothing() {
        let x = DMatrix::zeros(3, 5);
        let f = full_rank_factor(&x, 1e-12);
        assert_eq!(f.k, 0);
        assert_eq!(f.pbar.ncols(), 0);
    }

    #[test]
    fn factor_columns_are_orthogonal() {
        let x = randn(8, 5, 3);
        let f = full_rank_factor(&x, 1e-12);
        let gram = f.pbar.transpose() * &f.pbar;
        for i in 0..f.k {
            for j in 0..f.k {
                if i != j {
                    assert!(gram[(i, j)].abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn clique_factor_recovers_target_rank() {
        // Noiseless cliques from rank-r instances have numerical rank r.
        for seed in 0..100 {
            let r = 1 + (seed as usize) % 3;
            let (truth, _) = generate_instance(12, 15, r, 1.0, seed).unwrap();
            let x = truth.view((0, 0), (6, 8)).into_owned();
            let f = full_rank_factor(&x, 1e-9);
            assert_eq!(f.k, r, "seed {seed}");
        }
    }

    #[test]
    fn complement_of_e1() {
        let p = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let u = complement_basis(&p);
        assert_eq!(u.shape(), (2, 1));
        assert_relative_eq!(u[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert!(u[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn complement_projector_identity() {
        let a = randn(9, 3, 4);
        let f = full_rank_factor(&a, 1e-12);
        let u = complement_basis(&f.pbar);
        assert_eq!(u.shape(), (9, 6));
        // Pbar^T U = 0
        assert!((f.pbar.transpose() * &u).norm() < 1e-10);
        // U U^T = I - proj(range Pbar)
        let mut proj = DMatrix::<f64>::identity(9, 9);
        for c in 0..f.k {
            let col = f.pbar.column(c);
            let q = col / col.norm();
            proj -= &q * q.transpose();
        }
        assert!((&u * u.transpose() - proj).norm() < 1e-10);
        // orthonormal columns
        assert!((u.transpose() * &u - DMatrix::identity(6, 6)).norm() < 1e-12);
    }

    #[test]
    fn complement_of_full_rank_is_empty() {
        let a = randn(4, 4, 5);
        let f = full_rank_factor(&a, 1e-12);
        assert_eq!(f.k, 4);
        let u = complement_basis(&f.pbar);
        assert_eq!(u.shape(), (4, 0));
        assert!((&u * u.transpose()).norm() < 1e-15);
    }

    #[test]
    fn clique_weight_hand_values() {
        // exact data: the p - r smallest eigenvalues vanish
        assert_eq!(clique_weight(&[0.0, 0.0, 2.0, 5.0], 2), 0.0);
        // p=3, r=1: (0.1^2 + 0.2^2) / 3
        assert_relative_eq!(
            clique_weight(&[0.1, 0.2, 5.0], 1),
            0.05 / 3.0,
            epsilon = 1e-15
        );
        // the min{0, lambda}^2 guard fires on a negative eigenvalue
        assert_relative_eq!(clique_weight(&[-0.1, 3.0], 1), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn exposing_weight_rules() {
        assert_eq!(exposing_weights(&[0.0, 0.0, 0.0]), vec![1.0, 1.0, 1.0]);
        let w = exposing_weights(&[1.0, 3.0]);
        assert_relative_eq!(w[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.25, epsilon = 1e-15);
        assert_eq!(exposing_weights(&[2.0]), vec![1.0]);
    }

    #[test]
    fn accumulate_single_row_contribution() {
        let c = CliqueContribution {
            side: Side::Row,
            verts: vec![3, 7],
            eigvecs: DMatrix::identity(2, 2),
            eigvals: vec![0.0, 1.0],
            weight_u: 0.0,
        };
        let y = accumulate_exposing(&[c], &[1.0], 1, 10, 5);
        assert_relative_eq!(y.row_block[(3, 3)], 1.0, epsilon = 1e-15);
        assert_eq!(y.row_block.norm(), 1.0);
        assert_eq!(y.col_block.norm(), 0.0);
    }

    #[test]
    fn accumulate_disjoint_cliques_is_direct_sum() {
        let mk = |verts: Vec<usize>, seed| {
            let f = full_rank_factor(&randn(3, 1, seed), 1e-12);
            side_contribution(Side::Row, &verts, &{
                // embed the 3x1 factor as-is
                f.pbar.clone()
            }, 1)
            .unwrap()
        };
        let c1 = mk(vec![0, 1, 2], 11);
        let c2 = mk(vec![5, 6, 7], 12);
        let both = accumulate_exposing(&[c1.clone(), c2.clone()], &[1.0, 1.0], 1, 8, 4);
        let only1 = accumulate_exposing(&[c1], &[1.0], 1, 8, 4);
        let only2 = accumulate_exposing(&[c2], &[1.0], 1, 8, 4);
        let sum = &only1.row_block + &only2.row_block;
        assert_relative_eq!((&both.row_block - sum).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn per_clique_block_is_scaled_projector() {
        for seed in 0..10 {
            let x = randn(5, 7, 100 + seed);
            let f = full_rank_factor(&x, 1e-12);
            let c = side_contribution(Side::Row, &[0, 1, 2, 3, 4], &f.pbar, 2).unwrap();
            let w = 0.7;
            let y = accumulate_exposing(&[c], &[w], 2, 5, 7);
            let (vals, _) = eigh_sorted(&y.row_block);
            for v in vals {
                assert!(
                    v.abs() < 1e-10 || (v - w).abs() < 1e-10,
                    "eigenvalue {v} not in {{0, {w}}}"
                );
            }
        }
    }

    #[test]
    fn exposing_annihilates_optimal_y_noiseless() {
        let (truth, sample) = generate_instance(4, 4, 1, 1.0, 3).unwrap();
        let g = build_graph(&sample);
        let cliques = find_cliques(&g, 4, 8, 10, 1);
        assert!(!cliques.is_empty());
        let mut contribs = Vec::new();
        for c in &cliques {
            let x = extract_submatrix(c, &sample).unwrap();
            let f = full_rank_factor(&x, 1e-9);
            if let Some(rc) = side_contribution(Side::Row, &c.rows, &f.pbar, 1) {
                contribs.push(rc);
            }
            if let Some(cc) = side_contribution(Side::Col, &c.cols, &f.qbar, 1) {
                contribs.push(cc);
            }
        }
        let us: Vec<f64> = contribs.iter().map(|c| c.weight_u).collect();
        let ws = exposing_weights(&us);
        let y = accumulate_exposing(&contribs, &ws, 1, 4, 4);
        let ystar = optimal_y(&truth, 1);
        let prod = y.mul_stacked(&ystar);
        assert!(prod.norm() <= 1e-10 * y.norm() * ystar.norm());
    }

    #[test]
    fn face_of_zero_exposing_is_identity() {
        let y = ExposingMatrix::zeros(3, 4);
        let f = face_basis(&y, 2, 1e-9, false).unwrap();
        assert_eq!(f.r_v, 7);
        assert_eq!((f.k_row, f.k_col), (3, 4));
        let v = f.stacked();
        assert!((v.transpose() * &v - DMatrix::identity(7, 7)).norm() < 1e-12);
        assert!(f.covered_rows.is_empty() && f.covered_cols.is_empty());
    }

    #[test]
    fn face_matches_analytic_null_basis() {
        // Block-diagonal exposing matrix with a known eigenstructure: each
        // block exposes everything except one direction.
        let m = 4;
        let n = 3;
        let dir_r = DVector::from_vec(vec![0.5, 0.5, 0.5, 0.5]);
        let dir_c = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let row_block = DMatrix::identity(m, m) - &dir_r * dir_r.transpose();
        let col_block = DMatrix::identity(n, n) - &dir_c * dir_c.transpose();
        let y = ExposingMatrix { row_block, col_block };
        let f = face_basis(&y, 1, 1e-9, false).unwrap();
        assert_eq!((f.k_row, f.k_col), (1, 1));
        // projector comparison on each side
        let pr = f.v_row.columns(0, 1) * f.v_row.columns(0, 1).transpose();
        assert!((pr - &dir_r * dir_r.transpose()).norm() < 1e-10);
        let pc = f.v_col.columns(1, 1) * f.v_col.columns(1, 1).transpose();
        assert!((pc - &dir_c * dir_c.transpose()).norm() < 1e-10);
        // the basis is annihilated by the exposing matrix
        assert!(y.mul_stacked(&f.stacked()).norm() < 1e-10);
    }

    fn pipeline_face(
        truth: &DMatrix<f64>,
        sample: &crate::partial::PartialMatrix,
        r: usize,
        seed: u64,
        budget: usize,
    ) -> (ExposingMatrix, Vec<crate::cliques::Clique>) {
        let _ = truth;
        let g = build_graph(sample);
        let min = 2 * (r + 2);
        let max = 6 * (r + 2);
        let cliques = find_cliques(&g, min, max, budget, seed);
        let mut contribs = Vec::new();
        for c in &cliques {
            let x = extract_submatrix(c, sample).unwrap();
            let f = full_rank_factor(&x, 1e-9);
            if let Some(rc) = side_contribution(Side::Row, &c.rows, &f.pbar, r) {
                contribs.push(rc);
            }
            if let Some(cc) = side_contribution(Side::Col, &c.cols, &f.qbar, r) {
                contribs.push(cc);
            }
        }
        let us: Vec<f64> = contribs.iter().map(|c| c.weight_u).collect();
        let ws = exposing_weights(&us);
        let y = accumulate_exposing(&contribs, &ws, r, sample.nrows(), sample.ncols());
        (y, cliques)
    }

    #[test]
    fn noiseless_face_reaches_target() {
        let r = 2;
        let (truth, sample) = generate_instance(40, 50, r, 0.6, 9).unwrap();
        let (y, _) = pipeline_face(&truth, &sample, r, 5, 200);
        let f = face_basis(&y, r, 1e-9, true).unwrap();
        assert_eq!((f.k_row, f.k_col), (r, r), "maximal reduction");
        assert_eq!(f.r_v, 2 * r);
        assert!(f.reached_target);
        let v = f.stacked();
        assert!((v.transpose() * &v - DMatrix::identity(f.r_v, f.r_v)).norm() < 1e-12);
        assert!(y.mul_stacked(&v).norm() < 1e-7 * y.norm().max(1.0));
    }

    #[test]
    fn face_projector_invariant_under_clique_permutation() {
        let r = 1;
        let (truth, sample) = generate_instance(20, 24, r, 0.7, 2).unwrap();
        let (_, cliques) = pipeline_face(&truth, &sample, r, 3, 80);
        let build = |order: &[usize]| {
            let mut contribs = Vec::new();
            for &k in order {
                let c = &cliques[k];
                let x = extract_submatrix(c, &sample).unwrap();
                let f = full_rank_factor(&x, 1e-9);
                if let Some(rc) = side_contribution(Side::Row, &c.rows, &f.pbar, r) {
                    contribs.push(rc);
                }
                if let Some(cc) = side_contribution(Side::Col, &c.cols, &f.qbar, r) {
                    contribs.push(cc);
                }
            }
            let ws = vec![1.0; contribs.len()];
            let y = accumulate_exposing(&contribs, &ws, r, 20, 24);
            let f = face_basis(&y, r, 1e-9, true).unwrap();
            let v = f.stacked();
            &v * v.transpose()
        };
        let fwd: Vec<usize> = (0..cliques.len()).collect();
        let rev: Vec<usize> = (0..cliques.len()).rev().collect();
        let pa = build(&fwd);
        let pb = build(&rev);
        assert!((pa - pb).norm() < 1e-8);
    }

    #[test]
    fn extra_cliques_never_enlarge_the_face() {
        let r = 2;
        let (truth, sample) = generate_instance(30, 36, r, 0.6, 4).unwrap();
        let g = build_graph(&sample);
        let cliques = find_cliques(&g, 8, 24, 120, 7);
        assert!(cliques.len() >= 6);
        let mut r_v_prev = usize::MAX;
        for take in [2, 4, cliques.len()] {
            let mut contribs = Vec::new();
            for c in cliques.iter().take(take) {
                let x = extract_submatrix(c, &sample).unwrap();
                let f = full_rank_factor(&x, 1e-9);
                if let Some(rc) = side_contribution(Side::Row, &c.rows, &f.pbar, r) {
                    contribs.push(rc);
                }
                if let Some(cc) = side_contribution(Side::Col, &c.cols, &f.qbar, r) {
                    contribs.push(cc);
                }
            }
            let ws = vec![1.0; contribs.len()];
            let y = accumulate_exposing(&contribs, &ws, r, 30, 36);
            let f = face_basis(&y, r, 1e-9, false).unwrap();
            assert!(f.r_v <= r_v_prev, "null space grew when adding cliques");
            r_v_prev = f.r_v;
        }
        let _ = truth;
    }
}
