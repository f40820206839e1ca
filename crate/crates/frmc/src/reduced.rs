//! The facially reduced constraint system `(V R V^T)_E = b` over the small
//! PSD variable R, plus the two ways of shrinking it: pivoted-QR constraint
//! selection for exact data and Gaussian sketching for noisy data.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::exposing::FaceBasis;
use crate::linalg::{eigh_sorted, svec, triangular};
use crate::partial::PartialMatrix;

#[derive(Debug, Error)]
pub enum ReducedError {
    #[error("no cliques found: the face covers no observed entries")]
    EmptyCoverage,
}

/// Linear system `Phi svec(R) = b` with one row per covered observed entry;
/// row (i, j) is `svec(G_ij)` for `G_ij = (v_i w_j^T + w_j v_i^T) / 2`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    pub face: FaceBasis,
    pub phi: DMatrix<f64>,
    pub rhs: DVector<f64>,
    /// Observed positions backing each constraint row; cleared by sketching.
    pub entry_idx: Vec<(usize, usize)>,
    pub gamma: f64,
    /// Whether gamma was supplied by the caller (and should weight the
    /// least-squares ridge) or defaulted (objective reporting only).
    pub gamma_explicit: bool,
    /// Observed entries outside the covered rows/columns.
    pub excluded: usize,
    pub sketched: bool,
}

impl ReducedProblem {
    pub fn r_v(&self) -> usize {
        self.face.r_v
    }

    pub fn n_constraints(&self) -> usize {
        self.phi.nrows()
    }

    /// `|Phi svec(R) - b|` for a given R.
    pub fn fit_error(&self, r_mat: &DMatrix<f64>) -> f64 {
        (&self.phi * svec(r_mat) - &self.rhs).norm()
    }

    pub fn is_degenerate(&self) -> bool {
        self.phi.nrows() == 0
    }
}

/// Build the reduced problem from a face basis, one constraint per observed
/// entry whose row and column are both covered. `gamma = None` picks
/// `1e-6 |b| / sqrt(t(r_v))`.
pub fn assemble(
    face: &FaceBasis,
    p: &PartialMatrix,
    gamma: Option<f64>,
) -> Result<ReducedProblem, ReducedError> {
    let r_v = face.r_v;
    let t = triangular(r_v);
    let row_ok: Vec<bool> = {
        let mut v = vec![false; p.nrows()];
        face.covered_rows.iter().for_each(|&i| v[i] = true);
        v
    };
    let col_ok: Vec<bool> = {
        let mut v = vec![false; p.ncols()];
        face.covered_cols.iter().for_each(|&j| v[j] = true);
        v
    };

    let mut kept = Vec::new();
    let mut excluded = 0usize;
    for &(i, j, v) in p.entries() {
        if row_ok[i] && col_ok[j] {
            kept.push((i, j, v));
        } else {
            excluded += 1;
        }
    }
    if kept.is_empty() {
        return Err(ReducedError::EmptyCoverage);
    }

    let mut phi = DMatrix::zeros(kept.len(), t);
    let mut rhs = DVector::zeros(kept.len());
    let mut entry_idx = Vec::with_capacity(kept.len());
    for (row, &(i, j, v)) in kept.iter().enumerate() {
        let vi = face.v_row.row(i);
        let wj = face.v_col.row(j);
        let g = (vi.transpose() * wj + wj.transpose() * vi) * 0.5;
        phi.row_mut(row).copy_from(&svec(&g).transpose());
        rhs[row] = v;
        entry_idx.push((i, j));
    }

    let gamma_explicit = gamma.is_some();
    let gamma = gamma.unwrap_or_else(|| 1e-6 * rhs.norm() / (t as f64).sqrt());
    Ok(ReducedProblem {
        face: face.clone(),
        phi,
        rhs,
        entry_idx,
        gamma,
        gamma_explicit,
        excluded,
        sketched: false,
    })
}

/// Keep a well-conditioned, linearly independent subset of constraints via
/// column-pivoted QR on `Phi^T`: pivot while `|R_kk| >= qr_tol |R_11|`.
/// Exact data only; the discarded constraints are linear combinations of
/// the retained ones.
pub fn select_independent(prob: &ReducedProblem, qr_tol: f64) -> ReducedProblem {
    let n = prob.phi.nrows();
    let t = prob.phi.ncols();
    // Work on A = Phi^T (t x n); columns are constraints.
    let mut a = prob.phi.transpose();
    let mut pivots: Vec<usize> = Vec::new();
    let mut col_ids: Vec<usize> = (0..n).collect();
    let steps = t.min(n);
    let mut r11 = 0.0f64;

    for k in 0..steps {
        // pivot: remaining column with the largest residual norm
        let mut best = k;
        let mut best_norm = -1.0;
        for c in k..n {
            let nrm = a.view((k, c), (t - k, 1)).norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = c;
            }
        }
        if k == 0 {
            r11 = best_norm;
            if r11 == 0.0 {
                break;
            }
        }
        if best_norm < qr_tol * r11 {
            break;
        }
        a.swap_columns(k, best);
        col_ids.swap(k, best);
        pivots.push(col_ids[k]);

        // Householder reflection zeroing column k below row k.
        let mut v: DVector<f64> = a.view((k, k), (t - k, 1)).into_owned().column(0).into();
        let alpha = -v[0].signum() * v.norm();
        if alpha == 0.0 {
            continue;
        }
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm == 0.0 {
            continue;
        }
        v /= vnorm;
        for c in k..n {
            let col = a.view((k, c), (t - k, 1)).into_owned();
            let coef = 2.0 * v.dot(&col.column(0));
            for i in 0..(t - k) {
                a[(k + i, c)] -= coef * v[i];
            }
        }
    }

    retain_rows(prob, &pivots)
}

fn retain_rows(prob: &ReducedProblem, rows: &[usize]) -> ReducedProblem {
    let t = prob.phi.ncols();
    let mut phi = DMatrix::zeros(rows.len(), t);
    let mut rhs = DVector::zeros(rows.len());
    let mut entry_idx = Vec::with_capacity(rows.len());
    for (dst, &src) in rows.iter().enumerate() {
        phi.row_mut(dst).copy_from(&prob.phi.row(src));
        rhs[dst] = prob.rhs[src];
        if !prob.entry_idx.is_empty() {
            entry_idx.push(prob.entry_idx[src]);
        }
    }
    ReducedProblem {
        face: prob.face.clone(),
        phi,
        rhs,
        entry_idx,
        gamma: prob.gamma,
        gamma_explicit: prob.gamma_explicit,
        excluded: prob.excluded,
        sketched: prob.sketched,
    }
}

/// Compress an overdetermined noisy system with a Gaussian sketch of
/// `2 t(s)` rows, entries i.i.d. `N(0, 1/(2 t(s)))`. No-op when the system
/// is already at most that tall.
pub fn sketch(prob: &ReducedProblem, s: usize, seed: u64) -> ReducedProblem {
    let rows = 2 * triangular(s);
    let n = prob.phi.nrows();
    if n <= rows {
        return prob.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rows as f64).sqrt();
    let mut s_mat = DMatrix::zeros(rows, n);
    for i in 0..rows {
        for j in 0..n {
            s_mat[(i, j)] = scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    ReducedProblem {
        face: prob.face.clone(),
        phi: &s_mat * &prob.phi,
        rhs: &s_mat * &prob.rhs,
        entry_idx: Vec::new(),
        gamma: prob.gamma,
        gamma_explicit: prob.gamma_explicit,
        excluded: prob.excluded,
        sketched: true,
    }
}

/// Count of eigenvalues above `rank_tol * max(lambda_max, 1e-300)`.
pub fn numerical_rank(r_mat: &DMatrix<f64>, rank_tol: f64) -> usize {
    let (vals, _) = eigh_sorted(r_mat);
    let lam_max = vals.last().copied().unwrap_or(0.0);
    let thresh = rank_tol * lam_max.max(1e-300);
    vals.iter().filter(|&&v| v > thresh).count()
}

/// A completed matrix restricted to the covered block.
#[derive(Debug, Clone)]
pub struct Completion {
    pub zhat: DMatrix<f64>,
    pub covered_rows: Vec<usize>,
    pub covered_cols: Vec<usize>,
}

impl Completion {
    pub fn is_full(&self) -> bool {
        self.covered_rows.len() == self.zhat.nrows()
            && self.covered_cols.len() == self.zhat.ncols()
    }

    pub fn is_recovered(&self, i: usize, j: usize) -> bool {
        self.covered_rows.binary_search(&i).is_ok()
            && self.covered_cols.binary_search(&j).is_ok()
    }

    /// Relative Frobenius error against the ground truth, over the covered
    /// block only.
    pub fn residual_vs(&self, truth: &DMatrix<f64>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in &self.covered_rows {
            for &j in &self.covered_cols {
                let d = self.zhat[(i, j)] - truth[(i, j)];
                num += d * d;
                den += truth[(i, j)] * truth[(i, j)];
            }
        }
        if den == 0.0 {
            return if num == 0.0 { 0.0 } else { f64::INFINITY };
        }
        (num / den).sqrt()
    }
}

/// `Zhat = V_row R V_col^T`; positions outside the covered rows/columns are
/// zero-filled and flagged unrecovered.
pub fn assemble_completion(face: &FaceBasis, r_mat: &DMatrix<f64>) -> Completion {
    let zhat = &face.v_row * r_mat * face.v_col.transpose();
    Completion {
        zhat,
        covered_rows: face.covered_rows.clone(),
        covered_cols: face.covered_cols.clone(),
    }
}
