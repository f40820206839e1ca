//! PSD-constrained solvers for the reduced problem: semidefinite least
//! squares, regularized trace minimization, and the flipped parametric
//! refinement with the dual-multiplier stopping rule.
//!
//! All three run an accelerated projected-gradient method in svec
//! coordinates; the PSD cone (optionally trace-capped) is handled by exact
//! spectral projection. The reduced variable stays small after facial
//! reduction, so the per-iteration eigendecompositions are cheap.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{psd_project, psd_trace_cap_project, svec, svec_to_mat};
use crate::partial::CompletionConfig;
use crate::reduced::{numerical_rank, ReducedProblem};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("retained system is infeasible (fit {fit:.3e} above tolerance {tol:.3e}); corrupted data in noiseless mode")]
    Infeasible { fit: f64, tol: f64 },
}

/// Outcome of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub r: DMatrix<f64>,
    pub objective: f64,
    pub fit_error: f64,
    pub tau: Option<f64>,
    pub multiplier: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization")
    }
}

/// Feasible region of the spectral projection step.
#[derive(Clone, Copy)]
enum Region {
    Psd,
    PsdTraceCap(f64),
}

impl Region {
    fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            Region::Psd => psd_project(x),
            Region::PsdTraceCap(tau) => psd_trace_cap_project(x, tau),
        }
    }
}

/// Minimize `0.5 |Phi svec R - b|^2 + 0.5 gamma |R|_F^2` over the region by
/// FISTA with gradient restart. Returns the iterate, iteration count, and
/// whether the projected-gradient residual met the tolerance.
fn apg(
    prob: &ReducedProblem,
    region: Region,
    x0: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> (DMatrix<f64>, usize, bool) {
    let dim = prob.r_v();
    let gram = prob.phi.transpose() * &prob.phi;
    let atb = prob.phi.transpose() * &prob.rhs;
    let gram_max = {
        let sym = nalgebra::linalg::SymmetricEigen::new(gram.clone());
        sym.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b))
    };
    // An explicit gamma weights the ridge as given. The defaulted gamma only
    // enters the reported objectives: the constraint rows carry face-basis
    // scaling (norms ~ 1/sqrt(mn)), so any data-scaled ridge would bias the
    // fit far beyond the noiseless tolerance; a spectrum-relative whisper
    // keeps the minimizer unique without moving it.
    let gamma = if prob.gamma_explicit {
        prob.gamma
    } else {
        1e-12 * gram_max
    };

    // Lipschitz constant of the smooth part.
    let lip = (gram_max + gamma).max(1e-300);
    let step = 1.0 / lip;
    let grad = |x: &DVector<f64>| -> DVector<f64> { &gram * x - &atb + gamma * x };
    let scale = 1.0 + atb.norm();

    let mut x = svec(&region.project(x0));
    let mut x_prev = x.clone();
    let mut t_k = 1.0f64;
    let mut converged = false;
    let mut iter = 0;

    while iter < max_iter {
        iter += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        let beta = (t_k - 1.0) / t_next;
        let y = &x + (&x - &x_prev) * beta;
        let g = grad(&y);
        let cand = svec(&region.project(&svec_to_mat(&(&y - &g * step), dim)));

        // Gradient restart: momentum pointing uphill resets acceleration.
        if (&y - &cand).dot(&(&cand - &x)) > 0.0 {
            t_k = 1.0;
        } else {
            t_k = t_next;
        }
        x_prev = x;
        x = cand;

        // Projected-gradient residual at the new point.
        let gx = grad(&x);
        let px = svec(&region.project(&svec_to_mat(&(&x - &gx * step), dim)));
        let pg_res = (&x - &px).norm() * lip;
        if pg_res <= tol * scale {
            converged = true;
            break;
        }
    }
    (svec_to_mat(&x, dim), iter, converged)
}

/// Semidefinite constrained least squares
/// `min_{R >= 0} |Phi svec R - b|^2 + gamma |R|_F^2`.
pub fn psd_least_squares(prob: &ReducedProblem, cfg: &CompletionConfig) -> SolveReport {
    let x0 = DMatrix::zeros(prob.r_v(), prob.r_v());
    let (r, iterations, converged) =
        apg(prob, Region::Psd, &x0, cfg.solver_tol, cfg.solver_max_iter);
    let fit = prob.fit_error(&r);
    SolveReport {
        objective: fit * fit + prob.gamma * r.norm_squared(),
        fit_error: fit,
        tau: None,
        multiplier: None,
        iterations,
        converged,
        r,
    }
}

/// Regularized trace minimization
/// `min trace(R) + gamma |R|_F  s.t.  Phi svec R = b, R >= 0`,
/// solved by bisecting the smallest trace bound that keeps the retained
/// system feasible. Signals an error when even the unconstrained PSD fit
/// cannot meet the feasibility tolerance.
pub fn trace_min(
    prob: &ReducedProblem,
    cfg: &CompletionConfig,
) -> Result<SolveReport, SolverError> {
    let base = psd_least_squares(prob, cfg);
    let b_norm = prob.rhs.norm();
    let feas_tol = 1e-7 * b_norm.max(1.0);
    if base.fit_error > feas_tol {
        return Err(SolverError::Infeasible { fit: base.fit_error, tol: feas_tol });
    }
    // Feasibility level for the bisection: the base fit plus solver slack.
    let fit_accept = (base.fit_error * 1.5).max(1e-8 * b_norm.max(1.0));

    let tau_hi0 = base.r.trace();
    if tau_hi0 <= 1e-300 {
        let fit = base.fit_error;
        return Ok(SolveReport {
            objective: base.r.trace() + prob.gamma * base.r.norm(),
            fit_error: fit,
            tau: Some(0.0),
            multiplier: None,
            iterations: base.iterations,
            converged: true,
            r: base.r,
        });
    }

    let mut lo = 0.0f64;
    let mut hi = tau_hi0;
    let mut best = base.r.clone();
    let mut iters = base.iterations;
    let mut warm = base.r.clone();
    for _ in 0..60 {
        if hi - lo <= 1e-9 * tau_hi0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (r, it, _) = apg(
            prob,
            Region::PsdTraceCap(mid),
            &warm,
            cfg.solver_tol,
            cfg.solver_max_iter,
        );
        iters += it;
        let fit = prob.fit_error(&r);
        if fit <= fit_accept {
            hi = mid;
            best = r.clone();
            warm = r;
        } else {
            lo = mid;
            warm = r;
        }
    }
    let fit = prob.fit_error(&best);
    Ok(SolveReport {
        objective: best.trace() + prob.gamma * best.norm(),
        fit_error: fit,
        tau: Some(hi),
        multiplier: None,
        iterations: iters,
        converged: true,
        r: best,
    })
}

/// One flipped solve: `phi(tau) = min |Phi svec R - b| + gamma |R|_F`
/// subject to `trace(R) <= tau`, `R >= 0`. Returns the minimizer and the
/// reported objective value.
fn flipped_solve(
    prob: &ReducedProblem,
    tau: f64,
    warm: &DMatrix<f64>,
    cfg: &CompletionConfig,
) -> (DMatrix<f64>, f64, usize) {
    let (r, iters, _) = apg(
        prob,
        Region::PsdTraceCap(tau),
        warm,
        cfg.solver_tol,
        cfg.solver_max_iter,
    );
    let value = prob.fit_error(&r) + prob.gamma * r.norm();
    (r, value, iters)
}

/// Parametric refinement: shrink the trace bound `tau <- tau_shrink * tau`
/// from `tau0`, estimating the trace-constraint multiplier by the finite
/// difference of `phi`; stop once the multiplier exceeds `dual_stop`, the
/// numerical rank reaches the target, or the step cap is hit.
pub fn flipped_refine(
    prob: &ReducedProblem,
    tau0: f64,
    r_base: &DMatrix<f64>,
    cfg: &CompletionConfig,
) -> SolveReport {
    let r_target = cfg.target_rank;
    let mut tau = tau0;
    let mut r_cur = psd_trace_cap_project(r_base, tau);
    let mut phi_cur = prob.fit_error(&r_cur) + prob.gamma * r_cur.norm();
    let mut iters = 0usize;
    let mut multiplier = 0.0f64;

    if tau0 <= 1e-300 {
        let r = DMatrix::zeros(prob.r_v(), prob.r_v());
        let value = prob.rhs.norm();
        return SolveReport {
            objective: value,
            fit_error: value,
            tau: Some(0.0),
            multiplier: Some(0.0),
            iterations: 0,
            converged: true,
            r,
        };
    }

    let mut converged = false;
    for _ in 0..cfg.refine_max_steps {
        if numerical_rank(&r_cur, cfg.rank_tol) <= r_target {
            converged = true;
            break;
        }
        let tau_next = cfg.tau_shrink * tau;
        let (r_next, phi_next, it) = flipped_solve(prob, tau_next, &r_cur, cfg);
        iters += it;
        let lambda_hat = (phi_next - phi_cur) / (tau - tau_next);
        if lambda_hat > cfg.dual_stop {
            // The bound started to bind; keep the last point whose
            // multiplier stayed below the threshold.
            multiplier = lambda_hat;
            converged = true;
            break;
        }
        multiplier = lambda_hat;
        tau = tau_next;
        r_cur = r_next;
        phi_cur = phi_next;
    }

    let fit = prob.fit_error(&r_cur);
    SolveReport {
        objective: fit + prob.gamma * r_cur.norm(),
        fit_error: fit,
        tau: Some(tau),
        multiplier: Some(multiplier),
        iterations: iters,
        converged,
        r: r_cur,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposing::FaceBasis;
    use crate::linalg::triangular;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn dummy_face(r_v: usize) -> FaceBasis {
        FaceBasis {
            v_row: DMatrix::identity(r_v, r_v),
            v_col: DMatrix::identity(r_v, r_v),
            r_v,
            k_row: r_v / 2,
            k_col: r_v - r_v / 2,
            covered_rows: (0..r_v).collect(),
            covered_cols: (0..r_v).collect(),
            reached_target: false,
        }
    }

    fn problem_from(phi: DMatrix<f64>, rhs: DVector<f64>, gamma: f64) -> ReducedProblem {
        let t = phi.ncols();
        let r_v = (0..=t).find(|&s| triangular(s) == t).expect("triangular size");
        ReducedProblem {
            face: dummy_face(r_v),
            phi,
            rhs,
            entry_idx: Vec::new(),
            gamma,
            gamma_explicit: false,
            excluded: 0,
            sketched: false,
        }
    }

    fn cfg() -> CompletionConfig {
        CompletionConfig::for_rank(1)
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose()
    }

    #[test]
    fn least_squares_recovers_consistent_psd() {
        // Injective Phi: probe every svec coordinate.
        let t = triangular(3);
        let phi = DMatrix::<f64>::identity(t, t);
        let r0 = random_psd(3, 2, 4);
        let rhs = &phi * svec(&r0);
        let prob = problem_from(phi, rhs, 0.0);
        let rep = psd_least_squares(&prob, &cfg());
        assert!(rep.converged);
        assert!((rep.r - r0).norm() < 1e-8);
        assert!(rep.fit_error < 1e-8);
    }

    #[test]
    fn least_squares_projects_negative_data() {
        // 1x1 problem, Phi = [1], b = [-1]: the PSD constraint pins R = 0.
        let phi = DMatrix::from_element(1, 1, 1.0);
        let rhs = DVector::from_element(1, -1.0);
        let prob = problem_from(phi, rhs, 0.0);
        let rep = psd_least_squares(&prob, &cfg());
        assert!(rep.r[(0, 0)].abs() < 1e-12);
        assert_relative_eq!(rep.fit_error, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_min_single_constraint() {
        // trace(R) = c on a 1x1 variable.
        let c = 2.5;
        let phi = DMatrix::from_element(1, 1, 1.0);
        let rhs = DVector::from_element(1, c);
        let prob = problem_from(phi, rhs, 1e-10);
        let rep = trace_min(&prob, &cfg()).unwrap();
        assert_relative_eq!(rep.r[(0, 0)], c, max_relative = 1e-6);
        assert_relative_eq!(rep.objective, c, max_relative = 1e-5);
    }

    #[test]
    fn trace_min_drives_free_coordinates_to_zero() {
        // 2x2 variable, single constraint R_11 = 1; trace pressure kills R_22.
        let t = triangular(2);
        let mut phi = DMatrix::zeros(1, t);
        phi[(0, 0)] = 1.0; // svec coordinate of R_11
        let rhs = DVector::from_element(1, 1.0);
        let prob = problem_from(phi, rhs, 1e-10);
        let rep = trace_min(&prob, &cfg()).unwrap();
        assert_relative_eq!(rep.r[(0, 0)], 1.0, max_relative = 1e-5);
        assert!(rep.r[(1, 1)].abs() < 1e-6, "R_22 = {}", rep.r[(1, 1)]);
    }

    #[test]
    fn trace_min_rejects_infeasible_systems() {
        // Contradictory constraints on a 1x1 variable.
        let phi = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let rhs = DVector::from_vec(vec![0.0, 1.0]);
        let prob = problem_from(phi, rhs, 0.0);
        assert!(matches!(
            trace_min(&prob, &cfg()),
            Err(SolverError::Infeasible { .. })
        ));
    }

    #[test]
    fn flipped_zero_tau_gives_zero() {
        let t = triangular(2);
        let phi = DMatrix::<f64>::identity(t, t);
        let r0 = random_psd(2, 2, 9);
        let rhs = &phi * svec(&r0);
        let prob = problem_from(phi, rhs.clone(), 0.0);
        let rep = flipped_refine(&prob, 0.0, &DMatrix::zeros(2, 2), &cfg());
        assert!(rep.r.norm() < 1e-12);
        assert_relative_eq!(rep.objective, rhs.norm(), epsilon = 1e-12);
    }

    #[test]
    fn flipped_inactive_bound_has_small_multiplier() {
        let t = triangular(2);
        let phi = DMatrix::<f64>::identity(t, t);
        let r0 = random_psd(2, 1, 5);
        let rhs = &phi * svec(&r0);
        let prob = problem_from(phi, rhs, 1e-12);
        let mut c = cfg();
        c.target_rank = 1;
        // tau far above the trace of the optimum: the first shrink step still
        // leaves the bound slack, so the multiplier estimate stays near zero.
        let tau0 = 50.0 * r0.trace();
        let rep = flipped_refine(&prob, tau0, &r0, &c);
        assert!(rep.converged);
        assert!(rep.multiplier.unwrap().abs() < 1e-6);
        assert!(rep.fit_error < 1e-7);
    }

    #[test]
    fn flipped_shrinks_rank_on_inflated_start() {
        // Consistent rank-1 data; start from an inflated rank-2 iterate and
        // ask for rank 1. Refinement must shrink to the rank-1 solution
        // without losing fit.
        let t = triangular(2);
        let phi = DMatrix::<f64>::from_row_slice(
            2,
            t,
            &[
                1.0, 0.0, 0.0, // R_11
                0.0, 0.0, 1.0, // R_22
            ],
        );
        let r_true = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let rhs = &phi * svec(&r_true);
        let prob = problem_from(phi, rhs, 1e-12);
        let inflated = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.8]);
        let mut c = cfg();
        c.target_rank = 1;
        let rep = flipped_refine(&prob, inflated.trace(), &inflated, &c);
        assert!(numerical_rank(&rep.r, c.rank_tol) <= 1);
    }

    #[test]
    fn phi_is_nonincreasing_along_the_schedule() {
        let t = triangular(3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let phi = DMatrix::from_fn(40, t, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rhs = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prob = problem_from(phi, rhs, 1e-9);
        let c = cfg();
        // Walking tau downward, phi(tau) must be nondecreasing: the feasible
        // set only shrinks.
        let mut tau = 3.0;
        let mut prev = -f64::INFINITY;
        let mut warm = DMatrix::zeros(3, 3);
        for _ in 0..12 {
            let (r, value, _) = flipped_solve(&prob, tau, &warm, &c);
            assert!(
                value >= prev - 1e-7 * prev.abs().max(1.0),
                "phi({tau}) = {value} dropped below {prev}"
            );
            prev = value;
            warm = r;
            tau *= c.tau_shrink;
        }
    }

    #[test]
    fn report_serializes_without_the_matrix() {
        let rep = SolveReport {
            r: DMatrix::identity(2, 2),
            objective: 1.0,
            fit_error: 0.5,
            tau: Some(2.0),
            multiplier: None,
            iterations: 12,
            converged: true,
        };
        let json = rep.to_json();
        assert!(json.contains("\"objective\""));
        assert!(json.contains("\"fit_error\""));
        assert!(json.contains("\"tau\""));
        assert!(json.contains("\"multiplier\""));
        assert!(json.contains("\"iterations\""));
        assert!(json.contains("\"converged\""));
        assert!(!json.contains("\"r\""));
    }
}
