//! End-to-end completion pipelines.
//!
//! Noiseless: cliques -> exposing -> face -> assemble -> pivoted-QR
//! constraint selection -> PSD least squares, falling through to trace
//! minimization when the rank overshoots. Noisy: the redundant system is
//! sketched instead, and a flipped parametric refinement shrinks the trace
//! until the dual multiplier signals the bound is binding.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::cliques::{build_graph, extract_submatrix, find_cliques, Clique};
use crate::exposing::{
    accumulate_exposing, exposing_weights, face_basis, full_rank_factor, side_contribution,
    ExposingError, FaceBasis, Side,
};
use crate::partial::{CompletionConfig, EvalReport, PartialMatrix};
use crate::reduced::{
    assemble, assemble_completion, numerical_rank, select_independent, sketch, Completion,
    ReducedError,
};
use crate::solver::{flipped_refine, psd_least_squares, trace_min, SolveReport, SolverError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("no cliques found: density too low or clique_min_size too large")]
    NoCliques,
    #[error(transparent)]
    Exposing(#[from] ExposingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl From<ReducedError> for PipelineError {
    fn from(e: ReducedError) -> Self {
        match e {
            // A face that covers no observed entry means no usable cliques.
            ReducedError::EmptyCoverage => PipelineError::NoCliques,
        }
    }
}

/// Everything a completion run produces.
#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub completion: Completion,
    pub eval: EvalReport,
    pub face: FaceBasis,
    pub r_v: usize,
    pub cliques_found: usize,
    pub excluded_entries: usize,
    /// Rows retained by QR selection (noiseless) or sketch rows (noisy).
    pub reduced_constraints: usize,
    pub initial: SolveReport,
    pub refined: Option<SolveReport>,
    pub final_r: DMatrix<f64>,
}

impl CompletionResult {
    pub fn final_report(&self) -> &SolveReport {
        self.refined.as_ref().unwrap_or(&self.initial)
    }

    /// Recompute the evaluation against a known ground truth; the residual
    /// of a partial recovery covers only the recovered block.
    pub fn eval_against(&self, truth: &DMatrix<f64>) -> EvalReport {
        let mut eval = self.eval.clone();
        eval.residual = self.completion.residual_vs(truth);
        eval
    }

    /// Residual of the initial (pre-refinement) solve against a truth.
    pub fn initial_residual_against(&self, truth: &DMatrix<f64>) -> f64 {
        let comp = assemble_completion(&self.face, &self.initial.r);
        comp.residual_vs(truth)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            eval: &'a EvalReport,
            r_v: usize,
            cliques_found: usize,
            excluded_entries: usize,
            reduced_constraints: usize,
            initial: &'a SolveReport,
            refined: Option<&'a SolveReport>,
        }
        serde_json::to_string_pretty(&Out {
            eval: &self.eval,
            r_v: self.r_v,
            cliques_found: self.cliques_found,
            excluded_entries: self.excluded_entries,
            reduced_constraints: self.reduced_constraints,
            initial: &self.initial,
            refined: self.refined.as_ref(),
        })
        .expect("result serialization")
    }
}

struct FaceStage {
    face: FaceBasis,
    cliques: Vec<Clique>,
    times: BTreeMap<String, f64>,
}

fn face_stage(p: &PartialMatrix, cfg: &CompletionConfig) -> Result<FaceStage, PipelineError> {
    cfg.validate().map_err(PipelineError::BadConfig)?;
    let mut times = BTreeMap::new();

    let t0 = Instant::now();
    let graph = build_graph(p);
    let budget = cfg.clique_budget(p.nrows(), p.ncols());
    let cliques = find_cliques(
        &graph,
        cfg.clique_min_size,
        cfg.clique_max_size,
        budget,
        cfg.seed,
    );
    times.insert("cliques".into(), t0.elapsed().as_secs_f64());
    if cliques.is_empty() {
        return Err(PipelineError::NoCliques);
    }

    let t1 = Instant::now();
    let r = cfg.target_rank;
    let mut contribs = Vec::new();
    for c in &cliques {
        let x = extract_submatrix(c, p).expect("clique integrity");
        let f = full_rank_factor(&x, cfg.null_tol);
        if let Some(rc) = side_contribution(Side::Row, &c.rows, &f.pbar, r) {
            contribs.push(rc);
        }
        if let Some(cc) = side_contribution(Side::Col, &c.cols, &f.qbar, r) {
            contribs.push(cc);
        }
    }
    if contribs.is_empty() {
        return Err(PipelineError::NoCliques);
    }
    let us: Vec<f64> = contribs.iter().map(|c| c.weight_u).collect();
    let ws = exposing_weights(&us);
    let y_expo = accumulate_exposing(&contribs, &ws, r, p.nrows(), p.ncols());
    let face = face_basis(&y_expo, r, cfg.null_tol, true)?;
    times.insert("exposing".into(), t1.elapsed().as_secs_f64());

    Ok(FaceStage { face, cliques, times })
}

fn finish(
    p: &PartialMatrix,
    cfg: &CompletionConfig,
    stage: FaceStage,
    mut times: BTreeMap<String, f64>,
    excluded: usize,
    reduced_constraints: usize,
    initial: SolveReport,
    refined: Option<SolveReport>,
) -> CompletionResult {
    let final_r = refined.as_ref().unwrap_or(&initial).r.clone();
    let completion = assemble_completion(&stage.face, &final_r);
    let rank = numerical_rank(&final_r, cfg.rank_tol);
    let recover = crate::partial::recover_fraction(
        &completion.covered_rows,
        &completion.covered_cols,
        p.nrows(),
        p.ncols(),
    );
    // Without a ground truth the residual is the relative misfit on the
    // covered observed entries.
    let residual = {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(i, j, v) in p.entries() {
            if completion.is_recovered(i, j) {
                let d = completion.zhat[(i, j)] - v;
                num += d * d;
                den += v * v;
            }
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            0.0
        }
    };
    times.extend(stage.times);
    let eval = EvalReport { residual, recover_fraction: recover, rank, stage_times: times };
    CompletionResult {
        completion,
        eval,
        r_v: stage.face.r_v,
        face: stage.face,
        cliques_found: stage.cliques.len(),
        excluded_entries: excluded,
        reduced_constraints,
        initial,
        refined,
        final_r,
    }
}

/// Exact-data pipeline: PSD least squares on the QR-selected constraints,
/// then regularized trace minimization if the rank overshoots the target.
pub fn complete_noiseless(
    p: &PartialMatrix,
    cfg: &CompletionConfig,
) -> Result<CompletionResult, PipelineError> {
    let stage = face_stage(p, cfg)?;
    let mut times = BTreeMap::new();

    let t0 = Instant::now();
    let full = assemble(&stage.face, p, cfg.gamma)?;
    let selected = select_independent(&full, cfg.qr_tol);
    let excluded = full.excluded;
    let retained = selected.n_constraints();
    times.insert("reduce".into(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let ls = psd_least_squares(&selected, cfg);
    times.insert("solve".into(), t1.elapsed().as_secs_f64());

    let t2 = Instant::now();
    let refined = if numerical_rank(&ls.r, cfg.rank_tol) > cfg.target_rank {
        Some(trace_min(&selected, cfg)?)
    } else {
        None
    };
    times.insert("refine".into(), t2.elapsed().as_secs_f64());

    Ok(finish(p, cfg, stage, times, excluded, retained, ls, refined))
}

/// Noisy pipeline: sketched PSD least squares as the base step, then the
/// flipped trace refinement on the full system when the rank overshoots.
pub fn complete_noisy(
    p: &PartialMatrix,
    cfg: &CompletionConfig,
) -> Result<CompletionResult, PipelineError> {
    let stage = face_stage(p, cfg)?;
    let mut times = BTreeMap::new();

    let t0 = Instant::now();
    let full = assemble(&stage.face, p, cfg.gamma)?;
    let sketch_seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
    let sketched = sketch(&full, full.r_v(), sketch_seed);
    let excluded = full.excluded;
    let sketch_rows = sketched.n_constraints();
    times.insert("reduce".into(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let mut base = psd_least_squares(&sketched, cfg);
    // delta_0 and the reported fit refer to the full system.
    base.fit_error = full.fit_error(&base.r);
    base.objective = base.fit_error * base.fit_error + full.gamma * base.r.norm_squared();
    times.insert("solve".into(), t1.elapsed().as_secs_f64());

    let t2 = Instant::now();
    let initial_rank = numerical_rank(&base.r, cfg.rank_tol);
    let refined = if initial_rank > cfg.target_rank {
        let tau0 = base.r.trace();
        let rep = flipped_refine(&full, tau0, &base.r, cfg);
        // Accept the refinement only if it did not inflate the rank.
        if numerical_rank(&rep.r, cfg.rank_tol) <= initial_rank {
            Some(rep)
        } else {
            None
        }
    } else {
        None
    };
    times.insert("refine".into(), t2.elapsed().as_secs_f64());

    Ok(finish(p, cfg, stage, times, excluded, sketch_rows, base, refined))
}
