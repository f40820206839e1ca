//! Low-rank matrix completion through facial reduction of the nuclear-norm
//! SDP.
//!
//! The nuclear-norm relaxation of low-rank completion embeds into a trace
//! minimization over a PSD matrix `Y = [W1, M; M^T, W2]`. Even though that
//! SDP satisfies strict feasibility, the optimal set lives on a small face
//! of the cone. Fully observed submatrices of the data (bicliques of the
//! sampling pattern) yield exposing vectors of that face; summing them
//! locates a basis `V` with `Y = V R V^T`, and the completion is solved in
//! the tiny reduced variable `R`.
//!
//! Pipeline stages, one module each:
//!
//! - [`partial`]: partial matrices, synthetic instances, noise, metrics, I/O
//! - [`cliques`]: the bipartite observation graph and biclique search
//! - [`exposing`]: per-clique factorizations, weights, the exposing matrix
//!   and the face basis
//! - [`reduced`]: the reduced constraint system, QR constraint selection,
//!   sketching
//! - [`solver`]: PSD least squares, trace minimization, flipped refinement
//! - [`pipeline`]: the noiseless and noisy end-to-end drivers
//! - [`bench`]: seeded benchmark grids with CSV/text tables

pub mod bench;
pub mod cliques;
pub mod exposing;
pub mod linalg;
pub mod partial;
pub mod pipeline;
pub mod reduced;
pub mod solver;

pub use cliques::{build_graph, extract_submatrix, find_cliques, Clique, ObservationGraph};
pub use exposing::{
    accumulate_exposing, clique_weight, complement_basis, exposing_weights, face_basis,
    full_rank_factor, ExposingMatrix, FaceBasis,
};
pub use partial::{
    apply_noise, generate_instance, read_partial_file, recover_fraction, residual,
    write_partial_file, CompletionConfig, EvalReport, NoiseSpec, PartialMatrix,
};
pub use pipeline::{complete_noiseless, complete_noisy, CompletionResult, PipelineError};
pub use reduced::{
    assemble, assemble_completion, numerical_rank, select_independent, sketch, Completion,
    ReducedProblem,
};
pub use solver::{flipped_refine, psd_least_squares, trace_min, SolveReport};
