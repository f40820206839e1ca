//! Partial matrices: the problem input, synthetic instance generation,
//! noise injection, evaluation metrics and the on-disk text format.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartialError {
    #[error("invalid dimensions {m}x{n}")]
    InvalidDims { m: usize, n: usize },
    #[error("density {0} outside (0, 1]")]
    DensityOutOfRange(f64),
    #[error("rank {r} outside 1..=min({m},{n})")]
    RankOutOfRange { r: usize, m: usize, n: usize },
    #[error("entry ({i},{j}) out of range for {m}x{n}")]
    EntryOutOfRange { i: usize, j: usize, m: usize, n: usize },
    #[error("duplicate entry at ({i},{j})")]
    DuplicateEntry { i: usize, j: usize },
    #[error("a partial matrix needs at least one entry")]
    Empty,
    #[error("negative noise factor {0}")]
    NegativeSigma(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("ground truth matrix is zero")]
    ZeroGroundTruth,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampled entries of an `m x n` real matrix.
///
/// Entries are kept sorted by `(i, j)` and deduplicated; per-row observed
/// column lists are maintained for fast membership tests.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    m: usize,
    n: usize,
    entries: Vec<(usize, usize, f64)>,
    row_cols: Vec<Vec<usize>>,
    row_vals: Vec<Vec<f64>>,
}

impl PartialMatrix {
    pub fn new(
        m: usize,
        n: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self, PartialError> {
        if m == 0 || n == 0 {
            return Err(PartialError::InvalidDims { m, n });
        }
        if entries.is_empty() {
            return Err(PartialError::Empty);
        }
        for &(i, j, _) in &entries {
            if i >= m || j >= n {
                return Err(PartialError::EntryOutOfRange { i, j, m, n });
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(PartialError::DuplicateEntry { i: w[0].0, j: w[0].1 });
            }
        }
        let mut row_cols = vec![Vec::new(); m];
        let mut row_vals = vec![Vec::new(); m];
        for &(i, j, v) in &entries {
            row_cols[i].push(j);
            row_vals[i].push(v);
        }
        Ok(Self { m, n, entries, row_cols, row_vals })
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.m as f64 * self.n as f64)
    }

    /// Observed columns of row `i`, sorted ascending.
    pub fn cols_of_row(&self, i: usize) -> &[usize] {
        &self.row_cols[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let cols = &self.row_cols[i];
        cols.binary_search(&j).ok().map(|k| self.row_vals[i][k])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.row_cols[i].binary_search(&j).is_ok()
    }
}

/// Additive noise model: every observed value is perturbed by
/// `sigma * xi * max|Z|` with `xi` standard normal, i.i.d. per entry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, PartialError> {
        if !(sigma >= 0.0) {
            return Err(PartialError::NegativeSigma(sigma));
        }
        Ok(Self { sigma, seed })
    }
}

/// Pipeline-wide configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionConfig {
    /// Target rank `r` of the completion.
    pub target_rank: usize,
    /// Accepted range for clique sizes `p + q`.
    pub clique_min_size: usize,
    pub clique_max_size: usize,
    /// Clique-growth attempt budget; `None` picks `ceil(4 (m+n) / min_size)`.
    pub max_cliques: Option<usize>,
    /// Regularization weight; `None` picks `1e-6 * |b| / sqrt(t(r_v))`.
    pub gamma: Option<f64>,
    /// Relative eigenvalue threshold for numerical rank decisions.
    pub rank_tol: f64,
    /// Relative eigenvalue threshold separating the null space of the
    /// exposing blocks.
    pub null_tol: f64,
    /// Relative pivot threshold for constraint selection.
    pub qr_tol: f64,
    /// Refinement stops once the trace-bound multiplier exceeds this.
    pub dual_stop: f64,
    /// Multiplicative step of the trace bound during refinement.
    pub tau_shrink: f64,
    pub refine_max_steps: usize,
    /// Relative projected-gradient tolerance of the inner solver.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Master seed; clique search and sketching derive their streams from it.
    pub seed: u64,
}

impl CompletionConfig {
    /// Defaults for a given target rank: clique sizes `[2(r+2), 6(r+2)]`,
    /// the `.01` dual-multiplier stop and a `0.9` trace shrink.
    pub fn for_rank(r: usize) -> Self {
        Self {
            target_rank: r,
            clique_min_size: 2 * (r + 2),
            clique_max_size: 6 * (r + 2),
            max_cliques: None,
            gamma: None,
            rank_tol: 1e-6,
            null_tol: 1e-9,
            qr_tol: 1e-8,
            dual_stop: 0.01,
            tau_shrink: 0.9,
            refine_max_steps: 50,
            solver_tol: 1e-9,
            solver_max_iter: 200_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.target_rank == 0 {
            return Err("target rank must be at least 1".into());
        }
        if self.clique_min_size <= self.target_rank {
            return Err(format!(
                "clique_min_size {} must exceed the target rank {}",
                self.clique_min_size, self.target_rank
            ));
        }
        if self.clique_min_size > self.clique_max_size {
            return Err("clique_min_size must not exceed clique_max_size".into());
        }
        if !(self.tau_shrink > 0.0 && self.tau_shrink < 1.0) {
            return Err(format!("tau_shrink {} outside (0, 1)", self.tau_shrink));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0) {
                return Err(format!("gamma {g} must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn clique_budget(&self, m: usize, n: usize) -> usize {
        self.max_cliques
            .unwrap_or_else(|| (4 * (m + n)).div_ceil(self.clique_min_size))
            .max(1)
    }
}

/// Evaluation summary of a completion run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub residual: f64,
    pub recover_fraction: f64,
    pub rank: usize,
    pub stage_times: BTreeMap<String, f64>,
}

/// Generate a random rank-`r` ground truth `Z = Z_L Z_R` with standard
/// normal factors, and a partial matrix observing each position
/// independently with probability `density`.
pub fn generate_instance(
    m: usize,
    n: usize,
    r: usize,
    density: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, PartialMatrix), PartialError> {
    if m == 0 || n == 0 {
        return Err(PartialError::InvalidDims { m, n });
    }
    if r < 1 || r > m.min(n) {
        return Err(PartialError::RankOutOfRange { r, m, n });
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(PartialError::DensityOutOfRange(density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut left = DMatrix::zeros(m, r);
    for i in 0..m {
        for k in 0..r {
            left[(i, k)] = rng.sample(StandardNormal);
        }
    }
    let mut right = DMatrix::zeros(r, n);
    for k in 0..r {
        for j in 0..n {
            right[(k, j)] = rng.sample(StandardNormal);
        }
    }
    let truth = &left * &right;

    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < density {
                entries.push((i, j, truth[(i, j)]));
            }
        }
    }
    if entries.is_empty() {
        // Possible only at very small sizes and densities; resample once from
        // a derived stream so tiny benchmarks do not die on an empty draw.
        let mut retry = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let i = retry.random_range(0..m);
        let j = retry.random_range(0..n);
        entries.push((i, j, truth[(i, j)]));
    }
    let sample = PartialMatrix::new(m, n, entries)?;
    Ok((truth, sample))
}

/// Perturb every observed value by `sigma * xi * max|Z|`.
pub fn apply_noise(
    sample: &PartialMatrix,
    ground_truth: &DMatrix<f64>,
    spec: &NoiseSpec,
) -> Result<PartialMatrix, PartialError> {
    if ground_truth.nrows() != sample.m || ground_truth.ncols() != sample.n {
        return Err(PartialError::ShapeMismatch(
            ground_truth.nrows(),
            ground_truth.ncols(),
            sample.m,
            sample.n,
        ));
    }
    if spec.sigma == 0.0 {
        return Ok(sample.clone());
    }
    let scale = ground_truth.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let entries = sample
        .entries
        .iter()
        .map(|&(i, j, v)| {
            let xi: f64 = rng.sample(StandardNormal);
            (i, j, v + spec.sigma * xi * scale)
        })
        .collect();
    PartialMatrix::new(sample.m, sample.n, entries)
}

/// Relative Frobenius error `|Zhat - Z|_F / |Z|_F`.
pub fn residual(zhat: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<f64, PartialError> {
    if zhat.shape() != z.shape() {
        return Err(PartialError::ShapeMismatch(
            zhat.nrows(),
            zhat.ncols(),
            z.nrows(),
            z.ncols(),
        ));
    }
    let denom = z.norm();
    if denom == 0.0 {
        return Err(PartialError::ZeroGroundTruth);
    }
    Ok((zhat - z).norm() / denom)
}

/// Fraction of the matrix covered by the recovered rows and columns.
pub fn recover_fraction(
    covered_rows: &[usize],
    covered_cols: &[usize],
    m: usize,
    n: usize,
) -> f64 {
    debug_assert!(covered_rows.iter().all(|&i| i < m));
    debug_assert!(covered_cols.iter().all(|&j| j < n));
    (covered_rows.len() as f64 * covered_cols.len() as f64) / (m as f64 * n as f64)
}

/// Write the two-section text format: a `"m n"` header line followed by one
/// `"i j value"` line per entry, 0-based, 17+ significant digits.
pub fn write_partial<W: Write>(p: &PartialMatrix, mut w: W) -> Result<(), PartialError> {
    writeln!(w, "{} {}", p.m, p.n)?;
    for &(i, j, v) in &p.entries {
        writeln!(w, "{} {} {:.17e}", i, j, v)?;
    }
    Ok(())
}

pub fn write_partial_file<P: AsRef<Path>>(p: &PartialMatrix, path: P) -> Result<(), PartialError> {
    let f = std::fs::File::create(path)?;
    write_partial(p, std::io::BufWriter::new(f))
}

pub fn read_partial<R: BufRead>(r: R) -> Result<PartialMatrix, PartialError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(PartialError::Parse { line: 1, msg: "missing header".into() })?;
    let header = header?;
    let mut it = header.split_whitespace();
    let m: usize = parse_field(it.next(), 1, "row count")?;
    let n: usize = parse_field(it.next(), 1, "column count")?;
    if it.next().is_some() {
        return Err(PartialError::Parse { line: 1, msg: "trailing tokens in header".into() });
    }
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let i: usize = parse_field(it.next(), lineno, "row index")?;
        let j: usize = parse_field(it.next(), lineno, "column index")?;
        let v: f64 = parse_field(it.next(), lineno, "value")?;
        if it.next().is_some() {
            return Err(PartialError::Parse { line: lineno, msg: "trailing tokens".into() });
        }
        if i >= m || j >= n {
            return Err(PartialError::Parse {
                line: lineno,
                msg: format!("index ({i},{j}) out of range for {m}x{n}"),
            });
        }
        if !seen.insert((i, j)) {
            return Err(PartialError::Parse {
                line: lineno,
                msg: format!("duplicate entry ({i},{j})"),
            });
        }
        entries.push((i, j, v));
    }
    PartialMatrix::new(m, n, entries)
}

pub fn read_partial_file<P: AsRef<Path>>(path: P) -> Result<PartialMatrix, PartialError> {
    let f = std::fs::File::open(path)?;
    read_partial(BufReader::new(f))
}

fn parse_field<T: std::str::FromStr>(
    tok: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, PartialError> {
    let tok = tok.ok_or_else(|| PartialError::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| PartialError::Parse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}
