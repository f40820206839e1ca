//! Bipartite observation graph and biclique search.
//!
//! A "clique" here mixes row and column vertices of the sampling pattern;
//! its cross entries are all observed, so it corresponds to a fully
//! specified p x q submatrix. The finder grows many medium-size bicliques
//! greedily, biased toward vertices not covered yet.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partial::PartialMatrix;

#[derive(Debug, Error)]
pub enum CliqueError {
    #[error("clique references unobserved entry ({i},{j})")]
    MissingEntry { i: usize, j: usize },
    #[error("clique index out of range")]
    OutOfRange,
}

/// Adjacency of the bipartite observation pattern. Row vertices are
/// `0..m`, column vertices `m..m+n`; within-side vertices are implicitly
/// fully adjacent and never stored.
#[derive(Debug, Clone)]
pub struct ObservationGraph {
    m: usize,
    n: usize,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    edges: usize,
}

impl ObservationGraph {
    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Observed columns of a row vertex, sorted.
    pub fn row_neighbors(&self, i: usize) -> &[usize] {
        &self.row_adj[i]
    }

    /// Observed rows of a column vertex, sorted.
    pub fn col_neighbors(&self, j: usize) -> &[usize] {
        &self.col_adj[j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.row_adj[i].binary_search(&j).is_ok()
    }
}

pub fn build_graph(p: &PartialMatrix) -> ObservationGraph {
    let (m, n) = (p.nrows(), p.ncols());
    let mut row_adj = vec![Vec::new(); m];
    let mut col_adj = vec![Vec::new(); n];
    for &(i, j, _) in p.entries() {
        row_adj[i].push(j);
        col_adj[j].push(i);
    }
    // Entries are sorted by (i, j), so row lists arrive sorted and column
    // lists arrive sorted by construction order.
    ObservationGraph { m, n, row_adj, col_adj, edges: p.len() }
}

/// A fully observed p x q submatrix, stored as sorted index lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clique {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Clique {
    pub fn p(&self) -> usize {
        self.rows.len()
    }

    pub fn q(&self) -> usize {
        self.cols.len()
    }

    pub fn size(&self) -> usize {
        self.rows.len() + self.cols.len()
    }

    /// One clique per line, `{"rows":[...],"cols":[...]}`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("clique serialization")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

pub fn cliques_to_jsonl(cliques: &[Clique]) -> String {
    let mut out = String::new();
    for c in cliques {
        out.push_str(&c.to_json_line());
        out.push('\n');
    }
    out
}

pub fn cliques_from_jsonl(text: &str) -> Result<Vec<Clique>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Clique::from_json_line)
        .collect()
}

/// Greedy randomized biclique search.
///
/// Runs `max_cliques` growth attempts. Each attempt seeds at an observed
/// entry biased toward uncovered vertices, grows the row set while the
/// common column support stays wide enough, then takes the widest column
/// set that fits `max_size`. Returned cliques are deduplicated and listed
/// in attempt order, deterministically for a fixed seed.
pub fn find_cliques(
    g: &ObservationGraph,
    min_size: usize,
    max_size: usize,
    max_cliques: usize,
    seed: u64,
) -> Vec<Clique> {
    assert!(min_size <= max_size, "min_size must not exceed max_size");
    assert!(max_cliques >= 1);
    let (m, n) = (g.m, g.n);
    let total_entries: usize = g.edges;
    if total_entries == 0 {
        return Vec::new();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row_cov = vec![false; m];
    let mut col_cov = vec![false; n];
    let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
    let mut out = Vec::new();

    // Flat entry list for uniform seeding.
    let mut flat = Vec::with_capacity(total_entries);
    for (i, adj) in g.row_adj.iter().enumerate() {
        for &j in adj {
            flat.push((i, j));
        }
    }

    let p_cap = (max_size / 2).max(1);
    let q_floor = (min_size / 2).max(1);

    for _ in 0..max_cliques {
        // Seed entry: a few uniform candidates plus a few drawn from
        // uncovered rows and columns, scored by how many uncovered
        // endpoints they hit.
        let mut best: Option<((usize, usize), i32)> = None;
        for k in 0..16 {
            let cand = if k < 8 {
                flat[rng.random_range(0..flat.len())]
            } else if k < 12 {
                let uncovered: Vec<usize> = (0..m).filter(|&i| !row_cov[i]).collect();
                if uncovered.is_empty() {
                    flat[rng.random_range(0..flat.len())]
                } else {
                    let i = uncovered[rng.random_range(0..uncovered.len())];
                    if g.row_adj[i].is_empty() {
                        continue;
                    }
                    let j = g.row_adj[i][rng.random_range(0..g.row_adj[i].len())];
                    (i, j)
                }
            } else {
                let uncovered: Vec<usize> = (0..n).filter(|&j| !col_cov[j]).collect();
                if uncovered.is_empty() {
                    flat[rng.random_range(0..flat.len())]
                } else {
                    let j = uncovered[rng.random_range(0..uncovered.len())];
                    if g.col_adj[j].is_empty() {
                        continue;
                    }
                    let i = g.col_adj[j][rng.random_range(0..g.col_adj[j].len())];
                    (i, j)
                }
            };
            let score = !row_cov[cand.0] as i32 * 2 + !col_cov[cand.1] as i32;
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((cand, score));
            }
        }
        let Some(((i0, _j0), _)) = best else { continue };

        let mut rows = vec![i0];
        let mut support: Vec<usize> = g.row_adj[i0].clone();

        // Grow the row set by intersecting column supports.
        while rows.len() < p_cap && support.len() > q_floor {
            let needed = q_floor.max(min_size.saturating_sub(rows.len() + 1));
            let pivot_col = support[rng.random_range(0..support.len())];
            let pool = &g.col_adj[pivot_col];
            let mut pick: Option<(usize, Vec<usize>, (bool, usize))> = None;
            for _ in 0..8 {
                let cand = pool[rng.random_range(0..pool.len())];
                if rows.contains(&cand) {
                    continue;
                }
                let inter = intersect_sorted(&support, &g.row_adj[cand]);
                if inter.len() < needed {
                    continue;
                }
                let key = (!row_cov[cand], inter.len());
                if pick.as_ref().map_or(true, |(_, _, k)| key > *k) {
                    pick = Some((cand, inter, key));
                }
            }
            match pick {
                Some((cand, inter, _)) => {
                    rows.push(cand);
                    support = inter;
                }
                None => break,
            }
        }

        if rows.len() + support.len() < min_size {
            continue;
        }

        // Widest column set that fits: prefer uncovered, then well-connected
        // columns; drop the least-connected overflow. Ties are broken by a
        // per-attempt shuffle so repeated attempts produce overlapping (not
        // identical) column sets, which is what stitches the null spaces of
        // different cliques together.
        let q_take = support.len().min(max_size.saturating_sub(rows.len()));
        if q_take == 0 {
            continue;
        }
        let mut ranked = support.clone();
        ranked.shuffle(&mut rng);
        ranked.sort_by_key(|&c| (col_cov[c], usize::MAX - g.col_adj[c].len()));
        let mut cols: Vec<usize> = ranked.into_iter().take(q_take).collect();
        cols.sort_unstable();
        rows.sort_unstable();

        if rows.len() + cols.len() < min_size || rows.len() + cols.len() > max_size {
            continue;
        }
        let key = (rows.clone(), cols.clone());
        if !seen.insert(key) {
            continue;
        }
        for &i in &rows {
            row_cov[i] = true;
        }
        for &j in &cols {
            col_cov[j] = true;
        }
        out.push(Clique { rows, cols });
    }
    out
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[x]);
                x += 1;
                y += 1;
            }
        }
    }
    out
}

/// Dense submatrix of the observed values at the clique's rows and columns.
pub fn extract_submatrix(c: &Clique, p: &PartialMatrix) -> Result<DMatrix<f64>, CliqueError> {
    if c.rows.iter().any(|&i| i >= p.nrows()) || c.cols.iter().any(|&j| j >= p.ncols()) {
        return Err(CliqueError::OutOfRange);
    }
    let mut out = DMatrix::zeros(c.rows.len(), c.cols.len());
    for (a, &i) in c.rows.iter().enumerate() {
        for (b, &j) in c.cols.iter().enumerate() {
            match p.get(i, j) {
                Some(v) => out[(a, b)] = v,
                None => return Err(CliqueError::MissingEntry { i, j }),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partial::{generate_instance, PartialMatrix};

    fn full_p(m: usize, n: usize) -> PartialMatrix {
        let mut e = Vec::new();
        for i in 0..m {
            for j in 0..n {
                e.push((i, j, (i * n + j) as f64));
            }
        }
        PartialMatrix::new(m, n, e).unwrap()
    }

    /// Independent membership check against the observed set.
    fn verify(c: &Clique, p: &PartialMatrix) -> bool {
        !c.rows.is_empty()
            && !c.cols.is_empty()
            && c.rows.iter().all(|&i| c.cols.iter().all(|&j| p.is_observed(i, j)))
    }

    #[test]
    fn graph_mirrors_observed_set() {
        let p = full_p(2, 2);
        let g = build_graph(&p);
        assert_eq!(g.edge_count(), 4);
        for i in 0..2 {
            for j in 0..2 {
                assert!(g.has_edge(i, j));
            }
        }

        let diag = PartialMatrix::new(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let g = build_graph(&diag);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(0, 0) && g.has_edge(1, 1));
        assert!(!g.has_edge(0, 1) && !g.has_edge(1, 0));
    }

    #[test]
    fn graph_edge_count_matches_entries() {
        let (_, p) = generate_instance(40, 50, 2, 0.3, 5).unwrap();
        let g = build_graph(&p);
        assert_eq!(g.edge_count(), p.len());
        let total: usize = (0..40).map(|i| g.row_neighbors(i).len()).sum();
        assert_eq!(total, p.len());
        let total_c: usize = (0..50).map(|j| g.col_neighbors(j).len()).sum();
        assert_eq!(total_c, p.len());
    }

    #[test]
    fn fully_observed_matrix_is_covered() {
        let p = full_p(10, 10);
        let g = build_graph(&p);
        let cliques = find_cliques(&g, 6, 12, 40, 1);
        assert!(!cliques.is_empty());
        for c in &cliques {
            assert!(verify(c, &p));
            assert!(c.size() >= 6 && c.size() <= 12);
        }
        let mut rows = vec![false; 10];
        let mut cols = vec![false; 10];
        for c in &cliques {
            c.rows.iter().for_each(|&i| rows[i] = true);
            c.cols.iter().for_each(|&j| cols[j] = true);
        }
        assert!(rows.iter().all(|&b| b), "all row vertices covered");
        assert!(cols.iter().all(|&b| b), "all column vertices covered");
    }

    #[test]
    fn diagonal_pattern_has_no_cliques() {
        let entries = (0..6).map(|i| (i, i, 1.0)).collect();
        let p = PartialMatrix::new(6, 6, entries).unwrap();
        let g = build_graph(&p);
        assert!(find_cliques(&g, 4, 12, 50, 3).is_empty());
    }

    #[test]
    fn random_instance_coverage_is_high() {
        let (_, p) = generate_instance(200, 300, 2, 0.35, 13).unwrap();
        let g = build_graph(&p);
        let cliques = find_cliques(&g, 8, 24, 250, 7);
        let mut covered = vec![false; 500];
        for c in &cliques {
            assert!(verify(c, &p), "clique failed the brute-force audit");
            c.rows.iter().for_each(|&i| covered[i] = true);
            c.cols.iter().for_each(|&j| covered[200 + j] = true);
        }
        let frac = covered.iter().filter(|&&b| b).count() as f64 / 500.0;
        assert!(frac >= 0.95, "coverage {frac}");
    }

    #[test]
    fn results_are_deterministic_and_deduplicated() {
        let (_, p) = generate_instance(50, 60, 2, 0.4, 21).unwrap();
        let g = build_graph(&p);
        let a = find_cliques(&g, 8, 24, 60, 5);
        let b = find_cliques(&g, 8, 24, 60, 5);
        assert_eq!(a, b);
        let set: HashSet<_> = a.iter().collect();
        assert_eq!(set.len(), a.len());
    }

    #[test]
    fn coverage_is_monotone_in_budget() {
        let (_, p) = generate_instance(60, 70, 2, 0.4, 2).unwrap();
        let g = build_graph(&p);
        let small = find_cliques(&g, 8, 24, 30, 11);
        let large = find_cliques(&g, 8, 24, 90, 11);
        // Same seed: the larger budget extends the attempt sequence, so the
        // returned set can only grow.
        assert!(small.len() <= large.len());
        for c in &small {
            assert!(large.contains(c));
        }
    }

    #[test]
    fn extract_full_matrix_round_trips() {
        let p = full_p(3, 4);
        let c = Clique { rows: vec![0, 1, 2], cols: vec![0, 1, 2, 3] };
        let x = extract_submatrix(&c, &p).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(x[(i, j)], p.get(i, j).unwrap());
            }
        }
        let single = Clique { rows: vec![1], cols: vec![2] };
        let x = extract_submatrix(&single, &p).unwrap();
        assert_eq!(x[(0, 0)], p.get(1, 2).unwrap());
    }

    #[test]
    fn extract_matches_ground_truth_restriction() {
        let (truth, p) = generate_instance(40, 50, 2, 0.5, 8).unwrap();
        let g = build_graph(&p);
        let cliques = find_cliques(&g, 8, 24, 40, 9);
        assert!(!cliques.is_empty());
        for c in &cliques {
            let x = extract_submatrix(c, &p).unwrap();
            for (a, &i) in c.rows.iter().enumerate() {
                for (b, &j) in c.cols.iter().enumerate() {
                    assert_eq!(x[(a, b)], truth[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn extract_rejects_missing_entries() {
        let diag = PartialMatrix::new(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        let c = Clique { rows: vec![0, 1], cols: vec![0] };
        assert!(matches!(
            extract_submatrix(&c, &diag),
            Err(CliqueError::MissingEntry { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let cliques = vec![
            Clique { rows: vec![0, 2], cols: vec![1, 3, 4] },
            Clique { rows: vec![5], cols: vec![0] },
        ];
        let text = cliques_to_jsonl(&cliques);
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"rows\":[0,2],\"cols\":[1,3,4]}"));
        let back = cliques_from_jsonl(&text).unwrap();
        assert_eq!(back, cliques);
    }
}
