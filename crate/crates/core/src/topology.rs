//! Agent communication graphs and the doubly stochastic mixing matrices that
//! drive consensus.
//!
//! A [`Graph`] is an undirected simple graph on `m` agents. A [`MixingMatrix`]
//! is a symmetric, doubly stochastic, graph-consistent and positive definite
//! weight matrix `W`; the lifted operator `W ⊗ I_n` is never formed, agent
//! blocks are mixed row by row instead.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{NdgdError, Result};
use crate::fmt17;

/// Tolerance for "eigenvalue equals one" when checking that the consensus
/// subspace is the whole null space of `I - W`.
pub const UNIT_EIGEN_TOL: f64 = 1e-10;
/// Tolerance on row/column sums and on `lambda_max <= 1`.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected simple graph with 0-indexed agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    /// Stored as `(i, j)` with `i < j`.
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from unordered pairs. Self-loops, duplicates (in either
    /// orientation) and out-of-range indices are rejected.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m < 2 {
            return Err(NdgdError::Parameter(format!("graph needs at least 2 agents, got {m}")));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= m || b >= m {
                return Err(NdgdError::Parameter(format!("edge ({a}, {b}) out of range for m = {m}")));
            }
            if a == b {
                return Err(NdgdError::Parameter(format!("self-loop at agent {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(NdgdError::Parameter(format!("duplicate edge {{{}, {}}}", e.0, e.1)));
            }
        }
        Ok(Self { m, edges: set })
    }

    pub fn complete(m: usize) -> Result<Self> {
        let edges = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)));
        Self::new(m, edges)
    }

    pub fn cycle(m: usize) -> Result<Self> {
        if m < 3 {
            return Self::new(m, [(0, 1)]);
        }
        Self::new(m, (0..m).map(|i| (i, (i + 1) % m)))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Edge-list text: a header line `m <count>` followed by one `i j` pair
    /// per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("m {}\n", self.m);
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| NdgdError::Parameter("empty edge list".into()))?;
        let m = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["m", count] => {
                count.parse::<usize>().map_err(|e| NdgdError::Parameter(format!("bad agent count {count:?}: {e}")))?
            }
            _ => return Err(NdgdError::Parameter(format!("expected header `m <count>`, got {header:?}"))),
        };
        let mut edges = Vec::new();
        for line in lines {
            let parts: Vec<_> = line.split_whitespace().collect();
            let [a, b] = parts.as_slice() else {
                return Err(NdgdError::Parameter(format!("expected `i j`, got {line:?}")));
            };
            let parse =
                |s: &str| s.parse::<usize>().map_err(|e| NdgdError::Parameter(format!("bad agent index {s:?}: {e}")));
            edges.push((parse(a)?, parse(b)?));
        }
        Self::new(m, edges)
    }

    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }
}

/// Random `degree`-regular simple connected graph on `m` agents.
///
/// Stubs are paired configuration-model style, drawing only pairs that keep
/// the graph simple; a dead end or a disconnected result restarts the
/// pairing. At most `10 * m` attempts are made.
pub fn build_regular_graph(m: usize, degree: usize, seed: u64) -> Result<Graph> {
    if m < 2 {
        return Err(NdgdError::Parameter(format!("need m >= 2, got {m}")));
    }
    if degree == 0 || degree >= m {
        return Err(NdgdError::Parameter(format!("need 1 <= degree < m, got degree {degree} for m = {m}")));
    }
    if !(m * degree).is_multiple_of(2) {
        return Err(NdgdError::Parameter(format!(
            "m * degree = {} is odd; no {degree}-regular graph on {m} agents",
            m * degree
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 10 * m;
    for _ in 0..budget {
        let Some(edges) = try_pairing(m, degree, &mut rng) else {
            continue;
        };
        let g = Graph::new(m, edges)?;
        if check_connected(&g) {
            return Ok(g);
        }
    }
    Err(NdgdError::Construction(format!(
        "no connected {degree}-regular graph on {m} agents after {budget} attempts (seed {seed})"
    )))
}

fn try_pairing(m: usize, degree: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, degree)).collect();
    stubs.shuffle(rng);
    let mut taken: BTreeSet<(usize, usize)> = BTreeSet::new();
    while !stubs.is_empty() {
        let suitable: Vec<(usize, usize)> = (0..stubs.len())
            .flat_map(|a| (a + 1..stubs.len()).map(move |b| (a, b)))
            .filter(|&(a, b)| {
                let (u, v) = (stubs[a], stubs[b]);
                u != v && !taken.contains(&(u.min(v), u.max(v)))
            })
            .collect();
        if suitable.is_empty() {
            return None;
        }
        let (a, b) = suitable[rng.random_range(0..suitable.len())];
        let (u, v) = (stubs[a], stubs[b]);
        taken.insert((u.min(v), u.max(v)));
        // remove the higher index first so the lower one stays valid
        stubs.swap_remove(b);
        stubs.swap_remove(a);
    }
    Some(taken.into_iter().collect())
}

/// Breadth-first reachability from agent 0.
pub fn check_connected(g: &Graph) -> bool {
    let adj = g.neighbors();
    let mut seen = vec![false; g.m()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == g.m()
}

/// Symmetric consensus weight matrix with its spectral summary.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    /// Nonzero entries of each row, `(column, weight)`.
    rows: Vec<Vec<(usize, f64)>>,
    lambda_min: f64,
    lambda_2: f64,
}

impl MixingMatrix {
    /// Wraps a dense square matrix and computes its spectral summary. No
    /// mixing-matrix conditions are enforced here; see [`validate_mixing`].
    pub fn from_dense(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() < 2 {
            return Err(NdgdError::Parameter(format!(
                "mixing matrix must be square with m >= 2, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(NdgdError::Parameter("mixing matrix has non-finite entries".into()));
        }
        let (lambda_min, lambda_2) = spectral_summary(&entries)?;
        let rows = (0..entries.nrows())
            .map(|i| (0..entries.ncols()).filter(|&j| entries[(i, j)] != 0.0).map(|j| (j, entries[(i, j)])).collect())
            .collect();
        Ok(Self { entries, rows, lambda_min, lambda_2 })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_2(&self) -> f64 {
        self.lambda_2
    }

    pub fn spectral(&self) -> Spectral {
        Spectral { lambda_min: self.lambda_min, lambda_2: self.lambda_2 }
    }

    /// `(W ⊗ I_n) x` for a stacked vector with blocks of length `n`.
    pub fn mix(&self, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.m() * n);
        let mut out = vec![0.0; x.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let dst = &mut out[i * n..(i + 1) * n];
            for &(j, w) in row {
                for (d, s) in dst.iter_mut().zip(&x[j * n..(j + 1) * n]) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// `((I - W) ⊗ I_n) x`.
    pub fn laplacian_apply(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mixed = self.mix(x, n);
        x.iter().zip(mixed).map(|(a, b)| a - b).collect()
    }

    /// Row-major CSV, 17 significant digits per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.m() {
            let row: Vec<String> = (0..self.m()).map(|j| fmt17(self.entries[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|e| NdgdError::Parameter(format!("bad matrix entry {s:?}: {e}")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(NdgdError::Parameter("mixing matrix CSV is not square".into()));
        }
        Self::from_dense(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }
}

/// `(lambda_min(W), lambda_2(W))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spectral {
    pub lambda_min: f64,
    pub lambda_2: f64,
}

/// Lazy Metropolis weights: `M_ij = 1 / (1 + max(deg_i, deg_j))` on edges,
/// diagonal completing each row to one, then `W = (I + M) / 2`.
pub fn lazy_metropolis_mixing(g: &Graph) -> Result<MixingMatrix> {
    if !check_connected(g) {
        return Err(NdgdError::Precondition("lazy Metropolis mixing requires a connected graph".into()));
    }
    let m = g.m();
    let deg = g.degrees();
    let mut metropolis = DMatrix::<f64>::zeros(m, m);
    for (i, j) in g.edges() {
        let w = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        metropolis[(i, j)] = w;
        metropolis[(j, i)] = w;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| metropolis[(i, j)]).sum();
        metropolis[(i, i)] = 1.0 - off;
    }
    let w = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        0.5 * (id + metropolis[(i, j)])
    });
    MixingMatrix::from_dense(w)
}

/// Full symmetric eigendecomposition; `lambda_2` is the largest magnitude
/// among the eigenvalues left after removing one copy of the largest one.
pub fn spectral_summary(w: &DMatrix<f64>) -> Result<(f64, f64)> {
    let mut eig = sorted_eigenvalues(w)?;
    let lambda_min = eig[0];
    eig.pop();
    let lambda_2 = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok((lambda_min, lambda_2))
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| NdgdError::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(NdgdError::Numeric("non-finite eigenvalue".into()));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// One verdict per mixing-matrix condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// (i) `w_ij > 0` exactly on edges and the diagonal, zero elsewhere.
    pub sparsity: Check,
    /// (ii) `W = W^T`.
    pub symmetry: Check,
    /// (iii) `null(I - W) = span(1)`: `W 1 = 1` and eigenvalue one is simple.
    pub consensus_nullspace: Check,
    /// (iv) `0 < W <= I`.
    pub spectrum_bounds: Check,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.sparsity.passed && self.symmetry.passed && self.consensus_nullspace.passed && self.spectrum_bounds.passed
    }
}

pub fn validate_mixing(w: &MixingMatrix, g: &Graph) -> Result<ValidationReport> {
    let m = w.m();
    if g.m() != m {
        return Err(NdgdError::Parameter(format!("mixing matrix is {m}x{m} but graph has {} agents", g.m())));
    }
    let a = w.entries();

    let mut bad = Vec::new();
    for i in 0..m {
        if a[(i, i)] <= 0.0 {
            bad.push(format!("w[{i},{i}] = {} not positive", a[(i, i)]));
        }
        for j in (0..m).filter(|&j| j != i) {
            let v = a[(i, j)];
            match (g.has_edge(i, j), v > 0.0, v == 0.0) {
                (true, true, _) | (false, _, true) => {}
                (true, false, _) => bad.push(format!("w[{i},{j}] = {v} on an edge")),
                (false, _, false) => bad.push(format!("w[{i},{j}] = {v} off the graph")),
            }
        }
    }
    let sparsity =
        if bad.is_empty() { Check::new(true, "pattern matches graph") } else { Check::new(false, summarize(&bad)) };

    let asym = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)] - a[(j, i)]).abs())
        .fold(0.0f64, f64::max);
    let symmetry = Check::new(asym <= STOCHASTIC_TOL, format!("max |w_ij - w_ji| = {asym:.3e}"));

    let eig = sorted_eigenvalues(a)?;
    let row_dev = (0..m)
        .map(|i| (a.row(i).sum() - 1.0).abs())
        .chain((0..m).map(|j| (a.column(j).sum() - 1.0).abs()))
        .fold(0.0f64, f64::max);
    let unit = eig.iter().filter(|v| (*v - 1.0).abs() <= UNIT_EIGEN_TOL).count();
    let consensus_nullspace = Check::new(
        unit == 1 && row_dev <= STOCHASTIC_TOL,
        format!("{unit} eigenvalue(s) within {UNIT_EIGEN_TOL:e} of 1; max row/col sum deviation {row_dev:.3e}"),
    );

    let (lo, hi) = (eig[0], eig[m - 1]);
    let spectrum_bounds = Check::new(lo > 0.0 && hi <= 1.0 + STOCHASTIC_TOL, format!("spectrum in [{lo:.6}, {hi:.6}]"));

    Ok(ValidationReport { sparsity, symmetry, consensus_nullspace, spectrum_bounds })
}

fn summarize(items: &[String]) -> String {
    const SHOWN: usize = 3;
    let mut s = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join("; ");
    if items.len() > SHOWN {
        let _ = write!(s, "; and {} more", items.len() - SHOWN);
    }
    s
}
