//! Undirected topologies, Laplacians, and symmetric Bernoulli link failures.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, asymmetry};
use crate::rng::{self, RoundKey};

/// Absolute tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Edge-count limit for exhaustive enumeration of failure patterns.
pub const EXACT_ENUMERATION_EDGES: usize = 12;

/// Dense matrix checked to be symmetric; stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asym = asymmetry(&m);
        if !(asym <= SYMMETRY_TOL) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(SymMatrix(linalg::symmetrize(&m)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn spectrum(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(linalg::jacobi_eigen(m.as_matrix())?.values)
}

/// Undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// `(i, j)` with `i < j`, sorted lexicographically.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph { n, edges, neighbors })
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges)
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph("a ring needs at least 3 nodes".into()));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Graph::new(n, &edges)
    }

    /// The built-in 10-node, 17-edge topology: the ring 0–1–…–9–0 plus the
    /// chords listed in [`DEFAULT_CHORDS`].
    pub fn default_topology() -> Self {
        let mut edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        edges.extend_from_slice(&DEFAULT_CHORDS);
        Graph::new(10, &edges).expect("default topology is valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// ν^(i).
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// ν̄^(i) = ν^(i) + 1.
    pub fn nu_bar(&self, i: usize) -> usize {
        self.degree(i) + 1
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn degree_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { self.degree(i) as f64 } else { 0.0 })
    }

    /// L̄ = D − A.
    pub fn laplacian(&self) -> SymMatrix {
        SymMatrix(laplacian_of_mask(self, &vec![true; self.n_edges()]))
    }

    /// Largest Laplacian eigenvalue ρ(L̄).
    pub fn laplacian_radius(&self) -> Result<f64> {
        let s = spectrum(&self.laplacian())?;
        Ok(s.last().copied().unwrap_or(0.0).max(0.0))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Θ = (I + A)(I + D)⁻¹.
    pub fn theta_matrix(&self) -> DMatrix<f64> {
        let mut theta = self.adjacency() + DMatrix::identity(self.n, self.n);
        for j in 0..self.n {
            let scale = 1.0 / self.nu_bar(j) as f64;
            theta.column_mut(j).scale_mut(scale);
        }
        theta
    }

    /// Sub-graph keeping the edges whose mask entry is true.
    pub fn with_mask(&self, mask: &[bool]) -> Graph {
        assert_eq!(mask.len(), self.n_edges(), "edge mask length");
        let kept: Vec<_> = self
            .edges
            .iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(&e, _)| e)
            .collect();
        Graph::new(self.n, &kept).expect("sub-graph of a valid graph")
    }

    pub fn is_subgraph_of(&self, base: &Graph) -> bool {
        self.n == base.n && self.edges.iter().all(|&(a, b)| base.has_edge(a, b))
    }

    /// Parses the plain-text edge list format: a header `N M`, then `M`
    /// lines `i j` with 0-based endpoints. Blank lines and `#` comments are
    /// skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidGraph("empty edge list".into()))?;
        let (n, m) = parse_pair(header, hline)?;
        let mut edges = Vec::with_capacity(m);
        for (k, line) in lines {
            edges.push(parse_pair(line, k)?);
        }
        if edges.len() != m {
            return Err(Error::InvalidGraph(format!(
                "header announces {m} edges but {} were listed",
                edges.len()
            )));
        }
        Graph::new(n, &edges)
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Graph::parse_edge_list(&text)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.n_edges());
        for &(a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }
}

/// Chords added to the 10-node ring by [`Graph::default_topology`].
pub const DEFAULT_CHORDS: [(usize, usize); 7] = [(0, 7), (1, 9), (3, 8), (3, 9), (4, 6), (4, 8), (4, 9)];

fn parse_pair(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let bad = || Error::InvalidGraph(format!("line {lineno}: expected two non-negative integers, got `{line}`"));
    let a = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let b = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if it.next().is_some() {
        return Err(bad());
    }
    Ok((a, b))
}

/// Laplacian of the sub-graph selected by `mask` over `g.edges()`.
pub fn laplacian_of_mask(g: &Graph, mask: &[bool]) -> DMatrix<f64> {
    let n = g.n_nodes();
    let mut l = DMatrix::zeros(n, n);
    for (&(i, j), &keep) in g.edges().iter().zip(mask) {
        if keep {
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
        }
    }
    l
}

/// Θ(t, ω) = I − L(ω)(I + D)⁻¹, where D holds the base-graph degrees: a node
/// that misses a packet substitutes its own share for it.
pub fn theta_with_failures(base: &Graph, mask: &[bool]) -> DMatrix<f64> {
    let n = base.n_nodes();
    let l = laplacian_of_mask(base, mask);
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - l[(i, j)] / base.nu_bar(j) as f64
    })
}

/// Connectivity of the sub-graph selected by `mask`, by union-find.
pub fn mask_connected(g: &Graph, mask: &[bool]) -> bool {
    let n = g.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = n;
    for (&(a, b), &keep) in g.edges().iter().zip(mask) {
        if keep {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
    }
    components == 1
}

/// Symmetric Bernoulli link failures on a base graph: each undirected edge
/// survives a round independently with probability `p_beta`.
#[derive(Debug, Clone)]
pub struct LinkFailureModel {
    base: Graph,
    p_beta: f64,
    seed: u64,
}

impl LinkFailureModel {
    pub fn new(base: Graph, p_beta: f64, seed: u64) -> Result<Self> {
        if !(p_beta > 0.0 && p_beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "link survival probability must lie in (0, 1], got {p_beta}"
            )));
        }
        Ok(LinkFailureModel { base, p_beta, seed })
    }

    pub fn base(&self) -> &Graph {
        &self.base
    }

    pub fn p_beta(&self) -> f64 {
        self.p_beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same law, independent draws for Monte-Carlo trial `trial`.
    pub fn for_trial(&self, trial: u64) -> Self {
        LinkFailureModel {
            base: self.base.clone(),
            p_beta: self.p_beta,
            seed: rng::trial_seed(self.seed, trial),
        }
    }

    /// Writes β for every base edge (lexicographic order) into `mask`.
    pub fn fill_mask(&self, key: RoundKey, mask: &mut [bool]) {
        assert_eq!(mask.len(), self.base.n_edges(), "edge mask length");
        if self.p_beta >= 1.0 {
            mask.fill(true);
            return;
        }
        let mut r = rng::round_stream(self.seed, rng::DOMAIN_LINK, key);
        for m in mask.iter_mut() {
            *m = r.random::<f64>() < self.p_beta;
        }
    }

    pub fn mask(&self, key: RoundKey) -> Vec<bool> {
        let mut mask = vec![false; self.base.n_edges()];
        self.fill_mask(key, &mut mask);
        mask
    }

    pub fn sample_subgraph(&self, key: RoundKey) -> Graph {
        self.base.with_mask(&self.mask(key))
    }

    /// L_t(ω) for the given round.
    pub fn sample_laplacian(&self, key: RoundKey) -> DMatrix<f64> {
        laplacian_of_mask(&self.base, &self.mask(key))
    }
}

/// Estimate of the probability that one round's sub-graph is disconnected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisconnectionEstimate {
    pub p_hat: f64,
    /// 95% binomial half-width; zero for exact enumeration.
    pub half_width: f64,
    pub exact: bool,
    pub samples: usize,
}

/// Exact enumeration for at most [`EXACT_ENUMERATION_EDGES`] edges (or
/// when no link can fail), Monte-Carlo with `trials` rounds above that.
pub fn estimate_disconnection_probability(m: &LinkFailureModel, trials: usize) -> Result<DisconnectionEstimate> {
    if m.p_beta >= 1.0 {
        return Ok(DisconnectionEstimate {
            p_hat: if m.base.is_connected() { 0.0 } else { 1.0 },
            half_width: 0.0,
            exact: true,
            samples: 1,
        });
    }
    if m.base.n_edges() <= EXACT_ENUMERATION_EDGES {
        Ok(exact_disconnection_probability(m))
    } else {
        monte_carlo_disconnection_probability(m, trials)
    }
}

pub fn exact_disconnection_probability(m: &LinkFailureModel) -> DisconnectionEstimate {
    let e = m.base.n_edges();
    assert!(e < 31, "exhaustive enumeration over {e} edges");
    let p = m.p_beta;
    let mut mask = vec![false; e];
    let mut prob = 0.0;
    for bits in 0u32..(1u32 << e) {
        let mut weight = 1.0;
        for (k, slot) in mask.iter_mut().enumerate() {
            *slot = bits >> k & 1 == 1;
            weight *= if *slot { p } else { 1.0 - p };
        }
        if weight > 0.0 && !mask_connected(&m.base, &mask) {
            prob += weight;
        }
    }
    DisconnectionEstimate {
        p_hat: prob,
        half_width: 0.0,
        exact: true,
        samples: 1 << e,
    }
}

pub fn monte_carlo_disconnection_probability(m: &LinkFailureModel, trials: usize) -> Result<DisconnectionEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("disconnection estimate needs at least one trial".into()));
    }
    let probe = LinkFailureModel {
        seed: rng::mix(&[m.seed, rng::DOMAIN_MC]),
        ..m.clone()
    };
    let mut mask = vec![false; m.base.n_edges()];
    let mut hits = 0usize;
    for t in 0..trials {
        probe.fill_mask(RoundKey::outer(t as u64), &mut mask);
        if !mask_connected(&m.base, &mask) {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / trials as f64;
    Ok(DisconnectionEstimate {
        p_hat,
        half_width: 1.96 * (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        exact: false,
        samples: trials,
    })
}

/// Helmert basis of the orthogonal complement of 𝟙/√N: an N×(N−1) matrix
/// with orthonormal columns.
pub fn orthonormal_complement(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "orthogonal complement needs N >= 2, got {n}"
        )));
    }
    let mut w = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            w[(j, k - 1)] = 1.0 / norm;
        }
        w[(k, k - 1)] = -(k as f64) / norm;
    }
    Ok(w)
}
