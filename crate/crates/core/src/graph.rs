//! Graph data model.
//!
//! Graphs are stored sparsely as labelled node/edge lists ([`SparseGraph`]) and
//! computed on as padded tensors ([`DenseGraph`]): a mask `h` of length `N`, a
//! node feature matrix `F` (`N × d_f`) and a symmetric edge feature tensor `C`
//! (`N × N × d_c`).

use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel of the dense edge tensor reserved for "no edge".
pub const NO_EDGE: usize = 0;

/// Exhaustive isomorphism search refuses graphs larger than this.
pub const MAX_BRUTE_FORCE_NODES: usize = 10;

/// Undirected graph with integer node and edge labels.
///
/// Nodes are numbered `0..n` and `node_labels[i]` is the label of node `i`.
/// Edges are stored once with `src < dst`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseGraph {
    n_f: usize,
    n_c: usize,
    node_labels: Vec<usize>,
    edges: Vec<(usize, usize, usize)>,
}

impl SparseGraph {
    /// Builds a graph from node labels (indexed by node) and edges.
    ///
    /// Edge endpoints are normalised so that `src < dst`; self-loops, duplicate
    /// edges, dangling endpoints and out-of-alphabet labels are rejected.
    pub fn new(
        n_f: usize,
        n_c: usize,
        node_labels: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self> {
        let n = node_labels.len();
        if let Some(&bad) = node_labels.iter().find(|&&l| l >= n_f) {
            return Err(Error::InvalidGraph(format!(
                "node label {bad} outside alphabet of size {n_f}"
            )));
        }
        let mut normalized = Vec::new();
        for (a, b, label) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if label >= n_c {
                return Err(Error::InvalidGraph(format!(
                    "edge label {label} outside alphabet of size {n_c}"
                )));
            }
            normalized.push((a.min(b), a.max(b), label));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self {
            n_f,
            n_c,
            node_labels,
            edges: normalized,
        })
    }

    /// Builds a graph from `(index, label)` node tuples in any order.
    pub fn from_tuples(
        n_f: usize,
        n_c: usize,
        nodes: &[(usize, usize)],
        edges: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let n = nodes.len();
        let mut labels = vec![usize::MAX; n];
        for &(idx, label) in nodes {
            if idx >= n {
                return Err(Error::InvalidGraph(format!(
                    "node indices must form the contiguous range 0..{n}, found {idx}"
                )));
            }
            if labels[idx] != usize::MAX {
                return Err(Error::InvalidGraph(format!("duplicate node index {idx}")));
            }
            labels[idx] = label;
        }
        Self::new(n_f, n_c, labels, edges.iter().copied())
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn num_nodes(&self) -> usize {
        self.node_labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[(usize, usize, usize)] {
        &self.edges
    }

    pub fn node_tuples(&self) -> Vec<(usize, usize)> {
        self.node_labels.iter().copied().enumerate().collect()
    }

    /// Neighbour lists, each sorted ascending.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(a, b, _) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes()];
        for &(a, b, _) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Label of the edge between `a` and `b`, if any.
    pub fn edge_label(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|&(s, d, _)| (s, d).cmp(&key))
            .ok()
            .map(|pos| self.edges[pos].2)
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut a = Array2::zeros((n, n));
        for &(s, d, _) in &self.edges {
            a[[s, d]] = 1.0;
            a[[d, s]] = 1.0;
        }
        a
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        if n <= 1 {
            return true;
        }
        let adj = self.adjacency_lists();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// Same graph with node labels replaced.
    pub fn with_node_labels(&self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::Dimension(format!(
                "expected {} labels, got {}",
                self.num_nodes(),
                labels.len()
            )));
        }
        Self::new(self.n_f, self.n_c, labels, self.edges.iter().copied())
    }

    /// Relabels nodes so that old node `j` becomes node `perm[j]`.
    pub fn permuted(&self, perm: &Permutation) -> Result<Self> {
        if perm.len() != self.num_nodes() {
            return Err(Error::Dimension(format!(
                "permutation of length {} applied to a graph with {} nodes",
                perm.len(),
                self.num_nodes()
            )));
        }
        let mut labels = vec![0; self.num_nodes()];
        for (j, &label) in self.node_labels.iter().enumerate() {
            labels[perm.get(j)] = label;
        }
        let edges = self
            .edges
            .iter()
            .map(|&(a, b, l)| (perm.get(a), perm.get(b), l));
        Self::new(self.n_f, self.n_c, labels, edges)
    }

    /// Order-normalised form used to compare graphs in tests: nodes sorted by
    /// `(label, degree, sorted neighbour degrees)` with ties kept in original
    /// order, then edges sorted lexicographically. It is not a full canonical
    /// labelling; isomorphic graphs may map to different forms.
    pub fn canonical_form(&self) -> Self {
        let deg = self.degrees();
        let adj = self.adjacency_lists();
        let key = |v: usize| {
            let mut nd: Vec<usize> = adj[v].iter().map(|&w| deg[w]).collect();
            nd.sort_unstable();
            (self.node_labels[v], deg[v], nd)
        };
        let mut order: Vec<usize> = (0..self.num_nodes()).collect();
        order.sort_by_key(|&v| key(v));
        let mut new_index = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let perm = Permutation::new(new_index).expect("sorting yields a bijection");
        self.permuted(&perm).expect("same size")
    }
}

/// Padded dense form `(h, F, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGraph {
    pub h: Array1<f64>,
    pub f: Array2<f64>,
    pub c: Array3<f64>,
}

impl DenseGraph {
    /// Validates shapes and edge-tensor symmetry.
    pub fn new(h: Array1<f64>, f: Array2<f64>, c: Array3<f64>) -> Result<Self> {
        let g = Self { h, f, c };
        g.check_shapes()?;
        let n = g.size();
        for i in 0..n {
            for k in (i + 1)..n {
                for ch in 0..g.edge_dim() {
                    if g.c[[i, k, ch]] != g.c[[k, i, ch]] {
                        return Err(Error::InvalidGraph(format!(
                            "edge tensor is not symmetric at ({i}, {k}, {ch})"
                        )));
                    }
                }
            }
        }
        Ok(g)
    }

    /// Skips the symmetry check; used for predictions, which need not be symmetric.
    pub fn new_unchecked(h: Array1<f64>, f: Array2<f64>, c: Array3<f64>) -> Result<Self> {
        let g = Self { h, f, c };
        g.check_shapes()?;
        Ok(g)
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.h.len();
        if self.f.nrows() != n {
            return Err(Error::Dimension(format!(
                "F has {} rows, mask has length {n}",
                self.f.nrows()
            )));
        }
        let (a, b, _) = self.c.dim();
        if a != n || b != n {
            return Err(Error::Dimension(format!(
                "C has shape {a}x{b}, expected {n}x{n}"
            )));
        }
        Ok(())
    }

    /// Maximum graph size `N`.
    pub fn size(&self) -> usize {
        self.h.len()
    }

    pub fn node_dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn edge_dim(&self) -> usize {
        self.c.dim().2
    }

    /// Indices with `h > 0.5`.
    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| self.h[i] > 0.5).collect()
    }

    pub fn num_active(&self) -> usize {
        self.h.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.h.len() == other.h.len() && self.f.dim() == other.f.dim() && self.c.dim() == other.c.dim()
    }

    /// `P[G] = (Ph, PF, PCPᵀ)`; node `j` moves to position `perm[j]`.
    pub fn permuted(&self, perm: &Permutation) -> Result<Self> {
        let n = self.size();
        if perm.len() != n {
            return Err(Error::Dimension(format!(
                "permutation of length {} applied to a graph of size {n}",
                perm.len()
            )));
        }
        let inv = perm.inverse();
        let idx = inv.as_slice();
        let h = Array1::from_shape_fn(n, |i| self.h[idx[i]]);
        let f = self.f.select(Axis(0), idx);
        let c = self.c.select(Axis(0), idx).select(Axis(1), idx);
        Ok(Self { h, f, c })
    }

    /// Reorders with a (possibly soft) plan: `(T ĥ, T F̂, T Ĉ Tᵀ)`.
    pub fn transported(&self, plan: &TransportPlan) -> Result<Self> {
        let t = plan.matrix();
        let n = self.size();
        if t.nrows() != n {
            return Err(Error::Dimension(format!(
                "plan of size {} applied to a graph of size {n}",
                t.nrows()
            )));
        }
        let h = t.dot(&self.h);
        let f = t.dot(&self.f);
        let mut c = Array3::zeros(self.c.dim());
        for ch in 0..self.edge_dim() {
            let slice = self.c.index_axis(Axis(2), ch);
            let moved = t.dot(&slice).dot(&t.t());
            c.index_axis_mut(Axis(2), ch).assign(&moved);
        }
        Ok(Self { h, f, c })
    }

    pub fn to_sparse(&self, threshold: f64) -> SparseGraph {
        sparse_from_dense(self, threshold)
    }
}

/// Bijection on `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "{perm:?} is not a permutation of 0..{n}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self(perm))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Self(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self(other.0.iter().map(|&j| self.0[j]).collect())
    }

    /// Permutation matrix `P` with `P[perm[j], j] = 1`, so that `P x` moves
    /// entry `j` to position `perm[j]`.
    pub fn to_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for (j, &p) in self.0.iter().enumerate() {
            m[[p, j]] = 1.0;
        }
        m
    }

    /// Plan coupling node `i` of a target with node `σ(i)` of a prediction:
    /// `T[i, σ(i)] = 1`. Equivalent to `P⁻¹` as a matrix, so `T[Ĝ] = σ⁻¹`
    /// applied to `Ĝ`.
    pub fn to_plan(&self) -> TransportPlan {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for (i, &j) in self.0.iter().enumerate() {
            m[[i, j]] = 1.0;
        }
        TransportPlan(m)
    }

    /// Reads a 0/1 matrix with one unit per row as `i ↦ argmax_j T[i, j]`.
    pub fn from_plan(plan: &TransportPlan) -> Result<Self> {
        let t = plan.matrix();
        let perm = t
            .rows()
            .into_iter()
            .map(|row| argmax(row.iter().copied()))
            .collect();
        Self::new(perm)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

/// Nonnegative square coupling matrix.
///
/// Constructed plans are only checked for shape, finiteness and sign; use
/// [`TransportPlan::bistochastic`] where row and column sums must be 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan(Array2<f64>);

impl TransportPlan {
    pub fn new(t: Array2<f64>) -> Result<Self> {
        if t.nrows() != t.ncols() {
            return Err(Error::Dimension(format!(
                "plan must be square, got {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        if t.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Domain("plan entries must be finite and nonnegative".into()));
        }
        Ok(Self(t))
    }

    /// Checked constructor for members of the Birkhoff polytope.
    pub fn bistochastic(t: Array2<f64>, tol: f64) -> Result<Self> {
        let plan = Self::new(t)?;
        let dev = plan.marginal_deviation();
        if dev > tol {
            return Err(Error::Domain(format!(
                "plan marginals deviate from 1 by {dev:e} (tolerance {tol:e})"
            )));
        }
        Ok(plan)
    }

    pub fn uniform(n: usize) -> Self {
        Self(Array2::from_elem((n, n), 1.0 / n as f64))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    /// `max(|row sums − 1|, |column sums − 1|)`.
    pub fn marginal_deviation(&self) -> f64 {
        let rows = self.0.sum_axis(Axis(1));
        let cols = self.0.sum_axis(Axis(0));
        rows.iter()
            .chain(cols.iter())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_bistochastic(&self, tol: f64) -> bool {
        self.marginal_deviation() <= tol
    }

    /// True when every entry is 0 or 1 (exactly) and the plan is bistochastic.
    pub fn is_permutation(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0) && self.is_bistochastic(0.0)
    }
}

/// Index of the maximum, ties going to the lowest index.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// One-hot padded encoding with `d_f = n_f` and `d_c = n_c + 1`; edge channel
/// [`NO_EDGE`] marks absent edges, channel `l + 1` marks edge label `l`.
pub fn dense_from_sparse(g: &SparseGraph, capacity: usize) -> Result<DenseGraph> {
    let n = g.num_nodes();
    if n > capacity {
        return Err(Error::Capacity {
            nodes: n,
            capacity,
        });
    }
    let d_c = g.n_c() + 1;
    let h = Array1::from_shape_fn(capacity, |i| if i < n { 1.0 } else { 0.0 });
    let mut f = Array2::zeros((capacity, g.n_f()));
    for (i, &label) in g.node_labels().iter().enumerate() {
        f[[i, label]] = 1.0;
    }
    let mut c = Array3::zeros((capacity, capacity, d_c));
    c.index_axis_mut(Axis(2), NO_EDGE).fill(1.0);
    for &(a, b, label) in g.edges() {
        for (s, d) in [(a, b), (b, a)] {
            c[[s, d, NO_EDGE]] = 0.0;
            c[[s, d, label + 1]] = 1.0;
        }
    }
    Ok(DenseGraph { h, f, c })
}

/// Decodes a real-valued dense graph.
///
/// Nodes with `h > threshold` are kept in index order; labels are argmaxes
/// with ties broken toward the lowest channel. An edge is kept when the
/// argmax of `C[i, j]` is not the "no edge" channel.
pub fn sparse_from_dense(g: &DenseGraph, threshold: f64) -> SparseGraph {
    let kept: Vec<usize> = (0..g.size()).filter(|&i| g.h[i] > threshold).collect();
    let n_f = g.node_dim();
    let n_c = g.edge_dim().saturating_sub(1);
    let labels = kept
        .iter()
        .map(|&i| argmax(g.f.row(i).iter().copied()))
        .collect();
    let mut edges = Vec::new();
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate().skip(a + 1) {
            // Average both directions so asymmetric predictions decode symmetrically.
            let channel =
                |ch: usize| 0.5 * (g.c[[i, j, ch]] + g.c[[j, i, ch]]);
            let best = argmax((0..g.edge_dim()).map(channel));
            if best != NO_EDGE {
                edges.push((a, b, best - 1));
            }
        }
    }
    // Edges are generated sorted with a < b between kept nodes.
    SparseGraph {
        n_f,
        n_c,
        node_labels: labels,
        edges,
    }
}

/// Applies `perm` to a dense graph.
pub fn apply_permutation(g: &DenseGraph, perm: &Permutation) -> Result<DenseGraph> {
    g.permuted(perm)
}

/// Exhaustive isomorphism test on the active nodes of two dense graphs.
///
/// Both graphs are first normalised so that active nodes come first (in
/// index order) followed by padding; the search then looks for a relabelling
/// of the active block making `h`, `F` and `C` exactly equal.
pub fn is_isomorphic_bruteforce(g1: &DenseGraph, g2: &DenseGraph) -> Result<bool> {
    if !g1.same_shape(g2) {
        return Ok(false);
    }
    let a1 = g1.active_nodes();
    let a2 = g2.active_nodes();
    for a in [&a1, &a2] {
        if a.len() > MAX_BRUTE_FORCE_NODES {
            return Err(Error::Size {
                what: "isomorphism search",
                size: a.len(),
                limit: MAX_BRUTE_FORCE_NODES,
            });
        }
    }
    if a1.len() != a2.len() {
        return Ok(false);
    }
    let n1 = normalized(g1, &a1);
    let n2 = normalized(g2, &a2);
    // Padding blocks must already agree once actives are moved to the front.
    let n = g1.size();
    let k = a1.len();
    for i in k..n {
        if n1.h[i] != n2.h[i] || n1.f.row(i) != n2.f.row(i) {
            return Ok(false);
        }
        for j in k..n {
            if n1.c.slice(ndarray::s![i, j, ..]) != n2.c.slice(ndarray::s![i, j, ..]) {
                return Ok(false);
            }
        }
    }
    let mut search = MatchSearch::new(&n1, &n2, k, false);
    Ok(search.run() > 0)
}

/// Number of label-preserving automorphisms of the active part of `g`.
pub fn automorphism_count(g: &DenseGraph) -> Result<usize> {
    let a = g.active_nodes();
    if a.len() > MAX_BRUTE_FORCE_NODES {
        return Err(Error::Size {
            what: "automorphism search",
            size: a.len(),
            limit: MAX_BRUTE_FORCE_NODES,
        });
    }
    let n = normalized(g, &a);
    let mut search = MatchSearch::new(&n, &n, a.len(), true);
    Ok(search.run())
}

/// Moves active nodes to the front, padding after, both in index order.
fn normalized(g: &DenseGraph, active: &[usize]) -> DenseGraph {
    let mut order = active.to_vec();
    order.extend((0..g.size()).filter(|i| !active.contains(i)));
    let mut perm = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    g.permuted(&Permutation(perm)).expect("same size")
}

/// Backtracking search over bijections of the first `k` nodes, checking node
/// rows and edge slices incrementally (including edges to padding nodes).
struct MatchSearch<'a> {
    g1: &'a DenseGraph,
    g2: &'a DenseGraph,
    k: usize,
    count_all: bool,
    map: Vec<usize>,
    used: Vec<bool>,
    found: usize,
}

impl<'a> MatchSearch<'a> {
    fn new(g1: &'a DenseGraph, g2: &'a DenseGraph, k: usize, count_all: bool) -> Self {
        Self {
            g1,
            g2,
            k,
            count_all,
            map: Vec::with_capacity(k),
            used: vec![false; k],
            found: 0,
        }
    }

    fn run(&mut self) -> usize {
        self.extend();
        self.found
    }

    fn compatible(&self, pos: usize, cand: usize) -> bool {
        let (g1, g2) = (self.g1, self.g2);
        if g1.h[pos] != g2.h[cand] || g1.f.row(pos) != g2.f.row(cand) {
            return false;
        }
        let slice = |g: &DenseGraph, i: usize, j: usize| g.c.slice(ndarray::s![i, j, ..]).to_owned();
        if slice(g1, pos, pos) != slice(g2, cand, cand) {
            return false;
        }
        for (prev, &mapped) in self.map.iter().enumerate() {
            if slice(g1, pos, prev) != slice(g2, cand, mapped)
                || slice(g1, prev, pos) != slice(g2, mapped, cand)
            {
                return false;
            }
        }
        for pad in self.k..g1.size() {
            if slice(g1, pos, pad) != slice(g2, cand, pad) || slice(g1, pad, pos) != slice(g2, pad, cand)
            {
                return false;
            }
        }
        true
    }

    fn extend(&mut self) {
        if !self.count_all && self.found > 0 {
            return;
        }
        let pos = self.map.len();
        if pos == self.k {
            self.found += 1;
            return;
        }
        for cand in 0..self.k {
            if !self.used[cand] && self.compatible(pos, cand) {
                self.used[cand] = true;
                self.map.push(cand);
                self.extend();
                self.map.pop();
                self.used[cand] = false;
            }
        }
    }
}

/// Line-oriented JSON record of a [`SparseGraph`]; field order is part of the
/// on-disk format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRecord {
    n_f: usize,
    n_c: usize,
    nodes: Vec<(usize, usize)>,
    edges: Vec<(usize, usize, usize)>,
}

impl SparseGraph {
    /// Compact JSON: `{"n_f":..,"n_c":..,"nodes":[[i,l],..],"edges":[[s,d,l],..]}`.
    pub fn to_json(&self) -> String {
        let record = GraphRecord {
            n_f: self.n_f,
            n_c: self.n_c,
            nodes: self.node_tuples(),
            edges: self.edges.clone(),
        };
        serde_json::to_string(&record).expect("graph records always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: GraphRecord = serde_json::from_str(s)?;
        Self::from_tuples(record.n_f, record.n_c, &record.nodes, &record.edges)
    }
}

/// Parses a JSON-lines dataset, skipping blank lines.
pub fn read_jsonl(text: &str) -> Result<Vec<SparseGraph>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            SparseGraph::from_json(l).map_err(|e| match e {
                Error::Json(j) => Error::InvalidGraph(format!("line {}: {j}", i + 1)),
                Error::InvalidGraph(m) => Error::InvalidGraph(format!("line {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}

pub fn write_jsonl(graphs: &[SparseGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&g.to_json());
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DenseRecord {
    h: Vec<f64>,
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<Vec<f64>>>,
}

impl DenseGraph {
    /// `{"h": [..], "F": [[..]], "C": [[[..]]]}` with nested row-major arrays.
    pub fn to_json(&self) -> String {
        let record = DenseRecord {
            h: self.h.to_vec(),
            f: self.f.rows().into_iter().map(|r| r.to_vec()).collect(),
            c: self
                .c
                .outer_iter()
                .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
        };
        serde_json::to_string(&record).expect("dense records always serialize")
    }

    /// Parses [`DenseGraph::to_json`] output; the edge tensor need not be symmetric.
    pub fn from_json(s: &str) -> Result<Self> {
        let r: DenseRecord = serde_json::from_str(s)?;
        let n = r.h.len();
        let d_f = r.f.first().map_or(0, Vec::len);
        let d_c = r.c.first().and_then(|m| m.first()).map_or(0, Vec::len);
        if r.f.len() != n || r.f.iter().any(|row| row.len() != d_f) {
            return Err(Error::Dimension(format!("F must be {n}x{d_f}")));
        }
        if r.c.len() != n || r.c.iter().any(|m| m.len() != n || m.iter().any(|v| v.len() != d_c)) {
            return Err(Error::Dimension(format!("C must be {n}x{n}x{d_c}")));
        }
        let h = Array1::from(r.h);
        let f = Array2::from_shape_fn((n, d_f), |(i, j)| r.f[i][j]);
        let c = Array3::from_shape_fn((n, n, d_c), |(i, k, ch)| r.c[i][k][ch]);
        Self::new_unchecked(h, f, c)
    }
}

#[cfg(test)]
mod tests {

    #[test]
    fn dense_json_roundtrip() {
        let g = dense_from_sparse(&triangle([0, 1, 0]), 4).unwrap();
        assert_eq!(DenseGraph::from_json(&g.to_json()).unwrap(), g);
        assert!(DenseGraph::from_json(r#"{"h":[1],"F":[[1],[0]],"C":[[[0]]]}"#).is_err());
    }

    use super::*;

    fn triangle(labels: [usize; 3]) -> SparseGraph {
        SparseGraph::new(2, 1, labels.to_vec(), [(0, 1, 0), (1, 2, 0), (0, 2, 0)]).unwrap()
    }

    fn path3() -> SparseGraph {
        SparseGraph::new(2, 1, vec![0, 0, 0], [(0, 1, 0), (1, 2, 0)]).unwrap()
    }

    #[test]
    fn rejects_invalid_sparse_graphs() {
        assert!(SparseGraph::new(2, 1, vec![0, 2], []).is_err());
        assert!(SparseGraph::new(2, 1, vec![0, 1], [(0, 0, 0)]).is_err());
        assert!(SparseGraph::new(2, 1, vec![0, 1], [(0, 2, 0)]).is_err());
        assert!(SparseGraph::new(2, 1, vec![0, 1], [(0, 1, 1)]).is_err());
        assert!(SparseGraph::new(2, 1, vec![0, 1], [(0, 1, 0), (1, 0, 0)]).is_err());
        assert!(SparseGraph::from_tuples(2, 1, &[(0, 0), (2, 1)], &[]).is_err());
        assert!(SparseGraph::from_tuples(2, 1, &[(0, 0), (0, 1)], &[]).is_err());
    }

    #[test]
    fn edges_are_normalised() {
        let g = SparseGraph::new(1, 1, vec![0, 0, 0], [(2, 0, 0), (1, 0, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 0), (0, 2, 0)]);
        assert_eq!(g.edge_label(2, 0), Some(0));
        assert_eq!(g.edge_label(1, 2), None);
    }

    #[test]
    fn single_node_encoding() {
        let g = SparseGraph::new(3, 2, vec![0], []).unwrap();
        let d = dense_from_sparse(&g, 2).unwrap();
        assert_eq!(d.h.to_vec(), vec![1.0, 0.0]);
        assert_eq!(d.f.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(d.f.row(1).to_vec(), vec![0.0, 0.0, 0.0]);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(d.c.slice(ndarray::s![i, j, ..]).to_vec(), vec![1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn triangle_encoding() {
        let g = SparseGraph::new(1, 1, vec![0, 0, 0], [(0, 1, 0), (1, 2, 0), (0, 2, 0)]).unwrap();
        let d = dense_from_sparse(&g, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
                assert_eq!(d.c.slice(ndarray::s![i, j, ..]).to_vec(), expected);
            }
        }
    }

    #[test]
    fn capacity_error() {
        let g = path3();
        assert!(matches!(
            dense_from_sparse(&g, 2),
            Err(Error::Capacity { nodes: 3, capacity: 2 })
        ));
    }

    #[test]
    fn decode_inverts_encode() {
        let g = triangle([0, 1, 0]);
        let d = dense_from_sparse(&g, 5).unwrap();
        assert_eq!(sparse_from_dense(&d, 0.5), g);
    }

    #[test]
    fn decode_thresholds_mask() {
        let d = DenseGraph::new(
            Array1::from(vec![0.9, 0.1]),
            Array2::from_shape_vec((2, 2), vec![0.2, 0.8, 1.0, 0.0]).unwrap(),
            Array3::from_elem((2, 2, 2), 0.5),
        )
        .unwrap();
        let s = sparse_from_dense(&d, 0.5);
        assert_eq!(s.num_nodes(), 1);
        assert_eq!(s.node_labels(), &[1]);
    }

    #[test]
    fn decode_ties_go_to_lowest_channel() {
        // Node channels tie at 0.5/0.5 and edge channels tie between "no edge" and label 0.
        let d = DenseGraph::new(
            Array1::from(vec![1.0, 1.0]),
            Array2::from_elem((2, 2), 0.5),
            Array3::from_elem((2, 2, 2), 0.5),
        )
        .unwrap();
        let s = sparse_from_dense(&d, 0.5);
        assert_eq!(s.node_labels(), &[0, 0]);
        assert_eq!(s.num_edges(), 0);
    }

    #[test]
    fn permutation_roundtrip() {
        let g = dense_from_sparse(&triangle([0, 1, 1]), 4).unwrap();
        let p = Permutation::new(vec![2, 0, 1, 3]).unwrap();
        assert_eq!(g.permuted(&Permutation::identity(4)).unwrap(), g);
        let back = g.permuted(&p).unwrap().permuted(&p.inverse()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn two_node_swap() {
        let g = SparseGraph::new(2, 2, vec![0, 1], [(0, 1, 1)]).unwrap();
        let d = dense_from_sparse(&g, 2).unwrap();
        let swapped = d.permuted(&Permutation::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(swapped.f.row(0), d.f.row(1));
        assert_eq!(swapped.f.row(1), d.f.row(0));
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(
                    swapped.c.slice(ndarray::s![i, j, ..]),
                    d.c.slice(ndarray::s![1 - i, 1 - j, ..])
                );
            }
        }
    }

    #[test]
    fn permutation_matrix_agrees_with_relabelling() {
        let g = dense_from_sparse(&triangle([0, 1, 1]), 3).unwrap();
        let p = Permutation::new(vec![1, 2, 0]).unwrap();
        let pm = p.to_matrix();
        assert_eq!(pm.dot(&g.h), g.permuted(&p).unwrap().h);
        assert_eq!(pm.dot(&g.f), g.permuted(&p).unwrap().f);
        // T[Ĝ] with T = to_plan(σ) equals σ⁻¹ applied to Ĝ.
        let moved = g.transported(&p.to_plan()).unwrap();
        assert_eq!(moved, g.permuted(&p.inverse()).unwrap());
    }

    #[test]
    fn isomorphism_cases() {
        let t = dense_from_sparse(&triangle([0, 0, 0]), 4).unwrap();
        let p = dense_from_sparse(&path3(), 4).unwrap();
        assert!(!is_isomorphic_bruteforce(&t, &p).unwrap());
        let perm = Permutation::new(vec![1, 2, 0, 3]).unwrap();
        assert!(is_isomorphic_bruteforce(&t, &t.permuted(&perm).unwrap()).unwrap());
        let small = dense_from_sparse(&SparseGraph::new(2, 1, vec![0, 0], [(0, 1, 0)]).unwrap(), 4)
            .unwrap();
        assert!(!is_isomorphic_bruteforce(&t, &small).unwrap());
    }

    #[test]
    fn isomorphism_ignores_padding_position() {
        let g = dense_from_sparse(&triangle([0, 1, 1]), 5).unwrap();
        // Moves padding into the middle of the index range.
        let perm = Permutation::new(vec![0, 3, 1, 2, 4]).unwrap();
        assert!(is_isomorphic_bruteforce(&g, &g.permuted(&perm).unwrap()).unwrap());
    }

    #[test]
    fn isomorphism_size_guard() {
        let g = SparseGraph::new(1, 1, vec![0; 11], []).unwrap();
        let d = dense_from_sparse(&g, 11).unwrap();
        assert!(matches!(is_isomorphic_bruteforce(&d, &d), Err(Error::Size { .. })));
    }

    #[test]
    fn automorphisms() {
        let t = dense_from_sparse(&triangle([0, 0, 0]), 3).unwrap();
        assert_eq!(automorphism_count(&t).unwrap(), 6);
        let p = dense_from_sparse(&path3(), 3).unwrap();
        assert_eq!(automorphism_count(&p).unwrap(), 2);
        let labelled = dense_from_sparse(&triangle([0, 1, 0]), 3).unwrap();
        assert_eq!(automorphism_count(&labelled).unwrap(), 2);
    }

    #[test]
    fn json_format_is_exact() {
        let g = SparseGraph::new(4, 1, vec![2, 0, 1], [(1, 0, 0), (1, 2, 0)]).unwrap();
        let s = g.to_json();
        assert_eq!(
            s,
            r#"{"n_f":4,"n_c":1,"nodes":[[0,2],[1,0],[2,1]],"edges":[[0,1,0],[1,2,0]]}"#
        );
        assert_eq!(SparseGraph::from_json(&s).unwrap(), g);
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let text = format!("{}\n\n{{\"n_f\":1}}\n", path3().to_json());
        let err = read_jsonl(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
