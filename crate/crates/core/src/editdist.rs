//! Unit-cost graph edit distance as a quadratic assignment over padded node
//! indices, with exhaustive exact search at small sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Permutation, SparseGraph};

/// Largest graph accepted by [`edit_exact`].
pub const MAX_EXACT_EDIT_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditResult {
    pub distance: usize,
    pub permutation: Permutation,
}

/// Labels on a common padded index set; `None` marks padding or "no edge".
struct Padded {
    n: usize,
    nodes: Vec<Option<usize>>,
    edges: Vec<Option<usize>>,
}

impl Padded {
    fn new(g: &SparseGraph, n: usize) -> Self {
        let mut nodes = vec![None; n];
        for (i, &l) in g.node_labels().iter().enumerate() {
            nodes[i] = Some(l);
        }
        let mut edges = vec![None; n * n];
        for &(a, b, l) in g.edges() {
            edges[a * n + b] = Some(l);
            edges[b * n + a] = Some(l);
        }
        Self { n, nodes, edges }
    }

    fn edge(&self, i: usize, k: usize) -> Option<usize> {
        self.edges[i * self.n + k]
    }
}

fn padded_size(g1: &SparseGraph, g2: &SparseGraph) -> usize {
    g1.num_nodes().max(g2.num_nodes())
}

/// Edits needed when node `i` of `g1` is matched to node `p(i)` of `g2`:
/// one per node whose label differs (insertion and deletion being a
/// mismatch against padding) plus one per unordered node pair whose edge
/// label differs.
pub fn align_cost(g1: &SparseGraph, g2: &SparseGraph, p: &Permutation) -> Result<usize> {
    let n = p.len();
    if n < padded_size(g1, g2) {
        return Err(Error::Dimension(format!(
            "permutation over {n} indices cannot align graphs with {} and {} nodes",
            g1.num_nodes(),
            g2.num_nodes()
        )));
    }
    let a = Padded::new(g1, n);
    let b = Padded::new(g2, n);
    let sigma = p.as_slice();
    let mut cost = 0;
    for i in 0..n {
        cost += usize::from(a.nodes[i] != b.nodes[sigma[i]]);
        for k in (i + 1)..n {
            cost += usize::from(a.edge(i, k) != b.edge(sigma[i], sigma[k]));
        }
    }
    Ok(cost)
}

/// Exact edit distance by exhaustive search over alignments, pruning
/// branches whose partial cost reaches the incumbent. Among optimal
/// alignments the lexicographically smallest is returned.
pub fn edit_exact(g1: &SparseGraph, g2: &SparseGraph) -> Result<EditResult> {
    let n = padded_size(g1, g2);
    if n > MAX_EXACT_EDIT_NODES {
        return Err(Error::Size {
            what: "exact edit distance",
            size: n,
            limit: MAX_EXACT_EDIT_NODES,
        });
    }
    let a = Padded::new(g1, n);
    let b = Padded::new(g2, n);
    let mut search = EditSearch {
        a: &a,
        b: &b,
        sigma: Vec::with_capacity(n),
        used: vec![false; n],
        best: usize::MAX,
        best_sigma: Vec::new(),
    };
    search.descend(0);
    Ok(EditResult {
        distance: search.best,
        permutation: Permutation::new(search.best_sigma)?,
    })
}

struct EditSearch<'a> {
    a: &'a Padded,
    b: &'a Padded,
    sigma: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    best_sigma: Vec<usize>,
}

impl EditSearch<'_> {
    fn descend(&mut self, partial: usize) {
        if partial >= self.best {
            return;
        }
        let m = self.sigma.len();
        let n = self.a.n;
        if m == n {
            self.best = partial;
            self.best_sigma = self.sigma.clone();
            return;
        }
        for j in 0..n {
            if self.used[j] {
                continue;
            }
            let mut add = usize::from(self.a.nodes[m] != self.b.nodes[j]);
            for (k, &l) in self.sigma.iter().enumerate() {
                add += usize::from(self.a.edge(k, m) != self.b.edge(l, j));
            }
            self.used[j] = true;
            self.sigma.push(j);
            self.descend(partial + add);
            self.sigma.pop();
            self.used[j] = false;
        }
    }
}

/// Edit cost of the alignment `p`, an upper bound on the edit distance.
pub fn upper_bound(g1: &SparseGraph, g2: &SparseGraph, p: &Permutation) -> Result<EditResult> {
    Ok(EditResult {
        distance: align_cost(g1, g2, p)?,
        permutation: p.clone(),
    })
}

/// Fraction of pairs at edit distance zero.
pub fn gi_accuracy(pairs: &[(SparseGraph, SparseGraph)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("gi_accuracy needs at least one pair".into()));
    }
    let mut zero = 0usize;
    for (a, b) in pairs {
        if edit_exact(a, b)?.distance == 0 {
            zero += 1;
        }
    }
    Ok(zero as f64 / pairs.len() as f64)
}
