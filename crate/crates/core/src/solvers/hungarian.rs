//! Dense O(n³) Hungarian algorithm (shortest augmenting paths with
//! potentials) for the linear assignment problem.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Permutation;

/// Permutation `σ` minimising `Σ_i cost[i, σ(i)]`.
pub fn hungarian(cost: &Array2<f64>) -> Result<Permutation> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::Dimension(format!(
            "assignment cost must be square, got {}x{}",
            n,
            cost.ncols()
        )));
    }
    if let Some(v) = cost.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("assignment cost contains {v}")));
    }
    if n == 0 {
        return Permutation::new(Vec::new());
    }

    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    Permutation::new(assignment)
}

/// `Σ_i cost[i, σ(i)]`.
pub fn assignment_cost(cost: &Array2<f64>, sigma: &Permutation) -> f64 {
    sigma
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[[i, j]])
        .sum()
}
