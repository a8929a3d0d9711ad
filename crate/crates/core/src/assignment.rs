//! Optimal 2-D assignment and Murty's k-best enumeration.
//!
//! Costs are minimized. An infinite entry marks a forbidden pair.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

/// Minimum-cost assignment of every row to a distinct column.
///
/// Returns the total cost and the column chosen for each row, or `None`
/// when no finite-cost assignment exists. Requires `rows <= cols`; when
/// there are more rows than columns the problem is solved transposed and
/// unmatched rows receive `usize::MAX`.
pub fn hungarian(cost: &DMatrix<f64>) -> Option<(f64, Vec<usize>)> {
    let (n, m) = cost.shape();
    if n == 0 {
        return Some((0.0, Vec::new()));
    }
    if n > m {
        let (total, cols) = hungarian(&cost.transpose())?;
        let mut rows = vec![usize::MAX; n];
        for (c, &r) in cols.iter().enumerate() {
            rows[r] = c;
        }
        return Some((total, rows));
    }
    // Shortest augmenting paths with potentials; 1-based with a virtual
    // column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
            if !delta.is_finite() {
                return None;
            }
            for j in 0..=m {
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
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Some((total, assignment))
}

struct Node {
    cost: f64,
    assignment: Vec<usize>,
    /// Rows fixed to their current column, in the order they were fixed.
    forced: Vec<bool>,
    /// Forbidden `(row, col)` pairs.
    forbidden: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so that `BinaryHeap` pops the cheapest node first, with ties
    // broken towards the lexicographically smallest assignment.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.assignment.cmp(&self.assignment))
    }
}

fn solve_constrained(
    cost: &DMatrix<f64>,
    fixed: &[(usize, usize)],
    forbidden: &[(usize, usize)],
) -> Option<(f64, Vec<usize>)> {
    let mut c = cost.clone();
    for &(i, j) in forbidden {
        c[(i, j)] = f64::INFINITY;
    }
    for &(i, j) in fixed {
        let keep = c[(i, j)];
        for jj in 0..c.ncols() {
            c[(i, jj)] = f64::INFINITY;
        }
        for ii in 0..c.nrows() {
            c[(ii, j)] = f64::INFINITY;
        }
        c[(i, j)] = keep;
    }
    let (_, a) = hungarian(&c)?;
    let total = a.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Some((total, a))
}

/// The `k` cheapest assignments in nondecreasing cost order (Murty's method
/// with Lawler's partitioning). Ties are ordered lexicographically by
/// assignment vector. Requires `rows <= cols`.
pub fn murty(cost: &DMatrix<f64>, k: usize) -> Vec<(f64, Vec<usize>)> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    let n = cost.nrows();
    let Some((c0, a0)) = hungarian(cost) else {
        return out;
    };
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        cost: c0,
        assignment: a0,
        forced: vec![false; n],
        forbidden: Vec::new(),
    });
    while let Some(node) = heap.pop() {
        if out.len() + 1 < k {
            // Partition the remaining solution space of this node.
            let mut forced = node.forced.clone();
            let mut fixed: Vec<(usize, usize)> = (0..n).filter(|&i| forced[i]).map(|i| (i, node.assignment[i])).collect();
            for i in 0..n {
                if forced[i] {
                    continue;
                }
                let mut forbidden = node.forbidden.clone();
                forbidden.push((i, node.assignment[i]));
                if let Some((c, a)) = solve_constrained(cost, &fixed, &forbidden) {
                    heap.push(Node {
                        cost: c,
                        assignment: a,
                        forced: forced.clone(),
                        forbidden,
                    });
                }
                forced[i] = true;
                fixed.push((i, node.assignment[i]));
            }
        }
        out.push((node.cost, node.assignment));
        if out.len() >= k {
            break;
        }
    }
    out
}
