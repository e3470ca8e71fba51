//! Exact assignment problems on small dense cost matrices.

use nalgebra::DMatrix;

/// Minimum-cost assignment of every row to a distinct column (`rows ≤ cols`)
/// by the Hungarian method with potentials, `O(rows² · cols)`.
/// Returns `assign[row] = col`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = cost.shape();
    assert!(n <= m, "need rows ≤ cols");
    // 1-based arrays with column 0 as the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
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
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Kuhn's augmenting-path matching restricted to edges with `cost ≤ t`.
fn perfect_matching(cost: &DMatrix<f64>, t: f64) -> Option<Vec<usize>> {
    let (n, m) = cost.shape();
    let mut match_col: Vec<Option<usize>> = vec![None; m];

    fn augment(
        i: usize,
        cost: &DMatrix<f64>,
        t: f64,
        seen: &mut [bool],
        match_col: &mut [Option<usize>],
    ) -> bool {
        for j in 0..cost.ncols() {
            if cost[(i, j)] <= t && !seen[j] {
                seen[j] = true;
                if match_col[j].map_or(true, |k| augment(k, cost, t, seen, match_col)) {
                    match_col[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }

    for i in 0..n {
        let mut seen = vec![false; m];
        if !augment(i, cost, t, &mut seen, &mut match_col) {
            return None;
        }
    }
    let mut assign = vec![0; n];
    for (j, r) in match_col.iter().enumerate() {
        if let Some(i) = r {
            assign[*i] = j;
        }
    }
    Some(assign)
}

/// Assignment minimizing the largest cost used, by binary search over the
/// sorted entries with a matching feasibility check. Returns the optimal
/// bottleneck value and `assign[row] = col`.
pub fn bottleneck_assignment(cost: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let (n, m) = cost.shape();
    assert!(n <= m, "need rows ≤ cols");
    if n == 0 {
        return (0.0, Vec::new());
    }
    let mut values: Vec<f64> = cost.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let (mut lo, mut hi) = (0, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(cost, values[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let assign = perfect_matching(cost, values[lo]).expect("the largest threshold is feasible");
    (values[lo], assign)
}
