//! Maximum-weight bipartite assignment between two label sets.

/// Largest side handled by exhaustive search.
const EXHAUSTIVE_LIMIT: usize = 8;

/// Maps each row to at most one column (and vice versa) maximizing the total
/// weight. Weights must be non-negative. Exhaustive search up to 8x8,
/// Hungarian algorithm beyond.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows <= EXHAUSTIVE_LIMIT && cols <= EXHAUSTIVE_LIMIT {
        max_weight_assignment_exhaustive(weights)
    } else {
        max_weight_assignment_hungarian(weights)
    }
}

pub fn max_weight_assignment_exhaustive(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    fn search(
        row: usize,
        weights: &[Vec<f64>],
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        score: f64,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if row == weights.len() {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                current[row] = Some(c);
                search(row + 1, weights, used, current, score + weights[row][c], best);
                used[c] = false;
            }
        }
        current[row] = None;
        search(row + 1, weights, used, current, score, best);
    }

    let cols = weights.first().map_or(0, Vec::len);
    let mut best = (f64::NEG_INFINITY, vec![None; weights.len()]);
    search(
        0,
        weights,
        &mut vec![false; cols],
        &mut vec![None; weights.len()],
        0.0,
        &mut best,
    );
    drop_zero_pairs(weights, best.1)
}

/// Kuhn-Munkres on the square-padded cost matrix `max - w`.
pub fn max_weight_assignment_hungarian(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return vec![None; rows];
    }
    let wmax = weights.iter().flatten().copied().fold(0.0, f64::max);
    let cost = |i: usize, j: usize| {
        if i < rows && j < cols {
            wmax - weights[i][j]
        } else {
            wmax
        }
    };
    // potentials and matching, 1-indexed with column 0 as a sentinel
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
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    drop_zero_pairs(weights, out)
}

fn drop_zero_pairs(weights: &[Vec<f64>], mut assignment: Vec<Option<usize>>) -> Vec<Option<usize>> {
    for (r, a) in assignment.iter_mut().enumerate() {
        if let Some(c) = *a {
            if weights[r][c] <= 0.0 {
                *a = None;
            }
        }
    }
    assignment
}
