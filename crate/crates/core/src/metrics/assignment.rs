//! Maximum-weight bipartite assignment (Hungarian method with potentials).

/// Assigns rows of `weights` (each of length `n_cols`) to distinct columns,
/// maximizing the summed weight. Returns the chosen column per row; rows left
/// without a real column get `None`. Zero-weight assignments are reported as
/// chosen and left for the caller to filter.
pub fn max_weight_assignment(weights: &[Vec<f64>], n_cols: usize) -> Vec<Option<usize>> {
    let n_rows = weights.len();
    let n = n_rows.max(n_cols);
    if n == 0 {
        return Vec::new();
    }
    let max_w = weights
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v));
    // Square minimization problem; padded cells cost as much as a zero weight.
    let cost = |i: usize, j: usize| -> f64 {
        if i < n_rows && j < n_cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };

    // 1-based arrays, column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
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
    let mut out = vec![None; n_rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= n_rows && j <= n_cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}
