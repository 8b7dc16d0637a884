//! Rectangular linear assignment with forbidden pairs.
//!
//! The solver is the shortest-augmenting-path Hungarian method with dual
//! potentials, run on the matrix completed to a square with zero-cost dummy
//! rows or columns. Among all optimal matchings it returns the one that is
//! lexicographically smallest in `(row, column)` order, found by rotating
//! alternating cycles inside the equality subgraph of the optimal dual.

/// Track-by-detection cost matrix. `None` entries are forbidden pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<f64>>,
}

impl CostMatrix {
    /// All-forbidden matrix of the given shape.
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![None; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            entries: rows.iter().flatten().map(|&v| Some(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        debug_assert!(value.is_none_or(f64::is_finite));
        self.entries[row * self.cols + col] = value;
    }

    pub fn is_forbidden(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// `(track_index, detection_index, cost)`, sorted by track index.
    pub matched: Vec<(usize, usize, f64)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self) -> f64 {
        self.matched.iter().map(|&(_, _, c)| c).sum()
    }

    fn all_unmatched(rows: usize, cols: usize) -> Self {
        Self {
            matched: Vec::new(),
            unmatched_tracks: (0..rows).collect(),
            unmatched_detections: (0..cols).collect(),
        }
    }
}

/// Minimum-cost matching of the rectangular matrix. Forbidden entries never
/// appear in the result; every row and column is reported exactly once.
pub fn solve(m: &CostMatrix) -> Assignment {
    if m.rows == 0 || m.cols == 0 {
        return Assignment::all_unmatched(m.rows, m.cols);
    }
    let n = m.rows.max(m.cols);
    let (lo, hi) = m
        .entries
        .iter()
        .flatten()
        .fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // Any matching with fewer forbidden pairs is strictly cheaper.
    let forbidden_cost = hi + (n as f64) * (hi - lo) + 1.0;

    let mut cost = vec![0.0; n * n];
    for i in 0..m.rows {
        for j in 0..m.cols {
            cost[i * n + j] = m.get(i, j).unwrap_or(forbidden_cost);
        }
    }

    let (mut row_to_col, u, v) = hungarian(&cost, n);
    let tol = 1e-11 * (1.0 + forbidden_cost.abs() + lo.abs());
    let tight = |i: usize, j: usize| cost[i * n + j] - u[i] - v[j] <= tol;
    lexicographic_min(&mut row_to_col, n, &tight);

    let mut out = Assignment::default();
    let mut col_used = vec![false; m.cols];
    for (i, &j) in row_to_col.iter().enumerate().take(m.rows) {
        match (j < m.cols).then(|| m.get(i, j)).flatten() {
            Some(c) => {
                out.matched.push((i, j, c));
                col_used[j] = true;
            }
            None => out.unmatched_tracks.push(i),
        }
    }
    out.unmatched_detections = (0..m.cols).filter(|&j| !col_used[j]).collect();
    out
}

/// Square Hungarian method. Returns the row-to-column matching and the row
/// and column potentials, with `cost[i][j] - u[i] - v[j] >= 0` everywhere and
/// equality on matched pairs.
fn hungarian(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internally; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites a perfect matching of the equality graph into the lexicographically
/// smallest one. Row `i` is moved to a lower tight column `j` when an
/// alternating path through unfixed rows frees `j` and absorbs `i`'s column.
fn lexicographic_min(row_to_col: &mut [usize], n: usize, tight: &dyn Fn(usize, usize) -> bool) {
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    for i in 0..n {
        let current = row_to_col[i];
        for j in 0..current {
            if !tight(i, j) {
                continue;
            }
            let displaced = col_to_row[j];
            if displaced < i {
                continue;
            }
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut path = Vec::new();
            if find_path(
                displaced,
                current,
                i,
                row_to_col,
                &col_to_row,
                tight,
                &mut visited,
                &mut path,
            ) {
                // path: (row, new column) pairs along the alternating chain.
                path.push((i, j));
                for &(r, c) in &path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                break;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn find_path(
    row: usize,
    target: usize,
    fixed_below: usize,
    row_to_col: &[usize],
    col_to_row: &[usize],
    tight: &dyn Fn(usize, usize) -> bool,
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for c in 0..visited.len() {
        if visited[c] || c == row_to_col[row] || !tight(row, c) {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = col_to_row[c];
        if next <= fixed_below {
            continue;
        }
        if find_path(next, target, fixed_below, row_to_col, col_to_row, tight, visited, path) {
            path.push((row, c));
            return true;
        }
    }
    false
}

/// Demotes matched pairs whose cost exceeds `tau_match`.
pub fn gate(a: &Assignment, tau_match: f64) -> Assignment {
    let mut out = Assignment {
        matched: Vec::with_capacity(a.matched.len()),
        unmatched_tracks: a.unmatched_tracks.clone(),
        unmatched_detections: a.unmatched_detections.clone(),
    };
    for &(t, d, c) in &a.matched {
        if c > tau_match {
            out.unmatched_tracks.push(t);
            out.unmatched_detections.push(d);
        } else {
            out.matched.push((t, d, c));
        }
    }
    out.unmatched_tracks.sort_unstable();
    out.unmatched_detections.sort_unstable();
    out
}
