//! One-to-one lane matching on an IoU matrix.
//!
//! Only pairs above the threshold are eligible. The matching maximizes the
//! number of pairs first and the total IoU second.

/// Side length up to which matchings are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// `(row, col)` pairs of the best matching. `iou[r][c]` pairs row `r` with column `c`.
pub fn best_matching(iou: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let rows = iou.len();
    let cols = iou.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows <= EXHAUSTIVE_LIMIT && cols <= EXHAUSTIVE_LIMIT {
        exhaustive(iou, threshold)
    } else {
        hungarian_matching(iou, threshold)
    }
}

struct Search<'a> {
    iou: &'a [Vec<f64>],
    threshold: f64,
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    current_total: f64,
    best: Vec<(usize, usize)>,
    best_total: f64,
}

impl Search<'_> {
    fn run(&mut self, row: usize) {
        if row == self.iou.len() {
            let better = self.current.len() > self.best.len()
                || (self.current.len() == self.best.len() && self.current_total > self.best_total);
            if better {
                self.best = self.current.clone();
                self.best_total = self.current_total;
            }
            return;
        }
        // even matching every remaining row cannot beat the best cardinality
        if self.current.len() + (self.iou.len() - row) < self.best.len() {
            return;
        }
        for col in 0..self.used.len() {
            let v = self.iou[row][col];
            if self.used[col] || v <= self.threshold {
                continue;
            }
            self.used[col] = true;
            self.current.push((row, col));
            self.current_total += v;
            self.run(row + 1);
            self.current_total -= v;
            self.current.pop();
            self.used[col] = false;
        }
        self.run(row + 1);
    }
}

fn exhaustive(iou: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let mut search = Search {
        iou,
        threshold,
        used: vec![false; iou[0].len()],
        current: Vec::new(),
        current_total: 0.0,
        best: Vec::new(),
        best_total: 0.0,
    };
    search.run(0);
    search.best
}

/// Same objective as the exhaustive search, solved as an assignment problem.
pub fn hungarian_matching(iou: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let rows = iou.len();
    let cols = iou.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // An offset larger than any achievable IoU total makes cardinality dominate.
    let offset = (rows.min(cols) + 1) as f64;
    let weight = |r: usize, c: usize| {
        let v = iou[r][c];
        if v > threshold {
            offset + v
        } else {
            0.0
        }
    };
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let (r, c) = if transpose { (j, i) } else { (i, j) };
                    -weight(r, c)
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost);
    assignment
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transpose { (j, i) } else { (i, j) })
        .filter(|&(r, c)| iou[r][c] > threshold)
        .collect()
}

/// Rows-to-columns assignment minimizing total cost, `n <= m`.
/// Returns the column of each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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
    let mut result = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}
