//! Optimal 2D assignment and ranked k-best enumeration.
//!
//! The solver assigns every row of a rectangular cost matrix to a distinct
//! column (columns may stay unassigned) minimizing the total cost, via the
//! shortest-augmenting-path method with row/column potentials. Infeasible
//! pairings carry `f64::INFINITY`. Murty's partitioning enumerates the k
//! lowest-cost assignments in nondecreasing order with deterministic
//! lexicographic tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Rectangular cost matrix, row-major, `f64::INFINITY` for forbidden pairs.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            assert_eq!(r.len(), m, "ragged cost matrix");
            data.extend_from_slice(r);
        }
        Self { rows: n, cols: m, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }
}

/// A full row-to-column assignment with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub row_to_col: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost assignment of all rows to distinct columns.
///
/// Requires `rows <= cols` and at least one finite completion.
pub fn solve_assignment(cost: &CostMatrix) -> Result<Assignment> {
    let n = cost.rows();
    let m = cost.cols();
    if n == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), total_cost: 0.0 });
    }
    if n > m {
        return Err(Error::Infeasible);
    }
    // Shortest augmenting path with potentials; columns are 1-indexed with
    // column 0 acting as the virtual start node.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut assigned_row = vec![usize::MAX; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            if !delta.is_finite() {
                return Err(Error::Infeasible);
            }
            for j in 0..=m {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == usize::MAX {
                break;
            }
        }
        // Walk back along the alternating path.
        while j0 != 0 {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if assigned_row[j] != usize::MAX {
            row_to_col[assigned_row[j] - 1] = j - 1;
        }
    }
    let total_cost = row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| cost.get(r, c))
        .sum();
    Ok(Assignment { row_to_col, total_cost })
}

#[derive(Debug, Clone)]
struct MurtyNode {
    /// Rows fixed to their column from the parent solution.
    fixed: Vec<(usize, usize)>,
    /// Forbidden (row, col) pairs.
    forbidden: Vec<(usize, usize)>,
}

#[derive(Debug)]
struct Candidate {
    assignment: Assignment,
    node: MurtyNode,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap and we pop lowest cost first,
        // ties broken by lexicographically smallest assignment.
        other
            .assignment
            .total_cost
            .total_cmp(&self.assignment.total_cost)
            .then_with(|| other.assignment.row_to_col.cmp(&self.assignment.row_to_col))
    }
}

fn solve_node(cost: &CostMatrix, node: &MurtyNode) -> Result<Assignment> {
    let mut work = cost.clone();
    for &(r, c) in &node.forbidden {
        work.set(r, c, f64::INFINITY);
    }
    // A fixed row keeps only its forced column; the true cost of the pair
    // is restored after the solve.
    let mut offset = 0.0;
    for &(r, c) in &node.fixed {
        offset += cost.get(r, c);
        for j in 0..work.cols() {
            work.set(r, j, if j == c { 0.0 } else { f64::INFINITY });
        }
    }
    let mut solved = solve_assignment(&work)?;
    solved.total_cost += offset;
    Ok(solved)
}

/// The k lowest-cost assignments in nondecreasing cost order.
///
/// Returns fewer than `k` entries when fewer feasible assignments exist.
pub fn murty_kbest(cost: &CostMatrix, k: usize) -> Result<Vec<Assignment>> {
    assert!(k >= 1, "k must be positive");
    let root = MurtyNode { fixed: Vec::new(), forbidden: Vec::new() };
    let first = solve_node(cost, &root)?;
    let mut heap = BinaryHeap::new();
    heap.push(Candidate { assignment: first, node: root });
    let mut out: Vec<Assignment> = Vec::with_capacity(k);
    while out.len() < k {
        let Some(Candidate { assignment, node }) = heap.pop() else {
            break;
        };
        // Partition the remaining solution space around this assignment.
        let mut fixed = node.fixed.clone();
        for row in 0..cost.rows() {
            if node.fixed.iter().any(|&(r, _)| r == row) {
                continue;
            }
            let col = assignment.row_to_col[row];
            let mut forbidden = node.forbidden.clone();
            forbidden.push((row, col));
            let child = MurtyNode { fixed: fixed.clone(), forbidden };
            if let Ok(solved) = solve_node(cost, &child) {
                heap.push(Candidate { assignment: solved, node: child });
            }
            fixed.push((row, col));
        }
        out.push(assignment);
    }
    Ok(out)
}
