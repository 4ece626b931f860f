//! Sparse linear algebra for the implicit step.
//!
//! The step matrix is nonsymmetric (upwind convection) but strictly row
//! diagonally dominant, which keeps elimination without pivoting stable:
//! every Schur complement stays strictly diagonally dominant. Small and
//! medium systems use a banded LU after reverse Cuthill–McKee reordering;
//! large ones use BiCGSTAB with an ILU(0) preconditioner.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("zero or non-finite pivot {pivot} in row {row}")]
    Singular { row: usize, pivot: f64 },
    #[error("Krylov solver stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("relative residual {residual:e} exceeds tolerance {tol:e}")]
    Inaccurate { residual: f64, tol: f64 },
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
    }

    /// `‖b - A x‖₂ / ‖b‖₂`, or the absolute residual when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        let r = ax.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let nb = norm(b);
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }

    /// Smallest `|a_ii| - Σ_{j≠i} |a_ij|` over all rows.
    pub fn min_diagonal_dominance(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let mut d = 0.0;
                let mut off = 0.0;
                for (j, v) in self.row(i) {
                    if i == j {
                        d += v.abs();
                    } else {
                        off += v.abs();
                    }
                }
                d - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `P A Pᵀ` where `perm[new] = old`.
    fn permuted(&self, perm: &[usize], inv: &[usize]) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in self.row(old_i) {
                t.push((new_i, inv[old_j], v));
            }
        }
        CsrMatrix::from_triplets(self.n, &t)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reverse Cuthill–McKee ordering of the symmetrized sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nb in &mut adj {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Repeated BFS from the farthest minimum-degree node until eccentricity stops growing.
fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let levels = bfs_levels(root, adj);
        let depth = *levels.iter().flatten().max().unwrap_or(&0);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        let candidate = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(depth))
            .min_by_key(|(i, _)| (degree[*i], *i))
            .map(|(i, _)| i)
            .unwrap_or(root);
        if candidate == root {
            break;
        }
        root = candidate;
    }
    root
}

fn bfs_levels(root: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

/// LU factors of `P A Pᵀ` stored in band form, without pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    band: Vec<f64>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let pa = a.permuted(&perm, &inv);
        let (mut lower, mut upper) = (0, 0);
        for i in 0..n {
            for (j, _) in pa.row(i) {
                if j < i {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
        let w = lower + upper + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in pa.row(i) {
                band[i * w + (j + lower - i)] = v;
            }
        }
        let at = |i: usize, j: usize| i * w + (j + lower - i);
        for k in 0..n {
            let pivot = band[at(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(LinalgError::Singular { row: perm[k], pivot });
            }
            let last_row = (k + lower).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            for i in k + 1..=last_row {
                let l = band[at(i, k)] / pivot;
                band[at(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        band[at(i, j)] -= l * band[at(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, lower, upper, band, perm })
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension { expected: self.n, got: b.len() });
        }
        let (n, lo, up) = (self.n, self.lower, self.upper);
        let w = lo + up + 1;
        let at = |i: usize, j: usize| i * w + (j + lo - i);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in i.saturating_sub(lo)..i {
                acc -= self.band[at(i, j)] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..=(i + up).min(n - 1) {
                acc -= self.band[at(i, j)] * y[j];
            }
            y[i] = acc / self.band[at(i, i)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            let r = lu.row_ptr[i]..lu.row_ptr[i + 1];
            if let Ok(p) = lu.col_idx[r.clone()].binary_search(&i) {
                *d = r.start + p;
            } else {
                return Err(LinalgError::Singular { row: i, pivot: 0.0 });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.col_idx[p]] = p;
            }
            for p in start..end {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag[k]];
                if pivot == 0.0 || !pivot.is_finite() {
                    return Err(LinalgError::Singular { row: k, pivot });
                }
                let l = lu.values[p] / pivot;
                lu.values[p] = l;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.col_idx[q];
                    if pos[j] != usize::MAX {
                        lu.values[pos[j]] -= l * lu.values[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.col_idx[p]] = usize::MAX;
            }
        }
        Ok(Self { lu, diag })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut acc = r[i];
            for p in self.lu.row_ptr[i]..self.diag[i] {
                acc -= self.lu.values[p] * z[self.lu.col_idx[p]];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for p in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                acc -= self.lu.values[p] * z[self.lu.col_idx[p]];
            }
            z[i] = acc / self.lu.values[self.diag[i]];
        }
    }
}

/// Preconditioned BiCGSTAB. `x` holds the initial guess on entry.
/// Returns the iteration count and the final relative residual.
pub fn bicgstab(a: &CsrMatrix, m: &Ilu0, b: &[f64], x: &mut [f64], tol: f64, max_iters: usize) -> Result<(usize, f64), LinalgError> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(LinalgError::Dimension { expected: n, got: b.len().min(x.len()) });
    }
    let nb = norm(b);
    if nb == 0.0 {
        x.fill(0.0);
        return Ok((0, 0.0));
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm(&r) / nb;
    if res <= tol {
        return Ok((0, res));
    }
    for it in 1..=max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(LinalgError::NotConverged { iterations: it, residual: res });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut p_hat);
        a.matvec(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        // r becomes s = r - αv
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        if norm(&r) / nb <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((it, a.relative_residual(x, b)));
        }
        m.apply(&r, &mut s_hat);
        a.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        res = norm(&r) / nb;
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok((it, a.relative_residual(x, b)));
        }
    }
    Err(LinalgError::NotConverged { iterations: max_iters, residual: res })
}

/// Which algorithm a [`LinearSolver`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Direct,
    Krylov,
}

/// A factored system ready for repeated solves.
#[derive(Debug, Clone)]
pub enum LinearSolver {
    Direct { matrix: CsrMatrix, lu: BandedLu },
    Krylov { matrix: CsrMatrix, ilu: Ilu0 },
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

impl LinearSolver {
    /// Direct factorization when `n <= direct_max`, otherwise Krylov.
    pub fn new(matrix: CsrMatrix, direct_max: usize) -> Result<Self, LinalgError> {
        if matrix.dim() <= direct_max {
            let lu = BandedLu::factor(&matrix)?;
            Ok(LinearSolver::Direct { matrix, lu })
        } else {
            let ilu = Ilu0::factor(&matrix)?;
            Ok(LinearSolver::Krylov { matrix, ilu })
        }
    }

    pub fn kind(&self) -> SolverKind {
        match self {
            LinearSolver::Direct { .. } => SolverKind::Direct,
            LinearSolver::Krylov { .. } => SolverKind::Krylov,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        match self {
            LinearSolver::Direct { matrix, .. } | LinearSolver::Krylov { matrix, .. } => matrix,
        }
    }

    /// Solves `A x = b` to relative residual `tol`. `guess` seeds the Krylov iteration.
    pub fn solve(&self, b: &[f64], guess: Option<&[f64]>, tol: f64) -> Result<(Vec<f64>, LinearReport), LinalgError> {
        match self {
            LinearSolver::Direct { matrix, lu } => {
                let mut x = lu.solve(b)?;
                let mut res = matrix.relative_residual(&x, b);
                let mut iterations = 1;
                // One step of iterative refinement if roundoff was unlucky.
                if res > tol {
                    let mut ax = vec![0.0; b.len()];
                    matrix.matvec(&x, &mut ax);
                    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
                    let d = lu.solve(&r)?;
                    x.iter_mut().zip(&d).for_each(|(x, d)| *x += d);
                    res = matrix.relative_residual(&x, b);
                    iterations = 2;
                }
                if res > tol {
                    return Err(LinalgError::Inaccurate { residual: res, tol });
                }
                Ok((x, LinearReport { iterations, relative_residual: res }))
            }
            LinearSolver::Krylov { matrix, ilu } => {
                let mut x = match guess {
                    Some(g) => g.to_vec(),
                    None => vec![0.0; b.len()],
                };
                let max_iters = 10 * matrix.dim().max(100);
                let (iterations, relative_residual) = bicgstab(matrix, ilu, b, &mut x, tol, max_iters)?;
                Ok((x, LinearReport { iterations, relative_residual }))
            }
        }
    }
}
