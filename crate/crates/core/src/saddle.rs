//! The constant block step matrix
//!
//! ```text
//! K = [ (δ0/τ) M   A ]
//!     [   -A       M ]
//! ```
//!
//! is factorised once and reused for every time step. Internally the
//! unknowns are interleaved node by node (`u_i, w_i`) after a reverse
//! Cuthill-McKee ordering of the mesh graph, which turns `K` into a narrow
//! band matrix; the band is factorised by Gaussian elimination with partial
//! pivoting. The public solve contract uses the blocked ordering `[u; w]`.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// LU factors of a band matrix with row interchanges.
///
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl`
/// superdiagonals hold fill created by pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    /// Factorises a square sparse matrix whose nonzeros satisfy `j + kl >= i`
    /// and `i + ku >= j`.
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.dim();
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.entries() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for (i, j, v) in a.entries() {
            *lu.at_mut(i, j) = v;
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let s = self.slot(i, j);
        &mut self.data[s]
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 && n > 0 {
            return Err(Error::Factorization("zero matrix".into()));
        }
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.ku + self.kl).min(n - 1);

            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= f64::EPSILON * scale * 1e-3 {
                return Err(Error::Factorization(format!("zero pivot in column {k}")));
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }

            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let factor = self.at(i, k) / pivot;
                *self.at_mut(i, k) = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let u = self.at(k, j);
                    *self.at_mut(i, j) -= factor * u;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last = (k + self.kl).min(n.saturating_sub(1));
                for (i, bi) in b.iter_mut().enumerate().take(last + 1).skip(k + 1) {
                    *bi -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            let last = (k + self.ku + self.kl).min(n - 1);
            for (j, bj) in b.iter().enumerate().take(last + 1).skip(k + 1) {
                s -= self.at(k, j) * bj;
            }
            b[k] = s / self.at(k, k);
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and upper bandwidth of the factorised matrix.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Sign of the determinant and `ln |det|`.
    pub fn log_determinant(&self) -> (f64, f64) {
        let mut sign = 1.0;
        let mut log = 0.0;
        for k in 0..self.n {
            let d = self.at(k, k);
            if d < 0.0 {
                sign = -sign;
            }
            if self.pivots[k] != k {
                sign = -sign;
            }
            log += d.abs().ln();
        }
        (sign, log)
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity graph of `a`.
///
/// Returns `order` with `order[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        let start = pseudo_peripheral(seed, &adjacency, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&w| !visited[w]).collect();
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

fn pseudo_peripheral(seed: usize, adjacency: &[Vec<usize>], degree: &[usize]) -> usize {
    let levels = |root: usize| -> (usize, Vec<usize>) {
        let mut depth = vec![usize::MAX; adjacency.len()];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        let mut last = vec![root];
        let mut max_depth = 0;
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[v] + 1;
                    if depth[w] > max_depth {
                        max_depth = depth[w];
                        last.clear();
                    }
                    if depth[w] == max_depth {
                        last.push(w);
                    }
                    queue.push_back(w);
                }
            }
        }
        (max_depth, last)
    };
    let mut root = seed;
    let (mut ecc, mut last) = levels(root);
    for _ in 0..8 {
        let candidate = *last.iter().min_by_key(|&&w| (degree[w], w)).unwrap();
        let (e, l) = levels(candidate);
        if e <= ecc {
            break;
        }
        root = candidate;
        ecc = e;
        last = l;
    }
    root
}

/// Band LU of a symmetrically permuted matrix.
#[derive(Debug, Clone)]
pub struct OrderedLu {
    order: Vec<usize>,
    lu: BandLu,
}

impl OrderedLu {
    /// Factorises `P A Pᵀ` where `order[new] = old`.
    pub fn factor(a: &SparseMatrix, order: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        Error::check_len(n, order.len())?;
        let mut position = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        if position.contains(&usize::MAX) {
            return Err(Error::InvalidArgument("ordering is not a permutation".into()));
        }
        let permuted: Vec<_> = a.entries().map(|(i, j, v)| (position[i], position[j], v)).collect();
        let lu = BandLu::factor(&SparseMatrix::from_triplets(n, &permuted)?)?;
        Ok(Self { order, lu })
    }

    /// Factorises with a reverse Cuthill-McKee ordering.
    pub fn factor_rcm(a: &SparseMatrix) -> Result<Self> {
        Self::factor(a, reverse_cuthill_mckee(a))
    }

    pub fn band(&self) -> &BandLu {
        &self.lu
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.order.len(), rhs.len())?;
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "right-hand side",
                index: i,
            });
        }
        let mut work: Vec<f64> = self.order.iter().map(|&k| rhs[k]).collect();
        self.lu.solve_in_place(&mut work);
        let mut x = vec![0.0; work.len()];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = work[new];
        }
        Ok(x)
    }
}

thread_local! {
    static FACTORIZATIONS: std::cell::Cell<usize> = const { std::cell::Cell::new(0) };
}

/// Number of step-matrix factorisations performed on the calling thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(|c| c.get())
}

/// Assembled and factorised block step matrix.
#[derive(Debug)]
pub struct StepMatrix {
    n: usize,
    delta0_over_tau: f64,
    matrix: SparseMatrix,
    lu: OrderedLu,
    solves: AtomicUsize,
}

impl StepMatrix {
    pub fn block_dim(&self) -> usize {
        self.n
    }

    pub fn delta0_over_tau(&self) -> f64 {
        self.delta0_over_tau
    }

    /// The 2N x 2N matrix in blocked `[u; w]` ordering.
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn factorization(&self) -> &BandLu {
        self.lu.band()
    }

    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Solves `K x = rhs` with the stored factorisation.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(2 * self.n, rhs.len())?;
        let x = self.lu.solve(rhs)?;
        self.solves.fetch_add(1, Ordering::Relaxed);
        Ok(x)
    }
}

/// Assembles `[[s M, A], [-A, M]]` with `s = δ0/τ` and factorises it.
pub fn build_step_matrix(mass: &SparseMatrix, stiffness: &SparseMatrix, delta0_over_tau: f64) -> Result<StepMatrix> {
    let n = mass.dim();
    Error::check_len(n, stiffness.dim())?;
    if !(delta0_over_tau.is_finite() && delta0_over_tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "δ0/τ must be positive, got {delta0_over_tau}"
        )));
    }

    let mut triplets = Vec::with_capacity(2 * (mass.nnz() + stiffness.nnz()));
    for (i, j, v) in mass.entries() {
        triplets.push((i, j, delta0_over_tau * v));
        triplets.push((n + i, n + j, v));
    }
    for (i, j, v) in stiffness.entries() {
        triplets.push((i, n + j, v));
        triplets.push((n + i, j, -v));
    }
    let matrix = SparseMatrix::from_triplets(2 * n, &triplets)?;

    let graph = mass.add(stiffness)?;
    let nodes = reverse_cuthill_mckee(&graph);
    let order: Vec<usize> = nodes.iter().flat_map(|&i| [i, n + i]).collect();
    let lu = OrderedLu::factor(&matrix, order)?;
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));

    Ok(StepMatrix {
        n,
        delta0_over_tau,
        matrix,
        lu,
        solves: AtomicUsize::new(0),
    })
}
