//! Compressed sparse row storage for the assembled finite element operators.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Square sparse matrix in compressed row layout.
///
/// Column indices are sorted within each row and contain no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets.
    ///
    /// Duplicate entries are summed in the order they appear, so the result
    /// is bit-reproducible for a fixed triplet sequence.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for (k, &(i, j, v)) in triplets.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "triplet {k} ({i}, {j}) out of range for dimension {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "triplet",
                    index: k,
                });
            }
        }

        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: equal keys keep insertion order
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = triplets[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            Error::check_len(n, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.n, x.len())?;
        Ok((0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect())
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Error::check_len(self.n, x.len())?;
        Error::check_len(self.n, y.len())?;
        Ok((0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum())
    }

    /// `A + B` over the union of both sparsity patterns.
    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        Error::check_len(self.n, other.n)?;
        let triplets: Vec<_> = self.entries().chain(other.entries()).collect();
        Self::from_triplets(self.n, &triplets)
    }

    pub fn scaled(&self, factor: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.entries() {
            dense[i][j] = v;
        }
        dense
    }

    /// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.entries()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol
    }

    /// Coordinate text dump, one `i j value` line per stored entry sorted by `(i, j)`.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for (i, j, v) in self.entries() {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        assert!(SparseMatrix::from_triplets(2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let dense = vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]];
        let m = SparseMatrix::from_dense(&dense).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(m.mul_vec(&x).unwrap(), vec![0.0, 0.0, 4.0]);
        assert_eq!(m.bilinear(&x, &x).unwrap(), 12.0);
        assert!(m.is_symmetric(0.0));
        assert_eq!(m.to_dense(), dense);
    }

    #[test]
    fn coordinate_dump_is_sorted() {
        let m = SparseMatrix::from_triplets(2, &[(1, 1, 1.0), (0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        let text = m.to_coordinate_text();
        let keys: Vec<_> = text
            .lines()
            .map(|l| {
                let mut it = l.split_whitespace();
                (it.next().unwrap().to_owned(), it.next().unwrap().to_owned())
            })
            .collect();
        assert_eq!(
            keys,
            vec![
                ("0".into(), "1".into()),
                ("1".into(), "0".into()),
                ("1".into(), "1".into())
            ]
        );
    }
}
