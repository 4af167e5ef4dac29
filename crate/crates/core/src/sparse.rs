//! Compressed sparse row matrices and a direct solver wrapper.

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;
use std::io::Write;

/// Coordinate-format builder; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct Coo {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Coo {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    /// Adds `scale * m` with its rows and columns shifted by the given offsets.
    pub fn push_block(&mut self, m: &Csr, row0: usize, col0: usize, scale: f64) {
        for i in 0..m.n_rows {
            for k in m.indptr[i]..m.indptr[i + 1] {
                self.push(row0 + i, col0 + m.indices[k], scale * m.data[k]);
            }
        }
    }

    pub fn to_csr(&self) -> Csr {
        Csr::from_triplets(self.n_rows, self.n_cols, self.entries.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, indptr: vec![0; n_rows + 1], indices: vec![], data: vec![] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n_rows: n, n_cols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), data: d.to_vec() }
    }

    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.par_sort_unstable_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = (usize::MAX, usize::MAX);
        for (i, j, v) in t {
            if (i, j) == last {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = (i, j);
            }
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Self { n_rows, n_cols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).into_par_iter().map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_rows);
        let mut x = vec![0.0; self.n_cols];
        for (i, yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                x[j] += v * yi;
            }
        }
        x
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(self.n_cols, self.n_rows, self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `a self + b other`
    pub fn add(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Csr::from_triplets(self.n_rows, self.n_cols, t)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.n_cols, other.n_rows);
        let rows: Vec<Vec<(usize, f64)>> = (0..self.n_rows)
            .into_par_iter()
            .map(|i| {
                let mut acc: Vec<(usize, f64)> = Vec::new();
                for (k, a) in self.row(i) {
                    for (j, b) in other.row(k) {
                        acc.push((j, a * b));
                    }
                }
                acc.sort_unstable_by_key(|e| e.0);
                let mut out: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
                for (j, v) in acc {
                    match out.last_mut() {
                        Some(l) if l.0 == j => l.1 += v,
                        _ => out.push((j, v)),
                    }
                }
                out
            })
            .collect();
        let mut m = Csr::zeros(self.n_rows, other.n_cols);
        for (i, r) in rows.into_iter().enumerate() {
            m.indptr[i + 1] = m.indptr[i] + r.len();
            for (j, v) in r {
                m.indices.push(j);
                m.data.push(v);
            }
        }
        m
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets().iter().map(|&(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).map(|e| e.1).sum()).collect()
    }

    /// Writes `i j value` lines (zero-based) after a size header.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

/// Sparse LU factorization, factored once and reused.
pub struct LuSolver {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for LuSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LuSolver(n={})", self.n)
    }
}

impl LuSolver {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::LinearSolveFailure(format!("matrix is {}x{}", a.n_rows, a.n_cols)));
        }
        let trips: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.n_rows, a.n_cols, &trips)
            .map_err(|e| Error::LinearSolveFailure(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::LinearSolveFailure(format!("{e:?}")))?;
        Ok(Self { n: a.n_rows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite solution (singular system)".into()));
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative residual `|A x - b| / max(|b|, tiny)`.
pub fn relative_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let r: Vec<f64> = a.matvec(x).iter().zip(b).map(|(p, q)| p - q).collect();
    norm(&r) / norm(b).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_products() {
        let a = Csr::from_triplets(2, 3, vec![(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5), (1, 2, -1.0)]);
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.nnz(), 3);
        let b = a.transpose();
        let c = a.matmul(&b);
        assert_eq!(c.get(0, 0), 2.25);
        assert_eq!(c.get(1, 1), 5.0);
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]), vec![3.0, -1.0]);
        assert_eq!(a.matvec_t(&[1.0, 1.0]), vec![2.0, 1.5, -1.0]);
    }

    #[test]
    fn lu_solves_small_system() {
        let a = Csr::from_triplets(3, 3, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (1, 2, -1.0)]);
        let x = vec![1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let s = LuSolver::new(&a).unwrap().solve(&b).unwrap();
        for (p, q) in s.iter().zip(&x) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
