//! Compressed sparse row matrices over real or complex scalars, and an
//! envelope `L D L^H` factorization with reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use nalgebra::{ComplexField, DMatrix};

use crate::{Error, Result};

/// Scalars the operators are assembled over: `f64` and `Complex64`.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync {}

impl<T: ComplexField<RealField = f64> + Copy + Send + Sync> Scalar for T {}

/// Row-compressed sparse matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

pub type RealSparseOperator = SparseMatrix<f64>;
pub type ComplexSparseOperator = SparseMatrix<num_complex::Complex64>;

impl<T: Scalar> SparseMatrix<T> {
    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    /// Entries are summed in sorted `(row, col, insertion)` order, so the
    /// result does not depend on anything but the triplet sequence.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        // Stable sort keeps insertion order among duplicates.
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                let lv = values.last_mut().expect("duplicate follows an entry");
                *lv += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Canonical `(row, col, value)` listing in row-major sorted order.
    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.rows)
            .flat_map(|i| {
                let (c, v) = self.row(i);
                c.iter()
                    .zip(v)
                    .map(move |(&j, &x)| (i, j, x))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        (0..self.rows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&j, &a)| acc + a * x[j])
            })
            .collect()
    }

    /// `A * X` for a dense matrix with `cols` rows.
    pub fn mul_dense(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.cols, "matrix shape mismatch");
        let mut out = DMatrix::zeros(self.rows, x.ncols());
        for i in 0..self.rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                for k in 0..x.ncols() {
                    out[(i, k)] += a * x[(j, k)];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let t = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (j, i, v.conjugate()))
            .collect();
        SparseMatrix::from_triplets(self.cols, self.rows, t)
    }

    /// Entrywise complex conjugate (identity for real matrices).
    pub fn conjugate(&self) -> Self {
        SparseMatrix {
            values: self.values.iter().map(|v| v.conjugate()).collect(),
            ..self.clone()
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, v * s)));
        SparseMatrix::from_triplets(self.rows, self.cols, t)
    }

    /// Symmetric permutation `P A P^T` where row `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let t = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (perm[i], perm[j], v))
            .collect();
        SparseMatrix::from_triplets(self.rows, self.cols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// `max |a_ij - conj(a_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.triplets()
            .into_iter()
            .map(|(i, j, v)| (v - self.get(j, i).conjugate()).modulus())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity pattern.
/// Returns `order` with `order[new] = old`.
pub fn reverse_cuthill_mckee<T: Scalar>(a: &SparseMatrix<T>) -> Vec<usize> {
    let n = a.rows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize| -> (usize, Vec<usize>) {
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        level[start] = 0;
        let mut last = start;
        while let Some(u) = q.pop_front() {
            last = u;
            for &v in &adj[u] {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        (last, level)
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited vertex exists");
        // Pseudo-peripheral start: a few sweeps to a far, low-degree node.
        let mut start = seed;
        let mut ecc = 0;
        for _ in 0..4 {
            let (_, level) = bfs_levels(start);
            let max_level = level
                .iter()
                .filter(|&&l| l != usize::MAX)
                .max()
                .copied()
                .unwrap_or(0);
            if max_level <= ecc && start != seed {
                break;
            }
            ecc = max_level;
            start = (0..n)
                .filter(|&i| level[i] == max_level)
                .min_by_key(|&i| (degree[i], i))
                .unwrap_or(start);
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope `L D L^H` factorization of a Hermitian matrix (no pivoting).
#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    /// `order[new] = old`
    order: Vec<usize>,
    first: Vec<usize>,
    /// Row `i` holds `L[i, first[i]..i]`.
    lower: Vec<Vec<T>>,
    diag: Vec<f64>,
}

impl<T: Scalar> LdlFactor<T> {
    /// Factors `a`, reading only its lower triangle after reordering.
    pub fn new(a: &SparseMatrix<T>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Dimension(format!(
                "cannot factor a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let order = reverse_cuthill_mckee(a);
        let mut new_of_old = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let p = a.permuted(&new_of_old);

        let first: Vec<usize> = (0..n)
            .map(|i| p.row(i).0.first().copied().unwrap_or(i).min(i))
            .collect();
        let scale = p.max_abs().max(f64::MIN_POSITIVE);
        let mut lower: Vec<Vec<T>> = Vec::with_capacity(n);
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let fi = first[i];
            let mut u = vec![T::zero(); i - fi];
            let (cols, vals) = p.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j < i {
                    u[j - fi] = v;
                }
            }
            for j in fi..i {
                let fj = first[j];
                let lj = &lower[j];
                let start = fi.max(fj);
                let mut s = u[j - fi];
                for k in start..j {
                    s -= u[k - fi] * lj[k - fj].conjugate();
                }
                u[j - fi] = s;
            }
            // u currently holds L_ij * D_j.
            let mut d = p.get(i, i).real();
            let mut row = Vec::with_capacity(i - fi);
            for j in fi..i {
                let l = u[j - fi] / T::from_real(diag[j]);
                d -= (u[j - fi] * l.conjugate()).real();
                row.push(l);
            }
            if !d.is_finite() || d.abs() <= 1e-14 * scale {
                return Err(Error::Factorization { column: order[i] });
            }
            diag[i] = d;
            lower.push(row);
        }
        Ok(LdlFactor {
            order,
            first,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of stored off-diagonal envelope entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.iter().map(Vec::len).sum()
    }

    /// Number of negative pivots (inertia).
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.order.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for (k, &l) in self.lower[i].iter().enumerate() {
                s -= l * y[fi + k];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= T::from_real(self.diag[i]);
        }
        for i in (0..n).rev() {
            let xi = y[i];
            let fi = self.first[i];
            for (k, &l) in self.lower[i].iter().enumerate() {
                let v = y[fi + k] - l.conjugate() * xi;
                y[fi + k] = v;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.order.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
