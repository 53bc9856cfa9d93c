//! Small linear-algebra containers used by the strip model and the adjoint
//! machinery: a symmetric band matrix with an LLᵀ factorization, a
//! coordinate-format sparse matrix, and a row-major dense matrix.

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric matrix stored by its lower band.
///
/// Row `i` keeps `A(i, i - d)` for `d = 0..=half_bandwidth` at
/// `data[i * (half_bandwidth + 1) + d]`. Entries outside the band are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetricMatrix {
    order: usize,
    half_bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSymmetricMatrix {
    pub fn zeros(order: usize, half_bandwidth: usize) -> Self {
        Self {
            order,
            half_bandwidth,
            data: vec![0.0; order * (half_bandwidth + 1)],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order, 0);
        for i in 0..order {
            m.data[i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            order: diag.len(),
            half_bandwidth: 0,
            data: diag.to_vec(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn half_bandwidth(&self) -> usize {
        self.half_bandwidth
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        (d <= self.half_bandwidth).then(|| r * (self.half_bandwidth + 1) + d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `value` to the symmetric pair `(i, j)` / `(j, i)`.
    ///
    /// Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside half bandwidth {}", self.half_bandwidth));
        self.data[s] += value;
    }

    pub fn add_to_diagonal(&mut self, shift: f64) {
        for i in 0..self.order {
            self.data[i * (self.half_bandwidth + 1)] += shift;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        let w = self.half_bandwidth + 1;
        let mut y = vec![0.0; self.order];
        for i in 0..self.order {
            let row = &self.data[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for d in 1..w.min(i + 1) {
                let a = row[d];
                if a != 0.0 {
                    y[i] += a * x[i - d];
                    y[i - d] += a * x[i];
                }
            }
        }
        y
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Band Cholesky `A = L Lᵀ`; any nonpositive pivot fails.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.order;
        let b = self.half_bandwidth;
        let w = b + 1;
        let mut l = self.data.clone();
        for j in 0..n {
            let mut pivot = l[j * w];
            let k0 = j.saturating_sub(b);
            for k in k0..j {
                let ljk = l[j * w + (j - k)];
                pivot -= ljk * ljk;
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
            }
            let ljj = pivot.sqrt();
            l[j * w] = ljj;
            for i in (j + 1)..(j + w).min(n) {
                let mut s = l[i * w + (i - j)];
                let k0 = i.saturating_sub(b);
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                l[i * w + (i - j)] = s / ljj;
            }
        }
        Ok(BandedCholesky {
            order: n,
            half_bandwidth: b,
            factor: l,
        })
    }
}

/// Lower band factor of an SPD band matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    order: usize,
    half_bandwidth: usize,
    factor: Vec<f64>,
}

impl BandedCholesky {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Smallest pivot `L_ii²`, a cheap lower-side conditioning indicator.
    pub fn min_pivot(&self) -> f64 {
        let w = self.half_bandwidth + 1;
        (0..self.order)
            .map(|i| self.factor[i * w].powi(2))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_pivot(&self) -> f64 {
        let w = self.half_bandwidth + 1;
        (0..self.order)
            .map(|i| self.factor[i * w].powi(2))
            .fold(0.0, f64::max)
    }

    /// Solves `A x = rhs` with one forward and one backward band sweep.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.order);
        let n = self.order;
        let b = self.half_bandwidth;
        let w = b + 1;
        let l = &self.factor;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(b)..i {
                s -= l[i * w + (i - k)] * y[k];
            }
            y[i] = s / l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + w).min(n) {
                s -= l[k * w + (k - i)] * y[k];
            }
            y[i] = s / l[i * w];
        }
        y
    }
}

/// Coordinate-format sparse matrix with merged duplicates, row-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of {rows}x{cols}");
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Self { rows, cols, entries }
    }

    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for r in 0..dense.rows() {
            for c in 0..dense.cols() {
                t.push((r, c, dense.get(r, c)));
            }
        }
        Self::from_triplets(dense.rows(), dense.cols(), t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nonzero_rows(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.entries.iter().map(|e| e.0).collect();
        r.dedup();
        r
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            d.set(r, c, d.get(r, c) + v);
        }
        d
    }
}

/// Row-major dense matrix for the small continuation Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
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

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data.chunks(self.cols).map(|row| dot(row, x)).collect()
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (row, &xr) in self.data.chunks(self.cols).zip(x) {
            if xr != 0.0 {
                for (yc, &a) in y.iter_mut().zip(row) {
                    *yc += a * xr;
                }
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(n: usize) -> BandedSymmetricMatrix {
        let mut m = BandedSymmetricMatrix::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 4.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
        }
        m
    }

    #[test]
    fn band_storage_is_symmetric() {
        let mut m = BandedSymmetricMatrix::zeros(4, 2);
        m.add(0, 2, 3.0);
        assert_eq!(m.get(2, 0), 3.0);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(0, 3), 0.0);
    }

    #[test]
    #[should_panic]
    fn out_of_band_add_panics() {
        let mut m = BandedSymmetricMatrix::zeros(4, 1);
        m.add(0, 3, 1.0);
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let m = tridiagonal(7);
        let x: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let b = m.mul_vec(&x);
        let sol = m.cholesky().unwrap().solve(&b);
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = BandedSymmetricMatrix::from_diagonal(&[1.0, -1.0]);
        match m.cholesky() {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn wide_band_matches_dense_product() {
        let n = 9;
        let b = 3;
        let mut m = BandedSymmetricMatrix::zeros(n, b);
        for i in 0..n {
            m.add(i, i, 10.0 + i as f64);
            for d in 1..=b.min(i) {
                m.add(i, i - d, 0.3 * d as f64 - 0.1 * i as f64);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let dense = m.to_dense();
        let y = m.mul_vec(&x);
        for i in 0..n {
            let e: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - e).abs() < 1e-12);
        }
        let sol = m.cholesky().unwrap().solve(&y);
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn sparse_merges_duplicates_and_transposes() {
        let s = SparseMatrix::from_triplets(3, 2, vec![(2, 1, 1.0), (0, 0, 2.0), (2, 1, 0.5), (1, 0, 0.0)]);
        assert_eq!(s.entries(), &[(0, 0, 2.0), (2, 1, 1.5)]);
        assert_eq!(s.mul_vec(&[1.0, 2.0]), vec![2.0, 0.0, 3.0]);
        assert_eq!(s.transpose_mul_vec(&[1.0, 5.0, 2.0]), vec![2.0, 3.0]);
        assert_eq!(s.nonzero_rows(), vec![0, 2]);
    }

    #[test]
    fn dense_transpose_product() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(d.mul_vec(&[1.0, 1.0]), vec![3.0, 7.0, 11.0]);
        assert_eq!(d.transpose_mul_vec(&[1.0, 0.0, 1.0]), vec![6.0, 8.0]);
    }
}
