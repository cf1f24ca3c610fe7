//! Minimal dense and row-compressed matrices over a [`Scalar`].
//!
//! Only what the chain algorithms need: products, transposes, and a
//! Gauss-Jordan inverse that works for exact rationals (which the float
//! libraries cannot do).

use std::ops::{Index, IndexMut};


use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn diagonal(values: &[S]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = v.clone();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] = out[(i, j)].clone() + a.clone() * b.clone();
                    }
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() + b.clone()).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b.clone()).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, factor: &S) -> Self {
        let data = self.data.iter().map(|a| a.clone() * factor.clone()).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![S::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                if !a.is_zero() {
                    *o = o.clone() + vi.clone() * a.clone();
                }
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn right_mul(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows).map(|i| self.row(i).iter().cloned().fold(S::zero(), |a, b| a + b)).collect()
    }

    /// Gauss-Jordan inverse with partial pivoting on magnitude.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::invalid("inverse of a non-square matrix"));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .filter(|&r| !a[(r, col)].is_zero())
                .max_by(|&x, &y| a[(x, col)].magnitude().total_cmp(&a[(y, col)].magnitude()))
                .ok_or_else(|| Error::Singular(format!("no pivot in column {}", col + 1)))?;
            if !S::EXACT && a[(pivot, col)].magnitude() < 1e-300 {
                return Err(Error::Singular(format!("vanishing pivot in column {}", col + 1)));
            }
            a.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let p = a[(col, col)].clone();
            for j in 0..n {
                a[(col, j)] = a[(col, j)].clone() / p.clone();
                inv[(col, j)] = inv[(col, j)].clone() / p.clone();
            }
            for r in 0..n {
                if r == col || a[(r, col)].is_zero() {
                    continue;
                }
                let f = a[(r, col)].clone();
                for j in 0..n {
                    if !a[(col, j)].is_zero() {
                        a[(r, j)] = a[(r, j)].clone() - f.clone() * a[(col, j)].clone();
                    }
                    if !inv[(col, j)].is_zero() {
                        inv[(r, j)] = inv[(r, j)].clone() - f.clone() * inv[(col, j)].clone();
                    }
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Matrix<T> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(S::to_f64)
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .fold(S::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<S> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    /// Builds from per-row `(column, value)` lists. Duplicate columns within
    /// a row are summed and explicit zeros dropped.
    pub fn from_row_entries(cols: usize, rows: Vec<Vec<(usize, S)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let nrows = rows.len();
        for mut entries in rows {
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, S)> = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                assert!(c < cols, "column {c} out of range {cols}");
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 = last.1.clone() + v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                if !v.is_zero() {
                    col_idx.push(c as u32);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { rows: nrows, cols, row_ptr, col_idx, values }
    }

    pub fn from_dense(m: &Matrix<S>) -> Self {
        let rows = (0..m.rows())
            .map(|i| m.row(i).iter().cloned().enumerate().filter(|(_, v)| !v.is_zero()).collect())
            .collect();
        Self::from_row_entries(m.cols(), rows)
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &S)> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().map(|&c| c as usize).zip(&self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.row(i).find(|&(c, _)| c == j).map_or_else(S::zero, |(_, v)| v.clone())
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![S::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (c, a) in self.row(i) {
                out[c] = out[c].clone() + vi.clone() * a.clone();
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn right_mul(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).fold(S::zero(), |acc, (c, a)| acc + a.clone() * v[c].clone()))
            .collect()
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows).map(|i| self.row(i).fold(S::zero(), |acc, (_, a)| acc + a.clone())).collect()
    }

    pub fn to_dense(&self) -> Matrix<S> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (c, v) in self.row(i) {
                m[(i, c)] = v.clone();
            }
        }
        m
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> CsrMatrix<T> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(a: u64, b: u64) -> Rational {
        Rational::from_ratio(a, b)
    }

    #[test]
    fn exact_inverse_of_small_matrix() {
        let m = Matrix::from_rows(vec![vec![q(2, 1), q(1, 1)], vec![q(1, 1), q(1, 1)]]).unwrap();
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv), Matrix::identity(2));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(m.inverse(), Err(Error::Singular(_))));
    }

    #[test]
    fn csr_merges_duplicates_and_matches_dense() {
        let csr = CsrMatrix::from_row_entries(
            3,
            vec![vec![(2, q(1, 3)), (0, q(1, 3)), (2, q(1, 3))], vec![], vec![(1, q(1, 1))]],
        );
        assert_eq!(csr.nnz(), 3);
        assert_eq!(csr.get(0, 2), q(2, 3));
        let v = vec![q(1, 1), q(2, 1), q(3, 1)];
        assert_eq!(csr.right_mul(&v), csr.to_dense().right_mul(&v));
        assert_eq!(csr.left_mul(&v), csr.to_dense().left_mul(&v));
        assert_eq!(CsrMatrix::from_dense(&csr.to_dense()), csr);
    }
}
