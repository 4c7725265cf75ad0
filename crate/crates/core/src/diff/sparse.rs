use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Columns within a row may
    /// come in any order; duplicates are kept as separate entries.
    pub fn from_row_entries(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                if c >= cols {
                    return Err(Error::shape(
                        "CsrMatrix::from_row_entries",
                        format!("column {c} in row {r} exceeds {cols} columns"),
                    ));
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(dense: &Tensor) -> Self {
        let mut indptr = Vec::with_capacity(dense.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..dense.rows() {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: dense.rows(),
            cols: dense.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out.set(r, c, out.get(r, c) + v);
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                rows[c].push((r, v));
            }
        }
        CsrMatrix::from_row_entries(self.rows, &rows).expect("transpose keeps bounds")
    }

    /// `self * dense`.
    pub fn matmul_dense(&self, dense: &Tensor) -> Result<Tensor> {
        if self.cols != dense.rows() {
            return Err(Error::shape(
                "sparse_matmul",
                format!("{:?} x {:?}", self.shape(), dense.shape()),
            ));
        }
        let n = dense.cols();
        let mut out = Tensor::zeros(self.rows, n);
        for r in 0..self.rows {
            let span = self.indptr[r]..self.indptr[r + 1];
            let out_row = out.row_mut(r);
            for (&c, &v) in self.indices[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `out += selfᵀ * dense`, scattering row by row.
    pub(crate) fn transpose_matmul_acc(&self, dense: &Tensor, out: &mut Tensor) {
        debug_assert_eq!(dense.rows(), self.rows);
        debug_assert_eq!(out.shape(), (self.cols, dense.cols()));
        for r in 0..self.rows {
            let span = self.indptr[r]..self.indptr[r + 1];
            let g = dense.row(r);
            for (&c, &v) in self.indices[span.clone()].iter().zip(&self.values[span]) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(g) {
                    *o += v * x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_dense() {
        let d = Tensor::from_rows(&[[0.0, 2.0, 0.0], [1.0, 0.0, -3.0]]).unwrap();
        let s = CsrMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), d);
        assert_eq!(s.transpose().to_dense(), d.transpose());
    }

    #[test]
    fn transpose_product_matches_dense() {
        let d = Tensor::from_rows(&[[0.0, 2.0, 0.0], [1.0, 0.0, -3.0]]).unwrap();
        let s = CsrMatrix::from_dense(&d);
        let g = Tensor::from_rows(&[[1.0, 0.5], [-2.0, 3.0]]).unwrap();
        let mut out = Tensor::zeros(3, 2);
        s.transpose_matmul_acc(&g, &mut out);
        let expect = d.transpose().matmul(&g).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_column() {
        assert!(CsrMatrix::from_row_entries(2, &[vec![(2, 1.0)]]).is_err());
    }
}
