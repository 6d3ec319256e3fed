use super::{NnError, Tensor};

/// Square-or-rectangular CSR matrix used as a fixed propagation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(col, value)` lists. Columns within a row must be
    /// strictly increasing.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(c, v) in row {
                debug_assert!(c < cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.values[self.indptr[r]..self.indptr[r + 1]].iter().sum()
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    fn check(&self, op: &'static str, x: &Tensor, expected_rows: usize) -> Result<(), NnError> {
        if x.rows() != expected_rows {
            return Err(NnError::ShapeMismatch {
                op,
                left: self.shape(),
                right: x.shape(),
            });
        }
        Ok(())
    }

    /// `self · x`.
    pub fn spmm(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.check("spmm", x, self.cols)?;
        let m = x.cols();
        let xd = x.data();
        let mut out = vec![0.0; self.rows * m];
        for r in 0..self.rows {
            let o = &mut out[r * m..(r + 1) * m];
            for i in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[i];
                let src = &xd[self.indices[i] * m..(self.indices[i] + 1) * m];
                for (oj, sj) in o.iter_mut().zip(src) {
                    *oj += v * sj;
                }
            }
        }
        Ok(Tensor::from_parts(self.rows, m, out))
    }

    /// `selfᵀ · y`.
    pub fn spmm_transposed(&self, y: &Tensor) -> Result<Tensor, NnError> {
        self.check("spmm_transposed", y, self.rows)?;
        let m = y.cols();
        let yd = y.data();
        let mut out = vec![0.0; self.cols * m];
        for r in 0..self.rows {
            let src = &yd[r * m..(r + 1) * m];
            for i in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[i];
                let c = self.indices[i];
                let o = &mut out[c * m..(c + 1) * m];
                for (oj, sj) in o.iter_mut().zip(src) {
                    *oj += v * sj;
                }
            }
        }
        Ok(Tensor::from_parts(self.cols, m, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmm_matches_dense() {
        let s = SparseMatrix::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, -1.0)]]);
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let dense = s.to_dense();
        assert_eq!(s.spmm(&x).unwrap(), dense.matmul(&x).unwrap());
        assert_eq!(
            s.spmm_transposed(&x).unwrap(),
            dense.t_matmul_unchecked(&x)
        );
        assert_eq!(s.get(0, 2), 2.0);
        assert_eq!(s.get(1, 1), 0.0);
        assert!(s.spmm(&Tensor::zeros(2, 2)).is_err());
    }
}
