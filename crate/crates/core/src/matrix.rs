//! Dense row-major feature matrix used by every learner in the crate.

/// Row-major matrix of f64 features. Rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    /// Builds a matrix from row-major data. Panics if the buffer length
    /// does not equal `rows * cols`.
    pub fn from_rows(data: Vec<f64>, rows: usize, cols: usize) -> Matrix {
        assert_eq!(data.len(), rows * cols, "row-major buffer length mismatch");
        Matrix { data, rows, cols }
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// New matrix with one extra column appended on the right, filled with
    /// `value` in every row. Used to attach the treatment indicator.
    pub fn with_constant_column(&self, value: f64) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            let dst = i * (self.cols + 1);
            out.data[dst..dst + self.cols].copy_from_slice(self.row(i));
            out.data[dst + self.cols] = value;
        }
        out
    }

    /// New matrix with one extra column appended on the right, taking its
    /// per-row values from `col`.
    pub fn with_column(&self, col: &[f64]) -> Matrix {
        assert_eq!(col.len(), self.rows, "appended column length mismatch");
        let mut out = Matrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            let dst = i * (self.cols + 1);
            out.data[dst..dst + self.cols].copy_from_slice(self.row(i));
            out.data[dst + self.cols] = col[i];
        }
        out
    }

    /// New matrix containing only the rows whose indices are listed in `idx`.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            rows: idx.len(),
            cols: self.cols,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_columns_round_trip() {
        let m = Matrix::from_rows(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3);
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.get(1, 2), 6.0);
        let with_t = m.with_constant_column(1.0);
        assert_eq!(with_t.row(1), &[4.0, 5.0, 6.0, 1.0]);
        let sel = m.select_rows(&[1]);
        assert_eq!(sel.n_rows(), 1);
        assert_eq!(sel.row(0), &[4.0, 5.0, 6.0]);
    }
}
