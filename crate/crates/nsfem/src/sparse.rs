//! Minimal CSR matrix used on the assembly side (residual evaluation,
//! matrix-vector products). Factorization lives in [`crate::saddle`].

#[derive(Debug, Clone, Default)]
pub struct TripletList {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn into_csr(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                // merge duplicates; explicit zeros are kept so patterns stay stable
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] = col_idx.len();
                last = Some((r, c));
            }
        }
        // make row_ptr cumulative over empty rows too
        for r in 0..self.nrows {
            if row_ptr[r + 1] < row_ptr[r] {
                row_ptr[r + 1] = row_ptr[r];
            }
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Index into the value array for entry (r, c), if present in the pattern.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let (cols, _) = self.row(r);
        cols.binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.fill(0.0);
        self.matvec_add(1.0, x, y);
    }

    /// y += alpha A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] += alpha * acc;
        }
    }

    /// y += alpha A^T x
    pub fn matvec_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let xr = alpha * x[r];
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xr;
            }
        }
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut row_acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                row_acc += v * y[c];
            }
            acc += x[r] * row_acc;
        }
        acc
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_sort() {
        let mut t = TripletList::new(3, 3);
        t.push(2, 1, 4.0);
        t.push(0, 0, 1.0);
        t.push(2, 1, 0.5);
        t.push(0, 2, 2.0);
        t.push(1, 1, 3.0);
        let a = t.into_csr();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(2, 1), 4.5);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(0, 2), 2.0);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn empty_rows_handled() {
        let mut t = TripletList::new(4, 4);
        t.push(3, 0, 1.0);
        let a = t.into_csr();
        assert_eq!(a.row(0).0.len(), 0);
        assert_eq!(a.row(1).0.len(), 0);
        assert_eq!(a.row(3).0, &[0]);
    }

    #[test]
    fn matvec_and_transpose() {
        let mut t = TripletList::new(2, 3);
        t.push(0, 0, 1.0);
        t.push(0, 2, 2.0);
        t.push(1, 1, -1.0);
        let a = t.into_csr();
        let x = [1.0, 2.0, 3.0];
        let mut y = vec![0.0; 2];
        a.matvec(&x, &mut y);
        assert_eq!(y, vec![7.0, -2.0]);
        let mut z = vec![0.0; 3];
        a.matvec_transpose_add(1.0, &y, &mut z);
        assert_eq!(z, vec![7.0, 2.0, 14.0]);
        assert_eq!(a.bilinear(&y, &x), 7.0 * 7.0 + -2.0 * -2.0);
    }

    #[test]
    fn explicit_zeros_kept() {
        let mut t = TripletList::new(2, 2);
        t.push(0, 1, 0.0);
        t.push(1, 1, 1.0);
        let a = t.into_csr();
        assert_eq!(a.nnz(), 2);
    }
}
