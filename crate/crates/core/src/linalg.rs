//! Small numerical helpers shared by the dynamics modules.

use num_complex::Complex64;

/// Real sparse matrix in coordinate form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseReal {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseReal {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.iter().filter(|e| e.0 == i && e.1 == j).map(|e| e.2).sum()
    }

    /// `out += alpha * A x`
    pub fn mul_add(&self, alpha: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        for &(i, j, v) in &self.entries {
            out[i] += alpha * v * x[j];
        }
    }

    /// `out += alpha * A^T x`
    pub fn mul_add_transpose(&self, alpha: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        for &(i, j, v) in &self.entries {
            out[j] += alpha * v * x[i];
        }
    }

    /// Largest absolute row and column sums, used for Gershgorin bounds.
    pub fn row_col_abs_max(&self) -> (f64, f64) {
        let mut rows = vec![0.0; self.rows];
        let mut cols = vec![0.0; self.cols];
        for &(i, j, v) in &self.entries {
            rows[i] += v.abs();
            cols[j] += v.abs();
        }
        let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
        (max(rows), max(cols))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

/// `<a|b>`
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Neumaier-compensated sum; the result does not depend on how many terms
/// of small magnitude precede a large one.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1e16, 1.0, -1e16, 1.0].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn transpose_product() {
        let mut a = SparseReal::new(2, 3);
        a.push(0, 2, 2.0);
        a.push(1, 0, -1.0);
        let x = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let mut out = vec![Complex64::default(); 3];
        a.mul_add_transpose(Complex64::new(1.0, 0.0), &x, &mut out);
        assert_eq!(out[0], Complex64::new(0.0, -1.0));
        assert_eq!(out[2], Complex64::new(2.0, 0.0));
    }
}
