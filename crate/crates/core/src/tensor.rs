//! Dense row-major tensors over `f64`.
//!
//! All model math runs in double precision; single-precision checkpoints
//! round values through `f32` at the storage boundary (see `checkpoint`).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("zero dimension in shape {shape:?}")));
        }
        if data.len() != expected {
            return Err(Error::Config(format!(
                "shape {shape:?} expects {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a matrix ([r, c]) tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a matrix ([r, c]) tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fails with a diagnostic carrying `what` if any value is NaN/Inf.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite values in {what}")))
        }
    }

    /// Rounds every value through `f32` storage precision.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

/// `out = m · v` for a row-major matrix `m: [r × c]` and vector `v: [c]`.
pub fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// `out = mᵀ · v` for a row-major matrix `m: [r × c]` and vector `v: [r]`.
pub fn matvec_t(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(v.len(), rows);
    debug_assert_eq!(out.len(), cols);
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        let vi = v[i];
        for (o, a) in out.iter_mut().zip(row) {
            *o += vi * a;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matvec_small() {
        // [1 2; 3 4] · [5, 6] = [17, 39]
        let m = [1.0, 2.0, 3.0, 4.0];
        let v = [5.0, 6.0];
        let mut out = [0.0; 2];
        matvec(&m, 2, 2, &v, &mut out);
        assert_eq!(out, [17.0, 39.0]);
        // transpose route: [1 3; 2 4] · [5, 6] = [23, 34]
        let mut out_t = [0.0; 2];
        matvec_t(&m, 2, 2, &v, &mut out_t);
        assert_eq!(out_t, [23.0, 34.0]);
    }

    #[test]
    fn finite_check() {
        let mut t = Tensor::zeros(vec![3]);
        assert!(t.check_finite("x").is_ok());
        t.data_mut()[1] = f64::NAN;
        assert!(t.check_finite("x").is_err());
    }
}
