//! Gaussian radial basis functions and design-matrix assembly.
//!
//! The kernel is parameterized as `phi(r) = exp(-(eps * r)^2)`, so small shape
//! parameters give flat kernels and large ones give narrow spikes. Switching to
//! the `exp(-eps * r^2)` convention only requires changing [`kernel_value`] and
//! the factor in [`kernel_gradient`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape parameter of the Gaussian kernel. Always finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    shape: f64,
}

impl KernelParams {
    pub fn new(shape: f64) -> Result<Self> {
        if !shape.is_finite() || shape <= 0.0 {
            return Err(Error::Input(format!(
                "shape parameter must be finite and positive, got {shape}"
            )));
        }
        Ok(Self { shape })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T * y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "matrix-vector dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    /// Stack `self` on top of `below`.
    pub fn vstack(&self, below: &Matrix) -> Result<Matrix> {
        if self.cols != below.cols {
            return Err(Error::Input(format!(
                "cannot stack {}-column matrix on {}-column matrix",
                self.cols, below.cols
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + below.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&below.data);
        Ok(Matrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        })
    }
}

/// `exp(-(eps * r)^2)`.
pub fn kernel_value(r: f64, params: KernelParams) -> f64 {
    let er = params.shape * r;
    (-(er * er)).exp()
}

fn squared_distance(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Euclidean distance between two points of equal dimension.
pub fn distance(x: &[f64], c: &[f64]) -> f64 {
    squared_distance(x, c).sqrt()
}

/// `phi(|x - c|) - phi(|anchor - c|)` without cancellation when the kernel is flat.
pub fn kernel_difference(x: &[f64], anchor: &[f64], c: &[f64], params: KernelParams) -> f64 {
    assert_eq!(x.len(), c.len(), "point and centre dimensions differ");
    let eps2 = params.shape * params.shape;
    // |x - c|^2 - |a - c|^2 factored as (x - a).(x + a - 2c).
    let gap: f64 = x
        .iter()
        .zip(anchor)
        .zip(c)
        .map(|((xi, ai), ci)| (xi - ai) * ((xi - ci) + (ai - ci)))
        .sum();
    (-(eps2 * squared_distance(anchor, c))).exp() * (-(eps2 * gap)).exp_m1()
}

/// Gradient of `kernel_value(|x - c|)` with respect to `x`:
/// `-2 eps^2 (x - c) phi`.
pub fn kernel_gradient(x: &[f64], c: &[f64], params: KernelParams) -> Vec<f64> {
    assert_eq!(x.len(), c.len(), "point and centre dimensions differ");
    let eps2 = params.shape * params.shape;
    let phi = (-(eps2 * squared_distance(x, c))).exp();
    let scale = -2.0 * eps2 * phi;
    x.iter().zip(c).map(|(a, b)| scale * (a - b)).collect()
}

fn common_dimension(points: &[Vec<f64>], centres: &[Vec<f64>]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| Error::Input("no evaluation points".into()))?;
    if centres.is_empty() {
        return Err(Error::Input("no centres".into()));
    }
    let d = first.len();
    if d == 0 {
        return Err(Error::Input("points must have at least one coordinate".into()));
    }
    if let Some(bad) = points.iter().chain(centres).find(|p| p.len() != d) {
        return Err(Error::Input(format!(
            "dimension mismatch: expected {d} coordinates, found {}",
            bad.len()
        )));
    }
    Ok(d)
}

/// `N x M` matrix of kernel values between each point and each centre.
pub fn assemble_value_matrix(
    points: &[Vec<f64>],
    centres: &[Vec<f64>],
    params: KernelParams,
) -> Result<Matrix> {
    common_dimension(points, centres)?;
    let mut m = Matrix::zeros(points.len(), centres.len());
    let eps2 = params.shape * params.shape;
    for (i, p) in points.iter().enumerate() {
        for (out, c) in m.row_mut(i).iter_mut().zip(centres) {
            *out = (-(eps2 * squared_distance(p, c))).exp();
        }
    }
    Ok(m)
}

/// `(N d) x M` matrix of kernel gradients. Point `i` owns rows `i*d .. i*d + d`,
/// one per coordinate in order.
pub fn assemble_gradient_matrix(
    points: &[Vec<f64>],
    centres: &[Vec<f64>],
    params: KernelParams,
) -> Result<Matrix> {
    let d = common_dimension(points, centres)?;
    let cols = centres.len();
    let mut m = Matrix::zeros(points.len() * d, cols);
    let eps2 = params.shape * params.shape;
    for (i, p) in points.iter().enumerate() {
        for (j, c) in centres.iter().enumerate() {
            let scale = -2.0 * eps2 * (-(eps2 * squared_distance(p, c))).exp();
            for k in 0..d {
                m.data[(i * d + k) * cols + j] = scale * (p[k] - c[k]);
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(shape: f64) -> KernelParams {
        KernelParams::new(shape).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(KernelParams::new(0.0).is_err());
        assert!(KernelParams::new(-1.0).is_err());
        assert!(KernelParams::new(f64::NAN).is_err());
        assert!(KernelParams::new(f64::INFINITY).is_err());
    }

    #[test]
    fn kernel_difference_is_accurate_when_flat() {
        let (x, a, c) = ([0.3, -1.2], [1.0, 0.5], [-0.4, 0.9]);
        let p = eps(1.3);
        let naive = kernel_value(distance(&x, &c), p) - kernel_value(distance(&a, &c), p);
        assert!((kernel_difference(&x, &a, &c, p) - naive).abs() < 1e-15);
        // eps = 1e-6: the difference is about -eps^2 (|x-c|^2 - |a-c|^2), which naive subtraction loses.
        let flat = eps(1e-6);
        let expected = -1e-12 * (squared_distance(&x, &c) - squared_distance(&a, &c));
        assert!((kernel_difference(&x, &a, &c, flat) / expected - 1.0).abs() < 1e-9);
        assert_eq!(kernel_difference(&a, &a, &c, p), 0.0);
    }

    #[test]
    fn kernel_value_closed_forms() {
        assert_eq!(kernel_value(0.0, eps(7.3)), 1.0);
        assert!((kernel_value(1.0, eps(1.0)) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((kernel_value(2.0, eps(0.5)) - 0.367_879_4).abs() < 1e-7);
    }

    #[test]
    fn kernel_gradient_closed_forms() {
        let g = kernel_gradient(&[0.3, -1.0], &[0.3, -1.0], eps(4.0));
        assert!(g.iter().all(|&v| v == 0.0));
        let g = kernel_gradient(&[1.0], &[0.0], eps(1.0));
        assert!((g[0] + 0.735_758_9).abs() < 1e-7);
        let g = kernel_gradient(&[0.0], &[1.0], eps(1.0));
        assert!((g[0] - 0.735_758_9).abs() < 1e-7);
    }

    #[test]
    fn value_matrix_entries() {
        let pts = vec![vec![0.0], vec![1.0]];
        let m = assemble_value_matrix(&pts, &[vec![0.0]], eps(1.0)).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 1));
        assert_eq!(m.get(0, 0), kernel_value(0.0, eps(1.0)));
        assert_eq!(m.get(1, 0), kernel_value(1.0, eps(1.0)));

        let one = assemble_value_matrix(&[vec![2.0, 3.0]], &[vec![2.0, 3.0]], eps(1.0)).unwrap();
        assert_eq!(one.as_slice(), &[1.0]);

        let grid: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.5 * i as f64]).collect();
        let m = assemble_value_matrix(&grid, &grid, eps(1e4)).unwrap();
        for i in 0..5 {
            assert_eq!(m.get(i, i), 1.0);
        }
    }

    #[test]
    fn gradient_matrix_layout() {
        let m = assemble_gradient_matrix(&[vec![1.0]], &[vec![0.0]], eps(1.0)).unwrap();
        assert!((m.get(0, 0) + 0.735_758_9).abs() < 1e-7);

        let p = vec![vec![1.0, 0.0]];
        let c = vec![vec![0.0, 0.0]];
        let m = assemble_gradient_matrix(&p, &c, eps(1.0)).unwrap();
        let g = kernel_gradient(&p[0], &c[0], eps(1.0));
        assert_eq!((m.rows(), m.cols()), (2, 1));
        assert_eq!(m.get(0, 0), g[0]);
        assert_eq!(m.get(1, 0), g[1]);
        assert!((m.get(0, 0) + 0.735_758_9).abs() < 1e-7);
        assert_eq!(m.get(1, 0), 0.0);

        // A point sitting on a centre has zero rows in that column.
        let pts = vec![vec![0.5, 0.5], vec![0.0, 0.0]];
        let m = assemble_gradient_matrix(&pts, &c, eps(2.0)).unwrap();
        assert_eq!(m.get(2, 0), 0.0);
        assert_eq!(m.get(3, 0), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let err = assemble_value_matrix(&[vec![0.0, 1.0]], &[vec![0.0]], eps(1.0));
        assert!(matches!(err, Err(Error::Input(_))));
        let err = assemble_gradient_matrix(&[vec![0.0]], &[], eps(1.0));
        assert!(matches!(err, Err(Error::Input(_))));
    }
}
