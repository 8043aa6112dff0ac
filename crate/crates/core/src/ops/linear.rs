//! Fully connected layer on plain vectors.

use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearSpec {
    pub in_features: usize,
    pub out_features: usize,
}

/// Row-major `rows x cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return config(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T * y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yv) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yv;
            }
        }
        out
    }

    /// `self += g * x^T`
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        for (row, &gv) in self.data.chunks_exact_mut(self.cols).zip(g) {
            for (a, &xv) in row.iter_mut().zip(x) {
                *a += gv * xv;
            }
        }
    }
}

fn check(input: &[f64], weights: &Matrix, bias: &[f64]) -> Result<()> {
    if weights.cols != input.len() || weights.rows != bias.len() {
        return config(format!(
            "fully_connected: weights {}x{}, input {}, bias {}",
            weights.rows,
            weights.cols,
            input.len(),
            bias.len()
        ));
    }
    Ok(())
}

/// `W * x + b`
pub fn fully_connected(input: &[f64], weights: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    check(input, weights, bias)?;
    let mut out = weights.matvec(input);
    for (o, b) in out.iter_mut().zip(bias) {
        *o += b;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Vec<f64>,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

pub fn fully_connected_backward(input: &[f64], weights: &Matrix, upstream: &[f64]) -> Result<LinearGrads> {
    check(input, weights, upstream)?;
    let mut gw = Matrix::zeros(weights.rows, weights.cols);
    gw.add_outer(upstream, input);
    Ok(LinearGrads {
        input: weights.matvec_t(upstream),
        weights: gw,
        bias: upstream.to_vec(),
    })
}
