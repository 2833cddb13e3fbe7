//! Dense row-major matrices sized for the control experiments (tens to a few
//! hundred rows). Nothing here is tuned for large problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        debug_assert!(rows.iter().all(|row| row.len() == c));
        Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Solve A X = B by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(self.rows, b.rows, "solve rhs shape mismatch");
        let n = self.rows;
        let m = b.cols;
        let mut a = self.data.clone();
        let mut x = b.data.clone();
        for col in 0..n {
            let mut pivot = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best < 1e-300 {
                return Err(Error::InvalidArgument(
                    "singular matrix in linear solve".into(),
                ));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                for j in 0..m {
                    x.swap(col * m + j, pivot * m + j);
                }
            }
            let diag = a[col * n + col];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a[r * n + col] / diag;
                if factor == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= factor * a[col * n + j];
                }
                for j in 0..m {
                    x[r * m + j] -= factor * x[col * m + j];
                }
            }
        }
        for i in 0..n {
            let diag = a[i * n + i];
            for j in 0..m {
                x[i * m + j] /= diag;
            }
        }
        Ok(Mat {
            rows: n,
            cols: m,
            data: x,
        })
    }

    /// Largest singular value, via power iteration on AᵀA.
    pub fn spectral_norm(&self) -> f64 {
        let at = self.transpose();
        let mut v = vec![1.0; self.cols];
        let mut norm = 0.0;
        for _ in 0..200 {
            let w = at.matvec(&self.matvec(&v));
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                return 0.0;
            }
            v = w.iter().map(|x| x / n).collect();
            norm = n;
        }
        norm.sqrt()
    }

    /// Spectral radius estimate via repeated squaring: lim ‖A^(2^k)‖^(1/2^k).
    /// Accurate enough for stability diagnostics.
    pub fn spectral_radius(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut m = self.clone();
        let mut log_scale = 0.0f64;
        let mut exponent = 1.0f64;
        let mut estimate = 0.0;
        for _ in 0..40 {
            let norm = m.frob_norm();
            if norm == 0.0 {
                return 0.0;
            }
            log_scale += norm.ln();
            estimate = (log_scale / exponent).exp();
            m = m.scale(1.0 / norm);
            m = m.matmul(&m);
            exponent *= 2.0;
            log_scale *= 2.0;
        }
        estimate
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Random matrix with orthonormal columns (rows >= cols), by modified
/// Gram-Schmidt with one re-orthogonalization pass.
pub fn random_semi_orthogonal(rng: &mut Rng, rows: usize, cols: usize) -> Result<Mat> {
    if rows < cols {
        return Err(Error::InvalidArgument(format!(
            "semi-orthogonal matrix needs rows >= cols, got {rows}x{cols}"
        )));
    }
    let mut columns: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| rng.normal()).collect())
        .collect();
    for j in 0..cols {
        for _ in 0..2 {
            for k in 0..j {
                let dot: f64 = columns[j]
                    .iter()
                    .zip(&columns[k])
                    .map(|(a, b)| a * b)
                    .sum();
                let prev = columns[k].clone();
                for (c, p) in columns[j].iter_mut().zip(prev) {
                    *c -= dot * p;
                }
            }
        }
        let norm = columns[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return Err(Error::InvalidArgument(
                "degenerate draw while orthogonalizing".into(),
            ));
        }
        for c in columns[j].iter_mut() {
            *c /= norm;
        }
    }
    let mut m = Mat::zeros(rows, cols);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Random square orthogonal matrix.
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> Mat {
    random_semi_orthogonal(rng, n, n).expect("square draw cannot fail")
}
