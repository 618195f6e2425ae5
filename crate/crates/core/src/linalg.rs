//! Dense matrix primitives and the project's deterministic PRNG.
//!
//! Everything upstream (networks, samplers, generators) computes on these two
//! types. All arithmetic is 64-bit: the acceptance gradient checks compare
//! analytic and finite-difference derivatives at 1e-4 relative error, which
//! single precision cannot support.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix dimensions must be nonzero, got {rows}x{cols}")]
    ZeroDim { rows: usize, cols: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { len: usize, rows: usize, cols: usize },
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
}

/// Row-major dense matrix of `f64`. Entries are finite after construction;
/// arithmetic preserves finiteness for inputs in range.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Matrix, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::ZeroDim { rows, cols });
        }
        Ok(Matrix { rows, cols, data: vec![0.0; rows * cols] })
    }

    pub fn identity(n: usize) -> Result<Matrix, LinalgError> {
        let mut m = Matrix::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::ZeroDim { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength { len: data.len(), rows, cols });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(LinalgError::NonFinite { row: i / cols, col: i % cols });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Standard matrix product with 64-bit accumulation.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape {
                op: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols)?;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.cols != x.len() {
            return Err(LinalgError::Shape {
                op: "mul_vec",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: x.len(),
                right_cols: 1,
            });
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    /// `selfᵀ · y` without materializing the transpose.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.rows != y.len() {
            return Err(LinalgError::Shape {
                op: "tr_mul_vec",
                left_rows: self.cols,
                left_cols: self.rows,
                right_rows: y.len(),
                right_cols: 1,
            });
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * y[i];
            }
        }
        Ok(out)
    }
}

/// Deterministic 64-bit PRNG (splitmix64, Steele/Lea/Flood 2014).
///
/// State advances by the additive constant 0x9E3779B97F4A7C15 once per draw;
/// the output is the state passed through the finalizer
/// `z ^= z>>30, z *= 0xBF58476D1CE4E5B9, z ^= z>>27, z *= 0x94D049BB133111EB,
/// z ^= z>>31`. Identical seeds give identical streams on every platform;
/// all experiment reproducibility rests on this.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed for a named sub-stream. Rng must never be
/// shared across logically parallel work; split seeds instead.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(seed.wrapping_add(GAMMA).wrapping_add(stream.wrapping_mul(GAMMA)))
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng { state: seed }
    }

    /// Current counter value; `Rng::new(rng.state())` continues the exact
    /// stream, which lets provenance records pin down mid-stream generators.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in [0, 1) using the top 53 bits; advances state once.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Box-Muller cosine branch; consumes exactly two
    /// uniform draws, no cached spare (keeps the state a pure 64-bit counter).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in [0, n) by 128-bit multiply-shift; deterministic.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
