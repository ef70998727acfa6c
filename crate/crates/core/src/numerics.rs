//! Dense linear algebra, activations, random initialization, and dropout
//! masks shared by all network architectures.
//!
//! Everything is 64-bit: the gradient checks compare analytic and numeric
//! derivatives to 1e-4 relative error, which single precision cannot hold.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Plain vector of activations or gradients.
pub type Vector = Vec<f64>;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be nonzero");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length does not
    /// match `rows * cols`.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        assert!(rows > 0 && cols > 0, "matrix dimensions must be nonzero");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for (r, out) in y.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            *out = acc;
        }
        y
    }

    /// x = Aᵀ y
    pub fn matvec_t(&self, y: &[f64]) -> Vector {
        assert_eq!(y.len(), self.rows, "matvec_t dimension mismatch");
        let mut x = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (out, a) in x.iter_mut().zip(row.iter()) {
                *out += yr * a;
            }
        }
        x
    }

    /// A += y xᵀ (rank-one gradient accumulation)
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        assert_eq!(y.len(), self.rows, "add_outer row mismatch");
        assert_eq!(x.len(), self.cols, "add_outer col mismatch");
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = self.row_mut(r);
            for (out, &xc) in row.iter_mut().zip(x.iter()) {
                *out += yr * xc;
            }
        }
    }

    /// A += s B
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Deterministic random generator with an explicit 64-bit seed. The same
/// seed always yields the same stream.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }
}

/// Numerically stable softmax: subtracts the max logit before
/// exponentiating, so large logits cannot overflow.
pub fn softmax(logits: &[f64]) -> Vector {
    assert!(!logits.is_empty(), "softmax of empty vector");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vector = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Backprop through softmax: given y = softmax(z) and dL/dy, returns dL/dz.
/// dz_i = y_i (dy_i - Σ_j dy_j y_j)
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vector {
    let dot = dot(y, dy);
    y.iter().zip(dy.iter()).map(|(&yi, &di)| yi * (di - dot)).collect()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn sigmoid_vec(z: &[f64]) -> Vector {
    z.iter().map(|&v| sigmoid(v)).collect()
}

pub fn tanh_vec(z: &[f64]) -> Vector {
    z.iter().map(|&v| v.tanh()).collect()
}

/// Derivative of sigmoid expressed through its output s = σ(z).
#[inline]
pub fn dsigmoid_from_output(s: f64) -> f64 {
    s * (1.0 - s)
}

/// Derivative of tanh expressed through its output t = tanh(z).
#[inline]
pub fn dtanh_from_output(t: f64) -> f64 {
    1.0 - t * t
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot dimension mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// a += s b
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    assert_eq!(a.len(), b.len(), "axpy dimension mismatch");
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x += s * y;
    }
}

/// Elementwise product a ⊙ b.
pub fn hadamard(a: &[f64], b: &[f64]) -> Vector {
    assert_eq!(a.len(), b.len(), "hadamard dimension mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| x * y).collect()
}

/// Gaussian initialization: entries i.i.d. N(0, σ²) with σ = scale/√fan_in.
/// The default scale is 0.1.
pub fn init_gaussian(rows: usize, cols: usize, fan_in: usize, scale: f64, rng: &mut Rng) -> Matrix {
    assert!(rows > 0 && cols > 0, "zero matrix dimensions rejected");
    assert!(fan_in >= 1, "fan_in must be at least 1");
    let sigma = scale / (fan_in as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut().iter_mut() {
        *v = sigma * rng.standard_normal();
    }
    m
}

/// Random orthogonal initialization via Householder QR of a Gaussian draw.
///
/// For a square output MᵀM = I; for a rectangular one the Gram matrix along
/// the smaller dimension is the identity.
pub fn init_orthogonal(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    assert!(rows > 0 && cols > 0, "zero matrix dimensions rejected");
    let n = rows.max(cols);
    let k = rows.min(cols);

    // Work array: n×k standard Gaussian.
    let mut a = Matrix::zeros(n, k);
    for v in a.data_mut().iter_mut() {
        *v = rng.standard_normal();
    }

    // Householder QR. Reflector j zeroes column j below the diagonal;
    // `reflectors[j]` holds the normalized v with Hj = I - 2 v vᵀ.
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut diag_signs = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<f64> = (j..n).map(|r| a.get(r, j)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            for x in v.iter_mut() {
                *x /= vnorm;
            }
            // Apply Hj to the remaining columns of a.
            for c in j..k {
                let mut proj = 0.0;
                for (i, vi) in v.iter().enumerate() {
                    proj += vi * a.get(j + i, c);
                }
                for (i, vi) in v.iter().enumerate() {
                    let cur = a.get(j + i, c);
                    a.set(j + i, c, cur - 2.0 * proj * vi);
                }
            }
        }
        diag_signs.push(if a.get(j, j) >= 0.0 { 1.0 } else { -1.0 });
        reflectors.push(v);
    }

    // Q = H0 H1 … H(k-1) [I_k; 0], applied in reverse order.
    let mut q = Matrix::zeros(n, k);
    for j in 0..k {
        q.set(j, j, 1.0);
    }
    for j in (0..k).rev() {
        let v = &reflectors[j];
        for c in 0..k {
            let mut proj = 0.0;
            for (i, vi) in v.iter().enumerate() {
                proj += vi * q.get(j + i, c);
            }
            for (i, vi) in v.iter().enumerate() {
                let cur = q.get(j + i, c);
                q.set(j + i, c, cur - 2.0 * proj * vi);
            }
        }
    }

    // Fix column signs so the implicit R has a positive diagonal.
    for (j, s) in diag_signs.iter().enumerate() {
        if *s < 0.0 {
            for r in 0..n {
                let cur = q.get(r, j);
                q.set(r, j, -cur);
            }
        }
    }

    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Bernoulli 0/1 mask: each entry is 0 with probability `drop_rate`.
pub fn dropout_mask(len: usize, drop_rate: f64, rng: &mut Rng) -> Vector {
    assert!(
        (0.0..1.0).contains(&drop_rate),
        "drop_rate must lie in [0, 1)"
    );
    (0..len)
        .map(|_| if rng.uniform() < drop_rate { 0.0 } else { 1.0 })
        .collect()
}
