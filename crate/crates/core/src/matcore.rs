//! Dense complex-matrix kernel.
//!
//! Only what the rest of the crate needs: a row-major complex matrix,
//! Hermitian eigendecomposition, Cholesky factorization and solves, the
//! diagonal of a Hermitian positive-definite inverse, and seeded circular
//! Gaussian sampling on independent ChaCha streams.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    /// Builds a matrix from row-major entries, rejecting NaN/Inf.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diag(&vec![1.0; n])
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Real part of the trace divided by the row count.
    pub fn normalized_trace(&self) -> f64 {
        self.trace().re / self.rows as f64
    }

    pub fn diag(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn real_diag(&self) -> Vec<f64> {
        self.diag().iter().map(|z| z.re).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// (A + Aᴴ)/2
    pub fn hermitian_part(&self) -> Result<Self> {
        self.require_square()?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5))
    }

    /// Largest |A - Aᴴ| entry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Aᴴ·A without forming Aᴴ.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for k in 0..self.rows {
            let row = &self.data[k * n..(k + 1) * n];
            for i in 0..n {
                let ai = row[i].conj();
                for (j, &x) in row.iter().enumerate().skip(i) {
                    out.data[i * n + j] += ai * x;
                }
            }
        }
        for i in 0..n {
            out.data[i * n + i].im = 0.0;
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i].conj();
            }
        }
        out
    }

    /// Scales column j by s[j] (right multiplication by a real diagonal).
    pub fn scale_cols(&self, s: &[f64]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s[j])
    }

    /// Scales row i by s[i] (left multiplication by a real diagonal).
    pub fn scale_rows(&self, s: &[f64]) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s[i])
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Dimension(format!("expected a square matrix, got {}x{}", self.rows, self.cols)))
        }
    }

    fn to_na(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Eigendecomposition A = V·diag(λ)·Vᴴ of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Sorted in decreasing order.
    pub eigvals: Vec<f64>,
    /// Unitary; column k pairs with `eigvals[k]`.
    pub eigvecs: CMatrix,
}

impl HermitianEig {
    /// V·diag(f(λ))·Vᴴ
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let scaled: Vec<f64> = self.eigvals.iter().map(|&l| f(l)).collect();
        let left = self.eigvecs.scale_cols(&scaled);
        left.matmul(&self.eigvecs.adjoint()).expect("square factors")
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|l| l)
    }
}

/// Hermitian eigendecomposition with eigenvalues in decreasing order.
///
/// The input is symmetrized as (A + Aᴴ)/2 first.
pub fn herm_eig(a: &CMatrix) -> Result<HermitianEig> {
    let h = a.hermitian_part()?;
    let n = h.rows();
    if n == 0 {
        return Ok(HermitianEig { eigvals: vec![], eigvecs: CMatrix::zeros(0, 0) });
    }
    let max_sweeps = 200 * n.max(10);
    let eig = nalgebra::SymmetricEigen::try_new(h.to_na(), f64::EPSILON, max_sweeps)
        .ok_or(Error::EigNoConvergence { iterations: max_sweeps })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigvals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigvecs = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEig { eigvals, eigvecs })
}

/// Lower-triangular Cholesky factor L with A = L·Lᴴ.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    pub fn factor(a: &CMatrix) -> Result<Self> {
        a.require_square()?;
        let n = a.rows();
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l[(j, j)] = Complex64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &CMatrix {
        &self.l
    }

    /// Solves A·X = B.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::Dimension(format!("rhs has {} rows, expected {n}", b.rows())));
        }
        let mut x = b.clone();
        for c in 0..b.cols() {
            // L·y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)].re;
            }
            // Lᴴ·x = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)].re;
            }
        }
        Ok(x)
    }

    /// Real diagonal of A⁻¹ = L⁻ᴴ·L⁻¹, i.e. squared column norms of L⁻¹.
    pub fn inverse_diag(&self) -> Vec<f64> {
        let n = self.l.rows();
        let mut out = vec![0.0; n];
        let mut col = vec![ZERO; n];
        for j in 0..n {
            // column j of L⁻¹ by forward substitution on e_j
            col.iter_mut().for_each(|z| *z = ZERO);
            col[j] = Complex64::new(1.0 / self.l[(j, j)].re, 0.0);
            let mut acc = col[j].norm_sqr();
            for i in j + 1..n {
                let mut s = ZERO;
                for (k, &c) in col.iter().enumerate().take(i).skip(j) {
                    s -= self.l[(i, k)] * c;
                }
                col[i] = s / self.l[(i, i)].re;
                acc += col[i].norm_sqr();
            }
            out[j] = acc;
        }
        out
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.rows()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }
}

/// Solves A·X = B for Hermitian positive-definite A.
pub fn chol_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Cholesky::factor(a)?.solve(b)
}

/// Real parts of diag(A⁻¹) for Hermitian positive-definite A.
pub fn inverse_diag(a: &CMatrix) -> Result<Vec<f64>> {
    Ok(Cholesky::factor(a)?.inverse_diag())
}

/// Handle on one of 2⁶⁴ independent ChaCha8 streams under a 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Draws CN(0, 1) entries: real and imaginary parts independent N(0, 1/2).
pub fn sample_circular_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..rows * cols)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    CMatrix { rows, cols, data }
}
