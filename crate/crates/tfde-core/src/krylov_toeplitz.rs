//! Structured linear algebra: FFT Toeplitz matvec, GMRES, dense and banded LU.

use crate::error::{check_dim, invalid, Result, TfdeError};
use num_complex::{Complex, Complex64};
use rustfft::{Fft, FftPlanner};
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Index, IndexMut, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Field element usable by the solvers: real or complex, single or double.
///
/// Reductions (norms, FFTs) are carried out in double precision.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    const IS_COMPLEX: bool;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_c64(self) -> Complex64;
    /// Real types keep the real part only.
    fn from_c64(z: Complex64) -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
}

macro_rules! real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const IS_COMPLEX: bool = false;
            fn zero() -> Self {
                0.0
            }
            fn one() -> Self {
                1.0
            }
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_c64(self) -> Complex64 {
                Complex64::new(self as f64, 0.0)
            }
            fn from_c64(z: Complex64) -> Self {
                z.re as $t
            }
            fn modulus(self) -> f64 {
                (self as f64).abs()
            }
            fn conj(self) -> Self {
                self
            }
        }
    };
}

macro_rules! complex_scalar {
    ($t:ty) => {
        impl Scalar for Complex<$t> {
            const IS_COMPLEX: bool = true;
            fn zero() -> Self {
                Complex::new(0.0, 0.0)
            }
            fn one() -> Self {
                Complex::new(1.0, 0.0)
            }
            fn from_f64(x: f64) -> Self {
                Complex::new(x as $t, 0.0)
            }
            fn to_c64(self) -> Complex64 {
                Complex64::new(self.re as f64, self.im as f64)
            }
            fn from_c64(z: Complex64) -> Self {
                Complex::new(z.re as $t, z.im as $t)
            }
            fn modulus(self) -> f64 {
                (self.re as f64).hypot(self.im as f64)
            }
            fn conj(self) -> Self {
                Complex::new(self.re, -self.im)
            }
        }
    };
}

real_scalar!(f64);
real_scalar!(f32);
complex_scalar!(f64);
complex_scalar!(f32);

/// Euclidean norm.
pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    let scale = x.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().map(|v| (v.modulus() / scale).powi(2)).sum();
    scale * s.sqrt()
}

/// Conjugate-linear inner product Σ conj(x_i)·y_i.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(a, b)| a.conj() * *b).sum()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![T::zero(); nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<T>) -> Result<Self> {
        check_dim(nrows * ncols, data.len())?;
        Ok(Self { nrows, ncols, data })
    }

    /// Densifies a linear map by applying it to unit vectors.
    pub fn from_operator(n: usize, op: &dyn Fn(&[T]) -> Vec<T>) -> Self {
        let mut m = Self::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = op(&e);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = T::zero();
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.ncols, x.len())?;
        Ok((0..self.nrows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Dense<T>) -> Result<Self> {
        check_dim(self.ncols, other.nrows)?;
        let mut out = Self::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.ncols..(i + 1) * other.ncols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * *b;
                }
            }
        }
        Ok(out)
    }

    /// A + s·B.
    pub fn add_scaled(&self, s: T, other: &Dense<T>) -> Result<Self> {
        check_dim(self.nrows, other.nrows)?;
        check_dim(self.ncols, other.ncols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a + s * *b).collect();
        Ok(Self { nrows: self.nrows, ncols: self.ncols, data })
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { nrows: self.nrows, ncols: self.ncols, data: self.data.iter().map(|a| s * *a).collect() }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Dense<U> {
        Dense { nrows: self.nrows, ncols: self.ncols, data: self.data.iter().map(|a| f(*a)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.modulus()).fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<DenseLu<T>> {
        check_dim(self.nrows, self.ncols)?;
        let n = self.nrows;
        let mut a = self.data.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].modulus();
            for i in k + 1..n {
                let v = a[i * n + k].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(TfdeError::SingularMatrix(k));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = a[k * n + k];
            let (top, rest) = a.split_at_mut((k + 1) * n);
            let prow = &top[k * n..];
            for i in 0..n - k - 1 {
                let row = &mut rest[i * n..(i + 1) * n];
                let l = row[k] / pivot;
                row[k] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = prow[j];
                    row[j] -= l * u;
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }
}

impl<T: Scalar> Index<(usize, usize)> for Dense<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.ncols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Dense<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.ncols + j]
    }
}

/// Packed LU factors of a square dense matrix.
#[derive(Debug, Clone)]
pub struct DenseLu<T: Scalar> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        check_dim(self.n, b.len())?;
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: T = row.iter().zip(&x[..i]).map(|(a, v)| *a * *v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: T = row.iter().zip(&x[i + 1..]).map(|(a, v)| *a * *v).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }
}

/// Largest system `dense_solve` accepts.
pub const DENSE_SOLVE_LIMIT: usize = 4096;

/// Solves A x = b by LU with partial pivoting.
pub fn dense_solve<T: Scalar>(a: &Dense<T>, b: &[T]) -> Result<Vec<T>> {
    if a.nrows() > DENSE_SOLVE_LIMIT {
        return Err(TfdeError::UnsupportedSize { size: a.nrows(), limit: DENSE_SOLVE_LIMIT });
    }
    a.lu()?.solve(b)
}

/// Largest matrix `condition_number` densifies.
pub const CONDITION_LIMIT: usize = 1024;

/// 2-norm condition number σ_max/σ_min.
pub fn condition_number(a: &Dense<f64>) -> Result<f64> {
    let sv = singular_values(a)?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

/// Singular values of a square dense matrix (at most `CONDITION_LIMIT` rows).
pub fn singular_values(a: &Dense<f64>) -> Result<Vec<f64>> {
    check_dim(a.nrows(), a.ncols())?;
    if a.nrows() > CONDITION_LIMIT {
        return Err(TfdeError::UnsupportedSize { size: a.nrows(), limit: CONDITION_LIMIT });
    }
    let m = nalgebra::DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice());
    Ok(m.singular_values().iter().cloned().collect())
}

/// Eigenvalues of a general real dense matrix.
pub fn eigenvalues(a: &Dense<f64>) -> Result<Vec<Complex64>> {
    check_dim(a.nrows(), a.ncols())?;
    if a.nrows() > CONDITION_LIMIT {
        return Err(TfdeError::UnsupportedSize { size: a.nrows(), limit: CONDITION_LIMIT });
    }
    let m = nalgebra::DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice());
    Ok(m.complex_eigenvalues().iter().cloned().collect())
}

/// Band matrix with `kl` sub- and `ku` superdiagonals, stored with room for
/// the `kl` extra superdiagonals that pivoting fills in.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded<T: Scalar> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![T::zero(); n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off >= self.width as isize || j >= self.n {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if !self.in_band(i, j) {
            return T::zero();
        }
        self.slot(i, j).map(|s| self.data[s]).unwrap_or_else(T::zero)
    }

    /// Adds v to entry (i, j); entries outside the band are an error.
    pub fn add(&mut self, i: usize, j: usize, v: T) -> Result<()> {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            return Err(invalid(format!("entry ({i}, {j}) outside the band")));
        }
        let s = self.slot(i, j).expect("in band");
        self.data[s] += v;
        Ok(())
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.n, x.len())?;
        let mut y = vec![T::zero(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                *yi += self.get(i, j) * *xj;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Banded::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                let s = t.slot(j, i).expect("in band");
                t.data[s] = self.get(i, j);
            }
        }
        t
    }

    pub fn to_dense(&self) -> Dense<T> {
        Dense::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// a·self + b·other, same band shape.
    pub fn combine<U: Scalar>(&self, a: U, other: &Banded<T>, b: U) -> Result<Banded<U>> {
        check_dim(self.n, other.n)?;
        if self.kl != other.kl || self.ku != other.ku {
            return Err(invalid("band shapes differ"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * U::from_c64(x.to_c64()) + b * U::from_c64(y.to_c64()))
            .collect();
        Ok(Banded { n: self.n, kl: self.kl, ku: self.ku, width: self.width, data })
    }

    /// LU with partial pivoting inside the band.
    pub fn lu(&self) -> Result<BandedLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut a = self.clone();
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.data[a.slot(k, k).expect("diag")].modulus();
            for i in k + 1..=last {
                let v = a.data[a.slot(i, k).expect("band")].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(TfdeError::SingularMatrix(k));
            }
            piv[k] = p;
            let jmax = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let sk = a.slot(k, j).expect("band");
                    let sp = a.slot(p, j).expect("band");
                    a.data.swap(sk, sp);
                }
            }
            let pivot = a.data[a.slot(k, k).expect("diag")];
            for i in k + 1..=last {
                let si = a.slot(i, k).expect("band");
                let l = a.data[si] / pivot;
                a.data[si] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=jmax {
                    let u = a.data[a.slot(k, j).expect("band")];
                    let s = a.slot(i, j).expect("band");
                    a.data[s] -= l * u;
                }
            }
        }
        Ok(BandedLu { a, piv })
    }
}

/// Factors from `Banded::lu`.
#[derive(Debug, Clone)]
pub struct BandedLu<T: Scalar> {
    a: Banded<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let a = &self.a;
        let n = a.n;
        check_dim(n, b.len())?;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + a.kl).min(n - 1) {
                let l = a.data[a.slot(i, k).expect("band")];
                x[i] -= l * xk;
            }
        }
        let reach = a.ku + a.kl;
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= a.data[a.slot(i, j).expect("band")] * x[j];
            }
            x[i] = s / a.data[a.slot(i, i).expect("diag")];
        }
        Ok(x)
    }
}

/// Rectangular Toeplitz matrix T(i, j) = t_{i−j} with O(N log N) matvec
/// through a zero-padded circulant embedding.
#[derive(Clone)]
pub struct ToeplitzOperator<T: Scalar> {
    col: Vec<T>,
    row: Vec<T>,
    spectrum: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl<T: Scalar> Debug for ToeplitzOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzOperator").field("col", &self.col).field("row", &self.row).finish()
    }
}

impl<T: Scalar> ToeplitzOperator<T> {
    /// `col` is the first column (length nrows), `row` the first row
    /// (length ncols); they must share their leading entry.
    pub fn new(col: Vec<T>, row: Vec<T>) -> Result<Self> {
        if col.is_empty() || row.is_empty() {
            return Err(invalid("Toeplitz generators must be non-empty"));
        }
        if col[0] != row[0] {
            return Err(invalid("first column and first row disagree on the diagonal"));
        }
        let len = col.len() + row.len();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let mut c = vec![Complex64::new(0.0, 0.0); len];
        for (i, v) in col.iter().enumerate() {
            c[i] = v.to_c64();
        }
        for j in 1..row.len() {
            c[len - j] = row[j].to_c64();
        }
        fft.process(&mut c);
        Ok(Self { col, row, spectrum: c, fft, ifft })
    }

    pub fn symmetric(col: Vec<T>) -> Result<Self> {
        Self::new(col.clone(), col)
    }

    pub fn nrows(&self) -> usize {
        self.col.len()
    }

    pub fn ncols(&self) -> usize {
        self.row.len()
    }

    pub fn first_col(&self) -> &[T] {
        &self.col
    }

    pub fn first_row(&self) -> &[T] {
        &self.row
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        if i >= j {
            self.col[i - j]
        } else {
            self.row[j - i]
        }
    }

    /// Stored generator length (floats of the operator proper).
    pub fn stored_len(&self) -> usize {
        self.col.len() + self.row.len() - 1
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.ncols(), x.len())?;
        let len = self.spectrum.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (b, v) in buf.iter_mut().zip(x) {
            *b = v.to_c64();
        }
        self.fft.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / len as f64;
        Ok(buf[..self.nrows()].iter().map(|z| T::from_c64(z * scale)).collect())
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.row.clone(), self.col.clone()).expect("valid generators")
    }

    /// a·self + b·other.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        check_dim(self.nrows(), other.nrows())?;
        check_dim(self.ncols(), other.ncols())?;
        let col = self.col.iter().zip(&other.col).map(|(x, y)| a * *x + b * *y).collect();
        let row = self.row.iter().zip(&other.row).map(|(x, y)| a * *x + b * *y).collect();
        Self::new(col, row)
    }

    pub fn to_dense(&self) -> Dense<T> {
        Dense::from_fn(self.nrows(), self.ncols(), |i, j| self.entry(i, j))
    }
}

/// y = T x through the FFT embedding.
pub fn toeplitz_matvec<T: Scalar>(t: &ToeplitzOperator<T>, x: &[T]) -> Result<Vec<T>> {
    t.matvec(x)
}

/// 2×2 grid of Toeplitz blocks acting on interleaved unknowns.
///
/// The unknown vector is ordered b₀, a₀, b₁, a₁, …, a_{n−2}, b_{n−1}: the
/// second family (length n) sits at even positions and the first family
/// (length n−1) at odd positions. Block (p, q) maps family q to family p.
#[derive(Debug, Clone)]
pub struct BlockToeplitzOperator<T: Scalar> {
    pub blocks: [[ToeplitzOperator<T>; 2]; 2],
}

impl<T: Scalar> BlockToeplitzOperator<T> {
    pub fn new(blocks: [[ToeplitzOperator<T>; 2]; 2]) -> Result<Self> {
        let n0 = blocks[0][0].nrows();
        let n1 = blocks[1][1].nrows();
        if n1 != n0 + 1 {
            return Err(invalid("second family must have one more member than the first"));
        }
        for p in 0..2 {
            for q in 0..2 {
                let r = if p == 0 { n0 } else { n1 };
                let c = if q == 0 { n0 } else { n1 };
                check_dim(r, blocks[p][q].nrows())?;
                check_dim(c, blocks[p][q].ncols())?;
            }
        }
        Ok(Self { blocks })
    }

    pub fn dim(&self) -> usize {
        self.blocks[0][0].nrows() + self.blocks[1][1].nrows()
    }

    pub fn stored_len(&self) -> usize {
        self.blocks.iter().flatten().map(|b| b.stored_len()).sum()
    }

    pub fn split(x: &[T]) -> (Vec<T>, Vec<T>) {
        let first = x.iter().skip(1).step_by(2).cloned().collect();
        let second = x.iter().step_by(2).cloned().collect();
        (first, second)
    }

    pub fn merge(first: &[T], second: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(first.len() + second.len());
        for (i, b) in second.iter().enumerate() {
            out.push(*b);
            if i < first.len() {
                out.push(first[i]);
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), x.len())?;
        let (a, b) = Self::split(x);
        let mut ya = self.blocks[0][0].matvec(&a)?;
        for (y, v) in ya.iter_mut().zip(self.blocks[0][1].matvec(&b)?) {
            *y += v;
        }
        let mut yb = self.blocks[1][0].matvec(&a)?;
        for (y, v) in yb.iter_mut().zip(self.blocks[1][1].matvec(&b)?) {
            *y += v;
        }
        Ok(Self::merge(&ya, &yb))
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        let fam = |k: usize| if k % 2 == 1 { (0, k / 2) } else { (1, k / 2) };
        let (p, ii) = fam(i);
        let (q, jj) = fam(j);
        self.blocks[p][q].entry(ii, jj)
    }

    pub fn to_dense(&self) -> Dense<T> {
        let n = self.dim();
        Dense::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

/// Outcome of a GMRES run.
#[derive(Debug, Clone, PartialEq)]
pub struct GmresReport {
    pub iterations: usize,
    /// ‖r_k‖/‖r_0‖ for k = 0, 1, …
    pub residual_history: Vec<f64>,
    pub wall: Duration,
    pub converged: bool,
}

/// Un-restarted GMRES with modified Gram–Schmidt, zero initial guess and
/// optional right preconditioner P (solves A P y = b, returns x = P y).
pub fn gmres<T: Scalar>(
    op: &dyn Fn(&[T]) -> Vec<T>,
    rhs: &[T],
    tol: f64,
    max_iter: usize,
    precond: Option<&dyn Fn(&[T]) -> Vec<T>>,
) -> Result<(Vec<T>, GmresReport)> {
    if !(tol > 0.0) {
        return Err(invalid("GMRES tolerance must be positive"));
    }
    let start = Instant::now();
    let n = rhs.len();
    let beta = norm2(rhs);
    let mut history = vec![1.0];
    if beta == 0.0 {
        let report = GmresReport { iterations: 0, residual_history: history, wall: start.elapsed(), converged: true };
        return Ok((vec![T::zero(); n], report));
    }
    let apply = |v: &[T]| -> Result<Vec<T>> {
        let w = match precond {
            Some(p) => p(v),
            None => v.to_vec(),
        };
        check_dim(n, w.len())?;
        let y = op(&w);
        check_dim(n, y.len())?;
        Ok(y)
    };
    let inv = T::from_f64(1.0 / beta);
    let mut basis: Vec<Vec<T>> = vec![rhs.iter().map(|v| *v * inv).collect()];
    let mut hess: Vec<Vec<T>> = Vec::new();
    let mut cs: Vec<T> = Vec::new();
    let mut sn: Vec<T> = Vec::new();
    let mut g = vec![T::from_f64(beta)];
    let mut converged = false;
    let mut k = 0;
    while k < max_iter.min(n) {
        let mut w = apply(&basis[k])?;
        let mut h = vec![T::zero(); k + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(v, &w);
            for (wj, vj) in w.iter_mut().zip(v) {
                *wj -= hij * *vj;
            }
            h[i] = hij;
        }
        let hn = norm2(&w);
        h[k + 1] = T::from_f64(hn);
        for i in 0..k {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i].conj() * h[i] + cs[i].conj() * h[i + 1];
            h[i] = t;
        }
        let (c, s) = givens(h[k], h[k + 1]);
        h[k] = c * h[k] + s * h[k + 1];
        h[k + 1] = T::zero();
        cs.push(c);
        sn.push(s);
        let gk = g[k];
        g.push(-s.conj() * gk);
        g[k] = c * gk;
        hess.push(h);
        k += 1;
        let rel = g[k].modulus() / beta;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        if hn == 0.0 {
            break;
        }
        let inv = T::from_f64(1.0 / hn);
        basis.push(w.iter().map(|v| *v * inv).collect());
    }
    let mut y = vec![T::zero(); k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= hess[j][i] * y[j];
        }
        y[i] = s / hess[i][i];
    }
    let mut z = vec![T::zero(); n];
    for (yi, v) in y.iter().zip(&basis) {
        for (zj, vj) in z.iter_mut().zip(v) {
            *zj += *yi * *vj;
        }
    }
    let x = match precond {
        Some(p) => p(&z),
        None => z,
    };
    let report = GmresReport { iterations: k, residual_history: history, wall: start.elapsed(), converged };
    Ok((x, report))
}

// Rotation with c real: [c s; −s̄ c]·[a; b] = [r; 0].
fn givens<T: Scalar>(a: T, b: T) -> (T, T) {
    let na = a.modulus();
    let nb = b.modulus();
    if nb == 0.0 {
        return (T::one(), T::zero());
    }
    if na == 0.0 {
        return (T::zero(), T::from_c64(b.conj().to_c64() / nb));
    }
    let r = na.hypot(nb);
    let c = na / r;
    let phase = a.to_c64() / na;
    let s = phase * b.conj().to_c64() / r;
    (T::from_f64(c), T::from_c64(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_toeplitz_is_identity() {
        let mut e = vec![0.0; 9];
        e[0] = 1.0;
        let t = ToeplitzOperator::symmetric(e).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64 - 3.5).collect();
        let y = t.matvec(&x).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn tridiagonal_sine_modes() {
        let n = 40;
        let mut col = vec![0.0; n];
        col[0] = 2.0;
        col[1] = -1.0;
        let t = ToeplitzOperator::symmetric(col).unwrap();
        for k in [1usize, 7, 40] {
            let th = k as f64 * std::f64::consts::PI / (n as f64 + 1.0);
            let v: Vec<f64> = (1..=n).map(|j| (j as f64 * th).sin()).collect();
            let y = t.matvec(&v).unwrap();
            let ev = 2.0 - 2.0 * th.cos();
            for (a, b) in y.iter().zip(&v) {
                assert!((a - ev * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rectangular_toeplitz_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut row: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        row[0] = col[0];
        let t = ToeplitzOperator::new(col, row).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = t.matvec(&x).unwrap();
        let z = t.to_dense().matvec(&x).unwrap();
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let t = ToeplitzOperator::symmetric(vec![1.0, 0.5]).unwrap();
        assert!(matches!(t.matvec(&[1.0]), Err(TfdeError::DimensionMismatch { .. })));
    }

    #[test]
    fn hilbert_inverse() {
        let h = Dense::from_fn(4, 4, |i, j| 1.0 / (i + j + 1) as f64);
        let inv = [
            [16.0, -120.0, 240.0, -140.0],
            [-120.0, 1200.0, -2700.0, 1680.0],
            [240.0, -2700.0, 6480.0, -4200.0],
            [-140.0, 1680.0, -4200.0, 2800.0],
        ];
        let lu = h.lu().unwrap();
        for j in 0..4 {
            let mut e = vec![0.0; 4];
            e[j] = 1.0;
            let x = lu.solve(&e).unwrap();
            for i in 0..4 {
                assert!((x[i] - inv[i][j]).abs() < 1e-8 * inv[i][j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn complex_dense_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100;
        let vals: Vec<Complex64> = (0..n * n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut a = Dense::from_row_major(n, n, vals).unwrap();
        for i in 0..n {
            a[(i, i)] += Complex64::new(2.0 * n as f64, 0.0);
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = dense_solve(&a, &b).unwrap();
        let r = a.matvec(&x).unwrap();
        let res: Vec<Complex64> = r.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&res) <= 1e-11 * norm2(&b));
    }

    #[test]
    fn singular_pivot_detected() {
        let a = Dense::from_fn(3, 3, |i, _| i as f64);
        assert!(matches!(a.lu(), Err(TfdeError::SingularMatrix(_))));
    }

    #[test]
    fn banded_lu_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let mut b = Banded::<Complex64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                b.add(i, j, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap();
            }
        }
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, i as f64)).collect();
        let x = b.lu().unwrap().solve(&rhs).unwrap();
        let y = dense_solve(&b.to_dense(), &rhs).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).norm() < 1e-9 * q.norm().max(1.0));
        }
    }

    #[test]
    fn gmres_identity_one_step() {
        let b = vec![1.0, 2.0, 3.0];
        let (x, rep) = gmres(&|v: &[f64]| v.to_vec(), &b, 1e-10, 10, None).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!((x[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn gmres_spd_tridiagonal() {
        let n = 128;
        let mut col = vec![0.0; n];
        col[0] = 2.5;
        col[1] = -1.0;
        let t = ToeplitzOperator::symmetric(col).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (x, rep) = gmres(&|v: &[f64]| t.matvec(v).unwrap(), &b, 1e-8, 500, None).unwrap();
        assert!(rep.converged);
        for w in rep.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let exact = dense_solve(&t.to_dense(), &b).unwrap();
        for (p, q) in x.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-7);
        }
    }

    #[test]
    fn gmres_complex_with_right_preconditioner() {
        let n = 50;
        let a = Dense::<Complex64>::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(3.0 + i as f64, 1.0)
            } else if i.abs_diff(j) == 1 {
                Complex64::new(-1.0, 0.3)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let diag: Vec<Complex64> = (0..n).map(|i| a[(i, i)]).collect();
        let pre = |v: &[Complex64]| v.iter().zip(&diag).map(|(x, d)| x / d).collect::<Vec<_>>();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0, -(i as f64))).collect();
        let (x, rep) = gmres(&|v: &[Complex64]| a.matvec(v).unwrap(), &b, 1e-10, 100, Some(&pre)).unwrap();
        assert!(rep.converged);
        let r = a.matvec(&x).unwrap();
        let res: Vec<Complex64> = r.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&res) <= 1e-9 * norm2(&b));
    }

    #[test]
    fn gmres_reports_non_convergence() {
        let n = 20;
        let a = Dense::from_fn(n, n, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let b = vec![1.0; n];
        let (_, rep) = gmres(&|v: &[f64]| a.matvec(v).unwrap(), &b, 1e-12, 3, None).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn condition_of_identity_and_limit() {
        assert!((condition_number(&Dense::identity(5)).unwrap() - 1.0).abs() < 1e-14);
        let big = Dense::<f64>::zeros(CONDITION_LIMIT + 1, CONDITION_LIMIT + 1);
        assert!(matches!(condition_number(&big), Err(TfdeError::UnsupportedSize { .. })));
    }

    #[test]
    fn block_toeplitz_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let mut mk = |r: usize, c: usize| {
            let col: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut row: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            row[0] = col[0];
            ToeplitzOperator::new(col, row).unwrap()
        };
        let blocks = [[mk(n - 1, n - 1), mk(n - 1, n)], [mk(n, n - 1), mk(n, n)]];
        let b = BlockToeplitzOperator::new(blocks).unwrap();
        let x: Vec<f64> = (0..2 * n - 1).map(|i| (i as f64).sin()).collect();
        let y = b.matvec(&x).unwrap();
        let z = b.to_dense().matvec(&x).unwrap();
        for (p, q) in y.iter().zip(&z) {
            assert!((p - q).abs() < 1e-13);
        }
    }
}
