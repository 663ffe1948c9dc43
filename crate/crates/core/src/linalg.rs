//! Dense complex linear algebra: the substrate for every other module.
//!
//! [`Mat`] is a validated square matrix with finite entries. Decompositions
//! (SVD, Hermitian eigensolver, LU) come from `nalgebra`; the matrix
//! exponential and integer powers are implemented here.

use std::fmt;
use std::fs;
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest supported dimension.
pub const MAX_DIM: usize = 512;

/// Condition-number ceiling above which a resolvent is refused.
pub const RESOLVENT_COND_MAX: f64 = 1e12;

/// Square complex matrix with finite entries and `dim ≥ 1`.
#[derive(Clone, PartialEq)]
pub struct Mat(DMatrix<C64>);

/// Complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVec(DVector<C64>);

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat(dim={}) {}", self.dim(), self.0)
    }
}

fn check_finite<'a>(it: impl IntoIterator<Item = &'a C64>) -> Result<()> {
    if it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::input("non-finite matrix entry"))
    }
}

impl Mat {
    /// Wraps an existing `nalgebra` matrix after validation.
    pub fn from_dmatrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::input(format!("matrix must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.nrows() == 0 {
            return Err(Error::input("matrix dimension must be at least 1"));
        }
        if m.nrows() > MAX_DIM {
            return Err(Error::input(format!("dimension {} exceeds supported maximum {MAX_DIM}", m.nrows())));
        }
        check_finite(m.iter())?;
        Ok(Mat(m))
    }

    /// Builds a matrix from row-major complex entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::input("ragged or non-square row data"));
        }
        Self::from_dmatrix(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// Builds a matrix from row-major real entries.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        Mat(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Mat(DMatrix::zeros(dim, dim))
    }

    pub fn from_diag(diag: &[C64]) -> Result<Self> {
        let d = diag.len();
        Self::from_dmatrix(DMatrix::from_fn(d, d, |i, j| if i == j { diag[i] } else { C64::new(0.0, 0.0) }))
    }

    pub fn from_real_diag(diag: &[f64]) -> Result<Self> {
        let diag: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&diag)
    }

    pub fn scalar(z: C64) -> Result<Self> {
        Self::from_diag(&[z])
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Mat {
        Mat(self.0.adjoint())
    }

    pub fn scale(&self, z: C64) -> Mat {
        Mat(&self.0 * z)
    }

    pub fn scale_real(&self, x: f64) -> Mat {
        self.scale(C64::new(x, 0.0))
    }

    /// `self + z·𝟙`.
    pub fn shift(&self, z: C64) -> Mat {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += z;
        }
        Mat(m)
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| i == j || self.0[(i, j)] == C64::new(0.0, 0.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        self.0.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn apply(&self, x: &CVec) -> Result<CVec> {
        if x.dim() != self.dim() {
            return Err(Error::input(format!(
                "vector dimension {} does not match matrix dimension {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(CVec(&self.0 * &x.0))
    }

    /// Stable identifier: dimension plus a hash of the entries rounded to 1e-12.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim() as u64).to_le_bytes());
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.0[(i, j)];
                for x in [z.re, z.im] {
                    let r = (x * 1e12).round() as i64;
                    h.update(r.to_le_bytes());
                }
            }
        }
        let digest = h.finalize();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("d{}-{}", self.dim(), hex)
    }

    pub fn to_json(&self) -> MatJson {
        let d = self.dim();
        MatJson {
            dim: d,
            re: (0..d).map(|i| (0..d).map(|j| self.0[(i, j)].re).collect()).collect(),
            im: (0..d).map(|i| (0..d).map(|j| self.0[(i, j)].im).collect()).collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("matrix serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: MatJson = serde_json::from_str(s)?;
        j.to_mat()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let s = fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&s)
    }
}

fn is_diag_dm(m: &DMatrix<C64>) -> bool {
    let d = m.nrows();
    (0..d).all(|j| (0..d).all(|i| i == j || m[(i, j)] == C64::new(0.0, 0.0)))
}

impl<'a> Mul<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn mul(self, rhs: &'a Mat) -> Mat {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in product");
        // Row/column scaling when one factor is diagonal.
        if is_diag_dm(&self.0) {
            let mut out = rhs.0.clone();
            for i in 0..out.nrows() {
                let s = self.0[(i, i)];
                out.row_mut(i).iter_mut().for_each(|z| *z *= s);
            }
            return Mat(out);
        }
        if is_diag_dm(&rhs.0) {
            let mut out = self.0.clone();
            for j in 0..out.ncols() {
                let s = rhs.0[(j, j)];
                out.column_mut(j).iter_mut().for_each(|z| *z *= s);
            }
            return Mat(out);
        }
        Mat(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn add(self, rhs: &'a Mat) -> Mat {
        Mat(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a Mat> for &'a Mat {
    type Output = Mat;
    fn sub(self, rhs: &'a Mat) -> Mat {
        Mat(&self.0 - &rhs.0)
    }
}

impl CVec {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::input("vector dimension must be at least 1"));
        }
        check_finite(entries.iter())?;
        Ok(CVec(DVector::from_vec(entries)))
    }

    pub fn from_real(entries: &[f64]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn as_dvector(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn entries(&self) -> Vec<C64> {
        self.0.iter().copied().collect()
    }
}

/// Shared matrix literal format: `{"dim": d, "re": [[..]], "im": [[..]]}`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatJson {
    pub fn to_mat(&self) -> Result<Mat> {
        let d = self.dim;
        let shape_ok = self.re.len() == d
            && self.im.len() == d
            && self.re.iter().all(|r| r.len() == d)
            && self.im.iter().all(|r| r.len() == d);
        if !shape_ok {
            return Err(Error::input(format!("matrix literal rows must be {d} arrays of length {d}")));
        }
        Mat::from_dmatrix(DMatrix::from_fn(d, d, |i, j| C64::new(self.re[i][j], self.im[i][j])))
    }
}

/// Spectral norm (largest singular value).
pub fn opnorm(m: &Mat) -> Result<f64> {
    if m.dim() == 1 || m.is_diagonal() {
        return Ok(m.diagonal().iter().fold(0.0, |a, z| a.max(z.norm())));
    }
    let sv = singular_values(m)?;
    Ok(sv.iter().copied().fold(0.0, f64::max))
}

/// Singular values in no particular order.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    if m.is_diagonal() {
        return Ok(m.diagonal().iter().map(|z| z.norm()).collect());
    }
    let svd = SVD::try_new(m.0.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Computation("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// 2-norm condition number `σ_max/σ_min` (infinite when singular).
pub fn condition_number(m: &Mat) -> Result<f64> {
    let sv = singular_values(m)?;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

const EXPM_MAX_TERMS: usize = 30;
const EXPM_MAX_SQUARINGS: i32 = 1000;

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The matrix is scaled by `2^{-s}` until its 1-norm is at most 0.5, the
/// series is summed until terms fall below unit roundoff, and the result is
/// squared `s` times.
pub fn expm(m: &Mat) -> Result<Mat> {
    if m.is_diagonal() {
        let diag: Vec<C64> = m.diagonal().iter().map(|z| z.exp()).collect();
        return finite_or_overflow(Mat::from_diag_unchecked(&diag));
    }
    let norm = m.norm1();
    if !norm.is_finite() {
        return Err(Error::Computation("expm: non-finite norm".into()));
    }
    let mut s = 0i32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as i32;
    }
    if s > EXPM_MAX_SQUARINGS {
        return Err(Error::Computation(format!("expm: norm {norm:e} too large for the scaling schedule")));
    }
    let x = m.scale_real(0.5_f64.powi(s));
    let d = m.dim();
    let mut sum = DMatrix::<C64>::identity(d, d);
    let mut term = DMatrix::<C64>::identity(d, d);
    for k in 1..=EXPM_MAX_TERMS {
        term = (&term * &x.0) / C64::new(k as f64, 0.0);
        sum += &term;
        let tn = term.iter().map(|z| z.norm()).sum::<f64>();
        if tn <= f64::EPSILON * 1e-2 {
            break;
        }
    }
    let mut out = Mat(sum);
    for _ in 0..s {
        out = &out * &out;
        if !out.is_finite() {
            return Err(Error::Computation("expm: overflow during squaring".into()));
        }
    }
    Ok(out)
}

fn finite_or_overflow(m: Mat) -> Result<Mat> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Computation("expm: overflow".into()))
    }
}

impl Mat {
    fn from_diag_unchecked(diag: &[C64]) -> Mat {
        let d = diag.len();
        Mat(DMatrix::from_fn(d, d, |i, j| if i == j { diag[i] } else { C64::new(0.0, 0.0) }))
    }
}

/// `Mⁿ` by binary exponentiation; `M⁰ = 𝟙`.
pub fn powm(m: &Mat, n: u64) -> Mat {
    if m.is_diagonal() {
        let diag: Vec<C64> = m.diagonal().iter().map(|z| pow_scalar(*z, n)).collect();
        return Mat::from_diag_unchecked(&diag);
    }
    let mut result = Mat::identity(m.dim());
    let mut base = m.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn pow_scalar(z: C64, n: u64) -> C64 {
    let mut result = C64::new(1.0, 0.0);
    let mut base = z;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result *= base;
        }
        e >>= 1;
        if e > 0 {
            base *= base;
        }
    }
    result
}

/// `(ζ𝟙 + A)⁻¹`, refused when the 2-norm condition number exceeds 1e12.
pub fn resolvent(a: &Mat, zeta: C64) -> Result<Mat> {
    let shifted = a.shift(zeta);
    let cond = condition_number(&shifted)?;
    if cond.is_nan() || cond > RESOLVENT_COND_MAX {
        return Err(Error::Singular { cond });
    }
    if shifted.is_diagonal() {
        let diag: Vec<C64> = shifted.diagonal().iter().map(|z| z.inv()).collect();
        return Ok(Mat::from_diag_unchecked(&diag));
    }
    let inv = shifted.0.lu().try_inverse().ok_or(Error::Singular { cond })?;
    Ok(Mat(inv))
}

fn check_hermitian(h: &Mat) -> Result<Mat> {
    let tol = 1e-12 * (1.0 + h.max_abs());
    let d = h.dim();
    for i in 0..d {
        for j in 0..d {
            if (h.get(i, j) - h.get(j, i).conj()).norm() > tol {
                return Err(Error::input("matrix is not Hermitian within tolerance"));
            }
        }
    }
    let sym = (&h.0 + h.0.adjoint()) * C64::new(0.5, 0.0);
    Ok(Mat(sym))
}

/// Extreme eigenvalues `(min, max)` of a Hermitian matrix.
pub fn herm_eig_extremes(h: &Mat) -> Result<(f64, f64)> {
    let h = check_hermitian(h)?;
    let ev = if h.dim() == 1 {
        vec![h.get(0, 0).re]
    } else {
        let eig = SymmetricEigen::try_new(h.0, f64::EPSILON, 0)
            .ok_or_else(|| Error::Computation("Hermitian eigensolver did not converge".into()))?;
        eig.eigenvalues.iter().copied().collect()
    };
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((min, max))
}

/// Largest eigenvalue of a Hermitian matrix and a unit eigenvector for it.
pub(crate) fn herm_top_eigenpair(h: &Mat) -> Result<(f64, CVec)> {
    let h = check_hermitian(h)?;
    if h.dim() == 1 {
        return Ok((h.get(0, 0).re, CVec(DVector::from_element(1, C64::new(1.0, 0.0)))));
    }
    let eig = SymmetricEigen::try_new(h.0, f64::EPSILON, 0)
        .ok_or_else(|| Error::Computation("Hermitian eigensolver did not converge".into()))?;
    let (k, &lambda) =
        eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty spectrum");
    let v = eig.eigenvectors.column(k).into_owned();
    Ok((lambda, CVec(v)))
}

/// Hermitian square matrix from real eigenvalues and a unitary basis: `U diag(λ) U*`.
pub(crate) fn unitary_conjugate(u: &Mat, diag: &[C64]) -> Mat {
    let d = Mat::from_diag_unchecked(diag);
    let ud = u * &d;
    &ud * &u.adjoint()
}

#[cfg(test)]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
