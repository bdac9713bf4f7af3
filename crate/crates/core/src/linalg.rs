//! Dense complex linear algebra for small Hermitian operators.
//!
//! Every operator in the crate (POVM effects, parent POVM elements, Bell
//! operators) is at most 16x16, so everything here is dense, row-major and
//! allocation-light. Eigen-decomposition uses cyclic complex Jacobi rotations,
//! which is deterministic and accurate to a few ulps on matrices this size.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::{EIG_TOL, HERM_TOL};

/// Shorthand used throughout the crate.
pub type C64 = Complex64;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries. Fails on a length mismatch or
    /// on any non-finite entry.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { c(diag[i], 0.0) } else { c(0.0, 0.0) })
    }

    /// `|v><v|` for a column vector `v`.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |self - other|` entry-wise. Shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |H - H^dagger|`; meaningful for square matrices only.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.rows;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimMismatch(self.cols, rhs.rows));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// `self * v` for a column vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (r1, c1, r2, c2) = (self.rows, self.cols, rhs.rows, rhs.cols);
        Self::from_fn(r1 * r2, c1 * c2, |i, j| {
            self[(i / r2, j / c2)] * rhs[(i % r2, j % c2)]
        })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimMismatch(self.rows, other.rows));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self + other)
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale(-1.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        self.axpy(1.0, rhs);
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// A square complex matrix whose Hermiticity residual is within `HERM_TOL`.
///
/// Construction symmetrizes the input (`(H + H†)/2`) after the residual check,
/// so downstream code sees an exactly Hermitian matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!("{}x{} is not square", m.rows, m.cols)));
        }
        let r = m.hermiticity_residual();
        if !(r <= HERM_TOL) {
            return Err(Error::NonHermitian(r));
        }
        Ok(Self::symmetrized(m))
    }

    /// Hermitian part of `m`, no residual check.
    pub fn symmetrized(m: CMatrix) -> Self {
        let n = m.rows;
        let mut out = m;
        for i in 0..n {
            let d = out[(i, i)].re;
            out[(i, i)] = c(d, 0.0);
            for j in (i + 1)..n {
                let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
        Self(out)
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self(CMatrix::from_real_diag(diag))
    }

    /// Rank-one projector onto the normalized direction of `v`.
    pub fn projector(v: &[C64]) -> Self {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let u: Vec<C64> = v.iter().map(|z| z / norm).collect();
        Self::symmetrized(CMatrix::outer(&u))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    /// Real trace.
    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Hilbert-Schmidt inner product `Tr(self * other)`, real for Hermitian pairs.
    pub fn inner(&self, other: &Self) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (self.0[(i, j)] * other.0[(j, i)]).re;
            }
        }
        s
    }

    /// `<v|H|v>` (real).
    pub fn expectation(&self, v: &[C64]) -> f64 {
        let hv = self.0.apply(v);
        v.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn axpy(&mut self, s: f64, other: &Self) {
        self.0.axpy(s, &other.0);
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kron(&other.0))
    }

    /// Unitary conjugation `U H U†`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        let m = &(u * &self.0) * &u.adjoint();
        Self::symmetrized(m)
    }

    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        Ok(eigh(self)?.values)
    }

    /// Largest eigenvalue; this is the "operator norm" used by the RAC
    /// success formulas.
    pub fn max_eig(&self) -> Result<f64> {
        opnorm_maxeig(self)
    }

    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        is_psd(self, tol)
    }

    pub fn is_zero(&self) -> bool {
        self.0.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

impl fmt::Debug for Hermitian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hermitian {:?}", self.0)
    }
}

/// Eigenvalues (ascending) and the unitary whose columns are eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    /// `max |H - V diag(values) V†|`.
    pub fn reconstruction_residual(&self, h: &Hermitian) -> f64 {
        let n = self.values.len();
        let v = &self.vectors;
        let rec = CMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v[(i, k)] * self.values[k] * v[(j, k)].conj()).sum()
        });
        rec.max_abs_diff(h.matrix())
    }

    /// Column `k` as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.values.len()).map(|i| self.vectors[(i, k)]).collect()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic complex Jacobi eigen-decomposition.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary, then applies the classical real Jacobi rotation to the resulting
/// real symmetric 2x2 block.
pub fn eigh(h: &Hermitian) -> Result<Eigh> {
    let r = h.0.hermiticity_residual();
    if !(r <= HERM_TOL) {
        return Err(Error::NonHermitian(r));
    }
    let n = h.dim();
    let mut a = h.0.clone();
    let mut v = CMatrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    let mut converged = n <= 1;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 || r <= 1e-17 * scale {
                    continue;
                }
                let phase = apq / r; // e^{i phi}
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let zeta = (aqq - app) / (2.0 * r);
                let t = zeta.signum() / (zeta.abs() + (zeta * zeta + 1.0).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // U restricted to (p, q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let upp = c(cs, 0.0);
                let upq = c(sn, 0.0);
                let uqp = -phase.conj() * sn;
                let uqq = phase.conj() * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * upp + akq * uqp;
                    a[(k, q)] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[(p, q)] = c(0.0, 0.0);
                a[(q, p)] = c(0.0, 0.0);
                a[(p, p)] = c(a[(p, p)].re, 0.0);
                a[(q, q)] = c(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence("Jacobi sweep cap exceeded".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    let out = Eigh { values, vectors };
    debug_assert!(out.reconstruction_residual(h) <= EIG_TOL * (1.0 + scale));
    Ok(out)
}

pub fn eigvalsh(h: &Hermitian) -> Result<Vec<f64>> {
    h.eigvalsh()
}

pub fn opnorm_maxeig(h: &Hermitian) -> Result<f64> {
    Ok(*eigh(h)?.values.last().expect("dimension is positive"))
}

pub fn is_psd(h: &Hermitian, tol: f64) -> Result<bool> {
    let min = eigh(h)?.values[0];
    Ok(min >= -tol)
}

/// `AB - BA`.
pub fn commutator(a: &Hermitian, b: &Hermitian) -> Result<CMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    let ab = a.matrix() * b.matrix();
    let ba = b.matrix() * a.matrix();
    Ok(&ab - &ba)
}

pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kron(b)
}

/// Pauli matrices `[sigma_x, sigma_y, sigma_z]`.
pub fn pauli() -> [Hermitian; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    let sx = CMatrix::from_vec(2, 2, vec![z, one, one, z]).unwrap();
    let sy = CMatrix::from_vec(2, 2, vec![z, -i, i, z]).unwrap();
    let sz = CMatrix::from_vec(2, 2, vec![one, z, z, -one]).unwrap();
    [
        Hermitian::symmetrized(sx),
        Hermitian::symmetrized(sy),
        Hermitian::symmetrized(sz),
    ]
}

/// Inner product `<a|b>` (conjugate-linear in `a`).
pub fn braket(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn normalize(v: &[C64]) -> Vec<C64> {
    let n = braket(v, v).re.sqrt();
    v.iter().map(|z| z / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_spectrum(h: &Hermitian, expected: &[f64]) {
        let e = eigh(h).unwrap();
        assert_eq!(e.values.len(), expected.len());
        for (a, b) in e.values.iter().zip(expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(e.reconstruction_residual(h) <= 1e-9);
    }

    #[test]
    fn identity_spectrum() {
        assert_spectrum(&Hermitian::identity(3), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_spectrum_is_sorted() {
        assert_spectrum(&Hermitian::from_real_diag(&[0.1, -0.2, 0.3]), &[-0.2, 0.1, 0.3]);
    }

    #[test]
    fn two_projector_closed_form() {
        // |0><0| + |psi_1><psi_1| with |<0|psi_1>| = 1/sqrt(3).
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let s = 1.0 / 3f64.sqrt();
        let psi1 = [c(s, 0.0), w * s, w * w * s];
        let h = Hermitian::projector(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
            .add(&Hermitian::projector(&psi1));
        assert_spectrum(&h, &[0.0, 1.0 - s, 1.0 + s]);
        assert_abs_diff_eq!(opnorm_maxeig(&h).unwrap(), 1.0 + s, epsilon = 1e-12);
    }

    #[test]
    fn maxeig_of_complementary_projectors() {
        let p = Hermitian::projector(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let q = Hermitian::projector(&[c(0.0, 0.0), c(1.0, 0.0)]);
        let h = Hermitian::identity(2).scale(2.0).sub(&p).sub(&q);
        assert_abs_diff_eq!(opnorm_maxeig(&h).unwrap(), 1.0, epsilon = 1e-12);
        // 2*I - P - Q in a 3-dim space leaves the orthogonal direction at 2.
        let p3 = Hermitian::projector(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let q3 = Hermitian::projector(&[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let h3 = Hermitian::identity(3).scale(2.0).sub(&p3).sub(&q3);
        assert_abs_diff_eq!(opnorm_maxeig(&h3).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(opnorm_maxeig(&p3).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let m = CMatrix::from_vec(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        assert!(matches!(Hermitian::new(m), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let r = CMatrix::from_vec(1, 1, vec![c(f64::NAN, 0.0)]);
        assert!(matches!(r, Err(Error::NonFinite)));
    }

    #[test]
    fn commutator_cases() {
        let [sx, _, sz] = pauli();
        assert_eq!(commutator(&sx, &sx).unwrap().max_abs(), 0.0);
        let k = commutator(&sx, &sz).unwrap();
        assert_abs_diff_eq!(k.max_abs(), 2.0, epsilon = 1e-15);
        // [sx, sz] = -2i sy: real antisymmetric off-diagonal.
        assert_abs_diff_eq!(k[(0, 1)].re, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(1, 0)].re, 2.0, epsilon = 1e-15);
        let d1 = Hermitian::from_real_diag(&[1.0, 2.0]);
        let d2 = Hermitian::from_real_diag(&[-3.0, 0.5]);
        assert_eq!(commutator(&d1, &d2).unwrap().max_abs(), 0.0);
        assert!(matches!(
            commutator(&d1, &Hermitian::identity(3)),
            Err(Error::DimMismatch(2, 3))
        ));
    }

    #[test]
    fn tensor_products() {
        let i4 = tensor(&CMatrix::identity(2), &CMatrix::identity(2));
        assert_eq!(i4, CMatrix::identity(4));
        let p0 = CMatrix::outer(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let p1 = CMatrix::outer(&[c(0.0, 0.0), c(1.0, 0.0)]);
        let p01 = tensor(&p0, &p1);
        let e01 = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert_eq!(p01, CMatrix::outer(&e01));
    }

    #[test]
    fn psd_checks() {
        assert!(is_psd(&Hermitian::identity(3), 0.0).unwrap());
        assert!(is_psd(&Hermitian::from_real_diag(&[1.0, -1e-12]), 1e-9).unwrap());
        assert!(!is_psd(&pauli()[2], 1e-9).unwrap());
    }
}
