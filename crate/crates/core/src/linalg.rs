//! Small dense complex matrices.
//!
//! Everything here is sized for the handful-of-levels systems this crate
//! deals with (the Λ-atom is 3×3). The only nontrivial routine is a cyclic
//! Jacobi eigensolver for Hermitian matrices, which in turn gives exactly
//! unitary propagators `exp(-iHt)` up to roundoff.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hermiticity tolerance used by [`herm_eig`] and [`expm_unitary`].
pub const HERMITIAN_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_OFF_TOL: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m[(k, k)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (k, d) in diag.iter().enumerate() {
            m[(k, k)] = *d;
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (k, d) in diag.iter().enumerate() {
            m[(k, k)] = Complex64::new(*d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics if `data.len()` is
    /// not a perfect square.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "expected {dim}x{dim} entries");
        Self { dim, data }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix must be square");
            data.extend(row.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.dim, other.dim);
        Self { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b * s).collect() }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        assert_eq!(v.len(), n);
        (0..n).map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self[(k, k)]).sum()
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> Complex64 {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = ONE;
        for col in 0..n {
            let pivot = (col..n).max_by(|&x, &y| a[x * n + col].norm().total_cmp(&a[y * n + col].norm())).unwrap();
            if a[pivot * n + col] == ZERO {
                return ZERO;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for row in col + 1..n {
                let f = a[row * n + col] / p;
                for j in col..n {
                    let v = a[col * n + j];
                    a[row * n + j] -= f * v;
                }
            }
        }
        det
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise deviation `max|A - B|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max|M - M†|`
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `max|U†U - I|`
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.dim))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `W diag(f(λ)) W†`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let n = self.eigenvectors.dim();
        let w = &self.eigenvectors;
        let fl: Vec<Complex64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += w[(i, k)] * fl[k] * w[(j, k)].conj();
                }
                out[(i, j)] = acc;
            }
        }
        out
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn herm_eig(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let defect = m.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { defect });
    }
    let n = m.dim();
    let mut a = m.clone();
    for k in 0..n {
        a[(k, k)] = Complex64::new(a[(k, k)].re, 0.0);
    }
    let mut w = ComplexMatrix::identity(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_max(&a);
        if off <= JACOBI_OFF_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut w, p, q);
            }
        }
    }
    if !converged && off_diagonal_max(&a) > JACOBI_OFF_TOL * scale {
        return Err(Error::NoConvergence { sweeps: JACOBI_MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let eigenvalues = order.iter().map(|&k| a[(k, k)].re).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[(i, dst)] = w[(i, src)];
        }
    }
    Ok(HermitianEigen { eigenvalues, eigenvectors })
}

fn off_diagonal_max(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(a[(i, j)].norm());
        }
    }
    worst
}

/// Zeroes `a[p][q]` with the unitary rotation
/// `J = [[c, s e^{iφ}], [-s e^{-iφ}, c]]` on the (p, q) plane,
/// updating `a ← J† a J` and `w ← w J`.
fn rotate(a: &mut ComplexMatrix, w: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Below roundoff of both diagonals: drop it.
    if r < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[(p, q)] = ZERO;
        a[(q, p)] = ZERO;
        return;
    }
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let j_pp = Complex64::new(c, 0.0);
    let j_pq = phase * s;
    let j_qp = -phase.conj() * s;
    let j_qq = Complex64::new(c, 0.0);

    let n = a.dim();
    // a ← a J (columns p, q)
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * j_pp + akq * j_qp;
        a[(k, q)] = akp * j_pq + akq * j_qq;
    }
    // a ← J† a (rows p, q)
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = j_pp.conj() * apk + j_qp.conj() * aqk;
        a[(q, k)] = j_pq.conj() * apk + j_qq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = Complex64::new(app - t * r, 0.0);
    a[(q, q)] = Complex64::new(aqq + t * r, 0.0);

    for k in 0..n {
        let wkp = w[(k, p)];
        let wkq = w[(k, q)];
        w[(k, p)] = wkp * j_pp + wkq * j_qp;
        w[(k, q)] = wkp * j_pq + wkq * j_qq;
    }
}

/// `exp(-iHt)` for Hermitian `H`, via its eigendecomposition.
pub fn expm_unitary(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = herm_eig(h)?;
    Ok(eig.reconstruct_with(|l| Complex64::from_polar(1.0, -l * t)))
}

/// Stack-allocated 3×3 complex matrix, row-major.
pub type Matrix3 = [[Complex64; 3]; 3];

pub const IDENTITY3: Matrix3 = [[ONE, ZERO, ZERO], [ZERO, ONE, ZERO], [ZERO, ZERO, ONE]];

impl From<&Matrix3> for ComplexMatrix {
    fn from(m: &Matrix3) -> Self {
        Self { dim: 3, data: m.iter().flatten().copied().collect() }
    }
}

impl ComplexMatrix {
    /// Panics unless `dim == 3`.
    pub fn to_matrix3(&self) -> Matrix3 {
        assert_eq!(self.dim, 3);
        let mut m = [[ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(&self.data[3 * i..3 * i + 3]);
        }
        m
    }
}

#[inline]
pub fn matmul3(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// `exp(-iHt)` for a Hermitian 3×3 matrix, without heap allocation.
///
/// Same cyclic Jacobi scheme as [`herm_eig`]; the Hermiticity check is the
/// caller's responsibility.
pub fn expm_unitary3(h: &Matrix3, t: f64) -> Matrix3 {
    let mut a = *h;
    for (k, row) in a.iter_mut().enumerate() {
        row[k] = Complex64::new(row[k].re, 0.0);
    }
    let mut w = IDENTITY3;
    let scale = h.iter().flatten().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = a[0][1].norm().max(a[0][2].norm()).max(a[1][2].norm());
        if off <= JACOBI_OFF_TOL * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            rotate3(&mut a, &mut w, p, q);
        }
    }
    let phases = [0, 1, 2].map(|k| Complex64::from_polar(1.0, -a[k][k].re * t));
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = w[i][0] * phases[0] * w[j][0].conj()
                + w[i][1] * phases[1] * w[j][1].conj()
                + w[i][2] * phases[2] * w[j][2].conj();
        }
    }
    out
}

fn rotate3(a: &mut Matrix3, w: &mut Matrix3, p: usize, q: usize) {
    let apq = a[p][q];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[p][p].re;
    let aqq = a[q][q].re;
    if r < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[p][q] = ZERO;
        a[q][p] = ZERO;
        return;
    }
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let j_pq = phase * s;
    let j_qp = -phase.conj() * s;

    for row in a.iter_mut() {
        let (akp, akq) = (row[p], row[q]);
        row[p] = akp * c + akq * j_qp;
        row[q] = akp * j_pq + akq * c;
    }
    #[allow(clippy::needless_range_loop)]
    for k in 0..3 {
        let (apk, aqk) = (a[p][k], a[q][k]);
        a[p][k] = apk * c + j_qp.conj() * aqk;
        a[q][k] = j_pq.conj() * apk + aqk * c;
    }
    a[p][q] = ZERO;
    a[q][p] = ZERO;
    a[p][p] = Complex64::new(app - t * r, 0.0);
    a[q][q] = Complex64::new(aqq + t * r, 0.0);
    for row in w.iter_mut() {
        let (wkp, wkq) = (row[p], row[q]);
        row[p] = wkp * c + wkq * j_qp;
        row[q] = wkp * j_pq + wkq * c;
    }
}

/// `exp(-iHt)` for a real symmetric 3×3 matrix (real Jacobi rotations).
pub fn expm_real_symmetric3(h: &[[f64; 3]; 3], t: f64) -> Matrix3 {
    let mut a = *h;
    let mut w = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = h.iter().flatten().map(|x| x.abs()).fold(f64::MIN_POSITIVE, f64::max);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = a[0][1].abs().max(a[0][2].abs()).max(a[1][2].abs());
        if off <= JACOBI_OFF_TOL * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let (app, aqq) = (a[p][p], a[q][q]);
            let theta = (aqq - app) / (2.0 * apq);
            let tn = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (tn * tn + 1.0).sqrt();
            let s = tn * c;
            for row in a.iter_mut() {
                let (akp, akq) = (row[p], row[q]);
                row[p] = c * akp - s * akq;
                row[q] = s * akp + c * akq;
            }
            #[allow(clippy::needless_range_loop)]
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            a[p][p] = app - tn * apq;
            a[q][q] = aqq + tn * apq;
            for row in w.iter_mut() {
                let (wkp, wkq) = (row[p], row[q]);
                row[p] = c * wkp - s * wkq;
                row[q] = s * wkp + c * wkq;
            }
        }
    }
    let phases = [0, 1, 2].map(|k| Complex64::from_polar(1.0, -a[k][k] * t));
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let z = phases[0] * (w[i][0] * w[j][0]) + phases[1] * (w[i][1] * w[j][1]) + phases[2] * (w[i][2] * w[j][2]);
            out[i][j] = z;
            out[j][i] = z;
        }
    }
    out
}
