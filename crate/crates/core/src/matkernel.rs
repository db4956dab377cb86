//! Dense complex matrices and positive semidefinite operators.
//!
//! Matrices here are tiny (dimension at most a few dozen), so everything is a
//! plain row-major `Vec<Complex64>`. Hermitian eigendecompositions and QR are
//! delegated to `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use thiserror::Error;

use crate::rng::{rng_from_seed, SeededRng};

pub type C64 = Complex64;

/// Absolute tolerance on `|M_ij - conj(M_ji)|` for the Hermitian predicate.
pub const TOL_HERM: f64 = 1e-10;
/// Smallest eigenvalue may dip this far below zero, relative to the largest
/// eigenvalue magnitude.
pub const TOL_PSD_REL: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest are treated as zero by the
/// square root and the pseudo-inverse.
pub const EIG_CUTOFF_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: entry asymmetry {asymmetry:e} exceeds {tol:e}")]
    NotHermitian { asymmetry: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eig:e} below -{tol:e}")]
    NotPsd { min_eig: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, " ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, " {:+.6}{:+.6}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// `|v><v|`
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), v.len(), |r, c| v[r] * v[c].conj())
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

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry in absolute value.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max_ij |M_ij - conj(M_ji)|`; infinite for non-square input.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_asymmetry() <= TOL_HERM
    }

    /// `(M + M†)/2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, MatrixError> {
        if self.cols != rhs.rows {
            return Err(MatrixError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let x = self[(r, k)];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] += x * rhs[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "vector length does not match matrix columns");
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * v[c]).sum())
            .collect()
    }

    /// `<u|M|v>`
    pub fn sandwich(&self, u: &[C64], v: &[C64]) -> C64 {
        let mv = self.mul_vec(v);
        u.iter().zip(&mv).map(|(x, y)| x.conj() * y).sum()
    }

    /// Hermitian eigendecomposition: eigenvalues ascending and the matching
    /// eigenvectors as columns. The input is Hermitized first.
    pub fn hermitian_eigen(&self) -> Result<(Vec<f64>, ComplexMatrix), MatrixError> {
        if !self.is_square() {
            return Err(MatrixError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let h = self.hermitian_part();
        let dm = DMatrix::from_fn(n, n, |r, c| h[(r, c)]);
        let eig = SymmetricEigen::new(dm);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok((values, vectors))
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)])
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }

    /// Rebuilds `V f(Λ) V†` from an eigendecomposition.
    fn spectral(vectors: &ComplexMatrix, values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |r, c| {
            (0..n).map(|k| vectors[(r, k)] * vectors[(c, k)].conj() * values[k]).sum()
        })
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(x, y)| x + y).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(x, y)| x - y).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("inner dimensions must agree")
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        let data = repr.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
        ComplexMatrix::from_row_major(repr.rows, repr.cols, data).map_err(serde::de::Error::custom)
    }
}

/// Kronecker product `x ⊗ y`.
pub fn kron(x: &ComplexMatrix, y: &ComplexMatrix) -> ComplexMatrix {
    let (yr, yc) = (y.rows, y.cols);
    ComplexMatrix::from_fn(x.rows * yr, x.cols * yc, |r, c| x[(r / yr, c / yc)] * y[(r % yr, c % yc)])
}

/// Kronecker product of two vectors.
pub fn kron_vec(x: &[C64], y: &[C64]) -> Vec<C64> {
    x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
}

pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs_entry(x: &ComplexMatrix) -> f64 {
    x.max_abs_entry()
}

/// A Hermitian positive semidefinite operator with a certified floor on its
/// smallest eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct PsdOperator {
    matrix: ComplexMatrix,
    min_eig_floor: f64,
}

impl PsdOperator {
    /// Validates `m` (square, Hermitian within [`TOL_HERM`], smallest
    /// eigenvalue at least `-TOL_PSD_REL * max|λ|`).
    pub fn new(m: ComplexMatrix) -> Result<Self, MatrixError> {
        if !m.is_square() {
            return Err(MatrixError::NotSquare { rows: m.rows, cols: m.cols });
        }
        let asym = m.hermitian_asymmetry();
        if asym > TOL_HERM {
            return Err(MatrixError::NotHermitian { asymmetry: asym, tol: TOL_HERM });
        }
        let m = m.hermitian_part();
        let (values, _) = m.hermitian_eigen()?;
        let scale = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = TOL_PSD_REL * scale;
        let min_eig = values.first().copied().unwrap_or(0.0);
        if min_eig < -tol {
            return Err(MatrixError::NotPsd { min_eig, tol });
        }
        Ok(Self { matrix: m, min_eig_floor: min_eig.min(0.0).max(-tol) })
    }

    /// `A†A`, positive semidefinite by construction (no eigendecomposition).
    pub fn from_factor(a: &ComplexMatrix) -> Self {
        let m = (&a.adjoint() * a).hermitian_part();
        Self { matrix: m, min_eig_floor: 0.0 }
    }

    /// `|v><v|`
    pub fn projector(v: &[C64]) -> Self {
        Self { matrix: ComplexMatrix::outer(v).hermitian_part(), min_eig_floor: 0.0 }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: ComplexMatrix::identity(dim), min_eig_floor: 1.0 }
    }

    /// Diagonal operator with nonnegative entries.
    pub fn diagonal(diag: &[f64]) -> Result<Self, MatrixError> {
        if let Some(&d) = diag.iter().find(|d| **d < 0.0) {
            return Err(MatrixError::NotPsd { min_eig: d, tol: 0.0 });
        }
        let floor = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let floor = if diag.is_empty() { 0.0 } else { floor };
        Ok(Self { matrix: ComplexMatrix::from_real_diagonal(diag), min_eig_floor: floor })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn min_eig_floor(&self) -> f64 {
        self.min_eig_floor
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `s·P + t·I`, which stays PSD for `s, t ≥ 0`.
    pub fn scaled_plus_identity(&self, s: f64, t: f64) -> Self {
        assert!(s >= 0.0 && t >= 0.0);
        let mut m = self.matrix.scale(s);
        for i in 0..m.rows {
            m[(i, i)] += C64::new(t, 0.0);
        }
        Self { matrix: m, min_eig_floor: s * self.min_eig_floor + t }
    }

    pub fn scale(&self, s: f64) -> Self {
        assert!(s >= 0.0);
        Self { matrix: self.matrix.scale(s), min_eig_floor: s * self.min_eig_floor }
    }

    /// Rescaled to unit trace (unchanged when the trace vanishes).
    pub fn normalized(&self) -> Self {
        let t = self.trace();
        if t > 0.0 { self.scale(1.0 / t) } else { self.clone() }
    }

    /// Largest eigenvalue, i.e. the operator norm.
    pub fn operator_norm(&self) -> f64 {
        let (values, _) = self.matrix.hermitian_eigen().expect("square by construction");
        values.last().copied().unwrap_or(0.0).max(0.0)
    }

    /// Eigenvalues (ascending) clamped by [`EIG_CUTOFF_REL`], with eigenvectors.
    fn clamped_eigen(&self) -> (Vec<f64>, ComplexMatrix) {
        let (mut values, vectors) = self.matrix.hermitian_eigen().expect("square by construction");
        let top = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let cutoff = EIG_CUTOFF_REL * top;
        for v in values.iter_mut() {
            if *v < cutoff {
                *v = 0.0;
            }
        }
        (values, vectors)
    }
}

impl TryFrom<ComplexMatrix> for PsdOperator {
    type Error = MatrixError;
    fn try_from(m: ComplexMatrix) -> Result<Self, MatrixError> {
        PsdOperator::new(m)
    }
}

impl From<PsdOperator> for ComplexMatrix {
    fn from(p: PsdOperator) -> ComplexMatrix {
        p.matrix
    }
}

/// Principal square root.
pub fn psd_sqrt(p: &PsdOperator) -> PsdOperator {
    let (values, vectors) = p.clamped_eigen();
    let roots: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    let m = ComplexMatrix::spectral(&vectors, &roots).hermitian_part();
    PsdOperator { matrix: m, min_eig_floor: 0.0 }
}

/// Moore–Penrose pseudo-inverse of the principal square root.
pub fn psd_pinv_sqrt(p: &PsdOperator) -> ComplexMatrix {
    let (values, vectors) = p.clamped_eigen();
    let inv: Vec<f64> = values.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    ComplexMatrix::spectral(&vectors, &inv).hermitian_part()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` matrix with i.i.d. standard complex Gaussian entries
/// (`E|z|^2 = 1`).
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// `A†A` with `A` a `rank x dim` Ginibre matrix; rank-deficient when
/// `rank < dim`.
pub fn sample_psd_rank<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> PsdOperator {
    PsdOperator::from_factor(&ginibre(rank.max(1), dim, rng))
}

pub fn sample_psd_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PsdOperator {
    sample_psd_rank(dim, dim, rng)
}

/// Full-rank Ginibre PSD sample, deterministic in `seed`.
pub fn sample_psd(dim: usize, seed: u64) -> PsdOperator {
    assert!(dim >= 1, "dimension must be positive");
    let mut rng: SeededRng = rng_from_seed(seed);
    sample_psd_with(dim, &mut rng)
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(dim, dim, rng).to_nalgebra();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = ComplexMatrix::from_nalgebra(&q);
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..dim {
            out[(row, c)] *= phase;
        }
    }
    out
}
