//! Small dense complex linear algebra for the few-mode Hilbert spaces of the
//! interferometer (dimension 16 at most).
//!
//! Everything here is value-in, value-out. Matrices are stored row-major as
//! `Complex64` and serialize as split real/imaginary arrays.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Entrywise tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `|tr(rho) - 1|`.
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as nonnegative.
pub const PSD_TOL: f64 = 1e-10;
/// Tolerance on `| ||psi|| - 1 |` for state vectors.
pub const NORM_TOL: f64 = 1e-10;

/// Jacobi sweeps stop once the off-diagonal Frobenius norm drops below this
/// (relative to the Frobenius norm of the input, floored at 1).
const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            re: m.data.iter().map(|z| z.re).collect(),
            im: m.data.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        if r.re.len() != r.im.len() {
            return Err(Error::DimensionMismatch(format!(
                "re has {} entries but im has {}",
                r.re.len(),
                r.im.len()
            )));
        }
        let data = r.re.iter().zip(&r.im).map(|(&a, &b)| c(a, b)).collect();
        ComplexMatrix::from_vec(r.rows, r.cols, data)
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(r, cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { c(diag[i], 0.0) } else { ZERO })
    }

    /// `|psi><psi|`
    pub fn outer(psi: &[C64]) -> Self {
        let n = psi.len();
        Self::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
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

    pub fn scale(&self, k: C64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|k| self[(i, k)] * v[k]).sum())
            .collect())
    }

    /// `U M U^dagger`
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        u.matmul(self)?.matmul(&u.adjoint())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise `|a_ij - b_ij|`; infinite for mismatched shapes.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise `|M - M^dagger|`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Square submatrix on the given row/column index set.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
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

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    ComplexMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// Kronecker product of two state vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Unit-trace, Hermitian, positive semidefinite matrix with basis labels.
///
/// Labels are metadata: they name modes in error messages and in serialized
/// output, and product-basis labels of the form `"A⊗B"` survive partial traces.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRepr", into = "DensityRepr")]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    basis_labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DensityRepr {
    #[serde(flatten)]
    matrix: ComplexMatrix,
    basis_labels: Vec<String>,
}

impl From<DensityMatrix> for DensityRepr {
    fn from(d: DensityMatrix) -> Self {
        DensityRepr {
            matrix: d.matrix,
            basis_labels: d.basis_labels,
        }
    }
}

impl TryFrom<DensityRepr> for DensityMatrix {
    type Error = Error;

    fn try_from(r: DensityRepr) -> Result<Self> {
        DensityMatrix::new(r.matrix, r.basis_labels)
    }
}

impl DensityMatrix {
    /// Validates the density-matrix invariants. An empty label list is
    /// replaced by numeric labels.
    pub fn new(matrix: ComplexMatrix, basis_labels: Vec<String>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let n = matrix.rows();
        let basis_labels = if basis_labels.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else {
            basis_labels
        };
        if basis_labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} basis labels for dimension {n}",
                basis_labels.len()
            )));
        }
        let deviation = matrix.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let min_eig = min_eigenvalue(&matrix)?;
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(DensityMatrix {
            matrix,
            basis_labels,
        })
    }

    /// `|psi><psi|` for a normalized `psi`.
    pub fn from_pure(psi: &[C64], basis_labels: Vec<String>) -> Result<Self> {
        check_normalized(psi)?;
        Self::new(ComplexMatrix::outer(psi), basis_labels)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = ComplexMatrix::from_real_diag(&vec![1.0 / dim as f64; dim]);
        Self::new(m, Vec::new()).expect("maximally mixed state is valid")
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn basis_labels(&self) -> &[String] {
        &self.basis_labels
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} basis labels for dimension {}",
                labels.len(),
                self.dim()
            )));
        }
        self.basis_labels = labels;
        Ok(self)
    }

    pub fn purity(&self) -> f64 {
        self.matrix.matmul(&self.matrix).expect("square").trace().re
    }

    pub fn population(&self, i: usize) -> f64 {
        self.matrix[(i, i)].re
    }
}

impl Index<(usize, usize)> for DensityMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.matrix[idx]
    }
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityMatrix {:?} {:?}", self.basis_labels, self.matrix)
    }
}

fn check_normalized(psi: &[C64]) -> Result<()> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// Reduced matrix over the subsystems listed in `keep`, for a matrix on the
/// tensor product space with factor dimensions `subsystem_dims`.
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    subsystem_dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    let total: usize = subsystem_dims.iter().product();
    if !m.is_square() || m.rows() != total || subsystem_dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {subsystem_dims:?} do not factor a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= subsystem_dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "subsystem {bad} out of range for {} factors",
            subsystem_dims.len()
        )));
    }
    let (kept_offsets, traced_offsets) = split_offsets(subsystem_dims, keep);
    let dk = kept_offsets.len();
    Ok(ComplexMatrix::from_fn(dk, dk, |r, col| {
        traced_offsets
            .iter()
            .map(|&t| m[(kept_offsets[r] + t, kept_offsets[col] + t)])
            .sum()
    }))
}

/// Full-space index offsets contributed by each kept and each traced
/// multi-index, in row-major (first factor slowest) order.
fn split_offsets(dims: &[usize], keep: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let strides = &strides;
    let offsets = |factors: Vec<usize>| -> Vec<usize> {
        let mut out = vec![0usize];
        for f in factors {
            out = out
                .iter()
                .flat_map(|&base| (0..dims[f]).map(move |i| base + i * strides[f]))
                .collect();
        }
        out
    };
    let kept: Vec<usize> = (0..dims.len()).filter(|f| keep.contains(f)).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep.contains(f)).collect();
    (offsets(kept), offsets(traced))
}

/// Partial trace of a density matrix; see [`partial_trace_matrix`].
pub fn partial_trace(
    rho: &DensityMatrix,
    subsystem_dims: &[usize],
    keep: &[usize],
) -> Result<DensityMatrix> {
    let reduced = partial_trace_matrix(&rho.matrix, subsystem_dims, keep)?;
    let labels = reduced_labels(&rho.basis_labels, subsystem_dims, keep);
    DensityMatrix::new(reduced, labels)
}

fn reduced_labels(labels: &[String], dims: &[usize], keep: &[usize]) -> Vec<String> {
    let (kept_offsets, _) = split_offsets(dims, keep);
    let kept: Vec<usize> = (0..dims.len()).filter(|f| keep.contains(f)).collect();
    let split: Option<Vec<Vec<&str>>> = labels
        .iter()
        .map(|l| {
            let parts: Vec<&str> = l.split('⊗').collect();
            (parts.len() == dims.len()).then_some(parts)
        })
        .collect();
    match split {
        Some(parts) => kept_offsets
            .iter()
            .map(|&off| {
                kept.iter()
                    .map(|&f| parts[off][f])
                    .collect::<Vec<_>>()
                    .join("⊗")
            })
            .collect(),
        None => (0..kept_offsets.len()).map(|i| i.to_string()).collect(),
    }
}

/// Eigen-decomposition of a Hermitian matrix: `m = V diag(values) V^dagger`,
/// eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = ComplexMatrix::from_real_diag(&self.values);
        d.conjugate_by(&self.vectors).expect("square")
    }
}

fn check_hermitian_input(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let deviation = m.hermitian_deviation();
    if deviation > HERMITIAN_TOL * m.max_abs().max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Cyclic complex Jacobi rotations.
///
/// Each rotation first removes the phase of `a_pq` with a diagonal unitary,
/// then applies the real symmetric Jacobi rotation to the `(p, q)` plane.
pub fn eigh(m: &ComplexMatrix) -> Result<HermitianEigen> {
    check_hermitian_input(m)?;
    let n = m.rows();
    // Exact Hermitian starting point: average out the allowed asymmetry.
    let mut a = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    let mut v = ComplexMatrix::identity(n);
    let threshold = JACOBI_TOL * a.frobenius_norm().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let phase = (apq / mag).conj();
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // W restricted to the (p, q) plane.
                let w = [[c(cs, 0.0), c(sn, 0.0)], [-sn * phase, cs * phase]];

                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * w[0][0] + akq * w[1][0];
                    a[(k, q)] = akp * w[0][1] + akq * w[1][1];
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = w[0][0].conj() * apk + w[1][0].conj() * aqk;
                    a[(q, k)] = w[0][1].conj() * apk + w[1][1].conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * w[0][0] + vkq * w[1][0];
                    v[(k, q)] = vkp * w[0][1] + vkq * w[1][1];
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, col| v[(r, order[col])]);
    Ok(HermitianEigen { values, vectors })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Real spectrum of a Hermitian matrix, ascending.
pub fn eigenvalues_hermitian(m: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(eigh(m)?.values)
}

fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues_hermitian(m)?[0])
}

/// True iff `m` is Hermitian and its smallest eigenvalue is at least `-tol`.
pub fn is_positive_semidefinite(m: &ComplexMatrix, tol: f64) -> bool {
    match min_eigenvalue(m) {
        Ok(min) => min >= -tol,
        Err(_) => false,
    }
}

/// `|<a|b>|^2` for normalized state vectors.
pub fn fidelity_pure(psi_th: &[C64], psi_ex: &[C64]) -> Result<f64> {
    if psi_th.len() != psi_ex.len() {
        return Err(Error::DimensionMismatch(format!(
            "state vectors of length {} and {}",
            psi_th.len(),
            psi_ex.len()
        )));
    }
    check_normalized(psi_th)?;
    check_normalized(psi_ex)?;
    let overlap: C64 = psi_th.iter().zip(psi_ex).map(|(a, b)| a.conj() * b).sum();
    Ok(overlap.norm_sqr().clamp(0.0, 1.0))
}

/// `<psi|rho|psi>`
pub fn fidelity_mixed(rho: &DensityMatrix, psi: &[C64]) -> Result<f64> {
    if psi.len() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state of length {} against a {}-dimensional density matrix",
            psi.len(),
            rho.dim()
        )));
    }
    check_normalized(psi)?;
    let rho_psi = rho.matrix.mul_vec(psi)?;
    let f: C64 = psi.iter().zip(&rho_psi).map(|(a, b)| a.conj() * b).sum();
    Ok(f.re.clamp(0.0, 1.0))
}

const DET_FLOOR: f64 = 1e-14;

/// Uhlmann fidelity `(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2` between two qubit
/// states, via the closed form `tr(rho sigma) + 2 sqrt(det rho det sigma)`.
pub fn fidelity_qubit(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 2 || sigma.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "closed-form state fidelity is defined here for qubits only".into(),
        ));
    }
    let overlap = rho.matrix.matmul(&sigma.matrix)?.trace().re;
    // Determinants of pure states come out at rounding level (~1e-17), which
    // the square root would amplify to ~1e-8.
    let det = |m: &ComplexMatrix| {
        let d = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
        if d < DET_FLOOR {
            0.0
        } else {
            d
        }
    };
    let f = overlap + 2.0 * (det(&rho.matrix) * det(&sigma.matrix)).sqrt();
    Ok(f.clamp(0.0, 1.0))
}
