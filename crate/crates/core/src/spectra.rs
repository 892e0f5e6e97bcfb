//! Validated complex-Hermitian matrix types and the dense linear algebra the
//! rest of the crate is built on.
//!
//! Eigenvalues are always reported in ascending order. Code downstream of
//! [`eigh`] may only rely on spectral projectors: eigenvectors inside a
//! degenerate cluster are an arbitrary orthonormal choice.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative tolerance for Hermiticity, trace and normalization checks.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Absolute tolerance for positivity and rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Square matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Validates `m` and stores its exactly Hermitian part `(m + m†)/2`.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entry"));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let mut worst = (0, 0, 0.0);
        for i in 0..rows {
            for j in i..cols {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > worst.2 {
                    worst = (i, j, dev);
                }
            }
        }
        if worst.2 > STRUCTURE_TOL * scale {
            return Err(Error::NotHermitian {
                row: worst.0,
                col: worst.1,
                deviation: worst.2,
            });
        }
        let sym = (&m + m.adjoint()).scale(0.5);
        Ok(Self(sym))
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = ComplexMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        Self(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// `self + c·I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] += Complex64::new(c, 0.0);
        }
        Self(m)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `U · diag(values) · U†`.
    pub fn from_spectral(basis: &ComplexMatrix, values: &[f64]) -> Self {
        let n = values.len();
        let mut scaled = basis.clone();
        for (j, &v) in values.iter().enumerate() {
            for i in 0..n {
                scaled[(i, j)] *= v;
            }
        }
        let m = scaled * basis.adjoint();
        Self((&m + m.adjoint()).scale(0.5))
    }
}

/// Eigenvalues in nondecreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    /// Sorts `values` ascending.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum value"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub spectrum: Spectrum,
    /// Unitary; column `k` is the eigenvector of `spectrum.values()[k]`.
    pub basis: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> HermitianMatrix {
        HermitianMatrix::from_spectral(&self.basis, self.spectrum.values())
    }
}

/// Eigendecomposition with ascending eigenvalues.
pub fn eigh(m: &HermitianMatrix) -> EigenDecomposition {
    let n = m.dim();
    let eig = m.as_matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let basis = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    EigenDecomposition {
        spectrum: Spectrum(values),
        basis,
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: HermitianMatrix,
    eigen: EigenDecomposition,
    full_range: bool,
}

impl DensityMatrix {
    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.eigen.spectrum
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    /// All eigenvalues exceed [`RANK_TOL`].
    pub fn is_full_range(&self) -> bool {
        self.full_range
    }

    /// The maximally mixed state `I/n`.
    pub fn maximally_mixed(n: usize) -> Self {
        let m = HermitianMatrix::from_diagonal(&vec![1.0 / n as f64; n]);
        validate_density(m.into_matrix()).expect("I/n is a density matrix")
    }
}

/// Checks Hermiticity, unit trace and positivity.
pub fn validate_density(m: ComplexMatrix) -> Result<DensityMatrix> {
    let matrix = HermitianMatrix::new(m)?;
    let trace = matrix.trace();
    if (trace - 1.0).abs() > STRUCTURE_TOL {
        return Err(Error::TraceNotOne { trace });
    }
    let eigen = eigh(&matrix);
    let min_eigenvalue = eigen.spectrum.min();
    if min_eigenvalue < -RANK_TOL {
        return Err(Error::NotPositive { min_eigenvalue });
    }
    Ok(DensityMatrix {
        matrix,
        eigen,
        full_range: min_eigenvalue > RANK_TOL,
    })
}

/// Unit vector in `C^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState(DVector<Complex64>);

impl PureState {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::EmptyNodes);
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("amplitude"));
        }
        if (norm - 1.0).abs() > STRUCTURE_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self(amplitudes))
    }

    /// Normalizes a nonzero vector.
    pub fn normalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self(amplitudes.unscale(norm)))
    }

    /// Standard basis vector `e_k`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn kron(&self, other: &PureState) -> PureState {
        Self(self.0.kronecker(&other.0))
    }
}

/// Rank-one projector `|ψ⟩⟨ψ|`.
pub fn projector(psi: &PureState) -> HermitianMatrix {
    let v = psi.amplitudes();
    let n = v.len();
    let mut m = ComplexMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj());
    for i in 0..n {
        m[(i, i)] = Complex64::new(v[i].norm_sqr(), 0.0);
    }
    HermitianMatrix(m)
}

/// `⟨ψ|H|ψ⟩ = Tr H P_ψ`.
pub fn expectation(h: &HermitianMatrix, psi: &PureState) -> Result<f64> {
    if h.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi.dim(),
        });
    }
    Ok(expectation_unchecked(h.as_matrix(), psi.amplitudes()))
}

pub(crate) fn expectation_unchecked(h: &ComplexMatrix, v: &DVector<Complex64>) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += h[(i, i)].re * v[i].norm_sqr();
        for j in (i + 1)..n {
            acc += 2.0 * (v[i].conj() * h[(i, j)] * v[j]).re;
        }
    }
    acc
}
