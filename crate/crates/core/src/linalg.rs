//! Dense complex operators on `2^n`-dimensional registers.
//!
//! Eigendecompositions, inverses and matrix products are delegated to LAPACK/BLAS
//! through `ndarray-linalg`. Everything here is exact up to floating point: time
//! evolution is `V e^{-i lambda t} V^dag`, never a Trotter or Taylor expansion.

use ndarray::{Array1, Array2, ShapeBuilder, Zip};
use ndarray_linalg::{Eigh, EigValsh, Inverse, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::StateVector;
use crate::pauli::PauliString;

/// Relative Hermiticity tolerance for [`OperatorKind::Hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Absolute unitarity tolerance for [`OperatorKind::Unitary`].
pub const UNITARY_TOL: f64 = 1e-10;
/// Minimum distance of every eigenphase from the branch cut in [`unitary_log`].
pub const LOG_BRANCH_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Hermitian,
    Unitary,
    General,
}

#[derive(Clone, Debug)]
pub struct DenseOperator {
    matrix: Array2<C64>,
    kind: OperatorKind,
}

/// Eigendecomposition `A = V diag(values) V^dag` with unitary `V`.
#[derive(Clone, Debug)]
pub struct Spectrum<T> {
    pub eigenvalues: Array1<T>,
    pub eigenvectors: Array2<C64>,
}

fn check_square_pow2(m: &Array2<C64>) -> Result<()> {
    let (r, c) = m.dim();
    if r != c || !r.is_power_of_two() {
        return Err(Error::invalid(format!(
            "operator must be square with power-of-two dimension, got {r}x{c}"
        )));
    }
    Ok(())
}

fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

fn hermitize(m: &Array2<C64>) -> Array2<C64> {
    let mut out = m.clone();
    Zip::from(&mut out)
        .and(&m.t())
        .for_each(|a, b| *a = (*a + b.conj()) * 0.5);
    out
}

fn hermitian_deviation(m: &Array2<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    Zip::from(m)
        .and(&m.t())
        .for_each(|a, b| dev = dev.max((a - b.conj()).norm()));
    dev
}

fn unitary_deviation(m: &Array2<C64>) -> f64 {
    let g = adjoint(m).dot(m);
    let mut dev: f64 = 0.0;
    for ((i, j), z) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        dev = dev.max((z - target).norm());
    }
    dev
}

/// `V diag(f(lambda)) V^dag`.
fn spectral_map(vectors: &Array2<C64>, diag: &Array1<C64>) -> Array2<C64> {
    let mut scaled = vectors.clone();
    for (mut col, d) in scaled.columns_mut().into_iter().zip(diag.iter()) {
        col.mapv_inplace(|z| z * d);
    }
    scaled.dot(&adjoint(vectors))
}

impl DenseOperator {
    pub fn general(matrix: Array2<C64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        Ok(Self {
            matrix,
            kind: OperatorKind::General,
        })
    }

    /// Tags `matrix` as Hermitian after checking `max|A - A^dag| <= 1e-12 max|A|`.
    pub fn hermitian(matrix: Array2<C64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL * max_abs(&matrix) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(Self {
            matrix,
            kind: OperatorKind::Hermitian,
        })
    }

    /// Tags `matrix` as unitary after checking `max|A^dag A - 1| <= 1e-10`.
    pub fn unitary(matrix: Array2<C64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        let dev = unitary_deviation(&matrix);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(Self {
            matrix,
            kind: OperatorKind::Unitary,
        })
    }

    /// Like [`DenseOperator::unitary`] but first applies Newton-Schulz steps
    /// `U <- U (3 - U^dag U) / 2`, which pull a nearly unitary matrix onto its
    /// unitary polar factor to working precision.
    pub fn unitary_polished(mut matrix: Array2<C64>) -> Result<Self> {
        check_square_pow2(&matrix)?;
        for _ in 0..2 {
            let mut g = adjoint(&matrix).dot(&matrix);
            g.mapv_inplace(|z| -0.5 * z);
            for i in 0..g.nrows() {
                g[[i, i]] += 1.5;
            }
            matrix = matrix.dot(&g);
        }
        Self::unitary(matrix)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Array2::eye(dim),
            kind: OperatorKind::Unitary,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: Array2::zeros((dim, dim)),
            kind: OperatorKind::Hermitian,
        }
    }

    /// Dense matrix of a Pauli string (unitary; Hermitian when the phase is real).
    pub fn from_pauli(p: &PauliString) -> Self {
        let dim = p.dim();
        let mut m = Array2::zeros((dim, dim));
        let mut col = vec![C64::new(0.0, 0.0); dim];
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for b in 0..dim {
            col.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            col[b] = C64::new(1.0, 0.0);
            p.apply_into(&col, &mut out);
            m.column_mut(b).assign(&Array1::from(out.clone()));
        }
        Self {
            matrix: m,
            kind: OperatorKind::Unitary,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: adjoint(&self.matrix),
            kind: self.kind,
        }
    }

    /// `self * rhs`. The product of two unitaries keeps the unitary tag.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        let kind = match (self.kind, rhs.kind) {
            (OperatorKind::Unitary, OperatorKind::Unitary) => OperatorKind::Unitary,
            _ => OperatorKind::General,
        };
        Ok(Self {
            matrix: self.matrix.dot(&rhs.matrix),
            kind,
        })
    }

    /// Real multiple; keeps the Hermitian tag.
    pub fn scaled(&self, c: f64) -> Self {
        let kind = match self.kind {
            OperatorKind::Hermitian => OperatorKind::Hermitian,
            _ => OperatorKind::General,
        };
        Self {
            matrix: self.matrix.mapv(|z| z * c),
            kind,
        }
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut dev: f64 = 0.0;
        Zip::from(&self.matrix)
            .and(&other.matrix)
            .for_each(|a, b| dev = dev.max((a - b).norm()));
        dev
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |A^dag A - 1|` entry.
    pub fn unitarity_error(&self) -> f64 {
        unitary_deviation(&self.matrix)
    }

    fn require_hermitian(&self) -> Result<()> {
        if self.kind != OperatorKind::Hermitian {
            return Err(Error::NotHermitian {
                deviation: hermitian_deviation(&self.matrix),
            });
        }
        Ok(())
    }
}

impl Spectrum<f64> {
    /// `V e^{-i lambda t} V^dag`.
    pub fn propagator(&self, t: f64) -> Result<DenseOperator> {
        let phases = self
            .eigenvalues
            .mapv(|l| C64::from_polar(1.0, -l * t));
        DenseOperator::unitary_polished(spectral_map(&self.eigenvectors, &phases))
    }

    pub fn reconstruct(&self) -> Array2<C64> {
        let d = self.eigenvalues.mapv(|l| C64::new(l, 0.0));
        spectral_map(&self.eigenvectors, &d)
    }
}

impl Spectrum<C64> {
    pub fn reconstruct(&self) -> Array2<C64> {
        spectral_map(&self.eigenvectors, &self.eigenvalues)
    }
}

// LAPACK reads a row-major array as its transpose, which for a Hermitian
// matrix is the complex conjugate; pass a column-major copy.
fn eigh_lower(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut f = Array2::zeros(m.raw_dim().f());
    f.assign(m);
    Ok(f.eigh(UPLO::Lower)?)
}

/// Real eigenvalues in ascending order with a unitary eigenvector matrix.
pub fn hermitian_eig(h: &DenseOperator) -> Result<Spectrum<f64>> {
    h.require_hermitian()?;
    let (values, vectors) = eigh_lower(&h.matrix)?;
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// `e^{-i H t}` with `hbar = 1`.
pub fn expm_hermitian(h: &DenseOperator, t: f64) -> Result<DenseOperator> {
    hermitian_eig(h)?.propagator(t)
}

/// Eigendecomposition of a unitary, eigenvalues `e^{i theta}` with `theta` in
/// the principal branch `(-pi, pi)`.
///
/// The unitary is mapped through the Cayley transform
/// `K = i (1 - U)(1 + U)^{-1}`, which is Hermitian with eigenvalues
/// `tan(theta / 2)` and shares the eigenvectors of `U`, so degenerate
/// eigenspaces come out orthonormal. Eigenphases within
/// [`LOG_BRANCH_MARGIN`] of `+-pi` are rejected.
pub fn unitary_eig(u: &DenseOperator) -> Result<Spectrum<f64>> {
    if u.kind != OperatorKind::Unitary {
        return Err(Error::NotUnitary {
            deviation: unitary_deviation(&u.matrix),
        });
    }
    let dim = u.dim();
    let id: Array2<C64> = Array2::eye(dim);
    let plus = &id + &u.matrix;
    let minus = &id - &u.matrix;
    let inv = plus.inv().map_err(|_| Error::BranchAmbiguity {
        phase: std::f64::consts::PI,
        margin: LOG_BRANCH_MARGIN,
    })?;
    let k = hermitize(&minus.dot(&inv).mapv(|z| z * C64::new(0.0, 1.0)));
    let (tans, vectors) = eigh_lower(&k)?;
    let limit = std::f64::consts::PI - LOG_BRANCH_MARGIN;
    let mut thetas = Array1::zeros(dim);
    for (theta, t) in thetas.iter_mut().zip(tans.iter()) {
        *theta = 2.0 * t.atan();
        if !t.is_finite() || theta.abs() > limit {
            return Err(Error::BranchAmbiguity {
                phase: *theta,
                margin: LOG_BRANCH_MARGIN,
            });
        }
    }
    // Catches a numerically broken transform (e.g. an ill-conditioned 1 + U).
    let recon = spectral_map(&vectors, &thetas.mapv(|th: f64| C64::from_polar(1.0, th)));
    let mut dev: f64 = 0.0;
    Zip::from(&recon)
        .and(&u.matrix)
        .for_each(|a, b| dev = dev.max((a - b).norm()));
    if dev > 1e-8 {
        return Err(Error::BranchAmbiguity {
            phase: thetas.iter().fold(0.0f64, |m, t| m.max(t.abs())),
            margin: LOG_BRANCH_MARGIN,
        });
    }
    Ok(Spectrum {
        eigenvalues: thetas,
        eigenvectors: vectors,
    })
}

/// Hermitian `H` with `U = e^{-i H t}`, principal branch.
pub fn unitary_log(u: &DenseOperator, t: f64) -> Result<DenseOperator> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("log time must be positive, got {t}")));
    }
    let spec = unitary_eig(u)?;
    let energies = spec.eigenvalues.mapv(|th| C64::new(-th / t, 0.0));
    Ok(DenseOperator {
        matrix: hermitize(&spectral_map(&spec.eigenvectors, &energies)),
        kind: OperatorKind::Hermitian,
    })
}

/// `max |lambda|` of a Hermitian operator.
pub fn spectral_norm(h: &DenseOperator) -> Result<f64> {
    h.require_hermitian()?;
    let values = h.matrix.eigvalsh(UPLO::Lower)?;
    Ok(values.iter().fold(0.0f64, |m, l| m.max(l.abs())))
}

/// `A v`. The result is not renormalized.
pub fn matvec(a: &DenseOperator, v: &StateVector) -> Result<StateVector> {
    if v.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: v.dim(),
        });
    }
    let x = Array1::from(v.amplitudes().to_vec());
    Ok(StateVector::from_amplitudes_unchecked(a.matrix.dot(&x).to_vec()))
}
