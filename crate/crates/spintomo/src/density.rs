//! The density-matrix value type, test-state factories and the Uhlmann
//! fidelity.
//!
//! A [`DensityMatrix`] is validated on construction: Hermitian, unit trace
//! and positive semi-definite within fixed tolerances. The factories cover
//! the standard preparations used to exercise a reconstruction: stretched
//! states, Larmor-precessed spin-coherent states, sublevel eigenstates along
//! an arbitrary axis, and diagonal mixtures.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{from_spectrum, hermitian_eigen_desc, hermiticity_deviation, trace_re};
use crate::spin::{self, MeasurementAxis, RotationSpec, SpinSystem};
use crate::{C64, CMatrix, CVector};

/// Hermiticity tolerance for validation (max-abs entry of `ρ − ρ†`).
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Unit-trace tolerance for validation.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues may undershoot zero by at most this much.
pub const EIGENVALUE_TOL: f64 = 1e-10;

/// Errors from density-matrix construction and comparison.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("matrix is not Hermitian: max |rho - rho^dagger| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    #[error("trace is not one: |tr(rho) - 1| = {deviation:.3e}")]
    TraceNotOne { deviation: f64 },
    #[error("negative eigenvalue {value:.3e}")]
    NegativeEigenvalue { value: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sublevel 2m = {two_m} outside [-2F, +2F] = [{}, {}] or wrong parity", -.two_f, .two_f)]
    MOutOfRange { two_m: i32, two_f: i32 },
    #[error("all populations are zero")]
    AllZero,
}

/// A validated quantum state: Hermitian, unit-trace, positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates a candidate matrix and wraps it.
    ///
    /// Checks, in order: squareness, Hermiticity to [`HERMITICITY_TOL`],
    /// unit trace to [`TRACE_TOL`], and smallest eigenvalue above
    /// `−`[`EIGENVALUE_TOL`]. The first failed condition is reported with
    /// the offending magnitude.
    pub fn validate(matrix: CMatrix) -> Result<Self, DensityError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(DensityError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let herm_dev = hermiticity_deviation(&matrix);
        if herm_dev > HERMITICITY_TOL {
            return Err(DensityError::NotHermitian {
                deviation: herm_dev,
            });
        }
        let trace_dev = (trace_re(&matrix) - 1.0).abs();
        if trace_dev > TRACE_TOL {
            return Err(DensityError::TraceNotOne {
                deviation: trace_dev,
            });
        }
        let (vals, _) = hermitian_eigen_desc(matrix.clone());
        let min_eig = vals[vals.len() - 1];
        if min_eig < -EIGENVALUE_TOL {
            return Err(DensityError::NegativeEigenvalue { value: min_eig });
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix known to satisfy the invariants (checked in debug).
    pub(crate) fn trusted(matrix: CMatrix) -> Self {
        debug_assert!(hermiticity_deviation(&matrix) <= 1e-9);
        debug_assert!((trace_re(&matrix) - 1.0).abs() <= 1e-9);
        Self { matrix }
    }

    /// Rank-1 projector onto a (normalized) pure state.
    pub fn from_pure(state: &CVector) -> Self {
        let norm = state.norm();
        let v = state / C64::new(norm, 0.0);
        let mut m = CMatrix::zeros(v.len(), v.len());
        for i in 0..v.len() {
            for j in 0..v.len() {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        Self { matrix: m }
    }

    /// The maximally mixed state `I/d`.
    pub fn maximally_mixed(sys: SpinSystem) -> Self {
        let d = sys.dimension();
        Self {
            matrix: CMatrix::identity(d, d).scale(1.0 / d as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The spin system this state lives in, inferred from the dimension.
    pub fn spin_system(&self) -> SpinSystem {
        SpinSystem::from_two_f(self.dim() as u32 - 1).expect("dimension >= 2")
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    /// Diagonal populations in the `m = −F, …, +F` basis.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> DVector<f64> {
        hermitian_eigen_desc(self.matrix.clone()).0
    }

    /// `Tr(ρ²)`; 1 exactly for pure states, `1/d` for maximally mixed.
    pub fn purity(&self) -> f64 {
        trace_re(&(&self.matrix * &self.matrix))
    }

    /// Expectation value `Tr(ρ A)` of a Hermitian observable.
    pub fn expectation(&self, observable: &CMatrix) -> f64 {
        trace_re(&(&self.matrix * observable))
    }
}

/// Uhlmann fidelity `F = (Tr √(√ϱᵢ ϱᵣ √ϱᵢ))²` between two states.
///
/// Both matrix square roots are taken by Hermitian eigendecomposition;
/// eigenvalues in `[−1e−10, 0)` are clamped to zero first. Symmetric in its
/// arguments, bounded in `[0, 1]`, and equal to `|⟨ψ|φ⟩|²` for pure states.
pub fn fidelity(input: &DensityMatrix, reconstructed: &DensityMatrix) -> Result<f64, DensityError> {
    if input.dim() != reconstructed.dim() {
        return Err(DensityError::DimensionMismatch {
            left: input.dim(),
            right: reconstructed.dim(),
        });
    }
    // Square roots amplify rounding noise around zero eigenvalues
    // (√1e−15 ≈ 3e−8 per mode), so eigenvalues below a relative floor are
    // zeroed, not just the negative ones.
    let floor = |vals: &nalgebra::DVector<f64>| {
        let top = vals[0].max(0.0);
        move |x: f64| if x > 1e-12 * top { x } else { 0.0 }
    };
    let (vals, vecs) = hermitian_eigen_desc(input.matrix.clone());
    let clamp = floor(&vals);
    let sqrt_input = from_spectrum(&vals, &vecs, |x| C64::new(clamp(x).sqrt(), 0.0));
    let inner = &sqrt_input * reconstructed.matrix() * &sqrt_input;
    let (ivals, _) = hermitian_eigen_desc(inner);
    let clamp = floor(&ivals);
    let trace_sqrt: f64 = ivals.iter().map(|&x| clamp(x).sqrt()).sum();
    Ok((trace_sqrt * trace_sqrt).min(1.0))
}

/// Projector onto the stretched-or-other sublevel `|m_z = m⟩`, `m` given as
/// `2m` so half-integer spins stay exact.
pub fn make_stretched(sys: SpinSystem, two_m: i32) -> Result<DensityMatrix, DensityError> {
    let idx = sublevel_index(sys, two_m)?;
    let d = sys.dimension();
    let mut m = CMatrix::zeros(d, d);
    m[(idx, idx)] = C64::new(1.0, 0.0);
    Ok(DensityMatrix::trusted(m))
}

/// Unitary evolution `ρ → R ρ R†` under an axis-angle rotation, e.g. Larmor
/// precession about an applied field direction.
pub fn precess(rho: &DensityMatrix, spec: RotationSpec) -> DensityMatrix {
    let sys = rho.spin_system();
    let r = spin::rotation_operator(sys, spec);
    DensityMatrix::trusted(&r * rho.matrix() * r.adjoint())
}

/// Projector onto the eigenstate of `F̂·axis` with eigenvalue `m` (`2m`
/// supplied), built by rotating `|m_z = m⟩` with the rotation that carries
/// `ẑ` onto `axis`.
pub fn make_m_eigenstate(
    sys: SpinSystem,
    two_m: i32,
    axis: Vector3<f64>,
) -> Result<DensityMatrix, DensityError> {
    let stretched = make_stretched(sys, two_m)?;
    let norm = axis.norm();
    if norm < 1e-12 {
        return Err(DensityError::MOutOfRange {
            two_m,
            two_f: sys.two_f() as i32,
        });
    }
    let target = MeasurementAxis::from_direction(axis).expect("nonzero axis");
    Ok(precess(&stretched, spin::axis_to_rotation(target)))
}

/// Diagonal mixed state with the given (unnormalized, non-negative)
/// populations.
pub fn make_diagonal_mixed(populations: &[f64]) -> Result<DensityMatrix, DensityError> {
    let total: f64 = populations.iter().sum();
    if total <= 0.0 {
        return Err(DensityError::AllZero);
    }
    let d = populations.len();
    let mut m = CMatrix::zeros(d, d);
    for (i, &p) in populations.iter().enumerate() {
        m[(i, i)] = C64::new(p.max(0.0) / total, 0.0);
    }
    Ok(DensityMatrix::trusted(m))
}

/// A Haar-random pure state, as a projector.
pub fn random_pure<R: Rng + ?Sized>(sys: SpinSystem, rng: &mut R) -> DensityMatrix {
    let d = sys.dimension();
    let v = CVector::from_fn(d, |_, _| {
        C64::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        )
    });
    DensityMatrix::from_pure(&v)
}

/// A random full-rank mixed state `AA†/Tr(AA†)` with Ginibre-distributed `A`.
pub fn random_mixed<R: Rng + ?Sized>(sys: SpinSystem, rng: &mut R) -> DensityMatrix {
    let d = sys.dimension();
    let a = CMatrix::from_fn(d, d, |_, _| {
        C64::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        )
    });
    let m = &a * a.adjoint();
    let tr = trace_re(&m);
    DensityMatrix::trusted(m.scale(1.0 / tr))
}

fn sublevel_index(sys: SpinSystem, two_m: i32) -> Result<usize, DensityError> {
    let two_f = sys.two_f() as i32;
    if two_m.abs() > two_f || (two_m + two_f) % 2 != 0 {
        return Err(DensityError::MOutOfRange { two_m, two_f });
    }
    Ok(((two_m + two_f) / 2) as usize)
}
