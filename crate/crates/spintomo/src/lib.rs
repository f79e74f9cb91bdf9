//! Density-matrix tomography for arbitrary spin-F systems from Stern-Gerlach
//! population measurements.
//!
//! An ensemble of particles with total angular momentum `F` lives in a
//! `(2F+1)`-dimensional Hilbert space and is described by a density matrix
//! `ρ`. A Stern-Gerlach measurement along a quantization axis `n̂` yields the
//! populations of the `2F+1` magnetic sublevels in the basis rotated to `n̂`.
//! Stacking the populations observed along `4F+1` suitably chosen axes gives
//! a linear system `π = M ρ` that determines every element of `ρ`; this crate
//! implements the whole pipeline:
//!
//! * [`spin`] — spin operator algebra and axis-angle rotation operators,
//! * [`density`] — the density-matrix value type, test-state factories and
//!   the Uhlmann fidelity,
//! * [`multipole`] / [`wigner`] — state multipoles and the spherical Wigner
//!   quasi-probability function,
//! * [`tomography`] — the measurement matrix, its conditioning spectrum, the
//!   Moore-Penrose pseudoinverse solution and the positivity-constrained
//!   `ρ = TT†` least-squares fit,
//! * [`sim`] — synthetic experiments: population noise, axis jitter,
//!   time-of-flight traces and a seeded Monte-Carlo fidelity harness,
//! * [`report`] — JSON/CSV file formats shared with the command-line tool.
//!
//! The companion guide under `book/` walks through the concepts with runnable
//! examples; its code blocks are compiled as doc-tests of this crate.
//!
//! # Conventions
//!
//! * ħ = 1 and all angles are radians unless a name says otherwise.
//! * The magnetic-sublevel basis is ordered ascending, `m = −F, …, +F`, so
//!   index 0 always refers to `m = −F`.
//! * Ladder operators use positive (Condon-Shortley) matrix elements and
//!   rotations are `R = exp(−iθ F̂·û)`.

pub mod density;
pub mod multipole;
pub mod report;
pub mod sim;
pub mod spin;
pub mod tomography;
pub mod wigner;

pub(crate) mod linalg;

pub use density::DensityMatrix;
pub use spin::{MeasurementAxis, RotationSpec, SpinOperators, SpinSystem};
pub use tomography::{AxisSet, MeasurementMatrix, MeasurementRecord};

/// Complex scalar used throughout: double-precision `a + bi`.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix (column-major storage from `nalgebra`).
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;

#[cfg(doctest)]
mod book {
    //! Compiles every code block of the mdbook guide as a doc-test so the
    //! book cannot drift out of sync with the library.
    #[doc = include_str!("../../../book/src/spin-and-rotations.md")]
    mod spin_and_rotations {}
    #[doc = include_str!("../../../book/src/states-and-fidelity.md")]
    mod states_and_fidelity {}
    #[doc = include_str!("../../../book/src/forward-model.md")]
    mod forward_model {}
    #[doc = include_str!("../../../book/src/pseudoinverse.md")]
    mod pseudoinverse {}
    #[doc = include_str!("../../../book/src/physical-fit.md")]
    mod physical_fit {}
    #[doc = include_str!("../../../book/src/noise-and-monte-carlo.md")]
    mod noise_and_monte_carlo {}
    #[doc = include_str!("../../../book/src/wigner-functions.md")]
    mod wigner_functions {}
}
