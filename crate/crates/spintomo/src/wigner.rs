//! The spherical Wigner quasi-probability function
//! `W(θ, φ) = Σ_KQ ρ_KQ Y_KQ(θ, φ)`.
//!
//! `W` is a faithful representation of the state on the sphere: band-limited
//! at `K = 2F`, real everywhere, and negative somewhere exactly when the
//! state has no classical spin-direction interpretation. The spherical
//! harmonics are evaluated with a numerically stable normalized associated
//! Legendre recurrence, and the default grid pairs Gauss-Legendre nodes in
//! `cos θ` with uniform azimuths, so quadrature against harmonics up to the
//! band limit is exact.

use std::io::Write as IoWrite;

use thiserror::Error;

use crate::density::DensityMatrix;
use crate::linalg::gauss_legendre;
use crate::multipole::state_multipoles;
use crate::C64;

/// Identifier of the expansion convention baked into every map, so plots
/// can be reproduced bit-for-bit.
pub const CONVENTION_ID: &str = "multipole/orthonormal-ylm/v1";

/// Imaginary residue above this magnitude means the multipole input was
/// inconsistent; below it, the imaginary part is discarded.
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WignerError {
    #[error("empty evaluation grid")]
    EmptyGrid,
    #[error("Wigner value has imaginary residue {0:.3e}")]
    ImaginaryResidue(f64),
}

/// Fully normalized spherical harmonic `Y_lm(θ, φ)` with Condon-Shortley
/// phase; `Y_00 = 1/√(4π)`.
pub fn spherical_harmonic(l: u32, m: i32, theta: f64, phi: f64) -> C64 {
    assert!(m.unsigned_abs() <= l, "|m| must not exceed l");
    let am = m.unsigned_abs();
    let p = normalized_legendre(l, am, theta.cos());
    let phase = f64::from(am) * phi;
    let y = C64::new(phase.cos(), phase.sin()) * p;
    if m >= 0 {
        y
    } else {
        let sign = if am % 2 == 0 { 1.0 } else { -1.0 };
        y.conj() * sign
    }
}

/// `P̄_l^m(x)`: associated Legendre including the full `Y_lm` normalization
/// `√((2l+1)/4π · (l−m)!/(l+m)!)` and the `(−1)^m` phase, for `m ≥ 0`.
fn normalized_legendre(l: u32, m: u32, x: f64) -> f64 {
    debug_assert!(m <= l);
    let sin_theta = (1.0 - x * x).max(0.0).sqrt();
    // seed P̄_m^m by the closed-form product
    let mut pmm = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    for k in 1..=m {
        let k = f64::from(k);
        pmm *= -((2.0 * k + 1.0) / (2.0 * k)).sqrt() * sin_theta;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut curr = x * (2.0 * f64::from(m) + 3.0).sqrt() * pmm;
    if l == m + 1 {
        return curr;
    }
    let mf = f64::from(m);
    for ll in (m + 2)..=l {
        let lf = f64::from(ll);
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        let next = a * (x * curr - b * prev);
        prev = curr;
        curr = next;
    }
    curr
}

/// A set of sphere sample points with quadrature weights for `∫ dΩ`.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    points: Vec<(f64, f64)>,
    weights: Vec<f64>,
}

impl SphereGrid {
    /// Gauss-Legendre nodes in `cos θ` crossed with uniform azimuths.
    ///
    /// `n_polar` Legendre nodes integrate polynomials in `cos θ` up to
    /// degree `2·n_polar − 1` exactly; `n_azimuth` uniform points resolve
    /// azimuthal orders `|Q| < n_azimuth`.
    pub fn gauss_legendre(n_polar: usize, n_azimuth: usize) -> Self {
        let (nodes, glw) = gauss_legendre(n_polar);
        let dphi = std::f64::consts::TAU / n_azimuth as f64;
        let mut points = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (x, w) in nodes.iter().zip(&glw) {
            let theta = x.clamp(-1.0, 1.0).acos();
            for j in 0..n_azimuth {
                points.push((theta, dphi * j as f64));
                weights.push(w * dphi);
            }
        }
        Self { points, weights }
    }

    /// The default analysis grid: 50 polar nodes × 100 azimuths, exact for
    /// band limits `K ≤ 49`.
    pub fn default_grid() -> Self {
        Self::gauss_legendre(50, 100)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The Wigner function sampled on a grid.
#[derive(Debug, Clone)]
pub struct WignerMap {
    points: Vec<(f64, f64)>,
    values: Vec<f64>,
    convention_id: &'static str,
}

impl WignerMap {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn convention_id(&self) -> &str {
        self.convention_id
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `theta,phi,value` rows (with a header) for external plotting.
    pub fn write_csv<W: IoWrite>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,phi,value")?;
        for ((theta, phi), value) in self.points.iter().zip(&self.values) {
            writeln!(w, "{theta},{phi},{value}")?;
        }
        Ok(())
    }
}

/// Evaluates `W(θ, φ) = Σ_KQ ρ_KQ Y_KQ(θ, φ)` on the given points.
///
/// The result of the complex sum is checked to be real to [`IMAG_TOL`]
/// (guaranteed by the Hermiticity-induced symmetry of the multipoles) and
/// the imaginary residue is discarded.
pub fn wigner_function(
    rho: &DensityMatrix,
    points: &[(f64, f64)],
) -> Result<WignerMap, WignerError> {
    if points.is_empty() {
        return Err(WignerError::EmptyGrid);
    }
    let multipoles = state_multipoles(rho);
    let mut values = Vec::with_capacity(points.len());
    for &(theta, phi) in points {
        let mut acc = C64::new(0.0, 0.0);
        for (k, q, coeff) in multipoles.iter() {
            acc += coeff * spherical_harmonic(k, q, theta, phi);
        }
        if acc.im.abs() > IMAG_TOL {
            return Err(WignerError::ImaginaryResidue(acc.im.abs()));
        }
        values.push(acc.re);
    }
    Ok(WignerMap {
        points: points.to_vec(),
        values,
        convention_id: CONVENTION_ID,
    })
}
