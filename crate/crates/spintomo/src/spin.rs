//! Angular-momentum operator algebra: spin matrices, axis-angle rotation
//! operators and the axis → rotation convention of the measurement geometry.
//!
//! Everything here is exact operator algebra for a single spin `F`. The spin
//! quantum number is stored as `2F` so half-integer spins stay exact, and the
//! sublevel basis is ordered ascending, `m = −F, …, +F`.

use nalgebra::{DMatrix, Vector3};
use thiserror::Error;

use crate::linalg::{from_spectrum, hermitian_eigen_desc, ln_factorial};
use crate::{C64, CMatrix};

/// Errors from constructing spin-algebra values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpinError {
    /// `2F` must be at least 1.
    #[error("2F must be >= 1, got {0}")]
    InvalidSpin(u32),
    /// A rotation axis must have nonzero length.
    #[error("rotation axis has near-zero norm {0:.3e}")]
    ZeroAxis(f64),
    /// The polar angle of a measurement axis must lie in `[0, π]`.
    #[error("polar angle {0} outside [0, pi]")]
    PolarOutOfRange(f64),
}

/// A spin-`F` system, stored as `2F` so `F = 1/2, 1, 3/2, …` are all exact.
///
/// The Hilbert-space dimension is `d = 2F + 1` and basis index `i`
/// corresponds to the sublevel `m = −F + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinSystem {
    two_f: u32,
}

impl SpinSystem {
    /// Builds the system from `2F`; fails for `2F = 0`.
    pub fn from_two_f(two_f: u32) -> Result<Self, SpinError> {
        if two_f == 0 {
            return Err(SpinError::InvalidSpin(two_f));
        }
        Ok(Self { two_f })
    }

    /// Doubled spin quantum number `2F`.
    pub fn two_f(&self) -> u32 {
        self.two_f
    }

    /// Spin quantum number `F` as a float.
    pub fn f(&self) -> f64 {
        f64::from(self.two_f) / 2.0
    }

    /// Hilbert-space dimension `d = 2F + 1`.
    pub fn dimension(&self) -> usize {
        self.two_f as usize + 1
    }

    /// Sublevel values `m = −F, …, +F` in basis order.
    pub fn m_values(&self) -> impl Iterator<Item = f64> + '_ {
        let f = self.f();
        (0..self.dimension()).map(move |i| -f + i as f64)
    }
}

/// The spin matrices `F̂x, F̂y, F̂z` in units of ħ.
///
/// Built from ladder operators with Condon-Shortley (positive) matrix
/// elements `⟨m±1|F̂±|m⟩ = √(F(F+1) − m(m±1))`, which fixes
/// `[F̂x, F̂y] = i F̂z` and `F̂z = diag(−F, …, +F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    pub fx: CMatrix,
    pub fy: CMatrix,
    pub fz: CMatrix,
}

impl SpinOperators {
    /// Projection of the spin vector on a direction: `n̂·(F̂x, F̂y, F̂z)`.
    pub fn along(&self, direction: Vector3<f64>) -> CMatrix {
        self.fx.scale(direction.x) + self.fy.scale(direction.y) + self.fz.scale(direction.z)
    }
}

/// Constructs the spin matrices for a system.
pub fn spin_operators(sys: SpinSystem) -> SpinOperators {
    let d = sys.dimension();
    let f = sys.f();
    let ms: Vec<f64> = sys.m_values().collect();

    let mut plus = CMatrix::zeros(d, d);
    for i in 0..d - 1 {
        let m = ms[i];
        plus[(i + 1, i)] = C64::new((f * (f + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();

    let fx = (&plus + &minus).scale(0.5);
    let fy = (&plus - &minus) * C64::new(0.0, -0.5);
    let fz = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            C64::new(ms[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    SpinOperators { fx, fy, fz }
}

/// An axis-angle rotation `R = exp(−iθ F̂·û)`.
///
/// The axis is normalized on construction so the stored vector is always a
/// unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSpec {
    angle: f64,
    axis: Vector3<f64>,
}

impl RotationSpec {
    /// Creates a rotation of `angle` radians about `axis` (normalized here).
    pub fn new(angle: f64, axis: Vector3<f64>) -> Result<Self, SpinError> {
        let norm = axis.norm();
        if norm < 1e-12 {
            return Err(SpinError::ZeroAxis(norm));
        }
        Ok(Self {
            angle,
            axis: axis / norm,
        })
    }

    pub fn about_x(angle: f64) -> Self {
        Self {
            angle,
            axis: Vector3::x(),
        }
    }

    pub fn about_y(angle: f64) -> Self {
        Self {
            angle,
            axis: Vector3::y(),
        }
    }

    pub fn about_z(angle: f64) -> Self {
        Self {
            angle,
            axis: Vector3::z(),
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// Unit rotation axis.
    pub fn axis(&self) -> Vector3<f64> {
        self.axis
    }

    /// The inverse rotation (same axis, opposite angle).
    pub fn inverse(&self) -> Self {
        Self {
            angle: -self.angle,
            axis: self.axis,
        }
    }

    /// Applies the rotation to a real 3-vector (Rodrigues formula).
    pub fn rotate_vector(&self, v: Vector3<f64>) -> Vector3<f64> {
        let u = self.axis;
        let (s, c) = self.angle.sin_cos();
        v * c + u.cross(&v) * s + u * (u.dot(&v)) * (1.0 - c)
    }
}

/// A Stern-Gerlach quantization direction in spherical coordinates.
///
/// `n̂ = (sin θ cos φ, sin θ sin φ, cos θ)` with polar angle `θ ∈ [0, π]`
/// measured from `+ẑ`; the azimuth is stored modulo `2π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementAxis {
    polar: f64,
    azimuth: f64,
}

impl MeasurementAxis {
    pub fn new(polar: f64, azimuth: f64) -> Result<Self, SpinError> {
        if !(0.0..=std::f64::consts::PI).contains(&polar) {
            return Err(SpinError::PolarOutOfRange(polar));
        }
        Ok(Self {
            polar,
            azimuth: azimuth.rem_euclid(std::f64::consts::TAU),
        })
    }

    /// The `+ẑ` axis.
    pub fn pole() -> Self {
        Self {
            polar: 0.0,
            azimuth: 0.0,
        }
    }

    /// Builds the axis pointing along an arbitrary nonzero vector.
    pub fn from_direction(v: Vector3<f64>) -> Result<Self, SpinError> {
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(SpinError::ZeroAxis(norm));
        }
        let polar = (v.z / norm).clamp(-1.0, 1.0).acos();
        let azimuth = v.y.atan2(v.x);
        Self::new(polar, azimuth)
    }

    pub fn polar(&self) -> f64 {
        self.polar
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    /// Unit direction vector `n̂`.
    pub fn direction(&self) -> Vector3<f64> {
        let (sp, cp) = self.polar.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(sp * ca, sp * sa, cp)
    }
}

/// The rotation that carries `+ẑ` onto a measurement direction.
///
/// The rotation axis is `û = (−sin φ, cos φ, 0)`: in the xy-plane and
/// perpendicular to `n̂`, with rotation angle equal to the polar angle `θ`.
/// For `θ = 0` the rotation is the identity and `û = ŷ` by convention.
pub fn axis_to_rotation(axis: MeasurementAxis) -> RotationSpec {
    let (s, c) = axis.azimuth.sin_cos();
    RotationSpec {
        angle: axis.polar,
        axis: Vector3::new(-s, c, 0.0),
    }
}

/// The unitary rotation operator `R = exp(−iθ F̂·û)`.
///
/// Computed by spectral decomposition of the Hermitian generator `F̂·û`,
/// whose eigenvalues for a unit axis are exactly `m = −F, …, +F`; this is
/// exact for this generator class, with no series truncation.
pub fn rotation_operator(sys: SpinSystem, spec: RotationSpec) -> CMatrix {
    let ops = spin_operators(sys);
    let generator = ops.along(spec.axis());
    let (vals, vecs) = hermitian_eigen_desc(generator);
    from_spectrum(&vals, &vecs, |m| (C64::new(0.0, -spec.angle()) * m).exp())
}

/// The Wigner little-d matrix `d^F_{m′m}(θ) = ⟨m′| exp(−iθ F̂y) |m⟩`.
///
/// Evaluated with the factorial sum formula, all factorials in log space so
/// large `F` cannot overflow. Rows and columns follow the ascending basis
/// order, so `d[(i, j)] = d^F_{m′m}` with `m′ = −F + i`, `m = −F + j`.
///
/// This is an independent closed form for rotations about `ŷ`, kept as a
/// cross-check of [`rotation_operator`].
pub fn wigner_small_d(sys: SpinSystem, theta: f64) -> DMatrix<f64> {
    let d = sys.dimension();
    let two_f = i64::from(sys.two_f());
    let half = theta / 2.0;
    let (sin_h, cos_h) = half.sin_cos();

    DMatrix::from_fn(d, d, |i, j| {
        // Doubled quantum numbers keep half-integer arithmetic exact.
        let two_mp = -two_f + 2 * i as i64;
        let two_m = -two_f + 2 * j as i64;
        let prefactor = 0.5
            * (ln_factorial(((two_f + two_mp) / 2) as u32)
                + ln_factorial(((two_f - two_mp) / 2) as u32)
                + ln_factorial(((two_f + two_m) / 2) as u32)
                + ln_factorial(((two_f - two_m) / 2) as u32));

        let s_min = 0.max((two_m - two_mp) / 2);
        let s_max = ((two_f + two_m) / 2).min((two_f - two_mp) / 2);
        let mut sum = 0.0;
        for s in s_min..=s_max {
            let ln_den = ln_factorial(((two_f + two_m) / 2 - s) as u32)
                + ln_factorial(s as u32)
                + ln_factorial(((two_mp - two_m) / 2 + s) as u32)
                + ln_factorial(((two_f - two_mp) / 2 - s) as u32);
            let sign = if ((two_mp - two_m) / 2 + s) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            // exponents: cos^(2F + m − m′ − 2s), sin^(m′ − m + 2s)
            let cos_exp = two_f + (two_m - two_mp) / 2 - 2 * s;
            let sin_exp = (two_mp - two_m) / 2 + 2 * s;
            sum += sign
                * (prefactor - ln_den).exp()
                * cos_h.powi(cos_exp as i32)
                * sin_h.powi(sin_exp as i32);
        }
        sum
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unitarity_defect(r: &CMatrix) -> f64 {
        let d = r.nrows();
        let id = CMatrix::identity(d, d);
        max_abs_diff(&(r * r.adjoint()), &id)
    }

    fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn spin_half_fz_is_diag_minus_half_plus_half() {
        let sys = SpinSystem::from_two_f(1).unwrap();
        let ops = spin_operators(sys);
        assert_abs_diff_eq!(ops.fz[(0, 0)].re, -0.5);
        assert_abs_diff_eq!(ops.fz[(1, 1)].re, 0.5);
        assert_abs_diff_eq!(ops.fz[(0, 1)].norm(), 0.0);
    }

    #[test]
    fn spin_one_fx_is_inv_sqrt2_offdiagonal() {
        let sys = SpinSystem::from_two_f(2).unwrap();
        let ops = spin_operators(sys);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert_abs_diff_eq!(ops.fx[(i, j)].re, inv_sqrt2, epsilon = 1e-15);
            assert_abs_diff_eq!(ops.fx[(i, j)].im, 0.0);
        }
        assert_abs_diff_eq!(ops.fx[(0, 2)].norm(), 0.0);
        assert_abs_diff_eq!(ops.fx[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn spin_four_fz_is_diag_minus4_to_plus4() {
        let sys = SpinSystem::from_two_f(8).unwrap();
        let ops = spin_operators(sys);
        assert_eq!(ops.fz.nrows(), 9);
        for (i, m) in sys.m_values().enumerate() {
            assert_abs_diff_eq!(ops.fz[(i, i)].re, m);
        }
        assert_abs_diff_eq!(ops.fz[(0, 0)].re, -4.0);
        assert_abs_diff_eq!(ops.fz[(8, 8)].re, 4.0);
    }

    #[test]
    fn operators_satisfy_commutation_relations() {
        for two_f in [1u32, 2, 8] {
            let sys = SpinSystem::from_two_f(two_f).unwrap();
            let ops = spin_operators(sys);
            let i = C64::new(0.0, 1.0);
            assert!(max_abs_diff(&commutator(&ops.fx, &ops.fy), &(&ops.fz * i)) < 1e-12);
            assert!(max_abs_diff(&commutator(&ops.fy, &ops.fz), &(&ops.fx * i)) < 1e-12);
            assert!(max_abs_diff(&commutator(&ops.fz, &ops.fx), &(&ops.fy * i)) < 1e-12);
            // Hermiticity
            assert!(max_abs_diff(&ops.fx, &ops.fx.adjoint()) < 1e-12);
            assert!(max_abs_diff(&ops.fy, &ops.fy.adjoint()) < 1e-12);
        }
    }

    #[test]
    fn zero_angle_rotation_is_identity() {
        let sys = SpinSystem::from_two_f(8).unwrap();
        let spec = RotationSpec::new(0.0, Vector3::new(0.3, -0.2, 0.9)).unwrap();
        let r = rotation_operator(sys, spec);
        assert!(max_abs_diff(&r, &CMatrix::identity(9, 9)) < 1e-12);
    }

    #[test]
    fn spin_half_pi_about_y_matches_closed_form() {
        // Oracle: exp(−iθ σ·û/2) = cos(θ/2) I − i sin(θ/2) σ·û with the
        // Pauli matrices written in the ascending (m = −1/2, +1/2) basis,
        // where σy = [[0, i], [−i, 0]]. At θ = π this gives [[0, 1], [−1, 0]].
        let sys = SpinSystem::from_two_f(1).unwrap();
        let r = rotation_operator(sys, RotationSpec::about_y(std::f64::consts::PI));
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(-1.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        );
        assert!(max_abs_diff(&r, &expected) < 1e-12);
    }

    #[test]
    fn spin_half_full_turn_flips_sign() {
        let sys = SpinSystem::from_two_f(1).unwrap();
        for axis in [Vector3::x(), Vector3::y(), Vector3::new(0.6, -0.3, 0.74)] {
            let spec = RotationSpec::new(std::f64::consts::TAU, axis).unwrap();
            let r = rotation_operator(sys, spec);
            let minus_id = CMatrix::identity(2, 2) * C64::new(-1.0, 0.0);
            assert!(max_abs_diff(&r, &minus_id) < 1e-12);
        }
    }

    #[test]
    fn wigner_d_spin_half_quarter_turn() {
        // Same closed form as above at θ = π/2: entries ±(1/√2) with the
        // (0,1) entry positive in the ascending basis.
        let sys = SpinSystem::from_two_f(1).unwrap();
        let d = wigner_small_d(sys, std::f64::consts::FRAC_PI_2);
        let c = (std::f64::consts::FRAC_PI_4).cos();
        assert_abs_diff_eq!(d[(0, 0)], c, epsilon = 1e-14);
        assert_abs_diff_eq!(d[(0, 1)], c, epsilon = 1e-14);
        assert_abs_diff_eq!(d[(1, 0)], -c, epsilon = 1e-14);
        assert_abs_diff_eq!(d[(1, 1)], c, epsilon = 1e-14);
    }

    #[test]
    fn wigner_d_zero_angle_is_identity() {
        for two_f in [1u32, 3, 8] {
            let sys = SpinSystem::from_two_f(two_f).unwrap();
            let d = wigner_small_d(sys, 0.0);
            let id = DMatrix::<f64>::identity(sys.dimension(), sys.dimension());
            assert!((d - id).abs().max() < 1e-14);
        }
    }

    #[test]
    fn wigner_d_half_turn_is_signed_antidiagonal() {
        // d^F_{m′m}(π) = (−1)^(F−m) δ_{m′,−m}: |m⟩ → ±|−m⟩.
        let sys = SpinSystem::from_two_f(8).unwrap();
        let d = wigner_small_d(sys, std::f64::consts::PI);
        for j in 0..9 {
            // column m = −4 + j, sign (−1)^(F−m) = (−1)^(4 − (−4 + j))
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..9 {
                let expected = if i == 8 - j { sign } else { 0.0 };
                assert_abs_diff_eq!(d[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rotation_matches_wigner_d_about_y() {
        for two_f in 1..=20u32 {
            let sys = SpinSystem::from_two_f(two_f).unwrap();
            for k in 0..100 {
                let theta = std::f64::consts::TAU * k as f64 / 99.0;
                let r = rotation_operator(sys, RotationSpec::about_y(theta));
                let d = wigner_small_d(sys, theta);
                let mut dev = 0.0f64;
                for i in 0..sys.dimension() {
                    for j in 0..sys.dimension() {
                        dev = dev.max((r[(i, j)] - C64::new(d[(i, j)], 0.0)).norm());
                    }
                }
                assert!(
                    dev < 1e-10,
                    "2F={two_f} theta={theta}: max dev {dev:.2e}"
                );
            }
        }
    }

    #[test]
    fn axis_to_rotation_pole_is_identity_with_y_axis() {
        let axis = MeasurementAxis::new(0.0, 1.234).unwrap();
        let spec = axis_to_rotation(axis);
        assert_abs_diff_eq!(spec.angle(), 0.0);
        // Convention: û = ŷ when the polar angle vanishes (axis is
        // irrelevant since the rotation is the identity).
        let axis0 = MeasurementAxis::new(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(axis_to_rotation(axis0).axis().y, 1.0);
    }

    #[test]
    fn axis_to_rotation_equator_x() {
        let axis = MeasurementAxis::new(std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let spec = axis_to_rotation(axis);
        assert_abs_diff_eq!(spec.angle(), std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(spec.axis().y, 1.0, epsilon = 1e-15);
        let mapped = spec.rotate_vector(Vector3::z());
        assert!((mapped - Vector3::x()).norm() < 1e-14);
    }

    #[test]
    fn axis_to_rotation_cone_axis_at_45_degrees() {
        let axis = MeasurementAxis::new(82f64.to_radians(), 45f64.to_radians()).unwrap();
        let spec = axis_to_rotation(axis);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(spec.angle(), 82f64.to_radians());
        assert_abs_diff_eq!(spec.axis().x, -h, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.axis().y, h, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.axis().z, 0.0);
    }

    #[test]
    fn rotating_z_lands_on_measurement_direction() {
        for (polar, azimuth) in [(0.3, 1.0), (1.4, 4.0), (2.9, 0.2), (82f64.to_radians(), 2.2)] {
            let axis = MeasurementAxis::new(polar, azimuth).unwrap();
            let spec = axis_to_rotation(axis);
            let n = spec.rotate_vector(Vector3::z());
            assert!((n - axis.direction()).norm() < 1e-14);
        }
    }

    #[test]
    fn conjugating_fz_gives_spin_along_direction() {
        let sys = SpinSystem::from_two_f(8).unwrap();
        let ops = spin_operators(sys);
        for (polar, azimuth) in [(0.7, 0.4), (82f64.to_radians(), 2.8), (2.2, 5.9)] {
            let axis = MeasurementAxis::new(polar, azimuth).unwrap();
            let r = rotation_operator(sys, axis_to_rotation(axis));
            let conjugated = &r * &ops.fz * r.adjoint();
            let direct = ops.along(axis.direction());
            assert!(max_abs_diff(&conjugated, &direct) < 1e-10);
        }
    }

    #[test]
    fn composition_about_fixed_axis_adds_angles() {
        let sys = SpinSystem::from_two_f(8).unwrap();
        let axis = Vector3::new(0.26, -0.84, 0.48);
        for (a, b) in [(0.3, 1.1), (2.0, -0.7), (5.5, 3.3)] {
            let r1 = rotation_operator(sys, RotationSpec::new(a, axis).unwrap());
            let r2 = rotation_operator(sys, RotationSpec::new(b, axis).unwrap());
            let sum = rotation_operator(sys, RotationSpec::new(a + b, axis).unwrap());
            assert!(max_abs_diff(&(r1 * r2), &sum) < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(334))]
        #[test]
        fn random_rotations_are_unitary(
            two_f in prop::sample::select(vec![1u32, 2, 8]),
            angle in -10.0f64..10.0,
            x in -1.0f64..1.0,
            y in -1.0f64..1.0,
            z in -1.0f64..1.0,
        ) {
            prop_assume!((x * x + y * y + z * z).sqrt() > 1e-3);
            let sys = SpinSystem::from_two_f(two_f).unwrap();
            let spec = RotationSpec::new(angle, Vector3::new(x, y, z)).unwrap();
            let r = rotation_operator(sys, spec);
            prop_assert!(unitarity_defect(&r) < 1e-11);
        }
    }
}
