//! State multipoles: the expansion of a density matrix in orthonormal
//! spherical tensor operators.
//!
//! The operators `T_KQ` for a spin-`F` space are built from Clebsch-Gordan
//! coefficients as
//!
//! ```text
//! T_KQ = Σ_{m′,m} (−1)^(F−m) ⟨F m′; F −m | K Q⟩ |m′⟩⟨m|
//! ```
//!
//! with `0 ≤ K ≤ 2F` and `−K ≤ Q ≤ K`. They form an orthonormal basis of the
//! operator space, `Tr[T_KQ T†_K′Q′] = δ_KK′ δ_QQ′`, so any `ρ` decomposes as
//! `ρ = Σ ρ_KQ T_KQ` with `ρ_KQ = Tr[ρ T†_KQ]`. These coefficients drive the
//! spherical Wigner function in [`crate::wigner`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::density::DensityMatrix;
use crate::linalg::ln_factorial;
use crate::spin::SpinSystem;
use crate::{C64, CMatrix};

/// Clebsch-Gordan coefficient `⟨j₁ m₁; j₂ m₂ | j m⟩` with all quantum
/// numbers doubled so half-integers stay exact.
///
/// Racah's factorial sum, evaluated in log space. Zero whenever the
/// selection rules fail (`m ≠ m₁ + m₂`, triangle inequality, parity, or any
/// `|mᵢ| > jᵢ`).
pub fn clebsch_gordan(
    two_j1: i32,
    two_m1: i32,
    two_j2: i32,
    two_m2: i32,
    two_j: i32,
    two_m: i32,
) -> f64 {
    if two_m1 + two_m2 != two_m
        || two_j < (two_j1 - two_j2).abs()
        || two_j > two_j1 + two_j2
        || two_m1.abs() > two_j1
        || two_m2.abs() > two_j2
        || two_m.abs() > two_j
        || (two_j1 + two_m1) % 2 != 0
        || (two_j2 + two_m2) % 2 != 0
        || (two_j + two_m) % 2 != 0
        || (two_j1 + two_j2 + two_j) % 2 != 0
    {
        return 0.0;
    }
    let lf = |x: i32| -> f64 {
        debug_assert!(x >= 0);
        ln_factorial(x as u32)
    };
    let h = |x: i32| x / 2;

    let prefactor = 0.5
        * (f64::from(two_j + 1).ln()
            + lf(h(two_j1 + two_j2 - two_j))
            + lf(h(two_j1 - two_j2 + two_j))
            + lf(h(-two_j1 + two_j2 + two_j))
            - lf(h(two_j1 + two_j2 + two_j) + 1)
            + lf(h(two_j + two_m))
            + lf(h(two_j - two_m))
            + lf(h(two_j1 + two_m1))
            + lf(h(two_j1 - two_m1))
            + lf(h(two_j2 + two_m2))
            + lf(h(two_j2 - two_m2)));

    let k_min = 0
        .max(h(two_j2 - two_j - two_m1))
        .max(h(two_j1 - two_j + two_m2));
    let k_max = h(two_j1 + two_j2 - two_j)
        .min(h(two_j1 - two_m1))
        .min(h(two_j2 + two_m2));

    let mut total = 0.0;
    for k in k_min..=k_max {
        let ln_den = lf(k)
            + lf(h(two_j1 + two_j2 - two_j) - k)
            + lf(h(two_j1 - two_m1) - k)
            + lf(h(two_j2 + two_m2) - k)
            + lf(h(two_j - two_j2 + two_m1) + k)
            + lf(h(two_j - two_j1 - two_m2) + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * (prefactor - ln_den).exp();
    }
    total
}

/// The complete set of spherical tensor operators for one spin space,
/// ordered by `(K, Q)` with index `K² + (Q + K)`.
#[derive(Debug)]
pub struct SphericalTensorBasis {
    two_f: u32,
    ops: Vec<CMatrix>,
}

impl SphericalTensorBasis {
    /// Builds (or fetches from the per-spin cache) the basis for `sys`.
    pub fn for_spin(sys: SpinSystem) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<SphericalTensorBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("tensor cache poisoned");
        guard
            .entry(sys.two_f())
            .or_insert_with(|| Arc::new(Self::build(sys)))
            .clone()
    }

    fn build(sys: SpinSystem) -> Self {
        let two_f = sys.two_f() as i32;
        let d = sys.dimension();
        let k_max = two_f; // 2F
        let mut ops = Vec::with_capacity(((k_max + 1) * (k_max + 1)) as usize);
        for k in 0..=k_max {
            for q in -k..=k {
                let mut t = CMatrix::zeros(d, d);
                for i in 0..d {
                    let two_mp = -two_f + 2 * i as i32;
                    for j in 0..d {
                        let two_m = -two_f + 2 * j as i32;
                        let c = clebsch_gordan(two_f, two_mp, two_f, -two_m, 2 * k, 2 * q);
                        let phase = if (two_f - two_m) % 4 == 0 { 1.0 } else { -1.0 };
                        t[(i, j)] = C64::new(phase * c, 0.0);
                    }
                }
                ops.push(t);
            }
        }
        Self {
            two_f: sys.two_f(),
            ops,
        }
    }

    pub fn two_f(&self) -> u32 {
        self.two_f
    }

    /// Largest tensor rank, `K_max = 2F`.
    pub fn k_max(&self) -> u32 {
        self.two_f
    }

    /// The operator `T_KQ`.
    pub fn op(&self, k: u32, q: i32) -> &CMatrix {
        assert!(k <= self.k_max() && q.unsigned_abs() <= k, "invalid (K, Q)");
        &self.ops[Self::index(k, q)]
    }

    fn index(k: u32, q: i32) -> usize {
        (k * k) as usize + (q + k as i32) as usize
    }

    /// Iterates `(K, Q, T_KQ)` in index order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, i32, &CMatrix)> + '_ {
        (0..=self.k_max()).flat_map(move |k| {
            (-(k as i32)..=k as i32).map(move |q| (k, q, &self.ops[Self::index(k, q)]))
        })
    }
}

/// Multipole coefficients `ρ_KQ = Tr[ρ T†_KQ]` of one state.
#[derive(Debug, Clone)]
pub struct MultipoleSet {
    two_f: u32,
    coefficients: Vec<C64>,
}

impl MultipoleSet {
    pub fn two_f(&self) -> u32 {
        self.two_f
    }

    pub fn k_max(&self) -> u32 {
        self.two_f
    }

    pub fn get(&self, k: u32, q: i32) -> C64 {
        assert!(k <= self.k_max() && q.unsigned_abs() <= k, "invalid (K, Q)");
        self.coefficients[SphericalTensorBasis::index(k, q)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, i32, C64)> + '_ {
        (0..=self.k_max()).flat_map(move |k| {
            (-(k as i32)..=k as i32)
                .map(move |q| (k, q, self.coefficients[SphericalTensorBasis::index(k, q)]))
        })
    }

    /// Rebuilds the density matrix `Σ ρ_KQ T_KQ`.
    pub fn reassemble(&self) -> CMatrix {
        let sys = SpinSystem::from_two_f(self.two_f).expect("valid spin");
        let basis = SphericalTensorBasis::for_spin(sys);
        let d = sys.dimension();
        let mut out = CMatrix::zeros(d, d);
        for (k, q, t) in basis.iter() {
            let c = self.get(k, q);
            out += t * c;
        }
        out
    }
}

/// Expands a state in the spherical-tensor basis.
pub fn state_multipoles(rho: &DensityMatrix) -> MultipoleSet {
    let sys = rho.spin_system();
    let basis = SphericalTensorBasis::for_spin(sys);
    let coefficients = basis
        .iter()
        .map(|(_, _, t)| {
            // Tr[ρ T†] = Σ_ij ρ_ij conj(T_ij)
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..rho.dim() {
                for j in 0..rho.dim() {
                    acc += rho.entry(i, j) * t[(i, j)].conj();
                }
            }
            acc
        })
        .collect();
    MultipoleSet {
        two_f: sys.two_f(),
        coefficients,
    }
}
