//! The reconstruction engine: forward model, measurement-matrix assembly,
//! conditioning diagnostics, Moore-Penrose pseudoinverse inversion, and the
//! positivity-constrained `ρ = TT†` least-squares fit.
//!
//! A Stern-Gerlach measurement along axis `k` observes the populations
//!
//! ```text
//! π_m⁽ᵏ⁾ = ⟨m| R⁽ᵏ⁾† ϱ R⁽ᵏ⁾ |m⟩ = Σ_{i,j} R⁽ᵏ⁾*_{im} R⁽ᵏ⁾_{jm} ϱ_ij ,
//! ```
//!
//! which stacked over all axes reads `π = M ρ⃗`. The pseudoinverse
//!
//! ```text
//! M⁺ = Σ_{i=1}^R λ_i^{−1/2} w_i v_i†
//! ```
//!
//! (with `λ_i, w_i` the nonzero eigenpairs of `M†M` and `v_i` the matching
//! eigenvectors of `M M†`) gives the least-squares solution `ρ⃗ = M⁺ π`.
//! Noise can push that solution outside the physical state space, so the
//! final answer comes from fitting `ρ = TT†` — Hermitian, unit-trace and
//! positive semi-definite by construction — to the measured populations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityMatrix, DensityError};
use crate::linalg::{hermitian_eigen_desc, hermitize, hermiticity_deviation, trace_re};
use crate::spin::{self, MeasurementAxis, SpinSystem};
use crate::{C64, CMatrix, CVector};

mod fit;

pub use fit::{population_model, FitOptions, FitReport};

/// Relative eigenvalue threshold used for rank decisions unless overridden.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-10;

/// Polar angle of the default measurement cone.
pub const DEFAULT_CONE_POLAR_DEG: f64 = 82.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TomographyError {
    #[error("axis set is empty")]
    EmptyAxisSet,
    #[error("population {value} at index {index} is negative")]
    NegativePopulation { index: usize, value: f64 },
    #[error("populations sum to zero")]
    ZeroPopulations,
    #[error(
        "record {index} has {got} populations, expected {expected} for dimension {expected}"
    )]
    WrongPopulationCount {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("expected one record per axis ({expected}), got {got}; first missing axis index {first_missing}")]
    RecordAxisMismatch {
        expected: usize,
        got: usize,
        first_missing: usize,
    },
    #[error("rank threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error(
        "measurement matrix is rank deficient: rank {} < {needed} at relative threshold {:.1e}",
        report.rank,
        report.threshold
    )]
    RankDeficient {
        report: ConditioningReport,
        needed: usize,
    },
    #[error("all eigenvalues were clipped; matrix has no positive spectral weight")]
    AllEigenvaluesClipped,
    #[error("TT^dagger factorization failed: {0}")]
    FactorizationFailed(String),
    #[error(transparent)]
    State(#[from] DensityError),
}

/// An ordered set of quantization directions.
///
/// Order matters: measurement records refer to axes by index. Whether a set
/// suffices for full reconstruction is a property of the assembled
/// measurement matrix, checked by [`conditioning`] at use, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSet {
    axes: Vec<MeasurementAxis>,
}

impl AxisSet {
    pub fn new(axes: Vec<MeasurementAxis>) -> Result<Self, TomographyError> {
        if axes.is_empty() {
            return Err(TomographyError::EmptyAxisSet);
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[MeasurementAxis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    /// Rotation operators `R⁽ᵏ⁾` carrying `ẑ` onto each axis.
    pub fn rotations(&self, sys: SpinSystem) -> Vec<CMatrix> {
        self.axes
            .iter()
            .map(|&axis| spin::rotation_operator(sys, spin::axis_to_rotation(axis)))
            .collect()
    }
}

/// The default `4F+1`-axis measurement set: one pole axis plus `4F` axes on
/// an 82° cone with azimuths `φ_k = 2π(k−1)/(4F+1)`.
///
/// The azimuths advance on the `(4F+1)`-point uniform grid rather than
/// closing the circle over the `4F` cone axes: `4F` azimuths with spacing
/// `2π/4F` alias the two highest azimuthal orders `Q = ±2F` onto each other
/// and lose one Hermitian degree of freedom, leaving the measurement matrix
/// rank `(2F+1)² − 1`. The `(4F+1)`-grid spacing keeps all orders distinct
/// and the matrix full rank for every spin (verify with [`conditioning`]).
pub fn default_axis_set(sys: SpinSystem) -> AxisSet {
    let n_cone = 2 * sys.two_f() as usize; // 4F
    let total = n_cone + 1;
    let polar = DEFAULT_CONE_POLAR_DEG.to_radians();
    let mut axes = Vec::with_capacity(total);
    axes.push(MeasurementAxis::pole());
    for k in 0..n_cone {
        let azimuth = std::f64::consts::TAU * k as f64 / total as f64;
        axes.push(MeasurementAxis::new(polar, azimuth).expect("cone polar angle valid"));
    }
    AxisSet { axes }
}

/// Populations observed along one axis, normalized on ingestion.
///
/// Raw inputs may be unnormalized counts; the pre-normalization sum is kept
/// as provenance for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    axis_index: usize,
    populations: Vec<f64>,
    raw_sum: f64,
}

impl MeasurementRecord {
    /// Normalizes raw populations (counts allowed) for one axis.
    pub fn new(axis_index: usize, raw: &[f64]) -> Result<Self, TomographyError> {
        for (index, &value) in raw.iter().enumerate() {
            if value < 0.0 {
                return Err(TomographyError::NegativePopulation { index, value });
            }
        }
        let raw_sum: f64 = raw.iter().sum();
        if raw_sum <= 0.0 {
            return Err(TomographyError::ZeroPopulations);
        }
        Ok(Self {
            axis_index,
            populations: raw.iter().map(|p| p / raw_sum).collect(),
            raw_sum,
        })
    }

    pub fn axis_index(&self) -> usize {
        self.axis_index
    }

    /// Normalized populations, ascending `m`.
    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    /// Sum of the raw inputs before normalization.
    pub fn raw_sum(&self) -> f64 {
        self.raw_sum
    }
}

/// Predicted populations for every axis: the diagonal of `R† ρ R` per axis.
pub fn forward_model(rho: &DensityMatrix, axes: &AxisSet) -> Vec<MeasurementRecord> {
    let sys = rho.spin_system();
    let d = sys.dimension();
    axes.rotations(sys)
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let rotated = r.adjoint() * rho.matrix() * &r;
            let mut pops = Vec::with_capacity(d);
            for m in 0..d {
                let p = rotated[(m, m)];
                debug_assert!(p.im.abs() < 1e-12, "population has imaginary part {}", p.im);
                debug_assert!(p.re > -1e-12, "population {} below zero", p.re);
                pops.push(p.re.max(0.0));
            }
            MeasurementRecord::new(k, &pops).expect("forward-model populations are valid")
        })
        .collect()
}

/// The stacked linear map `π = M ρ⃗`.
///
/// Row `(k, m)` (index `k·d + m`), column `(i, j)` (index `i·d + j`) holds
/// `R⁽ᵏ⁾*_{im} R⁽ᵏ⁾_{jm}`, so applying `M` to the row-major vectorization of
/// `ρ` reproduces the forward model.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    entries: CMatrix,
    dim: usize,
}

impl MeasurementMatrix {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Hilbert-space dimension `d` (columns number `d²`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_axes(&self) -> usize {
        self.entries.nrows() / self.dim
    }

    /// Applies the map to a density matrix: the stacked populations.
    pub fn apply(&self, rho: &CMatrix) -> Vec<f64> {
        let d = self.dim;
        let vec = CVector::from_fn(d * d, |idx, _| rho[(idx / d, idx % d)]);
        let out = &self.entries * vec;
        out.iter().map(|z| z.re).collect()
    }
}

/// Assembles the measurement matrix of an axis set.
pub fn build_measurement_matrix(axes: &AxisSet, sys: SpinSystem) -> MeasurementMatrix {
    let d = sys.dimension();
    let rotations = axes.rotations(sys);
    let mut entries = CMatrix::zeros(axes.len() * d, d * d);
    for (k, r) in rotations.iter().enumerate() {
        for m in 0..d {
            let row = k * d + m;
            for i in 0..d {
                for j in 0..d {
                    entries[(row, i * d + j)] = r[(i, m)].conj() * r[(j, m)];
                }
            }
        }
    }
    MeasurementMatrix { entries, dim: d }
}

/// Spectrum of `M†M` and the rank decision at a relative threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    /// Eigenvalues of `M†M`, descending, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues above `threshold · λ_max`.
    pub rank: usize,
    /// The relative threshold used.
    pub threshold: f64,
}

impl ConditioningReport {
    /// Whether the spectrum supports full reconstruction in dimension `d`.
    pub fn is_full_rank(&self, dim: usize) -> bool {
        self.rank == dim * dim
    }
}

/// Eigenvalues of `M†M` (Hermitian eigendecomposition) and the rank at
/// `rel_threshold · λ_max`.
pub fn conditioning(
    matrix: &MeasurementMatrix,
    rel_threshold: f64,
) -> Result<ConditioningReport, TomographyError> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(TomographyError::InvalidThreshold(rel_threshold));
    }
    let gram = matrix.entries.adjoint() * &matrix.entries;
    let (vals, _) = hermitian_eigen_desc(gram);
    let eigenvalues: Vec<f64> = vals.iter().map(|&x| x.max(0.0)).collect();
    let cutoff = rel_threshold * eigenvalues[0];
    let rank = eigenvalues.iter().take_while(|&&x| x > cutoff).count();
    Ok(ConditioningReport {
        eigenvalues,
        rank,
        threshold: rel_threshold,
    })
}

/// The linear (pseudoinverse) solution with its diagnostics.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    /// Hermitian, unit-trace estimate; possibly not positive semi-definite.
    pub matrix: CMatrix,
    pub conditioning: ConditioningReport,
    /// Max-abs deviation from Hermiticity before symmetrization.
    pub hermiticity_deviation: f64,
    /// `‖M ρ⃗ − π‖₂` of the returned estimate.
    pub residual_norm: f64,
}

/// Checks that records cover every axis exactly once, in axis order, with
/// the right number of populations.
fn check_records(
    records: &[MeasurementRecord],
    axes: &AxisSet,
    sys: SpinSystem,
) -> Result<(), TomographyError> {
    let d = sys.dimension();
    if records.len() != axes.len() {
        let have: std::collections::HashSet<usize> =
            records.iter().map(|r| r.axis_index).collect();
        let first_missing = (0..axes.len()).find(|k| !have.contains(k)).unwrap_or(0);
        return Err(TomographyError::RecordAxisMismatch {
            expected: axes.len(),
            got: records.len(),
            first_missing,
        });
    }
    for (index, record) in records.iter().enumerate() {
        if record.populations.len() != d {
            return Err(TomographyError::WrongPopulationCount {
                index,
                got: record.populations.len(),
                expected: d,
            });
        }
    }
    Ok(())
}

fn stack_populations(records: &[MeasurementRecord], axes: &AxisSet, d: usize) -> CVector {
    let mut pi = CVector::zeros(axes.len() * d);
    for record in records {
        for (m, &p) in record.populations.iter().enumerate() {
            pi[record.axis_index * d + m] = C64::new(p, 0.0);
        }
    }
    pi
}

/// Least-squares inversion `ρ⃗ = M⁺ π` via the spectral pseudoinverse.
///
/// `M⁺` is assembled from the eigenpairs of `M†M` exactly as written above:
/// `w_i` from the Hermitian eigendecomposition, `v_i = M w_i / √λ_i`. The
/// raw solution is symmetrized (`(ρ + ρ†)/2`, deviation recorded) and trace
/// normalized; both are no-ops up to rounding for normalized inputs. The
/// result can still have negative eigenvalues under noise — it is
/// deliberately *not* a [`DensityMatrix`]; hand it to [`ml_reconstruct`] or
/// [`project_to_physical`].
///
/// Refuses to invert a rank-deficient matrix and returns the conditioning
/// report inside the error instead.
pub fn pseudoinverse_reconstruct(
    records: &[MeasurementRecord],
    axes: &AxisSet,
    sys: SpinSystem,
    rel_threshold: f64,
) -> Result<LinearSolution, TomographyError> {
    check_records(records, axes, sys)?;
    let d = sys.dimension();
    let matrix = build_measurement_matrix(axes, sys);
    let report = conditioning(&matrix, rel_threshold)?;
    if !report.is_full_rank(d) {
        return Err(TomographyError::RankDeficient {
            report,
            needed: d * d,
        });
    }

    let gram = matrix.entries.adjoint() * &matrix.entries;
    let (vals, vecs) = hermitian_eigen_desc(gram);
    let pi = stack_populations(records, axes, d);

    let mut solution = CVector::zeros(d * d);
    for i in 0..report.rank {
        let lambda = vals[i];
        let w = vecs.column(i);
        // v_i = M w_i / sqrt(λ_i) is the matching eigenvector of M M†.
        let v = &matrix.entries * w;
        let coefficient: C64 = v
            .iter()
            .zip(pi.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            / lambda; // (v_i† π)/√λ_i · 1/√λ_i
        for (idx, wi) in w.iter().enumerate() {
            solution[idx] += coefficient * wi;
        }
    }

    let mut rho = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            rho[(i, j)] = solution[i * d + j];
        }
    }
    let dev = hermiticity_deviation(&rho);
    let mut rho = hermitize(&rho);
    let trace = trace_re(&rho);
    if trace.abs() > 1e-12 {
        rho.scale_mut(1.0 / trace);
    }

    let predicted = matrix.apply(&rho);
    let residual_norm = predicted
        .iter()
        .zip(pi.iter())
        .map(|(a, b)| (a - b.re) * (a - b.re))
        .sum::<f64>()
        .sqrt();

    Ok(LinearSolution {
        matrix: rho,
        conditioning: report,
        hermiticity_deviation: dev,
        residual_norm,
    })
}

/// Nearest physical state by spectral clipping: eigenvalues below zero are
/// clipped and the spectrum renormalized to unit trace.
pub fn project_to_physical(hermitian: &CMatrix) -> Result<DensityMatrix, TomographyError> {
    let (vals, vecs) = hermitian_eigen_desc(hermitize(hermitian));
    let clipped: Vec<f64> = vals.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(TomographyError::AllEigenvaluesClipped);
    }
    let d = vals.len();
    let mut rho = CMatrix::zeros(d, d);
    for k in 0..d {
        if clipped[k] == 0.0 {
            continue;
        }
        let col = vecs.column(k);
        let weight = C64::new(clipped[k] / total, 0.0);
        for i in 0..d {
            for j in 0..d {
                rho[(i, j)] += weight * col[i] * col[j].conj();
            }
        }
    }
    Ok(DensityMatrix::trusted(rho))
}

/// The lower-triangular factor of `ρ = TT†` with real diagonal and unit
/// Frobenius norm: the parameterization that makes every candidate state
/// physical during fitting.
///
/// The factor has `d` real diagonal entries plus `d(d−1)/2` complex
/// strictly-lower entries: `d²` raw coordinates constrained to the unit
/// sphere, i.e. `(2F+1)² − 1` independent degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct TParameters {
    matrix: CMatrix,
}

impl TParameters {
    /// Dimension `d` of the factor.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Independent real degrees of freedom: `d² − 1`.
    pub fn dof(&self) -> usize {
        self.dim() * self.dim() - 1
    }

    /// The normalized lower-triangular factor.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Raw coordinates: diagonal first, then `(re, im)` pairs of the
    /// strictly-lower entries, row by row. Unit Euclidean norm.
    pub fn to_vector(&self) -> Vec<f64> {
        let d = self.dim();
        let mut v = Vec::with_capacity(d * d);
        for i in 0..d {
            v.push(self.matrix[(i, i)].re);
        }
        for i in 0..d {
            for j in 0..i {
                v.push(self.matrix[(i, j)].re);
                v.push(self.matrix[(i, j)].im);
            }
        }
        v
    }

    /// Rebuilds a factor from raw coordinates (normalized here).
    pub fn from_vector(dim: usize, coords: &[f64]) -> Result<Self, TomographyError> {
        if coords.len() != dim * dim {
            return Err(TomographyError::FactorizationFailed(format!(
                "expected {} coordinates, got {}",
                dim * dim,
                coords.len()
            )));
        }
        let norm = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(TomographyError::FactorizationFailed(
                "zero parameter vector".into(),
            ));
        }
        let mut matrix = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            matrix[(i, i)] = C64::new(coords[i] / norm, 0.0);
        }
        let mut idx = dim;
        for i in 0..dim {
            for j in 0..i {
                matrix[(i, j)] = C64::new(coords[idx] / norm, coords[idx + 1] / norm);
                idx += 2;
            }
        }
        Ok(Self { matrix })
    }

    /// A uniformly random direction on the parameter sphere.
    pub fn random<R: rand::Rng + ?Sized>(sys: SpinSystem, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let d = sys.dimension();
        loop {
            let coords: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(rng)).collect();
            if let Ok(t) = Self::from_vector(d, &coords) {
                return t;
            }
        }
    }
}

/// Factorizes a state as `ρ = TT†` (Cholesky with `ε = 1e−12` diagonal
/// regularization so rank-deficient states stay factorizable), normalized to
/// unit Frobenius norm.
pub fn t_from_rho(rho: &DensityMatrix) -> Result<TParameters, TomographyError> {
    let d = rho.dim();
    let regularized = rho.matrix() + CMatrix::identity(d, d).scale(1e-12);
    let chol = regularized.cholesky().ok_or_else(|| {
        TomographyError::FactorizationFailed("Cholesky of regularized state failed".into())
    })?;
    let mut l = chol.l();
    let norm = l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    l.iter_mut().for_each(|z| *z /= norm);
    Ok(TParameters { matrix: l })
}

/// The always-physical state `TT†` (unit trace by the norm constraint).
pub fn rho_from_t(t: &TParameters) -> DensityMatrix {
    let rho = t.matrix() * t.matrix().adjoint();
    let trace = trace_re(&rho);
    // Frobenius normalization of T already fixes the trace; guard rounding.
    DensityMatrix::trusted(rho.scale(1.0 / trace))
}

/// Full reconstruction result: the linear solution, whether it was already
/// physical, and the constrained fit.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub linear: LinearSolution,
    /// Set when the pseudoinverse output already passed state validation,
    /// i.e. the constrained fit was only a confirmation.
    pub linear_physical: bool,
    pub state: DensityMatrix,
    pub fit: FitReport,
}

/// Constrained maximum-quality fit: minimizes the summed squared population
/// residuals over the `TT†` parameterization.
///
/// Initialized from the spectral projection of the pseudoinverse solution;
/// refuses rank-deficient axis sets. The report carries residuals,
/// iteration count and the convergence flag — when the iteration budget
/// runs out the best iterate is still returned, flagged unconverged.
pub fn ml_reconstruct(
    records: &[MeasurementRecord],
    axes: &AxisSet,
    sys: SpinSystem,
    options: &FitOptions,
) -> Result<(DensityMatrix, FitReport), TomographyError> {
    let full = reconstruct(records, axes, sys, options)?;
    Ok((full.state, full.fit))
}

/// Runs the whole pipeline and reports both solutions.
pub fn reconstruct(
    records: &[MeasurementRecord],
    axes: &AxisSet,
    sys: SpinSystem,
    options: &FitOptions,
) -> Result<Reconstruction, TomographyError> {
    let linear = pseudoinverse_reconstruct(records, axes, sys, options.rank_threshold)?;
    let linear_physical = DensityMatrix::validate(linear.matrix.clone()).is_ok();
    let initial = project_to_physical(&linear.matrix)?;
    let t0 = t_from_rho(&initial)?;

    let d = sys.dimension();
    let pi = stack_populations(records, axes, d);
    let target: Vec<f64> = pi.iter().map(|z| z.re).collect();
    let rotations = axes.rotations(sys);
    let (state, fit) = fit::levenberg_marquardt(t0, &rotations, &target, options);

    assert!(
        fit.final_cost <= fit.initial_cost * (1.0 + 1e-12) + f64::EPSILON,
        "fit must not increase the cost: {} -> {}",
        fit.initial_cost,
        fit.final_cost
    );

    Ok(Reconstruction {
        linear,
        linear_physical,
        state,
        fit,
    })
}

/// Closed-form spin-1/2 inversion from populations along `x̂, ŷ, ẑ`.
///
/// For `F = 1/2` the populations along a direction give the Bloch component
/// directly, `⟨σ_u⟩ = π₊ − π₋`, and `ρ = (I + r·σ)/2`. Independent oracle
/// for the general pipeline at the smallest spin.
pub fn bloch_inversion(records: &[MeasurementRecord]) -> Result<CMatrix, TomographyError> {
    if records.len() != 3 || records.iter().any(|r| r.populations.len() != 2) {
        return Err(TomographyError::RecordAxisMismatch {
            expected: 3,
            got: records.len(),
            first_missing: 0,
        });
    }
    // records in axis order x, y, z; populations ascending (m = −1/2, +1/2)
    let comp = |r: &MeasurementRecord| r.populations[1] - r.populations[0];
    let (rx, ry, rz) = (comp(&records[0]), comp(&records[1]), comp(&records[2]));
    // Pauli matrices in the ascending basis: σz = diag(−1, +1),
    // σx = [[0,1],[1,0]], σy = [[0,i],[−i,0]].
    let mut rho = CMatrix::zeros(2, 2);
    rho[(0, 0)] = C64::new((1.0 - rz) / 2.0, 0.0);
    rho[(1, 1)] = C64::new((1.0 + rz) / 2.0, 0.0);
    rho[(0, 1)] = C64::new(rx / 2.0, ry / 2.0);
    rho[(1, 0)] = C64::new(rx / 2.0, -ry / 2.0);
    Ok(rho)
}

/// The `x̂, ŷ, ẑ` axis set used by the spin-1/2 closed form.
pub fn bloch_axis_set() -> AxisSet {
    use std::f64::consts::FRAC_PI_2;
    AxisSet {
        axes: vec![
            MeasurementAxis::new(FRAC_PI_2, 0.0).expect("x axis"),
            MeasurementAxis::new(FRAC_PI_2, FRAC_PI_2).expect("y axis"),
            MeasurementAxis::pole(),
        ],
    }
}
