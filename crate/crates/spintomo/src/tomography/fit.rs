//! Derivative-based least-squares fit of the `TT†` parameterization.
//!
//! The model populations are quartic in the entries of `T`, so the Jacobian
//! with respect to the real parameter vector is exact and cheap: with
//! `u = R⁽ᵏ⁾|m⟩`, `g = T†u` and `s = ‖T‖²_F`, one population is
//! `π = ‖g‖²/s` and a parameter `θ_α` perturbing `T` by `c·E_ab`
//! (`c ∈ {1, i}`) contributes
//!
//! ```text
//! ∂π/∂θ_α = (2 Re[c·conj(u_a)·g_b] · s − ‖g‖² · 2θ_α) / s²  .
//! ```
//!
//! A Levenberg-Marquardt loop drives the summed squared population
//! residuals down; `T` is renormalized to unit Frobenius norm after every
//! accepted step, which keeps the trace constraint exact and, because the
//! model divides by `s`, never changes the cost. Rejected steps only cost a
//! population evaluation — the Jacobian and its normal matrix are reused
//! until a step is accepted.

use nalgebra::{DMatrix, DVector};

use super::{rho_from_t, AxisSet, TParameters, DEFAULT_RANK_THRESHOLD};
use crate::density::DensityMatrix;
use crate::spin::SpinSystem;
use crate::{C64, CMatrix};

/// Knobs of the constrained fit. The defaults are the contract the rest of
/// the crate (and the acceptance suite) is written against.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Iteration budget (attempted steps).
    pub max_iterations: usize,
    /// Converged when an accepted step changes the cost by less than this,
    /// relatively.
    pub relative_cost_tol: f64,
    /// Converged when the gradient norm falls below this.
    pub gradient_tol: f64,
    /// Relative eigenvalue threshold for the rank decision of the linear
    /// stage feeding the initial guess.
    pub rank_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            relative_cost_tol: 1e-12,
            gradient_tol: 1e-10,
            rank_threshold: DEFAULT_RANK_THRESHOLD,
        }
    }
}

/// Outcome of one fit: residuals, iteration count and convergence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Cost at the initial parameter vector.
    pub initial_cost: f64,
    /// Cost at the returned parameter vector; never above `initial_cost`.
    pub final_cost: f64,
    /// Attempted steps consumed.
    pub iterations: usize,
    /// Whether a convergence criterion fired before the budget ran out.
    pub converged: bool,
    /// Gradient norm at the returned point.
    pub gradient_norm: f64,
}

/// Measurement vectors `u = R⁽ᵏ⁾|m⟩` for every `(k, m)` row.
fn measurement_vectors(rotations: &[CMatrix]) -> Vec<Vec<C64>> {
    let mut out = Vec::new();
    for r in rotations {
        let d = r.nrows();
        for m in 0..d {
            out.push((0..d).map(|i| r[(i, m)]).collect());
        }
    }
    out
}

pub(super) struct Model {
    us: Vec<Vec<C64>>,
    dim: usize,
}

impl Model {
    pub(super) fn new(rotations: &[CMatrix], dim: usize) -> Self {
        Self {
            us: measurement_vectors(rotations),
            dim,
        }
    }

    fn n_rows(&self) -> usize {
        self.us.len()
    }

    fn n_params(&self) -> usize {
        self.dim * self.dim
    }

    /// `g = T†u` at the raw (unnormalized) coordinate scale.
    fn g_vector(&self, tm: &CMatrix, scale: f64, u: &[C64], g: &mut [C64]) {
        let d = self.dim;
        for (b, gb) in g.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for a in b..d {
                // T is lower triangular: T[a][b] nonzero only for a >= b
                acc += tm[(a, b)].conj() * u[a];
            }
            *gb = acc * scale;
        }
    }

    /// Populations only; the cheap path for candidate steps.
    fn populations(&self, theta: &[f64]) -> DVector<f64> {
        let t = TParameters::from_vector(self.dim, theta).expect("fit iterate stays nonzero");
        let norm_sq: f64 = theta.iter().map(|x| x * x).sum();
        let scale = norm_sq.sqrt();
        let mut g = vec![C64::new(0.0, 0.0); self.dim];
        DVector::from_iterator(
            self.n_rows(),
            self.us.iter().map(|u| {
                self.g_vector(t.matrix(), scale, u, &mut g);
                g.iter().map(|z| z.norm_sqr()).sum::<f64>() / norm_sq
            }),
        )
    }

    /// Populations and the exact Jacobian at raw coordinates `theta`.
    pub(super) fn eval(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let t = TParameters::from_vector(d, theta).expect("fit iterate stays nonzero");
        let tm = t.matrix();
        let norm_sq: f64 = theta.iter().map(|x| x * x).sum();
        let scale = norm_sq.sqrt();

        let mut pops = DVector::zeros(self.n_rows());
        let mut jac = DMatrix::zeros(self.n_rows(), self.n_params());
        let mut g = vec![C64::new(0.0, 0.0); d];
        for (row, u) in self.us.iter().enumerate() {
            self.g_vector(tm, scale, u, &mut g);
            let p_raw: f64 = g.iter().map(|z| z.norm_sqr()).sum();
            pops[row] = p_raw / norm_sq;

            let inv_s2 = 1.0 / (norm_sq * norm_sq);
            // diagonal parameters (a = b = i, c = 1)
            for i in 0..d {
                let dpr = 2.0 * (u[i].conj() * g[i]).re;
                jac[(row, i)] = (dpr * norm_sq - p_raw * 2.0 * theta[i]) * inv_s2;
            }
            // strictly-lower parameters, row-major (i > j), re then im
            let mut col = d;
            for i in 0..d {
                for j in 0..i {
                    let base = u[i].conj() * g[j];
                    jac[(row, col)] =
                        (2.0 * base.re * norm_sq - p_raw * 2.0 * theta[col]) * inv_s2;
                    jac[(row, col + 1)] =
                        (-2.0 * base.im * norm_sq - p_raw * 2.0 * theta[col + 1]) * inv_s2;
                    col += 2;
                }
            }
        }
        (pops, jac)
    }
}

/// The population model and its exact Jacobian at one parameter point.
///
/// Rows follow `(k, m)` ordering (axis-major), columns the raw coordinate
/// order of [`TParameters::to_vector`]. Beyond powering the fit, the
/// Jacobian at the solution is the standard ingredient for error
/// propagation, and it is straightforward to cross-check against central
/// finite differences of the populations.
pub fn population_model(
    t: &TParameters,
    axes: &AxisSet,
    sys: SpinSystem,
) -> (Vec<f64>, DMatrix<f64>) {
    let model = Model::new(&axes.rotations(sys), sys.dimension());
    let (pops, jac) = model.eval(&t.to_vector());
    (pops.iter().copied().collect(), jac)
}

/// Minimizes `Σ (π_measured − π_model(TT†))²` from the given start.
pub(super) fn levenberg_marquardt(
    start: TParameters,
    rotations: &[CMatrix],
    target: &[f64],
    options: &FitOptions,
) -> (DensityMatrix, FitReport) {
    let model = Model::new(rotations, start.dim());
    let target = DVector::from_column_slice(target);

    let mut theta = start.to_vector();
    let (pops, mut jac) = model.eval(&theta);
    let mut residual = &pops - &target;
    let mut cost = residual.norm_squared();
    let initial_cost = cost;

    let mut normal = jac.tr_mul(&jac);
    let mut gradient = jac.tr_mul(&residual);
    let mut gradient_norm = gradient.norm();

    let mut damping = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        iterations += 1;
        if gradient_norm < options.gradient_tol {
            converged = true;
            break;
        }

        let mut damped = normal.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += damping;
        }
        let step = match damped.cholesky() {
            Some(chol) => chol.solve(&(-&gradient)),
            None => {
                damping *= 10.0;
                continue;
            }
        };

        let mut candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
        // renormalize after every step; pure gauge for the scale-invariant
        // cost, but keeps the coordinates on the constraint sphere
        let norm = candidate.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-150 {
            damping *= 10.0;
            continue;
        }
        candidate.iter_mut().for_each(|x| *x /= norm);

        let new_pops = model.populations(&candidate);
        let new_residual = &new_pops - &target;
        let new_cost = new_residual.norm_squared();

        if new_cost < cost {
            let relative_drop = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
            theta = candidate;
            residual = new_residual;
            cost = new_cost;
            let (_, new_jac) = model.eval(&theta);
            jac = new_jac;
            normal = jac.tr_mul(&jac);
            gradient = jac.tr_mul(&residual);
            gradient_norm = gradient.norm();
            damping = (damping * 0.3).max(1e-14);
            if relative_drop < options.relative_cost_tol {
                converged = true;
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e14 {
                // no descent direction left at this precision
                break;
            }
        }
    }

    let t = TParameters::from_vector(model.dim, &theta).expect("final iterate nonzero");
    let state = rho_from_t(&t);
    (
        state,
        FitReport {
            initial_cost,
            final_cost: cost,
            iterations,
            converged,
            gradient_norm,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density;
    use crate::spin::SpinSystem;
    use crate::tomography::{default_axis_set, forward_model, AxisSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn jacobian_by_central_differences(model: &Model, theta: &[f64], step: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(model.n_rows(), model.n_params());
        for c in 0..model.n_params() {
            let mut plus = theta.to_vec();
            plus[c] += step;
            let mut minus = theta.to_vec();
            minus[c] -= step;
            let pp = model.populations(&plus);
            let pm = model.populations(&minus);
            for r in 0..model.n_rows() {
                out[(r, c)] = (pp[r] - pm[r]) / (2.0 * step);
            }
        }
        out
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let sys = SpinSystem::from_two_f(8).unwrap();
        let axes = default_axis_set(sys);
        let model = Model::new(&axes.rotations(sys), 9);

        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..20 {
            let t = crate::tomography::TParameters::random(sys, &mut rng);
            let theta = t.to_vector();
            let (_, analytic) = model.eval(&theta);
            let numeric = jacobian_by_central_differences(&model, &theta, 1e-6);
            let scale = numeric.amax().max(1e-30);
            let dev = (&analytic - &numeric).amax() / scale;
            assert!(dev < 1e-5, "relative Jacobian deviation {dev:.2e}");
        }
    }

    #[test]
    fn population_paths_agree() {
        let sys = SpinSystem::from_two_f(8).unwrap();
        let axes = default_axis_set(sys);
        let model = Model::new(&axes.rotations(sys), 9);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let t = crate::tomography::TParameters::random(sys, &mut rng);
        let theta = t.to_vector();
        let fast = model.populations(&theta);
        let (full, _) = model.eval(&theta);
        assert!((fast - full).amax() < 1e-15);
    }

    #[test]
    fn public_model_matches_forward_model() {
        // The diagnostic surface must predict exactly what the forward
        // model measures on the state TT†.
        let sys = SpinSystem::from_two_f(8).unwrap();
        let axes = default_axis_set(sys);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let rho = density::random_mixed(sys, &mut rng);
        let t = crate::tomography::t_from_rho(&rho).unwrap();
        let (pops, jac) = population_model(&t, &axes, sys);
        assert_eq!(jac.nrows(), 153);
        assert_eq!(jac.ncols(), 81);
        let records = forward_model(&crate::tomography::rho_from_t(&t), &axes);
        for (k, record) in records.iter().enumerate() {
            for (m, p) in record.populations().iter().enumerate() {
                assert!((pops[k * 9 + m] - p).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fit_from_perturbed_start_recovers_noiseless_target() {
        let sys = SpinSystem::from_two_f(2).unwrap();
        let axes = default_axis_set(sys);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let truth = density::random_mixed(sys, &mut rng);
        let records = forward_model(&truth, &axes);
        let target: Vec<f64> = records
            .iter()
            .flat_map(|r| r.populations().to_vec())
            .collect();
        let start = crate::tomography::TParameters::random(sys, &mut rng);
        let (state, report) =
            levenberg_marquardt(start, &axes.rotations(sys), &target, &FitOptions::default());
        assert!(report.final_cost < 1e-18, "final cost {}", report.final_cost);
        let f = density::fidelity(&truth, &state).unwrap();
        assert!(f > 0.99999, "fidelity {f}");
    }

    #[test]
    fn single_axis_fit_matches_observed_diagonal() {
        // Underdetermined problem: only the diagonal is constrained, and
        // the fit must still drive those residuals to zero.
        let sys = SpinSystem::from_two_f(8).unwrap();
        let axes = AxisSet::new(vec![crate::spin::MeasurementAxis::pole()]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let truth = density::random_mixed(sys, &mut rng);
        let records = forward_model(&truth, &axes);
        let target: Vec<f64> = records[0].populations().to_vec();
        let start = crate::tomography::TParameters::random(sys, &mut rng);
        let (state, report) =
            levenberg_marquardt(start, &axes.rotations(sys), &target, &FitOptions::default());
        assert!(report.final_cost < 1e-16);
        for (p, q) in state.populations().iter().zip(&target) {
            assert!((p - q).abs() < 1e-7);
        }
    }
}
