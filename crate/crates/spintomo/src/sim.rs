//! Synthetic Stern-Gerlach experiments: the population/axis noise model, a
//! simplified time-of-flight trace simulator with its peak-fitting
//! extractor, and a seeded Monte-Carlo fidelity harness.
//!
//! The noise model mirrors the two dominant error sources of a real
//! apparatus: a few percent of multiplicative noise on each measured
//! population, and jitter in the direction of the bias field that defines
//! each quantization axis. Axis jitter is applied to the *data generation*
//! while the reconstruction still assumes the nominal axes — a systematic
//! error, not extra white noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{self, DensityMatrix};
use crate::spin::MeasurementAxis;
use crate::tomography::{
    forward_model, ml_reconstruct, AxisSet, FitOptions, MeasurementRecord, TomographyError,
};

/// Standard gravitational acceleration, m/s².
pub const STANDARD_GRAVITY: f64 = 9.806_65;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Mass of a cesium-133 atom, kg.
pub const CESIUM_MASS: f64 = 2.206_946_9e-25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("geometry field {name} must be positive, got {value}")]
    NonPositiveGeometry { name: &'static str, value: f64 },
    #[error("time-of-flight fit diverged: {reason}")]
    FitDiverged { reason: String },
    #[error("trace and geometry disagree: {0}")]
    IncompatibleTrace(String),
}

/// Measurement noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Relative standard deviation of multiplicative population noise.
    pub population_rel_sigma: f64,
    /// Standard deviation of the axis tilt angle, radians.
    pub axis_jitter_sigma: f64,
    /// Master seed; everything derived from a `NoiseModel` is reproducible.
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            population_rel_sigma: 0.03,
            axis_jitter_sigma: 0.5f64.to_radians(),
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

// Distinct ChaCha streams per purpose so the same master seed never reuses
// randomness between the record, axis, and per-trial generators.
const STREAM_RECORDS: u64 = 1;
const STREAM_AXES: u64 = 2;
const STREAM_TRIAL_BASE: u64 = 16;

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Multiplies every population by `1 + ε`, `ε ~ N(0, σ_rel)`, clips at zero
/// and renormalizes per axis. Deterministic for a fixed seed.
pub fn perturb_records(records: &[MeasurementRecord], noise: &NoiseModel) -> Vec<MeasurementRecord> {
    let mut rng = stream_rng(noise.seed, STREAM_RECORDS);
    perturb_records_with(records, noise.population_rel_sigma, &mut rng)
}

fn perturb_records_with<R: Rng + ?Sized>(
    records: &[MeasurementRecord],
    rel_sigma: f64,
    rng: &mut R,
) -> Vec<MeasurementRecord> {
    if rel_sigma == 0.0 {
        return records.to_vec();
    }
    let normal = Normal::new(0.0, rel_sigma).expect("sigma >= 0");
    records
        .iter()
        .map(|record| {
            let noisy: Vec<f64> = record
                .populations()
                .iter()
                .map(|p| (p * (1.0 + normal.sample(rng))).max(0.0))
                .collect();
            MeasurementRecord::new(record.axis_index(), &noisy)
                .expect("clipped populations stay valid")
        })
        .collect()
}

/// Tilts every axis direction by `|N(0, σ)|` radians in a uniformly random
/// azimuth about itself: the measured data then comes from axes that differ
/// from the ones the reconstruction assumes.
pub fn perturb_axes(axes: &AxisSet, noise: &NoiseModel) -> AxisSet {
    let mut rng = stream_rng(noise.seed, STREAM_AXES);
    perturb_axes_with(axes, noise.axis_jitter_sigma, &mut rng)
}

fn perturb_axes_with<R: Rng + ?Sized>(axes: &AxisSet, sigma: f64, rng: &mut R) -> AxisSet {
    if sigma == 0.0 {
        return axes.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    let tilted: Vec<MeasurementAxis> = axes
        .axes()
        .iter()
        .map(|axis| {
            let n = axis.direction();
            let tilt: f64 = normal.sample(rng);
            let tilt = tilt.abs();
            let about: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            // orthonormal frame perpendicular to n
            let helper = if n.z.abs() < 0.9 {
                nalgebra::Vector3::z()
            } else {
                nalgebra::Vector3::x()
            };
            let e1 = n.cross(&helper).normalize();
            let e2 = n.cross(&e1);
            let direction =
                n * tilt.cos() + (e1 * about.cos() + e2 * about.sin()) * tilt.sin();
            MeasurementAxis::from_direction(direction).expect("tilted direction is unit")
        })
        .collect();
    AxisSet::new(tilted).expect("axis count preserved")
}

/// Time-of-flight geometry; defaults describe a cesium `F = 4` drop
/// experiment at laser-cooling temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofGeometry {
    /// Fall distance from release to the probe beam, meters.
    pub drop_height: f64,
    /// Duration of the gradient pulse, seconds.
    pub pulse_duration: f64,
    /// Magnitude of the field gradient during the pulse, tesla/meter.
    pub gradient_magnitude: f64,
    /// Bias field magnitude, tesla (defines the quantization axis; does not
    /// enter the impulsive-kick kinematics).
    pub field_magnitude: f64,
    /// Landé factor `g_F`; its sign sets which sublevels arrive early.
    pub g_factor: f64,
    /// Bohr magneton, joule/tesla.
    pub bohr_magneton: f64,
    /// Atom mass, kg.
    pub atom_mass: f64,
    /// Ensemble temperature, kelvin.
    pub temperature: f64,
}

impl Default for TofGeometry {
    fn default() -> Self {
        Self {
            drop_height: 0.069,
            pulse_duration: 0.015,
            gradient_magnitude: 1.0,
            field_magnitude: 0.01,
            g_factor: 0.25,
            bohr_magneton: BOHR_MAGNETON,
            atom_mass: CESIUM_MASS,
            temperature: 3.5e-6,
        }
    }
}

impl TofGeometry {
    fn validate(&self) -> Result<(), SimError> {
        let positives = [
            ("drop_height", self.drop_height),
            ("pulse_duration", self.pulse_duration),
            ("gradient_magnitude", self.gradient_magnitude),
            ("field_magnitude", self.field_magnitude),
            ("bohr_magneton", self.bohr_magneton),
            ("atom_mass", self.atom_mass),
            ("temperature", self.temperature),
        ];
        for (name, value) in positives {
            if !(value > 0.0) {
                return Err(SimError::NonPositiveGeometry { name, value });
            }
        }
        if self.g_factor == 0.0 {
            return Err(SimError::NonPositiveGeometry {
                name: "g_factor",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Free-fall arrival time of an unkicked atom, `√(2h/g)`.
    pub fn free_fall_time(&self) -> f64 {
        (2.0 * self.drop_height / STANDARD_GRAVITY).sqrt()
    }

    /// Arrival-time shift per unit `m`.
    ///
    /// The pulse delivers an impulsive momentum kick
    /// `−m g_F μ_B |∇B| τ`, i.e. a velocity change linear in `m`; since a
    /// velocity offset `δv` shifts the arrival time by `−δv/g`, the peak
    /// centers sit at `t_m = t_free + m·Δt` with
    /// `Δt = g_F μ_B |∇B| τ / (M g)`.
    pub fn time_shift_per_m(&self) -> f64 {
        self.g_factor * self.bohr_magneton * self.gradient_magnitude * self.pulse_duration
            / (self.atom_mass * STANDARD_GRAVITY)
    }

    /// Arrival time of sublevel `m` (`2m` supplied).
    pub fn arrival_time(&self, two_m: i32) -> f64 {
        self.free_fall_time() + f64::from(two_m) / 2.0 * self.time_shift_per_m()
    }

    /// Common Gaussian width of every peak from the thermal velocity
    /// spread, `σ_t = √(k_B T / M) / g`.
    pub fn peak_width(&self) -> f64 {
        (BOLTZMANN * self.temperature / self.atom_mass).sqrt() / STANDARD_GRAVITY
    }
}

/// A sampled arrival-time distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TofTrace {
    times: Vec<f64>,
    signal: Vec<f64>,
    /// Peak spacing divided by the peak width; below 3 the sublevels blur.
    pub separation_over_width: f64,
    /// Set when adjacent peaks are closer than three widths.
    pub peak_overlap: bool,
}

impl TofTrace {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Writes `time_s,signal` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,signal")?;
        for (t, s) in self.times.iter().zip(&self.signal) {
            writeln!(w, "{t},{s}")?;
        }
        Ok(())
    }
}

const TRACE_SAMPLES: usize = 2400;
const TRACE_PADDING_WIDTHS: f64 = 6.0;

/// Simulates the arrival-time distribution of one Stern-Gerlach shot: a sum
/// of `2F+1` Gaussian peaks at the kinematic arrival times, amplitudes
/// proportional to the populations, plus an additive noise floor of
/// `noise_floor ×` the tallest peak per sample (clipped at zero).
pub fn simulate_tof<R: Rng + ?Sized>(
    populations: &[f64],
    geometry: &TofGeometry,
    noise_floor: f64,
    rng: &mut R,
) -> Result<TofTrace, SimError> {
    geometry.validate()?;
    let d = populations.len();
    debug_assert!(
        (populations.iter().sum::<f64>() - 1.0).abs() < 1e-6,
        "populations must be normalized"
    );
    let two_f = d as i32 - 1;
    let centers: Vec<f64> = (0..d)
        .map(|i| geometry.arrival_time(-two_f + 2 * i as i32))
        .collect();
    let width = geometry.peak_width();
    let separation_over_width = geometry.time_shift_per_m().abs() / width;
    let peak_overlap = separation_over_width < 3.0;

    let t_lo = centers.iter().copied().fold(f64::INFINITY, f64::min) - TRACE_PADDING_WIDTHS * width;
    let t_hi = centers
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        + TRACE_PADDING_WIDTHS * width;
    let dt = (t_hi - t_lo) / (TRACE_SAMPLES as f64 - 1.0);

    let max_amplitude = populations.iter().copied().fold(0.0, f64::max);
    let noise = if noise_floor > 0.0 {
        Some(Normal::new(0.0, noise_floor * max_amplitude).expect("noise floor >= 0"))
    } else {
        None
    };

    let mut times = Vec::with_capacity(TRACE_SAMPLES);
    let mut signal = Vec::with_capacity(TRACE_SAMPLES);
    for i in 0..TRACE_SAMPLES {
        let t = t_lo + dt * i as f64;
        let mut s: f64 = populations
            .iter()
            .zip(&centers)
            .map(|(p, c)| p * (-((t - c) / width).powi(2) / 2.0).exp())
            .sum();
        if let Some(n) = &noise {
            s += n.sample(rng);
        }
        times.push(t);
        signal.push(s.max(0.0));
    }
    Ok(TofTrace {
        times,
        signal,
        separation_over_width,
        peak_overlap,
    })
}

/// Recovers normalized populations from a trace by nonlinear least squares:
/// Gaussians at the known kinematic centers, one shared width, free
/// non-negative amplitudes. The width is profiled out by a golden-section
/// search around the geometric value; amplitudes solve a linear system at
/// each width.
pub fn fit_tof(trace: &TofTrace, geometry: &TofGeometry) -> Result<Vec<f64>, SimError> {
    geometry.validate()?;
    if trace.is_empty() || trace.signal.iter().all(|&s| s <= 0.0) {
        return Err(SimError::FitDiverged {
            reason: "trace is empty or identically zero".into(),
        });
    }
    let t_lo = trace.times[0];
    let t_hi = trace.times[trace.len() - 1];
    let d = {
        // number of peaks whose centers fall inside the trace window
        let mut count = 0usize;
        let mut two_m = -256;
        while two_m <= 256 {
            let t = geometry.arrival_time(two_m);
            if t >= t_lo && t <= t_hi {
                count += 1;
            }
            two_m += 2;
        }
        if count == 0 {
            return Err(SimError::IncompatibleTrace(
                "no kinematic peak centers inside the trace window".into(),
            ));
        }
        count
    };
    // recover 2F+1 from the window, assuming symmetric coverage
    let two_f = d as i32 - 1;
    let centers: Vec<f64> = (0..d)
        .map(|i| geometry.arrival_time(-two_f + 2 * i as i32))
        .collect();
    if centers.iter().any(|c| *c < t_lo || *c > t_hi) {
        return Err(SimError::IncompatibleTrace(
            "kinematic peak centers fall outside the trace".into(),
        ));
    }

    let residual_at = |width: f64| -> (f64, Vec<f64>) {
        let amps = solve_amplitudes(trace, &centers, width);
        let mut res = 0.0;
        for (i, &t) in trace.times.iter().enumerate() {
            let model: f64 = amps
                .iter()
                .zip(&centers)
                .map(|(a, c)| a * (-((t - c) / width).powi(2) / 2.0).exp())
                .sum();
            res += (model - trace.signal[i]).powi(2);
        }
        (res, amps)
    };

    // golden-section search over the shared width
    let sigma0 = geometry.peak_width();
    let (mut lo, mut hi) = (sigma0 * 0.25, sigma0 * 4.0);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, _) = residual_at(a);
    let (mut fb, _) = residual_at(b);
    for _ in 0..60 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = residual_at(a).0;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = residual_at(b).0;
        }
    }
    let width = (lo + hi) / 2.0;
    let (_, amplitudes) = residual_at(width);

    let total: f64 = amplitudes.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SimError::FitDiverged {
            reason: format!("non-positive amplitude sum {total}"),
        });
    }
    Ok(amplitudes.iter().map(|a| a / total).collect())
}

/// Linear least squares for the peak amplitudes at a fixed width, clipped
/// at zero (shared width makes areas proportional to amplitudes).
fn solve_amplitudes(trace: &TofTrace, centers: &[f64], width: f64) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let n = trace.len();
    let d = centers.len();
    let mut design = DMatrix::zeros(n, d);
    for (i, &t) in trace.times.iter().enumerate() {
        for (j, &c) in centers.iter().enumerate() {
            design[(i, j)] = (-((t - c) / width).powi(2) / 2.0).exp();
        }
    }
    let y = DVector::from_column_slice(&trace.signal);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * y;
    let solution = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| {
            // fall back to a heavily damped solve for degenerate widths
            let mut damped = gram;
            for i in 0..d {
                damped[(i, i)] += 1e-9;
            }
            damped
                .cholesky()
                .map(|c| c.solve(&rhs))
                .unwrap_or_else(|| DVector::zeros(d))
        });
    solution.iter().map(|a| a.max(0.0)).collect()
}

/// Passes every record through the trace pipeline: simulate an arrival-time
/// trace from its populations, refit the peak areas, and return the trace
/// together with the refitted record. Deterministic for a fixed seed.
pub fn records_through_tof(
    records: &[MeasurementRecord],
    geometry: &TofGeometry,
    noise_floor: f64,
    seed: u64,
) -> Result<Vec<(TofTrace, MeasurementRecord)>, SimError> {
    const STREAM_TOF: u64 = 8;
    let mut rng = stream_rng(seed, STREAM_TOF);
    records
        .iter()
        .map(|record| {
            let trace = simulate_tof(record.populations(), geometry, noise_floor, &mut rng)?;
            let populations = fit_tof(&trace, geometry)?;
            let fitted = MeasurementRecord::new(record.axis_index(), &populations)
                .expect("fitted populations are normalized and non-negative");
            Ok((trace, fitted))
        })
        .collect()
}

/// Fidelity statistics over Monte-Carlo trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityStats {
    /// Per-trial fidelities in trial order (failed trials excluded).
    pub per_trial: Vec<f64>,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub min: f64,
    pub max: f64,
    /// Trials whose reconstruction failed, excluded from the statistics.
    pub failures: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

impl FidelityStats {
    fn from_trials(per_trial: Vec<f64>, failures: usize) -> Self {
        let mut sorted = per_trial.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("fidelity is never NaN"));
        Self {
            median: quantile(&sorted, 0.5),
            lower_quartile: quantile(&sorted, 0.25),
            upper_quartile: quantile(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            per_trial,
            failures,
        }
    }
}

/// Runs `trials` independent synthetic experiments on one input state.
///
/// Each trial generates data along jittered axes, adds population noise,
/// reconstructs against the *nominal* axes with the constrained fit, and
/// scores the Uhlmann fidelity against the input. Trials derive their own
/// random stream from the master seed, so results are identical regardless
/// of how the parallel scheduler interleaves them; failed reconstructions
/// are counted and excluded.
pub fn monte_carlo(
    state: &DensityMatrix,
    axes: &AxisSet,
    noise: &NoiseModel,
    trials: usize,
    options: &FitOptions,
) -> Result<FidelityStats, TomographyError> {
    assert!(trials >= 1, "at least one trial");
    let sys = state.spin_system();
    let outcomes: Vec<Result<f64, TomographyError>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(noise.seed, STREAM_TRIAL_BASE + trial as u64);
            let jittered = perturb_axes_with(axes, noise.axis_jitter_sigma, &mut rng);
            let records = forward_model(state, &jittered);
            let noisy = perturb_records_with(&records, noise.population_rel_sigma, &mut rng);
            let (reconstructed, _) = ml_reconstruct(&noisy, axes, sys, options)?;
            Ok(density::fidelity(state, &reconstructed).expect("dimensions match"))
        })
        .collect();

    let mut per_trial = Vec::with_capacity(trials);
    let mut failures = 0;
    let mut last_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(f) => per_trial.push(f),
            Err(e) => {
                failures += 1;
                last_error = Some(e);
            }
        }
    }
    if per_trial.is_empty() {
        return Err(last_error.expect("at least one failure when all trials failed"));
    }
    Ok(FidelityStats::from_trials(per_trial, failures))
}
