//! File formats shared by the library and the command-line tool.
//!
//! Everything is self-describing JSON with a `schema_version` field; complex
//! matrices serialize as row-major `[re, im]` pairs, angles in files are
//! degrees (radians are used only inside the library).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityError, DensityMatrix};
use crate::sim::{FidelityStats, NoiseModel};
use crate::spin::{MeasurementAxis, SpinError, SpinSystem};
use crate::tomography::{
    AxisSet, ConditioningReport, FitReport, MeasurementRecord, Reconstruction, TomographyError,
};
use crate::{C64, CMatrix};

/// Version stamp written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {got} (expected {expected})")]
    SchemaVersion { got: u32, expected: u32 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    State(#[from] DensityError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ReportError::Json {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    fs::write(path, text + "\n").map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Row-major complex matrix as `[re, im]` pairs.
pub type ComplexMatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> ComplexMatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &ComplexMatrixJson) -> Result<CMatrix, ReportError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(ReportError::Invalid(
            "matrix must be square and non-empty".into(),
        ));
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &[re, im]) in row.iter().enumerate() {
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------- axis sets

/// One quantization direction, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisFileEntry {
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl From<MeasurementAxis> for AxisFileEntry {
    fn from(axis: MeasurementAxis) -> Self {
        Self {
            theta_deg: axis.polar().to_degrees(),
            phi_deg: axis.azimuth().to_degrees(),
        }
    }
}

impl TryFrom<AxisFileEntry> for MeasurementAxis {
    type Error = SpinError;
    fn try_from(entry: AxisFileEntry) -> Result<Self, SpinError> {
        MeasurementAxis::new(entry.theta_deg.to_radians(), entry.phi_deg.to_radians())
    }
}

/// Reads an axis-set file: a JSON array of `{theta_deg, phi_deg}`, order
/// significant.
pub fn read_axis_set(path: &Path) -> Result<AxisSet, ReportError> {
    let entries: Vec<AxisFileEntry> = read_json(path)?;
    let axes = entries
        .into_iter()
        .map(MeasurementAxis::try_from)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AxisSet::new(axes)?)
}

pub fn write_axis_set(path: &Path, axes: &AxisSet) -> Result<(), ReportError> {
    let entries: Vec<AxisFileEntry> = axes.axes().iter().copied().map(Into::into).collect();
    write_json(path, &entries)
}

pub fn axis_entries(axes: &AxisSet) -> Vec<AxisFileEntry> {
    axes.axes().iter().copied().map(Into::into).collect()
}

// ------------------------------------------------------------- measurements

/// A complete measurement: the axis list and one population array per axis.
/// Populations may be unnormalized counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFile {
    pub schema_version: u32,
    /// Doubled spin quantum number `2F`.
    pub two_f: u32,
    pub angle_unit: String,
    pub axes: Vec<AxisFileEntry>,
    /// `populations[k][i]` is the count for axis `k`, sublevel index `i`
    /// (ascending `m`).
    pub populations: Vec<Vec<f64>>,
}

impl MeasurementFile {
    pub fn new(sys: SpinSystem, axes: &AxisSet, records: &[MeasurementRecord]) -> Self {
        let mut populations = vec![Vec::new(); axes.len()];
        for record in records {
            populations[record.axis_index()] = record.populations().to_vec();
        }
        Self {
            schema_version: SCHEMA_VERSION,
            two_f: sys.two_f(),
            angle_unit: "degrees".into(),
            axes: axis_entries(axes),
            populations,
        }
    }

    /// Validates and converts to domain types.
    pub fn into_domain(self) -> Result<(SpinSystem, AxisSet, Vec<MeasurementRecord>), ReportError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ReportError::SchemaVersion {
                got: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let sys = SpinSystem::from_two_f(self.two_f)?;
        let axes = AxisSet::new(
            self.axes
                .into_iter()
                .map(MeasurementAxis::try_from)
                .collect::<Result<Vec<_>, _>>()?,
        )?;
        if self.populations.len() != axes.len() {
            return Err(ReportError::Invalid(format!(
                "expected {} population arrays (one per axis), got {}; first missing axis index {}",
                axes.len(),
                self.populations.len(),
                self.populations.len().min(axes.len())
            )));
        }
        let records = self
            .populations
            .iter()
            .enumerate()
            .map(|(k, raw)| {
                if raw.len() != sys.dimension() {
                    return Err(ReportError::Invalid(format!(
                        "axis {k}: expected {} populations, got {}",
                        sys.dimension(),
                        raw.len()
                    )));
                }
                MeasurementRecord::new(k, raw).map_err(ReportError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((sys, axes, records))
    }
}

pub fn read_measurements(
    path: &Path,
) -> Result<(SpinSystem, AxisSet, Vec<MeasurementRecord>), ReportError> {
    let file: MeasurementFile = read_json(path)?;
    file.into_domain()
}

pub fn write_measurements(path: &Path, file: &MeasurementFile) -> Result<(), ReportError> {
    write_json(path, file)
}

// ------------------------------------------------------------ density files

/// A density matrix on disk (reference states, simulation inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixFile {
    pub schema_version: u32,
    pub two_f: u32,
    /// Row-major `[re, im]` pairs.
    pub matrix: ComplexMatrixJson,
}

impl DensityMatrixFile {
    pub fn new(state: &DensityMatrix) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            two_f: state.spin_system().two_f(),
            matrix: matrix_to_json(state.matrix()),
        }
    }

    pub fn into_domain(self) -> Result<DensityMatrix, ReportError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ReportError::SchemaVersion {
                got: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let matrix = matrix_from_json(&self.matrix)?;
        if matrix.nrows() != self.two_f as usize + 1 {
            return Err(ReportError::Invalid(format!(
                "matrix dimension {} does not match 2F = {}",
                matrix.nrows(),
                self.two_f
            )));
        }
        Ok(DensityMatrix::validate(matrix)?)
    }
}

pub fn read_density_matrix(path: &Path) -> Result<DensityMatrix, ReportError> {
    let file: DensityMatrixFile = read_json(path)?;
    file.into_domain()
}

pub fn write_density_matrix(path: &Path, state: &DensityMatrix) -> Result<(), ReportError> {
    write_json(path, &DensityMatrixFile::new(state))
}

// ----------------------------------------------------- reconstruction report

/// Convergence metadata of the constrained fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl From<&FitReport> for FitMetadata {
    fn from(fit: &FitReport) -> Self {
        Self {
            initial_cost: fit.initial_cost,
            final_cost: fit.final_cost,
            iterations: fit.iterations,
            converged: fit.converged,
            gradient_norm: fit.gradient_norm,
        }
    }
}

/// Full reconstruction output: both solutions plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReportFile {
    pub schema_version: u32,
    pub two_f: u32,
    pub axes: Vec<AxisFileEntry>,
    pub rank_threshold: f64,
    /// Eigenvalue spectrum of `M†M`, descending.
    pub lambda_spectrum: Vec<f64>,
    pub rank: usize,
    /// The linear (pseudoinverse) solution; Hermitian and unit-trace but
    /// possibly indefinite.
    pub pseudoinverse_solution: ComplexMatrixJson,
    /// Whether the linear solution already satisfied positivity.
    pub pseudoinverse_physical: bool,
    pub pseudoinverse_residual_norm: f64,
    pub hermiticity_deviation: f64,
    /// The physical (TT†-fit) solution.
    pub ml_solution: ComplexMatrixJson,
    pub ml_purity: f64,
    pub fit: FitMetadata,
    /// Uhlmann fidelity against the supplied reference state, when given.
    pub fidelity_vs_reference: Option<f64>,
}

impl ReconstructionReportFile {
    pub fn new(
        sys: SpinSystem,
        axes: &AxisSet,
        reconstruction: &Reconstruction,
        rank_threshold: f64,
        fidelity_vs_reference: Option<f64>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            two_f: sys.two_f(),
            axes: axis_entries(axes),
            rank_threshold,
            lambda_spectrum: reconstruction.linear.conditioning.eigenvalues.clone(),
            rank: reconstruction.linear.conditioning.rank,
            pseudoinverse_solution: matrix_to_json(&reconstruction.linear.matrix),
            pseudoinverse_physical: reconstruction.linear_physical,
            pseudoinverse_residual_norm: reconstruction.linear.residual_norm,
            hermiticity_deviation: reconstruction.linear.hermiticity_deviation,
            ml_solution: matrix_to_json(reconstruction.state.matrix()),
            ml_purity: reconstruction.state.purity(),
            fit: FitMetadata::from(&reconstruction.fit),
            fidelity_vs_reference,
        }
    }
}

pub fn write_reconstruction_report(
    path: &Path,
    report: &ReconstructionReportFile,
) -> Result<(), ReportError> {
    write_json(path, report)
}

pub fn read_reconstruction_report(path: &Path) -> Result<ReconstructionReportFile, ReportError> {
    read_json(path)
}

// --------------------------------------------------------- analysis report

/// Conditioning analysis of an axis set, with optional state diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReportFile {
    pub schema_version: u32,
    pub two_f: u32,
    pub axes: Vec<AxisFileEntry>,
    pub rank_threshold: f64,
    pub lambda_spectrum: Vec<f64>,
    pub rank: usize,
    pub full_rank: bool,
    /// Present when a density-matrix file was supplied.
    pub state: Option<StateAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAnalysis {
    pub purity: f64,
    /// Fidelity against the reconstruction-free reference, when given two
    /// states to compare.
    pub fidelity_vs_reference: Option<f64>,
    pub wigner_min: f64,
    pub wigner_max: f64,
    /// Where the Wigner map CSV was written.
    pub wigner_csv: Option<String>,
}

impl AnalysisReportFile {
    pub fn new(sys: SpinSystem, axes: &AxisSet, report: &ConditioningReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            two_f: sys.two_f(),
            axes: axis_entries(axes),
            rank_threshold: report.threshold,
            lambda_spectrum: report.eigenvalues.clone(),
            rank: report.rank,
            full_rank: report.is_full_rank(sys.dimension()),
            state: None,
        }
    }
}

pub fn write_analysis_report(path: &Path, report: &AnalysisReportFile) -> Result<(), ReportError> {
    write_json(path, report)
}

// -------------------------------------------------------- Monte-Carlo report

/// Monte-Carlo harness output: configuration echo plus the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReportFile {
    pub schema_version: u32,
    pub two_f: u32,
    /// The state specification string the trials ran against.
    pub state: String,
    pub axes: Vec<AxisFileEntry>,
    pub noise: NoiseModel,
    pub trials: usize,
    pub stats: FidelityStats,
}

pub fn write_monte_carlo_report(
    path: &Path,
    report: &MonteCarloReportFile,
) -> Result<(), ReportError> {
    write_json(path, report)
}

// --------------------------------------------------------------- error stub

/// Machine-readable failure record; written instead of the report when a
/// command fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStub {
    pub schema_version: u32,
    pub error_code: String,
    pub message: String,
}

impl ErrorStub {
    pub fn new(error_code: &str, message: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            error_code: error_code.into(),
            message: message.into(),
        }
    }
}

pub fn write_error_stub(path: &Path, stub: &ErrorStub) -> Result<(), ReportError> {
    write_json(path, stub)
}
