//! Command-line surface for the tomography pipeline: reconstruct states
//! from measurement files, simulate synthetic Stern-Gerlach experiments,
//! and analyze axis-set conditioning.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spintomo::density;
use spintomo::report::{self, ErrorStub, MeasurementFile};
use spintomo::sim::{self, NoiseModel, TofGeometry};
use spintomo::spin::SpinSystem;
use spintomo::tomography::{
    self, AxisSet, FitOptions, MeasurementRecord, TomographyError, DEFAULT_RANK_THRESHOLD,
};
use spintomo::wigner::{self, SphereGrid};

mod config;
mod state_spec;

use config::{merged, ConfigFile};

/// Environment variable naming the directory bare output filenames land in.
const OUT_DIR_ENV: &str = "SPINTOMO_OUT_DIR";

const EXIT_CONFIG: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_RANK_DEFICIENT: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "spintomo",
    about = "Spin-F density-matrix tomography from Stern-Gerlach populations",
    version
)]
struct Cli {
    /// JSON config file supplying defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a density matrix from a measurement file.
    Reconstruct(ReconstructArgs),
    /// Generate synthetic measurements (single shot or Monte-Carlo trials).
    Simulate(SimulateArgs),
    /// Analyze axis-set conditioning and optionally a state's Wigner map.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct ReconstructArgs {
    /// Measurement file (JSON) with axes and populations.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Report output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Axis set: "default" or a JSON file; overrides the file's axes.
    #[arg(long)]
    axes: Option<String>,
    /// Reference density-matrix file for fidelity scoring.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Relative eigenvalue threshold for the rank decision.
    #[arg(long)]
    rank_threshold: Option<f64>,
    /// Iteration budget of the constrained fit.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    /// Spin quantum number F ("4", "1/2", "0.5", ...).
    #[arg(long)]
    spin: Option<String>,
    /// Input state: named spec or a density-matrix JSON file.
    ///
    /// Named: stretched:m | coherent:theta_deg:axis | m-eigenstate:m:axis |
    /// mixed:uniform | mixed:p0,p1,...
    #[arg(long)]
    state: Option<String>,
    /// Axis set: "default" or a JSON file.
    #[arg(long)]
    axes: Option<String>,
    /// Output path (measurement file, or Monte-Carlo report with --trials).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative population noise (sigma).
    #[arg(long)]
    noise_pop: Option<f64>,
    /// Axis jitter sigma, degrees.
    #[arg(long)]
    noise_axis_deg: Option<f64>,
    /// Master seed for all synthetic randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Run this many Monte-Carlo trials instead of writing one measurement.
    #[arg(long)]
    trials: Option<usize>,
    /// Route populations through the time-of-flight trace pipeline
    /// (simulate then refit) and write per-axis trace CSVs.
    #[arg(long)]
    tof: bool,
    /// Iteration budget for the fits inside Monte-Carlo trials.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args, Clone)]
struct AnalyzeArgs {
    /// Spin quantum number F; required with --axes default.
    #[arg(long)]
    spin: Option<String>,
    /// Axis set: "default" or a JSON file.
    #[arg(long)]
    axes: Option<String>,
    /// Density-matrix file to analyze (purity, Wigner map).
    #[arg(long)]
    state: Option<PathBuf>,
    /// Second state for a fidelity comparison.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Where to write the Wigner map CSV (requires --state).
    #[arg(long)]
    wigner_csv: Option<PathBuf>,
    /// Analysis report output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative eigenvalue threshold for the rank decision.
    #[arg(long)]
    rank_threshold: Option<f64>,
}

/// A failure annotated with its exit code and machine-readable tag.
struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn new(exit: u8, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            exit,
            code,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, "config", message)
    }
}

impl From<report::ReportError> for Failure {
    fn from(e: report::ReportError) -> Self {
        match &e {
            report::ReportError::Tomography(t) => tomography_failure(t, e.to_string()),
            _ => Failure::new(EXIT_PARSE, "parse", e.to_string()),
        }
    }
}

impl From<TomographyError> for Failure {
    fn from(e: TomographyError) -> Self {
        let msg = e.to_string();
        tomography_failure(&e, msg)
    }
}

fn tomography_failure(e: &TomographyError, message: String) -> Failure {
    match e {
        TomographyError::RankDeficient { .. } => {
            Failure::new(EXIT_RANK_DEFICIENT, "rank-deficient", message)
        }
        _ => Failure::new(EXIT_CONFIG, "tomography", message),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.config.as_deref().map(ConfigFile::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error[parse]: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let result = match cli.command {
        Command::Reconstruct(args) => cmd_reconstruct(args, &config),
        Command::Simulate(args) => cmd_simulate(args, &config),
        Command::Analyze(args) => cmd_analyze(args, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((failure, out)) => {
            eprintln!("error[{}]: {}", failure.code, failure.message);
            if let Some(path) = out {
                let stub = ErrorStub::new(failure.code, &failure.message);
                if let Err(write_err) = report::write_error_stub(&path, &stub) {
                    eprintln!("error[io]: could not write error stub: {write_err}");
                }
            }
            ExitCode::from(failure.exit)
        }
    }
}

type CmdResult = Result<(), (Failure, Option<PathBuf>)>;

/// Resolves an output path: bare filenames land in `$SPINTOMO_OUT_DIR` when
/// that is set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() || path.components().count() > 1 {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_axes(spec: &str, sys: SpinSystem) -> Result<AxisSet, Failure> {
    if spec == "default" {
        Ok(tomography::default_axis_set(sys))
    } else {
        Ok(report::read_axis_set(Path::new(spec))?)
    }
}

fn fit_options(rank_threshold: Option<f64>, max_iters: Option<usize>) -> FitOptions {
    let mut options = FitOptions::default();
    if let Some(t) = rank_threshold {
        options.rank_threshold = t;
    }
    if let Some(n) = max_iters {
        options.max_iterations = n;
    }
    options
}

fn cmd_reconstruct(args: ReconstructArgs, config: &ConfigFile) -> CmdResult {
    let input = merged(args.input.clone(), config.input.clone())
        .ok_or_else(|| (Failure::config("--in is required"), None))?;
    let out = merged(args.out.clone(), config.output.clone())
        .ok_or_else(|| (Failure::config("--out is required"), None))?;
    let out = resolve_out(&out);
    let fail = |f: Failure| (f, Some(out.clone()));

    let (sys, file_axes, records) = report::read_measurements(&input).map_err(|e| fail(e.into()))?;

    let axes_spec = merged(args.axes.clone(), config.axes.clone());
    let axes = match axes_spec {
        Some(spec) => {
            let axes = load_axes(&spec, sys).map_err(&fail)?;
            if axes.len() != file_axes.len() {
                return Err(fail(Failure::config(format!(
                    "axis set has {} axes but the measurement file has {}",
                    axes.len(),
                    file_axes.len()
                ))));
            }
            axes
        }
        None => file_axes,
    };

    let reference = merged(args.reference.clone(), config.reference.clone())
        .map(|p| report::read_density_matrix(&p))
        .transpose()
        .map_err(|e| fail(e.into()))?;

    let options = fit_options(
        merged(args.rank_threshold, config.rank_threshold),
        merged(args.max_iters, config.max_iters),
    );

    let reconstruction =
        tomography::reconstruct(&records, &axes, sys, &options).map_err(|e| fail(e.into()))?;

    let fidelity = reference
        .as_ref()
        .map(|r| density::fidelity(r, &reconstruction.state))
        .transpose()
        .map_err(|e| fail(Failure::config(e.to_string())))?;

    let report_file = report::ReconstructionReportFile::new(
        sys,
        &axes,
        &reconstruction,
        options.rank_threshold,
        fidelity,
    );
    report::write_reconstruction_report(&out, &report_file).map_err(|e| fail(e.into()))?;

    println!(
        "reconstructed spin F={} state: rank {}/{}, fit {} after {} iterations, residual {:.3e}{}",
        sys.f(),
        reconstruction.linear.conditioning.rank,
        sys.dimension() * sys.dimension(),
        if reconstruction.fit.converged {
            "converged"
        } else {
            "did NOT converge"
        },
        reconstruction.fit.iterations,
        reconstruction.fit.final_cost.sqrt(),
        fidelity
            .map(|f| format!(", fidelity vs reference {f:.6}"))
            .unwrap_or_default()
    );

    if !reconstruction.fit.converged {
        return Err((
            Failure::new(
                EXIT_NO_CONVERGENCE,
                "no-convergence",
                "fit budget exhausted; best iterate written to the report",
            ),
            None, // the real report is already on disk
        ));
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, config: &ConfigFile) -> CmdResult {
    let out = merged(args.out.clone(), config.output.clone())
        .ok_or_else(|| (Failure::config("--out is required"), None))?;
    let out = resolve_out(&out);
    let fail = |f: Failure| (f, Some(out.clone()));

    let spin_spec = merged(args.spin.clone(), config.spin.clone())
        .ok_or_else(|| fail(Failure::config("--spin is required")))?;
    let sys = state_spec::parse_spin(&spin_spec).map_err(|e| fail(Failure::config(e)))?;

    let state_str = merged(args.state.clone(), config.state.clone())
        .ok_or_else(|| fail(Failure::config("--state is required")))?;
    let state = state_spec::parse_state(&state_str, sys).map_err(&fail)?;

    let axes_spec =
        merged(args.axes.clone(), config.axes.clone()).unwrap_or_else(|| "default".into());
    let axes = load_axes(&axes_spec, sys).map_err(&fail)?;

    let noise = NoiseModel {
        population_rel_sigma: merged(args.noise_pop, config.noise_pop).unwrap_or(0.03),
        axis_jitter_sigma: merged(args.noise_axis_deg, config.noise_axis_deg)
            .unwrap_or(0.5)
            .to_radians(),
        seed: merged(args.seed, config.seed).unwrap_or(0),
    };

    let trials = merged(args.trials, config.trials);
    if let Some(trials) = trials.filter(|&t| t > 0) {
        let options = fit_options(None, merged(args.max_iters, config.max_iters));
        let stats =
            sim::monte_carlo(&state, &axes, &noise, trials, &options).map_err(|e| fail(e.into()))?;
        let report_file = report::MonteCarloReportFile {
            schema_version: report::SCHEMA_VERSION,
            two_f: sys.two_f(),
            state: state_str.clone(),
            axes: report::axis_entries(&axes),
            noise,
            trials,
            stats,
        };
        report::write_monte_carlo_report(&out, &report_file).map_err(|e| fail(e.into()))?;
        println!(
            "{} trials on {}: median fidelity {:.4} [{:.4}, {:.4}], {} failures",
            trials,
            state_str,
            report_file.stats.median,
            report_file.stats.min,
            report_file.stats.max,
            report_file.stats.failures
        );
        return Ok(());
    }

    // Single synthetic experiment: data generated along jittered axes, the
    // nominal axes recorded in the file.
    let data_axes = sim::perturb_axes(&axes, &noise);
    let records = tomography::forward_model(&state, &data_axes);
    let mut records = sim::perturb_records(&records, &noise);

    if args.tof || config.tof.unwrap_or(false) {
        records = through_tof_pipeline(&records, &noise, &out).map_err(&fail)?;
        println!(
            "wrote {} time-of-flight traces next to {}",
            records.len(),
            out.display()
        );
    }

    let file = MeasurementFile::new(sys, &axes, &records);
    report::write_measurements(&out, &file).map_err(|e| fail(e.into()))?;
    println!(
        "wrote measurement file {} ({} axes, F={})",
        out.display(),
        axes.len(),
        sys.f()
    );
    Ok(())
}

/// Replaces each record's populations by what the trace simulator and peak
/// fitter recover, writing one trace CSV per axis beside the output file.
fn through_tof_pipeline(
    records: &[MeasurementRecord],
    noise: &NoiseModel,
    out: &Path,
) -> Result<Vec<MeasurementRecord>, Failure> {
    let geometry = TofGeometry::default();
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("tof");
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let pipeline = sim::records_through_tof(records, &geometry, 0.0, noise.seed)
        .map_err(|e| Failure::config(e.to_string()))?;
    let mut fitted = Vec::with_capacity(records.len());
    for (record, (trace, refit)) in records.iter().zip(pipeline) {
        let path = dir.join(format!("{stem}_tof_axis{:02}.csv", record.axis_index()));
        let file = std::fs::File::create(&path)
            .map_err(|e| Failure::new(EXIT_PARSE, "io", format!("{}: {e}", path.display())))?;
        trace
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Failure::new(EXIT_PARSE, "io", e.to_string()))?;
        fitted.push(refit);
    }
    Ok(fitted)
}

fn cmd_analyze(args: AnalyzeArgs, config: &ConfigFile) -> CmdResult {
    let out = merged(args.out.clone(), config.output.clone())
        .ok_or_else(|| (Failure::config("--out is required"), None))?;
    let out = resolve_out(&out);
    let fail = |f: Failure| (f, Some(out.clone()));

    let axes_spec =
        merged(args.axes.clone(), config.axes.clone()).unwrap_or_else(|| "default".into());
    let spin_spec = merged(args.spin.clone(), config.spin.clone());

    // state first, when present: it pins the dimension
    let state = args
        .state
        .as_deref()
        .map(report::read_density_matrix)
        .transpose()
        .map_err(|e| fail(e.into()))?;

    let sys = match (&spin_spec, &state) {
        (Some(s), _) => state_spec::parse_spin(s).map_err(|e| fail(Failure::config(e)))?,
        (None, Some(state)) => state.spin_system(),
        (None, None) => {
            return Err(fail(Failure::config(
                "--spin is required (or supply --state to infer it)",
            )))
        }
    };
    if let Some(state) = &state {
        if state.spin_system() != sys {
            return Err(fail(Failure::config(format!(
                "--state has dimension {} but --spin implies {}",
                state.dim(),
                sys.dimension()
            ))));
        }
    }

    let axes = load_axes(&axes_spec, sys).map_err(&fail)?;
    let threshold =
        merged(args.rank_threshold, config.rank_threshold).unwrap_or(DEFAULT_RANK_THRESHOLD);
    let matrix = tomography::build_measurement_matrix(&axes, sys);
    let conditioning = tomography::conditioning(&matrix, threshold).map_err(|e| fail(e.into()))?;

    let mut analysis = report::AnalysisReportFile::new(sys, &axes, &conditioning);

    if let Some(state) = &state {
        let reference = args
            .reference
            .as_deref()
            .map(report::read_density_matrix)
            .transpose()
            .map_err(|e| fail(e.into()))?;
        let fidelity = reference
            .as_ref()
            .map(|r| density::fidelity(r, state))
            .transpose()
            .map_err(|e| fail(Failure::config(e.to_string())))?;

        let grid = SphereGrid::default_grid();
        let map = wigner::wigner_function(state, grid.points())
            .map_err(|e| fail(Failure::config(e.to_string())))?;
        let wigner_csv = args
            .wigner_csv
            .as_ref()
            .map(|p| -> Result<String, Failure> {
                let p = resolve_out(p);
                let file = std::fs::File::create(&p).map_err(|e| {
                    Failure::new(EXIT_PARSE, "io", format!("{}: {e}", p.display()))
                })?;
                map.write_csv(std::io::BufWriter::new(file))
                    .map_err(|e| Failure::new(EXIT_PARSE, "io", e.to_string()))?;
                Ok(p.display().to_string())
            })
            .transpose()
            .map_err(&fail)?;

        analysis.state = Some(report::StateAnalysis {
            purity: state.purity(),
            fidelity_vs_reference: fidelity,
            wigner_min: map.min(),
            wigner_max: map.max(),
            wigner_csv,
        });
    }

    report::write_analysis_report(&out, &analysis).map_err(|e| fail(e.into()))?;
    println!(
        "axis set: rank {}/{} at threshold {:.1e} -> {}",
        analysis.rank,
        sys.dimension() * sys.dimension(),
        analysis.rank_threshold,
        if analysis.full_rank { "PASS" } else { "FAIL" }
    );
    Ok(())
}
