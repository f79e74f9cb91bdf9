//! Parsers for the `--spin` and `--state` command-line values.
//!
//! States can be named specs covering the standard test preparations, or a
//! path to a density-matrix JSON file:
//!
//! * `stretched:m` — the sublevel projector `|m_z = m⟩⟨m_z = m|`
//! * `coherent:theta_deg:axis` — `|m_z = −F⟩` precessed by the given angle
//!   about `axis` (a spin-coherent state)
//! * `m-eigenstate:m:axis` — eigenstate of `F̂·axis` with eigenvalue `m`
//! * `mixed:uniform` — the maximally mixed state
//! * `mixed:p0,p1,...` — diagonal mixture with the given weights
//!
//! Axes are `x`, `y`, `z` or a comma-separated 3-vector like `0,0.6,0.8`.

use std::path::Path;

use nalgebra::Vector3;

use spintomo::density::{self, DensityMatrix};
use spintomo::report;
use spintomo::spin::{RotationSpec, SpinSystem};

use crate::Failure;

/// Parses a spin quantum number: integer ("4"), fraction ("9/2") or decimal
/// ("0.5"); must be a positive multiple of 1/2.
pub fn parse_spin(spec: &str) -> Result<SpinSystem, String> {
    let two_f = if let Some((num, den)) = spec.split_once('/') {
        let num: u32 = num
            .trim()
            .parse()
            .map_err(|_| format!("bad spin fraction {spec:?}"))?;
        let den: u32 = den
            .trim()
            .parse()
            .map_err(|_| format!("bad spin fraction {spec:?}"))?;
        if den != 2 {
            return Err(format!("spin fractions must have denominator 2, got {spec:?}"));
        }
        num
    } else {
        let f: f64 = spec
            .trim()
            .parse()
            .map_err(|_| format!("bad spin value {spec:?}"))?;
        let doubled = 2.0 * f;
        if doubled.fract() != 0.0 || doubled < 1.0 || doubled > 1000.0 {
            return Err(format!("spin must be a positive multiple of 1/2, got {spec:?}"));
        }
        doubled as u32
    };
    SpinSystem::from_two_f(two_f).map_err(|e| e.to_string())
}

fn parse_two_m(value: &str, what: &str) -> Result<i32, String> {
    let m: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("bad {what} value {value:?}"))?;
    let doubled = 2.0 * m;
    if doubled.fract() != 0.0 {
        return Err(format!("{what} must be a multiple of 1/2, got {value:?}"));
    }
    Ok(doubled as i32)
}

fn parse_axis(value: &str) -> Result<Vector3<f64>, String> {
    match value.trim() {
        "x" => return Ok(Vector3::x()),
        "y" => return Ok(Vector3::y()),
        "z" => return Ok(Vector3::z()),
        _ => {}
    }
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("axis must be x, y, z or three comma-separated numbers, got {value:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("bad axis component {part:?}"))?;
    }
    let axis = Vector3::new(v[0], v[1], v[2]);
    if axis.norm() < 1e-12 {
        return Err("axis vector must be nonzero".into());
    }
    Ok(axis)
}

/// Builds a state from a named spec or a density-matrix file path.
pub fn parse_state(spec: &str, sys: SpinSystem) -> Result<DensityMatrix, Failure> {
    let named = parse_named_state(spec, sys);
    match named {
        Ok(state) => Ok(state),
        Err(name_err) => {
            let path = Path::new(spec);
            if path.exists() {
                let state = report::read_density_matrix(path).map_err(Failure::from)?;
                if state.spin_system() != sys {
                    return Err(Failure::config(format!(
                        "state file has dimension {}, --spin implies {}",
                        state.dim(),
                        sys.dimension()
                    )));
                }
                Ok(state)
            } else {
                Err(Failure::config(name_err))
            }
        }
    }
}

fn parse_named_state(spec: &str, sys: SpinSystem) -> Result<DensityMatrix, String> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "stretched" => {
            let two_m = parse_two_m(rest, "m")?;
            density::make_stretched(sys, two_m).map_err(|e| e.to_string())
        }
        "coherent" => {
            let (angle, axis) = rest
                .split_once(':')
                .ok_or_else(|| format!("coherent needs theta_deg:axis, got {spec:?}"))?;
            let degrees: f64 = angle
                .trim()
                .parse()
                .map_err(|_| format!("bad precession angle {angle:?}"))?;
            let axis = parse_axis(axis)?;
            let stretched = density::make_stretched(sys, -(sys.two_f() as i32))
                .expect("stretched state exists");
            let spec = RotationSpec::new(degrees.to_radians(), axis)
                .map_err(|e| e.to_string())?;
            Ok(density::precess(&stretched, spec))
        }
        "m-eigenstate" => {
            let (m, axis) = rest
                .split_once(':')
                .ok_or_else(|| format!("m-eigenstate needs m:axis, got {spec:?}"))?;
            let two_m = parse_two_m(m, "m")?;
            let axis = parse_axis(axis)?;
            density::make_m_eigenstate(sys, two_m, axis).map_err(|e| e.to_string())
        }
        "mixed" => {
            if rest == "uniform" {
                return Ok(DensityMatrix::maximally_mixed(sys));
            }
            let weights: Result<Vec<f64>, _> =
                rest.split(',').map(|p| p.trim().parse::<f64>()).collect();
            let weights = weights.map_err(|_| format!("bad mixture weights {rest:?}"))?;
            if weights.len() != sys.dimension() {
                return Err(format!(
                    "mixture needs {} weights for F = {}, got {}",
                    sys.dimension(),
                    sys.f(),
                    weights.len()
                ));
            }
            density::make_diagonal_mixed(&weights).map_err(|e| e.to_string())
        }
        _ => Err(format!(
            "unknown state {spec:?} (expected stretched:, coherent:, m-eigenstate:, mixed:, or a file path)"
        )),
    }
}
