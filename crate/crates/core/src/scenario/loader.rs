//! Scenario file parser: flat `key=value` lines plus one `segment` line per
//! trajectory piece, `#` comments, and line-addressed errors.
//!
//! ```text
//! # LPG ramp reproducing the lab leak
//! device=kitchen-1
//! gas=LPG
//! period_ms=500
//! duration_ms=30000
//! sigma_ppm=0
//! seed=1
//! segment 0 30000 linear 0 2000
//! ```
//!
//! Optional override keys tune the simulated device: `threshold_lpg=`,
//! `threshold_propane=`, `threshold_methane=`, `threshold_butane=`,
//! `hysteresis=`, `raise_count=`, `clear_count=`, `sms_repeat_ms=`,
//! `emergency=`, `sensor_r0=`, `sensor_rl=`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use super::{Scenario, Segment, Shape};
use crate::modem::at::valid_destination;
use crate::sensor::GasSpecies;

/// A rejected scenario file. `line` is 1-based; 0 marks a whole-file problem
/// (e.g. a missing required key).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadError {
    pub line: usize,
    pub message: String,
}

impl LoadError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        LoadError {
            line,
            message: message.into(),
        }
    }

    fn file(message: impl Into<String>) -> Self {
        LoadError::at(0, message)
    }
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "scenario: {}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for LoadError {}

fn parse_value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, LoadError> {
    raw.parse()
        .map_err(|_| LoadError::at(line, format!("invalid value {raw:?} for {key}")))
}

/// Parse and fully validate one scenario file.
pub fn load_scenario(text: &str) -> Result<Scenario, LoadError> {
    // Collected scalars; the Scenario is assembled once required keys exist.
    let mut device_id: Option<String> = None;
    let mut gas: Option<GasSpecies> = None;
    let mut duration_ms: Option<u64> = None;
    let mut segments: Vec<(usize, Segment)> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();

    // Everything else starts from the artifact defaults.
    let mut scenario = Scenario::hold("placeholder", GasSpecies::LPG, 0.0, 1);

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.split_once('#') {
            Some((before, _comment)) => before,
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }

        if let Some(rest) = line.strip_prefix("segment ") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(LoadError::at(
                    line_no,
                    "segment needs 5 fields: <start_ms> <end_ms> <shape> <start_ppm> <end_ppm>",
                ));
            }
            let start_ms: u64 = parse_value(line_no, "segment start_ms", fields[0])?;
            let end_ms: u64 = parse_value(line_no, "segment end_ms", fields[1])?;
            let shape: Shape = fields[2]
                .parse()
                .map_err(|e: String| LoadError::at(line_no, e))?;
            let start_ppm: f64 = parse_value(line_no, "segment start_ppm", fields[3])?;
            let end_ppm: f64 = parse_value(line_no, "segment end_ppm", fields[4])?;
            segments.push((
                line_no,
                Segment {
                    start_ms,
                    end_ms,
                    shape,
                    start_ppm,
                    end_ppm,
                },
            ));
            continue;
        }

        let Some((key, value)) = line.split_once('=') else {
            return Err(LoadError::at(
                line_no,
                format!("expected key=value or a segment line, got {line:?}"),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(LoadError::at(line_no, format!("duplicate key {key:?}")));
        }

        match key {
            "device" => {
                if !crate::gateway::wire::valid_device_id(value) {
                    return Err(LoadError::at(
                        line_no,
                        format!("invalid device id {value:?} (1-32 chars of [A-Za-z0-9_-])"),
                    ));
                }
                device_id = Some(value.to_string());
            }
            "gas" => {
                gas = Some(
                    value
                        .parse()
                        .map_err(|e: String| LoadError::at(line_no, e))?,
                );
            }
            "period_ms" => {
                scenario.sample_period_ms = parse_value(line_no, key, value)?;
                if scenario.sample_period_ms == 0 {
                    return Err(LoadError::at(line_no, "period_ms must be positive"));
                }
            }
            "duration_ms" => {
                let d: u64 = parse_value(line_no, key, value)?;
                if d == 0 {
                    return Err(LoadError::at(line_no, "duration_ms must be positive"));
                }
                duration_ms = Some(d);
            }
            "sigma_ppm" => {
                let sigma: f64 = parse_value(line_no, key, value)?;
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(LoadError::at(line_no, "sigma_ppm must be >= 0"));
                }
                scenario.noise_sigma_ppm = sigma;
            }
            "seed" => scenario.rng_seed = parse_value(line_no, key, value)?,
            "threshold_lpg" | "threshold_propane" | "threshold_methane" | "threshold_butane" => {
                let ppm: f64 = parse_value(line_no, key, value)?;
                if !(ppm.is_finite() && ppm > 0.0) {
                    return Err(LoadError::at(line_no, format!("{key} must be positive")));
                }
                let which = match key {
                    "threshold_lpg" => GasSpecies::LPG,
                    "threshold_propane" => GasSpecies::Propane,
                    "threshold_methane" => GasSpecies::Methane,
                    _ => GasSpecies::Butane,
                };
                scenario.thresholds.set_threshold_ppm(which, ppm);
            }
            "hysteresis" => {
                let h: f64 = parse_value(line_no, key, value)?;
                if !(0.0..1.0).contains(&h) {
                    return Err(LoadError::at(line_no, "hysteresis must be in [0, 1)"));
                }
                scenario.thresholds.hysteresis_fraction = h;
            }
            "raise_count" => {
                scenario.thresholds.raise_count = parse_value(line_no, key, value)?;
                if scenario.thresholds.raise_count == 0 {
                    return Err(LoadError::at(line_no, "raise_count must be >= 1"));
                }
            }
            "clear_count" => {
                scenario.thresholds.clear_count = parse_value(line_no, key, value)?;
                if scenario.thresholds.clear_count == 0 {
                    return Err(LoadError::at(line_no, "clear_count must be >= 1"));
                }
            }
            "sms_repeat_ms" => scenario.sms_repeat_ms = parse_value(line_no, key, value)?,
            "emergency" => {
                if !valid_destination(value) {
                    return Err(LoadError::at(
                        line_no,
                        format!("emergency number {value:?} must be + followed by 7-15 digits"),
                    ));
                }
                scenario.emergency_number = value.to_string();
            }
            "sensor_r0" => {
                scenario.sensor.r0_ohms = parse_value(line_no, key, value)?;
            }
            "sensor_rl" => {
                scenario.sensor.rl_ohms = parse_value(line_no, key, value)?;
            }
            other => {
                return Err(LoadError::at(line_no, format!("unknown key {other:?}")));
            }
        }
    }

    scenario.device_id =
        device_id.ok_or_else(|| LoadError::file("missing required key: device"))?;
    scenario.active_gas = gas.ok_or_else(|| LoadError::file("missing required key: gas"))?;
    scenario.duration_ms =
        duration_ms.ok_or_else(|| LoadError::file("missing required key: duration_ms"))?;
    if segments.is_empty() {
        return Err(LoadError::file("at least one segment line is required"));
    }

    // Per-segment checks with their source lines, then the whole-scenario
    // pass for anything the line view cannot express.
    let mut expected_start = 0u64;
    for (line_no, seg) in &segments {
        if seg.start_ms != expected_start {
            let what = if seg.start_ms > expected_start {
                "gap"
            } else {
                "overlap"
            };
            return Err(LoadError::at(
                *line_no,
                format!(
                    "{what}: segment starts at {} ms, previous coverage ends at {} ms",
                    seg.start_ms, expected_start
                ),
            ));
        }
        if seg.end_ms <= seg.start_ms {
            return Err(LoadError::at(*line_no, "segment must end after it starts"));
        }
        if !(seg.start_ppm.is_finite() && seg.start_ppm >= 0.0)
            || !(seg.end_ppm.is_finite() && seg.end_ppm >= 0.0)
        {
            return Err(LoadError::at(*line_no, "concentrations must be >= 0"));
        }
        match seg.shape {
            Shape::Hold if seg.start_ppm != seg.end_ppm => {
                return Err(LoadError::at(
                    *line_no,
                    "hold requires equal start and end ppm",
                ));
            }
            Shape::Exponential if seg.start_ppm <= 0.0 || seg.end_ppm <= 0.0 => {
                return Err(LoadError::at(
                    *line_no,
                    "exponential requires positive start and end ppm",
                ));
            }
            _ => {}
        }
        expected_start = seg.end_ms;
    }
    if expected_start != scenario.duration_ms {
        return Err(LoadError::file(format!(
            "segments cover [0, {expected_start}) but duration_ms is {}",
            scenario.duration_ms
        )));
    }

    scenario.segments = segments.into_iter().map(|(_, seg)| seg).collect();
    scenario.validate().map_err(LoadError::file)?;
    Ok(scenario)
}
