//! Telemetry wire format: one JSON object per newline-terminated line.
//!
//! The key set is fixed; frames carrying unknown keys are rejected so that
//! every accepted line re-encodes byte-identically.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sensor::GasSpecies;

/// Highest ADC code a frame may carry.
pub const MAX_ADC_CODE: u16 = 1023;
/// Device identifier length bounds.
pub const DEVICE_ID_MAX_LEN: usize = 32;

/// The persisted/wire unit: one device sample with its alarm flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub device_id: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    pub gas: GasSpecies,
    pub ppm: u32,
    pub adc_code: u16,
    pub alarm: bool,
}

/// Why a frame was refused. The reason code keys the `ERR` reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameError {
    /// Not valid JSON, missing keys, extra keys, or wrong types.
    Malformed(String),
    /// `adc_code` above [`MAX_ADC_CODE`].
    AdcCodeRange(u16),
    /// `device_id` empty, too long, or outside `[A-Za-z0-9_-]`.
    BadDeviceId(String),
    /// Empty line.
    Empty,
}

impl FrameError {
    /// Short stable token used in `ERR <reason>` replies.
    pub fn reason_code(&self) -> &'static str {
        match self {
            FrameError::Malformed(_) => "malformed",
            FrameError::AdcCodeRange(_) => "adc_range",
            FrameError::BadDeviceId(_) => "device_id",
            FrameError::Empty => "empty",
        }
    }
}

impl fmt::Display for FrameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameError::Malformed(msg) => write!(f, "malformed frame: {msg}"),
            FrameError::AdcCodeRange(code) => {
                write!(f, "adc_code {code} above {MAX_ADC_CODE}")
            }
            FrameError::BadDeviceId(id) => write!(f, "bad device_id {id:?}"),
            FrameError::Empty => write!(f, "empty frame"),
        }
    }
}

impl std::error::Error for FrameError {}

pub fn valid_device_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= DEVICE_ID_MAX_LEN
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Field-level checks shared by the decoder and the store.
pub fn validate_record(record: &TelemetryRecord) -> Result<(), FrameError> {
    if !valid_device_id(&record.device_id) {
        return Err(FrameError::BadDeviceId(record.device_id.clone()));
    }
    if record.adc_code > MAX_ADC_CODE {
        return Err(FrameError::AdcCodeRange(record.adc_code));
    }
    Ok(())
}

/// Encode one record as its canonical newline-terminated frame.
pub fn encode_frame(record: &TelemetryRecord) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(record).expect("record serializes");
    bytes.push(b'\n');
    bytes
}

/// Decode one frame; a trailing newline is accepted and ignored.
pub fn decode_frame(bytes: &[u8]) -> Result<TelemetryRecord, FrameError> {
    let line = match bytes.split_last() {
        Some((b'\n', rest)) => rest,
        _ => bytes,
    };
    if line.is_empty() {
        return Err(FrameError::Empty);
    }
    let record: TelemetryRecord =
        serde_json::from_slice(line).map_err(|e| FrameError::Malformed(e.to_string()))?;
    validate_record(&record)?;
    Ok(record)
}
