//! Record store: in-memory indexes over an append-only newline-delimited log.
//!
//! Appends are durable (written to the log) before the acknowledgement is
//! produced, and the in-memory indexes are only updated after a successful
//! write, so a reply of `ACK` always refers to a record that will survive a
//! restart. Recovery replays complete frames and truncates a partial tail.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wire::{decode_frame, encode_frame, validate_record, FrameError, TelemetryRecord};
use crate::sensor::GasSpecies;

/// Location of an accepted record: byte offset into the log plus its index
/// in acceptance order. Both grow monotonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOffset {
    pub byte_offset: u64,
    pub index: usize,
}

/// Result of offering a record to the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted(StoreOffset),
    /// seq did not advance past the device's last accepted record; replays
    /// land here so redelivery is idempotent.
    Duplicate,
}

#[derive(Debug)]
pub enum IngestError {
    /// The record violates a field constraint (callers that decode frames
    /// never see this; it guards direct API misuse).
    Invalid(FrameError),
    /// The log write failed; the record was not applied.
    Storage(std::io::Error),
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::Invalid(e) => write!(f, "invalid record: {e}"),
            IngestError::Storage(e) => write!(f, "log write failed: {e}"),
        }
    }
}

impl std::error::Error for IngestError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryError {
    /// `from_ms > to_ms`.
    InvertedRange { from_ms: u64, to_ms: u64 },
}

impl fmt::Display for QueryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryError::InvertedRange { from_ms, to_ms } => {
                write!(f, "inverted time range: from={from_ms} to={to_ms}")
            }
        }
    }
}

impl std::error::Error for QueryError {}

/// A maximal run of records with the alarm flag set, reconstructed from
/// flag edges in acceptance order. An episode still open when the stream
/// ends has no `end_ms`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmEpisode {
    pub device_id: String,
    pub gas: GasSpecies,
    pub start_ms: u64,
    pub end_ms: Option<u64>,
    pub peak_ppm: u32,
}

/// How a recovery pass ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryReport {
    /// Complete frames replayed into the store.
    pub recovered: usize,
    /// Bytes of trailing partial frame discarded (0 for a clean log).
    pub truncated_bytes: u64,
}

#[derive(Debug)]
pub enum RecoveryError {
    /// A newline-terminated frame failed to decode or to apply. Only the
    /// un-terminated tail may be damaged; anything earlier is corruption.
    Corrupt {
        byte_offset: u64,
        reason: String,
    },
    Io(std::io::Error),
}

impl fmt::Display for RecoveryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecoveryError::Corrupt {
                byte_offset,
                reason,
            } => write!(f, "corrupt frame at byte {byte_offset}: {reason}"),
            RecoveryError::Io(e) => write!(f, "log recovery I/O error: {e}"),
        }
    }
}

impl std::error::Error for RecoveryError {}

impl From<std::io::Error> for RecoveryError {
    fn from(e: std::io::Error) -> Self {
        RecoveryError::Io(e)
    }
}

#[derive(Debug, Default)]
struct DeviceIndex {
    last_seq: u64,
    /// Indexes into `records`, in acceptance (and therefore seq) order.
    record_indexes: Vec<usize>,
}

/// Telemetry store. Construct with [`GatewayStore::new`] (memory only) or
/// [`GatewayStore::recover`] (backed by an append-only log file).
#[derive(Debug, Default)]
pub struct GatewayStore {
    records: Vec<TelemetryRecord>,
    devices: BTreeMap<String, DeviceIndex>,
    log: Option<File>,
    log_bytes: u64,
}

impl GatewayStore {
    /// An empty store with no backing log.
    pub fn new() -> Self {
        GatewayStore::default()
    }

    /// Open (or create) a log file, replay every complete frame, truncate a
    /// partial tail, and return the store positioned for appending.
    pub fn recover<P: AsRef<Path>>(path: P) -> Result<(Self, RecoveryReport), RecoveryError> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut store = GatewayStore::new();
        let mut offset = 0usize;
        while let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') {
            let line = &bytes[offset..offset + nl + 1];
            let record = decode_frame(line).map_err(|e| RecoveryError::Corrupt {
                byte_offset: offset as u64,
                reason: e.to_string(),
            })?;
            if !store.apply(record) {
                return Err(RecoveryError::Corrupt {
                    byte_offset: offset as u64,
                    reason: "seq regression (log not in acceptance order)".to_string(),
                });
            }
            offset += nl + 1;
        }

        let truncated_bytes = (bytes.len() - offset) as u64;
        if truncated_bytes > 0 {
            file.set_len(offset as u64)?;
        }
        file.seek(SeekFrom::Start(offset as u64))?;

        let recovered = store.records.len();
        store.log = Some(file);
        store.log_bytes = offset as u64;
        Ok((
            store,
            RecoveryReport {
                recovered,
                truncated_bytes,
            },
        ))
    }

    /// Offer one record. Appends iff its seq advances past the device's last
    /// accepted seq; the log write completes before the outcome (and thus any
    /// ack) is produced, and a failed write leaves the indexes untouched.
    pub fn ingest(&mut self, record: TelemetryRecord) -> Result<IngestOutcome, IngestError> {
        validate_record(&record).map_err(IngestError::Invalid)?;
        if let Some(device) = self.devices.get(&record.device_id) {
            if record.seq <= device.last_seq {
                return Ok(IngestOutcome::Duplicate);
            }
        }

        let byte_offset = self.log_bytes;
        if let Some(log) = self.log.as_mut() {
            let frame = encode_frame(&record);
            log.write_all(&frame).map_err(IngestError::Storage)?;
            self.log_bytes += frame.len() as u64;
        }

        let index = self.records.len();
        self.apply(record);
        Ok(IngestOutcome::Accepted(StoreOffset { byte_offset, index }))
    }

    /// Decode + ingest one wire frame and produce the wire reply line:
    /// `ACK <seq>\n` on acceptance, `ERR <reason>\n` otherwise. The
    /// connection-level protocol never aborts on a bad frame.
    pub fn ingest_reply(&mut self, frame: &[u8]) -> Vec<u8> {
        match decode_frame(frame) {
            Ok(record) => {
                let seq = record.seq;
                match self.ingest(record) {
                    Ok(IngestOutcome::Accepted(_)) => format!("ACK {seq}\n").into_bytes(),
                    Ok(IngestOutcome::Duplicate) => b"ERR duplicate\n".to_vec(),
                    Err(IngestError::Invalid(e)) => {
                        format!("ERR {}\n", e.reason_code()).into_bytes()
                    }
                    Err(IngestError::Storage(_)) => b"ERR storage\n".to_vec(),
                }
            }
            Err(e) => format!("ERR {}\n", e.reason_code()).into_bytes(),
        }
    }

    /// Unconditionally index a record (validation/dedup already done).
    /// Returns false if the device's seq would not advance.
    fn apply(&mut self, record: TelemetryRecord) -> bool {
        let device = self.devices.entry(record.device_id.clone()).or_default();
        if !device.record_indexes.is_empty() && record.seq <= device.last_seq {
            return false;
        }
        device.last_seq = record.seq;
        device.record_indexes.push(self.records.len());
        self.records.push(record);
        true
    }

    /// Highest-seq accepted record for a device.
    pub fn query_latest(&self, device_id: &str) -> Option<&TelemetryRecord> {
        let device = self.devices.get(device_id)?;
        let idx = *device.record_indexes.last()?;
        Some(&self.records[idx])
    }

    /// Alarm episodes for a device that intersect `[from_ms, to_ms]`,
    /// reconstructed from the alarm-flag edges of its accepted records.
    pub fn query_alarm_episodes(
        &self,
        device_id: &str,
        from_ms: u64,
        to_ms: u64,
    ) -> Result<Vec<AlarmEpisode>, QueryError> {
        if from_ms > to_ms {
            return Err(QueryError::InvertedRange { from_ms, to_ms });
        }
        let mut episodes = Vec::new();
        let Some(device) = self.devices.get(device_id) else {
            return Ok(episodes);
        };

        let mut open: Option<AlarmEpisode> = None;
        let mut last_true_ms = 0u64;
        for &idx in &device.record_indexes {
            let record = &self.records[idx];
            if record.alarm {
                last_true_ms = record.timestamp_ms;
                match open.as_mut() {
                    Some(ep) => ep.peak_ppm = ep.peak_ppm.max(record.ppm),
                    None => {
                        open = Some(AlarmEpisode {
                            device_id: record.device_id.clone(),
                            gas: record.gas,
                            start_ms: record.timestamp_ms,
                            end_ms: None,
                            peak_ppm: record.ppm,
                        });
                    }
                }
            } else if let Some(mut ep) = open.take() {
                ep.end_ms = Some(last_true_ms);
                episodes.push(ep);
            }
        }
        if let Some(ep) = open {
            episodes.push(ep);
        }

        episodes.retain(|ep| ep.start_ms <= to_ms && ep.end_ms.unwrap_or(u64::MAX) >= from_ms);
        Ok(episodes)
    }

    /// Device ids with at least one accepted record, sorted.
    pub fn device_ids(&self) -> Vec<String> {
        self.devices.keys().cloned().collect()
    }

    /// All accepted records in acceptance order.
    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Accepted-record count for one device.
    pub fn device_record_count(&self, device_id: &str) -> usize {
        self.devices
            .get(device_id)
            .map_or(0, |d| d.record_indexes.len())
    }
}
