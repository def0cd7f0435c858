//! The "virtual server": validates telemetry frames, persists them to an
//! append-only log, and answers queries (plus a status page) over HTTP.
//!
//! Submodules:
//! - [`wire`]: the newline-delimited JSON frame codec shared with the modem.
//! - [`store`]: in-memory indexes + append-only log with crash recovery.
//! - [`page`]: the server-rendered HTML status page.
//! - [`server`]: raw TCP ingest + HTTP/1.1 query endpoints (native only).

pub mod page;
#[cfg(not(target_arch = "wasm32"))]
pub mod server;
pub mod store;
pub mod wire;

pub use page::render_status_page;
#[cfg(not(target_arch = "wasm32"))]
pub use server::GatewayServer;
pub use store::{
    AlarmEpisode, GatewayStore, IngestError, IngestOutcome, QueryError, RecoveryError,
    RecoveryReport, StoreOffset,
};
pub use wire::{decode_frame, encode_frame, FrameError, TelemetryRecord};
