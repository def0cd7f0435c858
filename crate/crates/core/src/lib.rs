//! Desk-scale simulation of a hazardous-gas detection pipeline.
//!
//! The crate models the whole chain in software: an MQ-6 style gas sensor
//! ([`sensor`]), the sampling/alarm control loop of an AVR-class board
//! ([`firmware`]), a GSM modem speaking a text-mode AT dialect ([`modem`]),
//! a telemetry gateway with an append-only log and HTTP query surface
//! ([`gateway`]), and a deterministic scenario driver that clocks all of it
//! ([`scenario`]).

pub mod firmware;
pub mod gateway;
pub mod modem;
pub mod scenario;
pub mod sensor;
