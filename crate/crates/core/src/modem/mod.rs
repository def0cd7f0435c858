//! GSM module emulation: a byte-stream AT-command REPL with an SMS outbox
//! and a data channel for telemetry frames.
//!
//! The grammar lives in [`at`], transports in [`link`]. [`Modem`] ties them
//! together: [`Modem::feed`] frames raw serial bytes into command units,
//! [`Modem::execute`] applies one command, and [`Modem::transmit_telemetry`]
//! drives the CIPSEND path end to end for one record.

pub mod at;
pub mod link;

use std::fmt;

pub use at::{
    parse_at, serialize_command, serialize_response, AtCommand, AtResponse, ParseError,
    ParseErrorKind,
};
#[cfg(not(target_arch = "wasm32"))]
pub use link::TcpLink;
pub use link::{DataLink, InProcessLink, LinkError};

use crate::gateway::wire::{encode_frame, TelemetryRecord};

/// An accepted outbound SMS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmsMessage {
    pub destination: String,
    pub body: String,
    pub accepted_at_ms: u64,
    /// 1-based lifetime count, echoed in the `+CMGS:` acknowledgement.
    pub message_ref: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataChannel {
    Closed,
    Open { host: String, port: u16 },
}

/// Pure modem state; every transition goes through [`Modem::execute`].
#[derive(Debug)]
pub struct ModemState {
    /// Always true: this artifact models a modem already on its home network.
    pub registered: bool,
    pub text_mode: bool,
    /// Destination of the SMS whose body we are waiting for.
    pub awaiting_body: Option<String>,
    pub data_channel: DataChannel,
    outbox: Vec<SmsMessage>,
    /// Lifetime accepted-SMS count; always equals `outbox.len()`.
    pub sms_counter: u64,
    /// Payload length announced by a pending `AT+CIPSEND`.
    pub awaiting_payload: Option<usize>,
    /// Reply line captured from the link after the last payload delivery.
    pub last_inbound: Option<Vec<u8>>,
}

impl Default for ModemState {
    fn default() -> Self {
        ModemState {
            registered: true,
            text_mode: false,
            awaiting_body: None,
            data_channel: DataChannel::Closed,
            outbox: Vec::new(),
            sms_counter: 0,
            awaiting_payload: None,
            last_inbound: None,
        }
    }
}

impl ModemState {
    pub fn new() -> Self {
        ModemState::default()
    }

    /// The outbox is append-only; only a shared view is ever handed out.
    pub fn outbox(&self) -> &[SmsMessage] {
        &self.outbox
    }

    /// Immutable copy for inspection from another context.
    pub fn snapshot_outbox(&self) -> Vec<SmsMessage> {
        self.outbox.clone()
    }
}

/// Why a telemetry hand-off failed.
#[derive(Debug)]
pub enum TransmitError {
    /// The data channel is closed (never opened, or lost on an I/O error).
    /// The caller keeps the record and retries after reopening.
    ChannelClosed,
    /// The link broke mid-exchange; the channel is now closed.
    Link(LinkError),
    /// The gateway answered `ERR <reason>`; retrying the same record is
    /// pointless (e.g. a duplicate already persisted).
    Rejected(String),
    /// The gateway's reply wasn't in the wire protocol.
    Protocol(String),
}

impl fmt::Display for TransmitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransmitError::ChannelClosed => write!(f, "data channel is closed"),
            TransmitError::Link(e) => write!(f, "data link failed: {e}"),
            TransmitError::Rejected(reason) => write!(f, "gateway rejected frame: {reason}"),
            TransmitError::Protocol(detail) => write!(f, "unintelligible gateway reply: {detail}"),
        }
    }
}

impl std::error::Error for TransmitError {}

/// A modem bound to its transport.
pub struct Modem<L: DataLink> {
    pub state: ModemState,
    link: L,
    /// Unconsumed serial bytes between [`Modem::feed`] calls.
    rx: Vec<u8>,
}

impl<L: DataLink> Modem<L> {
    pub fn new(link: L) -> Self {
        Modem {
            state: ModemState::new(),
            link,
            rx: Vec::new(),
        }
    }

    pub fn link(&self) -> &L {
        &self.link
    }

    /// Apply one parsed command and produce its response.
    pub fn execute(&mut self, cmd: AtCommand, now_ms: u64) -> AtResponse {
        match cmd {
            AtCommand::Attention => AtResponse::Ok,
            AtCommand::SetTextMode(true) => {
                self.state.text_mode = true;
                AtResponse::Ok
            }
            // PDU mode is out of scope; refuse rather than half-support it.
            AtCommand::SetTextMode(false) => AtResponse::Error,
            AtCommand::SendSms(destination) => {
                if !self.state.text_mode {
                    return AtResponse::CmsError(305);
                }
                self.state.awaiting_body = Some(destination);
                AtResponse::Prompt
            }
            AtCommand::SmsBody { text, terminated } => {
                let Some(destination) = self.state.awaiting_body.take() else {
                    return AtResponse::Error;
                };
                if !terminated {
                    // The body never got its Ctrl-Z; abandon the send.
                    return AtResponse::Error;
                }
                self.state.sms_counter += 1;
                self.state.outbox.push(SmsMessage {
                    destination,
                    body: text,
                    accepted_at_ms: now_ms,
                    message_ref: self.state.sms_counter,
                });
                AtResponse::CmgsAck(self.state.sms_counter)
            }
            AtCommand::RegistrationQuery => AtResponse::RegistrationStatus,
            AtCommand::DataOpen { host, port } => {
                if matches!(self.state.data_channel, DataChannel::Open { .. }) {
                    return AtResponse::Error;
                }
                match self.link.connect(&host, port) {
                    Ok(()) => {
                        self.state.data_channel = DataChannel::Open { host, port };
                        AtResponse::Connect
                    }
                    Err(_) => AtResponse::Error,
                }
            }
            AtCommand::DataSend(len) => {
                if matches!(self.state.data_channel, DataChannel::Closed) {
                    return AtResponse::Error;
                }
                self.state.awaiting_payload = Some(len);
                AtResponse::Prompt
            }
            AtCommand::DataPayload(bytes) => {
                let expected = self.state.awaiting_payload.take();
                if expected != Some(bytes.len())
                    || matches!(self.state.data_channel, DataChannel::Closed)
                {
                    return AtResponse::Error;
                }
                match self.link.send_frame(&bytes) {
                    Ok(reply) => {
                        self.state.last_inbound = Some(reply);
                        AtResponse::SendOk
                    }
                    Err(_) => {
                        // A dead transport closes the channel; the harness
                        // reopens and retries.
                        self.state.data_channel = DataChannel::Closed;
                        AtResponse::Error
                    }
                }
            }
            AtCommand::DataClose => {
                if matches!(self.state.data_channel, DataChannel::Closed) {
                    return AtResponse::Error;
                }
                self.link.disconnect();
                self.state.data_channel = DataChannel::Closed;
                AtResponse::Closed
            }
        }
    }

    /// Push serial bytes into the framer and execute every complete unit.
    /// Returns the responses in order. Framing mode follows modem state:
    /// payload bytes are length-framed, SMS bodies end at Ctrl-Z, everything
    /// else is CR-terminated lines (leading LF/NUL noise is dropped, an empty
    /// line is ignored, and an unparseable unit answers `ERROR`).
    pub fn feed(&mut self, bytes: &[u8], now_ms: u64) -> Vec<AtResponse> {
        self.rx.extend_from_slice(bytes);
        let mut responses = Vec::new();
        let mut pos = 0;
        loop {
            if let Some(len) = self.state.awaiting_payload {
                if self.rx.len() - pos < len {
                    break;
                }
                let payload = self.rx[pos..pos + len].to_vec();
                pos += len;
                responses.push(self.execute(AtCommand::DataPayload(payload), now_ms));
                continue;
            }

            if self.state.awaiting_body.is_some() {
                let Some(i) = self.rx[pos..]
                    .iter()
                    .position(|&b| b == at::BODY_TERMINATOR)
                else {
                    break;
                };
                let unit = self.rx[pos..pos + i + 1].to_vec();
                pos += i + 1;
                match parse_at(&unit) {
                    Ok(cmd) => responses.push(self.execute(cmd, now_ms)),
                    Err(_) => {
                        // Bad body (too long / non-ASCII): abandon the send.
                        self.state.awaiting_body = None;
                        responses.push(AtResponse::Error);
                    }
                }
                continue;
            }

            while pos < self.rx.len() && matches!(self.rx[pos], b'\n' | 0) {
                pos += 1;
            }
            let Some(i) = self.rx[pos..].iter().position(|&b| b == b'\r') else {
                break;
            };
            let unit = self.rx[pos..pos + i + 1].to_vec();
            pos += i + 1;
            if unit.len() == 1 {
                continue; // empty line
            }
            match parse_at(&unit) {
                Ok(cmd) => responses.push(self.execute(cmd, now_ms)),
                Err(_) => responses.push(AtResponse::Error),
            }
        }
        self.rx.drain(..pos);
        responses
    }

    /// Send one record over the open data channel and interpret the
    /// gateway's reply. On success returns the acknowledged seq.
    pub fn transmit_telemetry(
        &mut self,
        record: &TelemetryRecord,
        now_ms: u64,
    ) -> Result<u64, TransmitError> {
        if matches!(self.state.data_channel, DataChannel::Closed) {
            return Err(TransmitError::ChannelClosed);
        }
        let frame = encode_frame(record);

        let response = self.execute(AtCommand::DataSend(frame.len()), now_ms);
        if response != AtResponse::Prompt {
            return Err(TransmitError::ChannelClosed);
        }
        let response = self.execute(AtCommand::DataPayload(frame), now_ms);
        if response != AtResponse::SendOk {
            return Err(TransmitError::Link(LinkError::NotConnected));
        }

        let reply = self
            .state
            .last_inbound
            .take()
            .ok_or_else(|| TransmitError::Protocol("no reply captured".to_string()))?;
        let line = String::from_utf8_lossy(&reply);
        let line = line.trim_end_matches(['\r', '\n']);
        if let Some(seq) = line.strip_prefix("ACK ") {
            seq.parse::<u64>()
                .map_err(|_| TransmitError::Protocol(format!("bad ack: {line:?}")))
        } else if let Some(reason) = line.strip_prefix("ERR ") {
            Err(TransmitError::Rejected(reason.to_string()))
        } else {
            Err(TransmitError::Protocol(format!(
                "unrecognized reply: {line:?}"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::store::GatewayStore;
    use crate::sensor::GasSpecies;
    use std::cell::RefCell;
    use std::rc::Rc;

    /// Scripted link for unit tests: records frames, replays canned replies.
    #[derive(Default)]
    struct ScriptedLink {
        connected: bool,
        frames: Vec<Vec<u8>>,
        replies: Vec<Result<Vec<u8>, LinkError>>,
        refuse_connect: bool,
    }

    impl DataLink for ScriptedLink {
        fn connect(&mut self, _host: &str, _port: u16) -> Result<(), LinkError> {
            if self.refuse_connect {
                return Err(LinkError::Unreachable("scripted refusal".to_string()));
            }
            self.connected = true;
            Ok(())
        }

        fn send_frame(&mut self, frame: &[u8]) -> Result<Vec<u8>, LinkError> {
            if !self.connected {
                return Err(LinkError::NotConnected);
            }
            self.frames.push(frame.to_vec());
            if self.replies.is_empty() {
                Ok(b"ACK 0\n".to_vec())
            } else {
                self.replies.remove(0)
            }
        }

        fn disconnect(&mut self) {
            self.connected = false;
        }
    }

    fn modem() -> Modem<ScriptedLink> {
        Modem::new(ScriptedLink::default())
    }

    fn record(seq: u64) -> TelemetryRecord {
        TelemetryRecord {
            device_id: "dev1".to_string(),
            seq,
            timestamp_ms: seq * 500,
            gas: GasSpecies::LPG,
            ppm: 10,
            adc_code: 200,
            alarm: false,
        }
    }

    #[test]
    fn attention_answers_ok_on_a_fresh_modem() {
        let mut m = modem();
        assert_eq!(m.execute(AtCommand::Attention, 0), AtResponse::Ok);
        assert!(m.state.registered);
        assert!(!m.state.text_mode);
    }

    #[test]
    fn the_text_mode_sms_flow_reaches_the_outbox() {
        let mut m = modem();
        assert_eq!(m.execute(AtCommand::SetTextMode(true), 0), AtResponse::Ok);
        assert_eq!(
            m.execute(AtCommand::SendSms("+15550000911".to_string()), 0),
            AtResponse::Prompt
        );
        let body = "EMERGENCY ALERT: LPG gas leakage found in your home";
        let response = m.execute(
            AtCommand::SmsBody {
                text: body.to_string(),
                terminated: true,
            },
            1234,
        );
        assert_eq!(response, AtResponse::CmgsAck(1));
        assert_eq!(m.state.outbox().len(), 1);
        let sms = &m.state.outbox()[0];
        assert_eq!(sms.body, body);
        assert_eq!(sms.destination, "+15550000911");
        assert_eq!(sms.accepted_at_ms, 1234);
        assert_eq!(sms.message_ref, 1);
    }

    #[test]
    fn sms_without_text_mode_is_cms_error_305() {
        let mut m = modem();
        assert_eq!(
            m.execute(AtCommand::SendSms("+15550000911".to_string()), 0),
            AtResponse::CmsError(305)
        );
        assert!(m.state.outbox().is_empty());
        assert!(m.state.awaiting_body.is_none());
    }

    #[test]
    fn pdu_mode_is_refused() {
        let mut m = modem();
        assert_eq!(
            m.execute(AtCommand::SetTextMode(false), 0),
            AtResponse::Error
        );
        assert!(!m.state.text_mode);
    }

    #[test]
    fn cmgs_ack_counts_lifetime_messages() {
        let mut m = modem();
        m.execute(AtCommand::SetTextMode(true), 0);
        for expected in 1..=3u64 {
            m.execute(AtCommand::SendSms("+12345678".to_string()), 0);
            let response = m.execute(
                AtCommand::SmsBody {
                    text: format!("alert {expected}"),
                    terminated: true,
                },
                0,
            );
            assert_eq!(response, AtResponse::CmgsAck(expected));
        }
        assert_eq!(m.state.sms_counter, 3);
        assert_eq!(m.state.outbox().len(), 3);
    }

    #[test]
    fn a_body_with_no_pending_send_is_an_error() {
        let mut m = modem();
        let response = m.execute(
            AtCommand::SmsBody {
                text: "stray".to_string(),
                terminated: true,
            },
            0,
        );
        assert_eq!(response, AtResponse::Error);
        assert!(m.state.outbox().is_empty());
    }

    #[test]
    fn registration_query_reports_home_network() {
        let mut m = modem();
        assert_eq!(
            m.execute(AtCommand::RegistrationQuery, 0),
            AtResponse::RegistrationStatus
        );
    }

    #[test]
    fn the_data_channel_lifecycle_works() {
        let mut m = modem();
        let open = AtCommand::DataOpen {
            host: "gateway".to_string(),
            port: 9000,
        };
        assert_eq!(m.execute(open.clone(), 0), AtResponse::Connect);
        assert_eq!(
            m.state.data_channel,
            DataChannel::Open {
                host: "gateway".to_string(),
                port: 9000
            }
        );
        // Opening an already-open channel is refused.
        assert_eq!(m.execute(open, 0), AtResponse::Error);

        assert_eq!(m.execute(AtCommand::DataSend(5), 0), AtResponse::Prompt);
        assert_eq!(
            m.execute(AtCommand::DataPayload(b"hello".to_vec()), 0),
            AtResponse::SendOk
        );
        assert_eq!(m.state.last_inbound.as_deref(), Some(&b"ACK 0\n"[..]));
        assert_eq!(m.link.frames, vec![b"hello".to_vec()]);

        assert_eq!(m.execute(AtCommand::DataClose, 0), AtResponse::Closed);
        assert_eq!(m.state.data_channel, DataChannel::Closed);
        assert_eq!(m.execute(AtCommand::DataClose, 0), AtResponse::Error);
    }

    #[test]
    fn data_send_on_a_closed_channel_is_an_error() {
        let mut m = modem();
        assert_eq!(m.execute(AtCommand::DataSend(5), 0), AtResponse::Error);
        assert_eq!(
            m.execute(AtCommand::DataPayload(b"hello".to_vec()), 0),
            AtResponse::Error
        );
    }

    #[test]
    fn a_refused_connection_keeps_the_channel_closed() {
        let mut m = Modem::new(ScriptedLink {
            refuse_connect: true,
            ..ScriptedLink::default()
        });
        let response = m.execute(
            AtCommand::DataOpen {
                host: "nowhere".to_string(),
                port: 1,
            },
            0,
        );
        assert_eq!(response, AtResponse::Error);
        assert_eq!(m.state.data_channel, DataChannel::Closed);
    }

    #[test]
    fn feed_frames_a_full_dialogue() {
        let mut m = modem();
        let mut stream = Vec::new();
        stream.extend_from_slice(b"AT\r\n");
        stream.extend_from_slice(b"AT+CMGF=1\r\n");
        stream.extend_from_slice(b"AT+CMGS=\"+15550000911\"\r");
        stream.extend_from_slice(b"Gas Leakage Detected\x1a");
        stream.extend_from_slice(b"AT+CREG?\r");
        let responses = m.feed(&stream, 7);
        assert_eq!(
            responses,
            vec![
                AtResponse::Ok,
                AtResponse::Ok,
                AtResponse::Prompt,
                AtResponse::CmgsAck(1),
                AtResponse::RegistrationStatus,
            ]
        );
        assert_eq!(m.state.outbox()[0].body, "Gas Leakage Detected");
        assert!(m.rx.is_empty());
    }

    #[test]
    fn feed_is_chunking_invariant() {
        let mut whole = modem();
        let stream = b"AT+CMGF=1\rAT+CMGS=\"+15550000911\"\rhello\x1a";
        let expected = whole.feed(stream, 0);

        for chunk_len in [1usize, 2, 3, 7] {
            let mut m = modem();
            let mut responses = Vec::new();
            for chunk in stream.chunks(chunk_len) {
                responses.extend(m.feed(chunk, 0));
            }
            assert_eq!(responses, expected, "chunk_len={chunk_len}");
            assert_eq!(m.state.outbox().len(), 1);
        }
    }

    #[test]
    fn feed_answers_error_to_garbage_and_carries_on() {
        let mut m = modem();
        let responses = m.feed(b"AT+NOPE\rAT\r", 0);
        assert_eq!(responses, vec![AtResponse::Error, AtResponse::Ok]);
    }

    #[test]
    fn feed_consumes_payload_bytes_verbatim() {
        let mut m = modem();
        m.execute(
            AtCommand::DataOpen {
                host: "gw".to_string(),
                port: 1,
            },
            0,
        );
        // "AT\r" inside the payload must NOT be parsed as a command.
        let responses = m.feed(b"AT+CIPSEND=5\rAT\r\x1a9AT\r", 0);
        assert_eq!(
            responses,
            vec![AtResponse::Prompt, AtResponse::SendOk, AtResponse::Ok]
        );
        assert_eq!(m.link.frames, vec![b"AT\r\x1a9".to_vec()]);
    }

    #[test]
    fn an_overlong_body_aborts_the_send() {
        let mut m = modem();
        m.execute(AtCommand::SetTextMode(true), 0);
        m.execute(AtCommand::SendSms("+12345678".to_string()), 0);
        let mut stream = vec![b'x'; 200];
        stream.push(0x1a);
        let responses = m.feed(&stream, 0);
        assert_eq!(responses, vec![AtResponse::Error]);
        assert!(m.state.awaiting_body.is_none());
        assert!(m.state.outbox().is_empty());
        // The modem is back in command mode.
        assert_eq!(m.feed(b"AT\r", 0), vec![AtResponse::Ok]);
    }

    #[test]
    fn transmit_telemetry_acks_against_the_in_process_gateway() {
        let store = Rc::new(RefCell::new(GatewayStore::new()));
        let mut m = Modem::new(InProcessLink::new(store.clone()));
        m.execute(
            AtCommand::DataOpen {
                host: "gateway".to_string(),
                port: 9000,
            },
            0,
        );
        for seq in 0..100 {
            let acked = m.transmit_telemetry(&record(seq), seq * 500).unwrap();
            assert_eq!(acked, seq);
        }
        let store = store.borrow();
        assert_eq!(store.len(), 100);
        let seqs: Vec<u64> = store.records().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, (0..100).collect::<Vec<u64>>());
    }

    #[test]
    fn transmit_on_a_closed_channel_fails_without_sending() {
        let store = Rc::new(RefCell::new(GatewayStore::new()));
        let mut m = Modem::new(InProcessLink::new(store.clone()));
        let result = m.transmit_telemetry(&record(0), 0);
        assert!(matches!(result, Err(TransmitError::ChannelClosed)));
        assert_eq!(store.borrow().len(), 0);
    }

    #[test]
    fn a_duplicate_is_a_rejection_not_a_retry_case() {
        let store = Rc::new(RefCell::new(GatewayStore::new()));
        let mut m = Modem::new(InProcessLink::new(store));
        m.execute(
            AtCommand::DataOpen {
                host: "gateway".to_string(),
                port: 9000,
            },
            0,
        );
        m.transmit_telemetry(&record(0), 0).unwrap();
        match m.transmit_telemetry(&record(0), 1) {
            Err(TransmitError::Rejected(reason)) => assert_eq!(reason, "duplicate"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn a_dead_link_closes_the_channel_for_retry() {
        let mut m = modem();
        m.execute(
            AtCommand::DataOpen {
                host: "gw".to_string(),
                port: 1,
            },
            0,
        );
        m.link
            .replies
            .push(Err(LinkError::Io("wire cut".to_string())));
        let result = m.transmit_telemetry(&record(0), 0);
        assert!(matches!(result, Err(TransmitError::Link(_))));
        assert_eq!(m.state.data_channel, DataChannel::Closed);
        // Subsequent attempts report the closed channel.
        assert!(matches!(
            m.transmit_telemetry(&record(0), 1),
            Err(TransmitError::ChannelClosed)
        ));
    }

    #[test]
    fn outbox_snapshots_are_independent_copies() {
        let mut m = modem();
        m.execute(AtCommand::SetTextMode(true), 0);
        m.execute(AtCommand::SendSms("+12345678".to_string()), 0);
        m.execute(
            AtCommand::SmsBody {
                text: "one".to_string(),
                terminated: true,
            },
            0,
        );
        let snapshot = m.state.snapshot_outbox();
        m.execute(AtCommand::SendSms("+12345678".to_string()), 0);
        m.execute(
            AtCommand::SmsBody {
                text: "two".to_string(),
                terminated: true,
            },
            0,
        );
        assert_eq!(snapshot.len(), 1);
        assert_eq!(m.state.outbox().len(), 2);
        assert_eq!(m.state.outbox()[0], snapshot[0]);
    }

    #[test]
    fn small_fuzz_stream_never_panics() {
        // A cheap congruential byte source; the heavyweight fuzz lives in
        // the property suite.
        let mut x = 0x243f6a8885a308d3u64;
        let mut bytes = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            bytes.push((x >> 56) as u8);
        }
        let mut m = modem();
        for chunk in bytes.chunks(97) {
            let _ = m.feed(chunk, 0);
        }
    }
}
