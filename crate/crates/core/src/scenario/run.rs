//! The simulation loop: clock the firmware over a scenario, route its
//! effects through the modem to the gateway, and summarize the outcome.
//!
//! Runs are single-threaded and deterministic: identical scenario + seed
//! yields a byte-identical event log. The gateway lives in-process by
//! default; [`run_remote`] speaks the same dialogue over a real socket.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::firmware::{
    self, evaluate_threshold, Effect, FirmwareConfig, FirmwareError, FirmwareState, LcdFrame,
    SmsRequest, Verdict,
};
use crate::gateway::store::GatewayStore;
use crate::gateway::wire::encode_frame;
#[cfg(not(target_arch = "wasm32"))]
use crate::modem::TcpLink;
use crate::modem::{
    serialize_command, serialize_response, AtCommand, AtResponse, DataLink, InProcessLink, Modem,
    SmsMessage, TransmitError,
};

/// Host/port the in-process harness pretends to dial; the loopback link
/// accepts anything, and a fixed name keeps event logs stable.
const IN_PROCESS_HOST: &str = "gateway";
const IN_PROCESS_PORT: u16 = 9000;

#[derive(Debug)]
pub enum RunError {
    InvalidScenario(String),
    /// The data channel could not be opened at startup.
    GatewayUnreachable(String),
    /// The modem answered something the dialogue never expects.
    Modem(String),
    Firmware(FirmwareError),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::InvalidScenario(msg) => write!(f, "invalid scenario: {msg}"),
            RunError::GatewayUnreachable(addr) => {
                write!(f, "gateway unreachable at startup: {addr}")
            }
            RunError::Modem(msg) => write!(f, "modem dialogue failed: {msg}"),
            RunError::Firmware(e) => write!(f, "firmware fault: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<FirmwareError> for RunError {
    fn from(e: FirmwareError) -> Self {
        RunError::Firmware(e)
    }
}

/// Two-valued summary of where the alarm latch ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalState {
    Normal,
    Alarmed,
}

impl fmt::Display for FinalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalState::Normal => "Normal",
            FinalState::Alarmed => "Alarmed",
        })
    }
}

/// End-to-end outcome counters for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub ticks: u64,
    /// Time of the tick on which the alarm latch first raised.
    pub first_alarm_ms: Option<u64>,
    /// `first_alarm_ms` minus the first tick whose estimate exceeded the
    /// threshold; `(raise_count - 1) * period` for a clean step input.
    pub alarm_latency_ms: Option<u64>,
    /// Accepted SMS count — always equals the modem outbox length.
    pub sms_sent: u64,
    /// Records the gateway acked during this run.
    pub records_persisted: u64,
    pub final_state: FinalState,
}

/// Everything a run produces beyond the report.
pub struct RunOutcome {
    pub report: RunReport,
    /// Ordered, deterministic trace: ticks, effects, modem exchanges,
    /// gateway acks. Byte-identical for identical scenario + seed.
    pub event_log: Vec<String>,
    pub sms_outbox: Vec<SmsMessage>,
    pub final_lcd: LcdFrame,
    /// The in-process gateway store; `None` for remote runs.
    pub store: Option<GatewayStore>,
}

/// Output style for [`report_render`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Machine,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "machine" => Ok(ReportFormat::Machine),
            other => Err(format!("unknown report format {other:?} (text|machine)")),
        }
    }
}

/// Render a report. Text is one `key: value` line per field; machine is a
/// single JSON object that parses back to an equal [`RunReport`].
pub fn report_render(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => {
            let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
            format!(
                "ticks: {}\nfirst_alarm: {}\nalarm_latency: {}\nsms_sent: {}\n\
                 records_persisted: {}\nfinal_state: {}\n",
                report.ticks,
                opt(report.first_alarm_ms),
                opt(report.alarm_latency_ms),
                report.sms_sent,
                report.records_persisted,
                report.final_state,
            )
        }
        ReportFormat::Machine => {
            let mut json = serde_json::to_string(report).expect("report serializes");
            json.push('\n');
            json
        }
    }
}

/// Run against an in-process gateway with a fresh, memory-only store.
pub fn run(scenario: &Scenario) -> Result<RunOutcome, RunError> {
    run_with_store(scenario, GatewayStore::new())
}

/// Run against an in-process gateway seeded with `store` (which may be
/// log-backed); the store comes back in the outcome.
pub fn run_with_store(scenario: &Scenario, store: GatewayStore) -> Result<RunOutcome, RunError> {
    let shared = Rc::new(RefCell::new(store));
    let link = InProcessLink::new(shared.clone());
    let (report, event_log, modem, state) =
        run_core(scenario, link, IN_PROCESS_HOST, IN_PROCESS_PORT)?;
    let sms_outbox = modem.state.snapshot_outbox();
    drop(modem);
    let store = Rc::try_unwrap(shared).ok().map(RefCell::into_inner);
    Ok(RunOutcome {
        report,
        event_log,
        sms_outbox,
        final_lcd: state.lcd,
        store,
    })
}

/// Run against a live gateway ingest socket at `host:port`.
#[cfg(not(target_arch = "wasm32"))]
pub fn run_remote(scenario: &Scenario, addr: &str) -> Result<RunOutcome, RunError> {
    let (host, port) = addr
        .rsplit_once(':')
        .and_then(|(h, p)| p.parse::<u16>().ok().map(|p| (h.to_string(), p)))
        .ok_or_else(|| RunError::GatewayUnreachable(format!("bad address {addr:?}")))?;
    let (report, event_log, modem, state) = run_core(scenario, TcpLink::new(), &host, port)?;
    let sms_outbox = modem.state.snapshot_outbox();
    Ok(RunOutcome {
        report,
        event_log,
        sms_outbox,
        final_lcd: state.lcd,
        store: None,
    })
}

struct Harness<'s, L: DataLink> {
    scenario: &'s Scenario,
    modem: Modem<L>,
    state: FirmwareState,
    config: FirmwareConfig,
    log: Vec<String>,
    /// Emitted records not yet acked; retained across channel failures.
    pending: VecDeque<crate::gateway::wire::TelemetryRecord>,
    acked: u64,
    first_crossing_ms: Option<u64>,
    first_alarm_ms: Option<u64>,
    sms_mode_ready: bool,
    host: String,
    port: u16,
}

fn escape(bytes: &[u8]) -> String {
    bytes.escape_ascii().to_string()
}

fn run_core<L: DataLink>(
    scenario: &Scenario,
    link: L,
    host: &str,
    port: u16,
) -> Result<(RunReport, Vec<String>, Modem<L>, FirmwareState), RunError> {
    scenario.validate().map_err(RunError::InvalidScenario)?;

    let mut h = Harness {
        scenario,
        modem: Modem::new(link),
        state: FirmwareState::new(scenario.active_gas),
        config: FirmwareConfig {
            device_id: scenario.device_id.clone(),
            emergency_number: Some(scenario.emergency_number.clone()),
            sms_repeat_ms: scenario.sms_repeat_ms,
        },
        log: Vec::new(),
        pending: VecDeque::new(),
        acked: 0,
        first_crossing_ms: None,
        first_alarm_ms: None,
        sms_mode_ready: false,
        host: host.to_string(),
        port,
    };

    h.log.push(format!(
        "run: device={} gas={} period_ms={} duration_ms={} sigma_ppm={} seed={}",
        scenario.device_id,
        scenario.active_gas,
        scenario.sample_period_ms,
        scenario.duration_ms,
        scenario.noise_sigma_ppm,
        scenario.rng_seed,
    ));

    if !h.open_channel(0) {
        return Err(RunError::GatewayUnreachable(format!("{host}:{port}")));
    }

    let ticks = scenario.ticks();
    for i in 0..ticks {
        let now_ms = i * scenario.sample_period_ms;
        h.tick_once(i, now_ms)?;
    }

    let end_ms = scenario.duration_ms;
    h.push_at(&serialize_command(&AtCommand::DataClose), end_ms);
    h.log.push(format!(
        "run: done ticks={ticks} pending={}",
        h.pending.len()
    ));

    let report = RunReport {
        ticks,
        first_alarm_ms: h.first_alarm_ms,
        alarm_latency_ms: h
            .first_alarm_ms
            .zip(h.first_crossing_ms)
            .map(|(alarm, crossing)| alarm - crossing),
        sms_sent: h.modem.state.sms_counter,
        records_persisted: h.acked,
        final_state: if h.state.fsm.is_latched() {
            FinalState::Alarmed
        } else {
            FinalState::Normal
        },
    };
    Ok((report, h.log, h.modem, h.state))
}

impl<L: DataLink> Harness<'_, L> {
    /// Feed one serialized command to the modem, logging both directions.
    fn push_at(&mut self, bytes: &[u8], now_ms: u64) -> Vec<AtResponse> {
        self.log.push(format!("at>> {}", escape(bytes)));
        let responses = self.modem.feed(bytes, now_ms);
        for response in &responses {
            self.log
                .push(format!("at<< {}", escape(&serialize_response(response))));
        }
        responses
    }

    fn open_channel(&mut self, now_ms: u64) -> bool {
        let cmd = AtCommand::DataOpen {
            host: self.host.clone(),
            port: self.port,
        };
        self.push_at(&serialize_command(&cmd), now_ms) == [AtResponse::Connect]
    }

    fn send_sms(&mut self, request: &SmsRequest, now_ms: u64) -> Result<(), RunError> {
        if !self.sms_mode_ready {
            let r = self.push_at(&serialize_command(&AtCommand::SetTextMode(true)), now_ms);
            if r != [AtResponse::Ok] {
                return Err(RunError::Modem(format!("CMGF refused: {r:?}")));
            }
            self.sms_mode_ready = true;
        }
        let cmd = AtCommand::SendSms(request.destination.clone());
        let r = self.push_at(&serialize_command(&cmd), now_ms);
        if r != [AtResponse::Prompt] {
            return Err(RunError::Modem(format!("CMGS refused: {r:?}")));
        }
        let body = AtCommand::SmsBody {
            text: request.body.clone(),
            terminated: true,
        };
        let r = self.push_at(&serialize_command(&body), now_ms);
        match r.as_slice() {
            [AtResponse::CmgsAck(_)] => Ok(()),
            other => Err(RunError::Modem(format!("SMS body refused: {other:?}"))),
        }
    }

    /// Deliver queued records oldest-first. A rejection drops the record
    /// (the gateway has spoken); a transport failure keeps it queued and
    /// tries one channel reopen per flush.
    fn flush_telemetry(&mut self, now_ms: u64) {
        let mut reopened = false;
        while let Some(record) = self.pending.front().cloned() {
            let frame_len = encode_frame(&record).len();
            self.log.push(format!(
                "at>> {}",
                escape(&serialize_command(&AtCommand::DataSend(frame_len)))
            ));
            match self.modem.transmit_telemetry(&record, now_ms) {
                Ok(seq) => {
                    self.log.push(format!("gw: ack seq={seq}"));
                    self.acked += 1;
                    self.pending.pop_front();
                }
                Err(TransmitError::Rejected(reason)) => {
                    self.log
                        .push(format!("gw: rejected seq={} ({reason})", record.seq));
                    self.pending.pop_front();
                }
                Err(e) => {
                    self.log.push(format!(
                        "gw: channel lost ({e}); pending={}",
                        self.pending.len()
                    ));
                    if reopened || !self.open_channel(now_ms) {
                        break;
                    }
                    reopened = true;
                }
            }
        }
    }

    fn tick_once(&mut self, index: u64, now_ms: u64) -> Result<(), RunError> {
        let true_ppm = self
            .scenario
            .concentration_at(now_ms)
            .map_err(|e| RunError::InvalidScenario(e.to_string()))?;
        let reading = self
            .scenario
            .sensor
            .sample(true_ppm, self.scenario.active_gas, now_ms)
            .map_err(FirmwareError::Sensor)?;
        self.state.last_reading = Some(reading);

        let effects = firmware::tick(
            &mut self.state,
            reading.adc_code,
            now_ms,
            &self.scenario.thresholds,
            &self.scenario.sensor,
            &self.config,
        )?;

        self.log.push(format!(
            "tick {index} t={now_ms} ppm={true_ppm:.3} code={} est={:.3} fsm={}",
            reading.adc_code, self.state.last_estimate_ppm, self.state.fsm.state,
        ));

        if self.first_crossing_ms.is_none()
            && evaluate_threshold(
                self.state.last_estimate_ppm,
                self.scenario.active_gas,
                &self.scenario.thresholds,
            ) == Verdict::Over
        {
            self.first_crossing_ms = Some(now_ms);
        }

        for effect in effects {
            match effect {
                Effect::LcdSet(frame) => {
                    self.log
                        .push(format!("lcd: {}|{}", frame.line1, frame.line2));
                }
                Effect::BuzzerSet(on) => {
                    self.log
                        .push(format!("buzzer: {}", if on { "on" } else { "off" }));
                    if on && self.first_alarm_ms.is_none() {
                        self.first_alarm_ms = Some(now_ms);
                    }
                }
                Effect::LedSet(on) => {
                    self.log
                        .push(format!("led: {}", if on { "on" } else { "off" }));
                }
                Effect::SmsSend(request) => {
                    self.log.push(format!(
                        "sms: dest={} body={}",
                        request.destination, request.body
                    ));
                    self.send_sms(&request, now_ms)?;
                }
                Effect::TelemetryEmit(record) => {
                    let frame = encode_frame(&record);
                    // Drop the trailing newline for a one-line log entry.
                    self.log.push(format!(
                        "telemetry: {}",
                        String::from_utf8_lossy(&frame[..frame.len() - 1])
                    ));
                    self.pending.push_back(record);
                }
            }
        }

        self.flush_telemetry(now_ms);
        Ok(())
    }
}
