//! WebAssembly bindings for the browser demo.
//!
//! Every export returns a JSON string: either the requested payload or an
//! `{"error": "..."}` envelope. Returning strings keeps the JS side down to
//! `JSON.parse` with no extra glue, and lets the same functions run natively
//! under `cargo test` (the `wasm_bindgen` attribute is a no-op off-wasm,
//! which matters here because this workspace is tested on the host).

use std::cell::RefCell;
use std::rc::Rc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gasguard_core::gateway::{render_status_page, GatewayStore};
use gasguard_core::modem::{InProcessLink, Modem};
use gasguard_core::scenario::{load_scenario, run, Scenario};
use gasguard_core::sensor::{GasSpecies, SensorModel};

/// Hard cap so a typo in `duration_ms` cannot freeze the browser tab.
const MAX_DEMO_TICKS: u64 = 200_000;

fn error_json(message: &str) -> String {
    serde_json::to_string(&serde_json::json!({ "error": message })).expect("error serializes")
}

fn to_json<T: Serialize>(value: &T) -> String {
    match serde_json::to_string(value) {
        Ok(json) => json,
        Err(e) => error_json(&e.to_string()),
    }
}

#[derive(Serialize)]
struct CurvePoint {
    ppm: f64,
    rs_ohms: f64,
    vout_volts: f64,
    adc_code: u16,
    estimate_ppm: f64,
}

/// Sample the full sensing chain (power-law curve, divider, ADC, inverse
/// estimate) at `points` log-spaced concentrations in `[ppm_min, ppm_max]`.
#[wasm_bindgen]
pub fn transfer_curve(gas: &str, ppm_min: f64, ppm_max: f64, points: u32) -> String {
    let gas: GasSpecies = match gas.parse() {
        Ok(gas) => gas,
        Err(e) => return error_json(&e),
    };
    if !(ppm_min.is_finite() && ppm_max.is_finite()) || ppm_min <= 0.0 || ppm_max <= ppm_min {
        return error_json("need finite 0 < ppm_min < ppm_max");
    }
    if !(2..=4096).contains(&points) {
        return error_json("points must be in 2..=4096");
    }

    let model = SensorModel::default();
    let ratio = ppm_max / ppm_min;
    let mut curve = Vec::with_capacity(points as usize);
    for i in 0..points {
        let frac = f64::from(i) / f64::from(points - 1);
        let ppm = ppm_min * ratio.powf(frac);
        let reading = match model.sample(ppm, gas, 0) {
            Ok(reading) => reading,
            Err(e) => return error_json(&e.to_string()),
        };
        let estimate_ppm = match model.estimate_ppm(reading.adc_code, gas) {
            Ok(est) => est,
            Err(e) => return error_json(&e.to_string()),
        };
        curve.push(CurvePoint {
            ppm,
            rs_ohms: reading.rs_ohms,
            vout_volts: reading.vout_volts,
            adc_code: reading.adc_code,
            estimate_ppm,
        });
    }
    to_json(&curve)
}

#[derive(Serialize)]
struct TickPoint {
    t_ms: u64,
    true_ppm: f64,
    estimate_ppm: f64,
    latched: bool,
}

#[derive(Serialize)]
struct SmsView {
    destination: String,
    body: String,
    accepted_at_ms: u64,
}

#[derive(Serialize)]
struct RunView {
    report: gasguard_core::scenario::RunReport,
    threshold_ppm: f64,
    series: Vec<TickPoint>,
    sms: Vec<SmsView>,
    lcd: [String; 2],
    events: Vec<String>,
}

/// Every tick the run loop logs
/// `tick <i> t=<ms> ppm=<true> code=<adc> est=<estimate> fsm=<state>`;
/// fold those lines into a plottable series.
fn series_from_log(events: &[String]) -> Vec<TickPoint> {
    let mut series = Vec::new();
    for line in events {
        let Some(rest) = line.strip_prefix("tick ") else {
            continue;
        };
        let mut t_ms = None;
        let mut true_ppm = None;
        let mut estimate_ppm = None;
        let mut latched = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("t=") {
                t_ms = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("ppm=") {
                true_ppm = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("est=") {
                estimate_ppm = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("fsm=") {
                latched = Some(v == "Alarmed" || v == "Clearing");
            }
        }
        if let (Some(t_ms), Some(true_ppm), Some(estimate_ppm), Some(latched)) =
            (t_ms, true_ppm, estimate_ppm, latched)
        {
            series.push(TickPoint {
                t_ms,
                true_ppm,
                estimate_ppm,
                latched,
            });
        }
    }
    series
}

/// Parse scenario file text, simulate it against the in-process gateway,
/// and return the report, per-tick series, SMS outbox, and final LCD frame.
#[wasm_bindgen]
pub fn run_scenario_text(text: &str) -> String {
    let scenario: Scenario = match load_scenario(text) {
        Ok(scenario) => scenario,
        Err(e) => return error_json(&e.to_string()),
    };
    if scenario.ticks() > MAX_DEMO_TICKS {
        return error_json(&format!(
            "scenario is {} ticks; the demo caps at {MAX_DEMO_TICKS}",
            scenario.ticks()
        ));
    }
    let threshold_ppm = scenario.thresholds.threshold_ppm(scenario.active_gas);
    let outcome = match run(&scenario) {
        Ok(outcome) => outcome,
        Err(e) => return error_json(&e.to_string()),
    };
    let view = RunView {
        report: outcome.report,
        threshold_ppm,
        series: series_from_log(&outcome.event_log),
        sms: outcome
            .sms_outbox
            .into_iter()
            .map(|m| SmsView {
                destination: m.destination,
                body: m.body,
                accepted_at_ms: m.accepted_at_ms,
            })
            .collect(),
        lcd: [outcome.final_lcd.line1, outcome.final_lcd.line2],
        events: outcome.event_log,
    };
    to_json(&view)
}

#[derive(Serialize)]
struct ExampleScenario {
    name: &'static str,
    text: &'static str,
}

/// The checked-in example scenarios, for the demo's preset picker.
#[wasm_bindgen]
pub fn example_scenarios() -> String {
    to_json(&[
        ExampleScenario {
            name: "LPG ramp",
            text: include_str!("../../../scenarios/lpg_ramp.scn"),
        },
        ExampleScenario {
            name: "Clean air",
            text: include_str!("../../../scenarios/clean_air.scn"),
        },
        ExampleScenario {
            name: "Propane spike",
            text: include_str!("../../../scenarios/propane_spike.scn"),
        },
    ])
}

/// Interactive AT console: a modem wired to its own in-process gateway.
/// Feed it bytes, read back the rendered responses.
#[wasm_bindgen]
pub struct AtConsole {
    modem: Modem<InProcessLink>,
    store: Rc<RefCell<GatewayStore>>,
    clock_ms: u64,
}

#[derive(Serialize)]
struct ConsoleReply {
    responses: Vec<String>,
    outbox: Vec<SmsView>,
}

impl Default for AtConsole {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl AtConsole {
    #[wasm_bindgen(constructor)]
    pub fn new() -> AtConsole {
        let store = Rc::new(RefCell::new(GatewayStore::new()));
        AtConsole {
            modem: Modem::new(InProcessLink::new(Rc::clone(&store))),
            store,
            clock_ms: 0,
        }
    }

    /// Feed one line as typed (a trailing CR is appended); returns the
    /// responses produced so far plus the SMS outbox, as JSON.
    pub fn send_line(&mut self, line: &str) -> String {
        let mut bytes = line.as_bytes().to_vec();
        bytes.push(b'\r');
        self.feed_bytes(&bytes)
    }

    /// Feed raw text without adding a terminator (for SMS bodies).
    pub fn send_raw(&mut self, text: &str) -> String {
        self.feed_bytes(text.as_bytes())
    }

    /// Feed the Ctrl-Z terminator that ends an SMS body.
    pub fn send_ctrl_z(&mut self) -> String {
        self.feed_bytes(&[0x1a])
    }

    /// Status page of the console's private gateway store.
    pub fn store_page(&self) -> String {
        render_status_page(&self.store.borrow())
    }

    fn feed_bytes(&mut self, bytes: &[u8]) -> String {
        self.clock_ms += 100;
        let responses = self.modem.feed(bytes, self.clock_ms);
        let reply = ConsoleReply {
            responses: responses
                .iter()
                .map(|r| {
                    String::from_utf8_lossy(&gasguard_core::modem::serialize_response(r))
                        .into_owned()
                })
                .collect(),
            outbox: self
                .modem
                .state
                .outbox()
                .iter()
                .map(|m| SmsView {
                    destination: m.destination.clone(),
                    body: m.body.clone(),
                    accepted_at_ms: m.accepted_at_ms,
                })
                .collect(),
        };
        to_json(&reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_curve_is_monotone_and_brackets_the_threshold() {
        let json = transfer_curve("lpg", 200.0, 10000.0, 64);
        let points: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
        assert_eq!(points.len(), 64);
        let codes: Vec<u64> = points
            .iter()
            .map(|p| p["adc_code"].as_u64().unwrap())
            .collect();
        assert!(
            codes.windows(2).all(|w| w[0] <= w[1]),
            "codes stay monotone"
        );
        assert!(points[0]["ppm"].as_f64().unwrap() < 1000.0);
        assert!(points[63]["ppm"].as_f64().unwrap() > 1000.0);
    }

    #[test]
    fn transfer_curve_rejects_bad_input_with_an_error_envelope() {
        let json = transfer_curve("plasma", 200.0, 10000.0, 64);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["error"].is_string());
        let json = transfer_curve("lpg", -5.0, 10.0, 64);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["error"].is_string());
    }

    #[test]
    fn run_scenario_text_reports_the_ramp_alarm() {
        let text = "device=demo\ngas=lpg\nduration_ms=30000\nsegment 0 30000 linear 0 2000\n";
        let json = run_scenario_text(text);
        let view: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(view["report"]["first_alarm_ms"], 16500);
        assert_eq!(view["threshold_ppm"], 1000.0);
        assert_eq!(view["series"].as_array().unwrap().len(), 60);
        assert_eq!(
            view["sms"][0]["body"],
            "EMERGENCY ALERT: LPG gas leakage found in your home"
        );
        assert_eq!(view["lcd"][0], "Gas Leakage     ");
        let last = &view["series"][59];
        assert_eq!(last["latched"], true);
        assert_eq!(last["t_ms"], 29500);
    }

    #[test]
    fn run_scenario_text_propagates_load_errors() {
        let view: serde_json::Value =
            serde_json::from_str(&run_scenario_text("device=\n")).unwrap();
        assert!(view["error"].as_str().unwrap().contains("line 1"));
    }

    #[test]
    fn run_scenario_text_caps_the_tick_count() {
        let text = "device=demo\ngas=lpg\nperiod_ms=1\nduration_ms=999999999\n\
                    segment 0 999999999 hold 0 0\n";
        let view: serde_json::Value = serde_json::from_str(&run_scenario_text(text)).unwrap();
        assert!(view["error"].as_str().unwrap().contains("caps"));
    }

    #[test]
    fn example_scenarios_parse_and_load() {
        let examples: Vec<serde_json::Value> = serde_json::from_str(&example_scenarios()).unwrap();
        assert_eq!(examples.len(), 3);
        for example in &examples {
            let text = example["text"].as_str().unwrap();
            load_scenario(text).expect("checked-in example loads");
        }
    }

    #[test]
    fn at_console_sends_an_sms_end_to_end() {
        let mut console = AtConsole::new();
        let reply: serde_json::Value = serde_json::from_str(&console.send_line("AT")).unwrap();
        assert_eq!(reply["responses"][0], "\r\nOK\r\n");

        console.send_line("AT+CMGF=1");
        let reply: serde_json::Value =
            serde_json::from_str(&console.send_line("AT+CMGS=\"+15550000911\"")).unwrap();
        assert_eq!(reply["responses"][0], "> ");
        console.send_raw("hello from the demo");
        let reply: serde_json::Value = serde_json::from_str(&console.send_ctrl_z()).unwrap();
        assert!(reply["responses"][0]
            .as_str()
            .unwrap()
            .starts_with("\r\n+CMGS: 1"));
        assert_eq!(reply["outbox"][0]["body"], "hello from the demo");
    }

    #[test]
    fn at_console_store_page_reflects_ingested_telemetry() {
        let mut console = AtConsole::new();
        console.send_line("AT+CIPSTART=\"gateway\",9000");
        let frame = r#"{"device_id":"demo","seq":0,"timestamp_ms":0,"gas":"LPG","ppm":42,"adc_code":400,"alarm":false}"#;
        console.send_line(&format!("AT+CIPSEND={}", frame.len() + 1));
        let reply: serde_json::Value =
            serde_json::from_str(&console.send_raw(&format!("{frame}\n"))).unwrap();
        assert_eq!(reply["responses"][0], "\r\nSEND OK\r\n");
        assert!(console.store_page().contains("demo"));
    }
}
