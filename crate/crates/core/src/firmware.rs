//! AVR-style control loop: sample, estimate, debounce against per-gas
//! thresholds, and emit actuator/radio effects as plain data.
//!
//! [`tick`] performs no I/O. Every externally visible action comes out as an
//! [`Effect`] in a fixed order, which keeps the loop deterministic and lets
//! the harness (or tests) replay any input stream byte-for-byte.

use std::fmt;

use crate::gateway::wire::TelemetryRecord;
use crate::sensor::{GasSpecies, SensorError, SensorModel, SensorReading};

/// LCD geometry of the 16x2 character panel.
pub const LCD_COLS: usize = 16;

/// Default alarm thresholds in ppm. LPG and Propane follow the deployed
/// configuration; Methane and Butane are artifact defaults.
pub const DEFAULT_THRESHOLD_LPG: f64 = 1000.0;
pub const DEFAULT_THRESHOLD_PROPANE: f64 = 10_000.0;
pub const DEFAULT_THRESHOLD_METHANE: f64 = 5000.0;
pub const DEFAULT_THRESHOLD_BUTANE: f64 = 1000.0;

/// Default debounce/hysteresis policy.
pub const DEFAULT_HYSTERESIS_FRACTION: f64 = 0.1;
pub const DEFAULT_RAISE_COUNT: u32 = 3;
pub const DEFAULT_CLEAR_COUNT: u32 = 5;

/// Default firmware timing.
pub const DEFAULT_SAMPLE_PERIOD_MS: u64 = 500;
pub const DEFAULT_SMS_REPEAT_MS: u64 = 30_000;

/// Per-gas alarm thresholds plus the shared debounce policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    thresholds_ppm: [f64; 4],
    /// Clear level is `(1 - hysteresis_fraction) * threshold`.
    pub hysteresis_fraction: f64,
    /// Consecutive over-threshold ticks required to raise.
    pub raise_count: u32,
    /// Consecutive under-clear ticks required to clear.
    pub clear_count: u32,
}

impl Default for ThresholdTable {
    fn default() -> Self {
        ThresholdTable {
            thresholds_ppm: [
                DEFAULT_THRESHOLD_LPG,
                DEFAULT_THRESHOLD_PROPANE,
                DEFAULT_THRESHOLD_METHANE,
                DEFAULT_THRESHOLD_BUTANE,
            ],
            hysteresis_fraction: DEFAULT_HYSTERESIS_FRACTION,
            raise_count: DEFAULT_RAISE_COUNT,
            clear_count: DEFAULT_CLEAR_COUNT,
        }
    }
}

impl ThresholdTable {
    pub fn threshold_ppm(&self, gas: GasSpecies) -> f64 {
        self.thresholds_ppm[Self::index(gas)]
    }

    pub fn set_threshold_ppm(&mut self, gas: GasSpecies, ppm: f64) {
        self.thresholds_ppm[Self::index(gas)] = ppm;
    }

    /// Level an estimate must fall below before the alarm may clear.
    pub fn clear_level_ppm(&self, gas: GasSpecies) -> f64 {
        (1.0 - self.hysteresis_fraction) * self.threshold_ppm(gas)
    }

    fn index(gas: GasSpecies) -> usize {
        match gas {
            GasSpecies::LPG => 0,
            GasSpecies::Propane => 1,
            GasSpecies::Methane => 2,
            GasSpecies::Butane => 3,
        }
    }
}

/// Where an estimate sits relative to the threshold band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Strictly above the alarm threshold.
    Over,
    /// Strictly below the hysteresis clear level.
    UnderClear,
    /// Inside the band (boundary values included).
    InBand,
}

/// Classify an estimate. The threshold comparison is strict: sitting exactly
/// on the threshold is not an exceedance.
pub fn evaluate_threshold(estimate_ppm: f64, gas: GasSpecies, table: &ThresholdTable) -> Verdict {
    if estimate_ppm > table.threshold_ppm(gas) {
        Verdict::Over
    } else if estimate_ppm < table.clear_level_ppm(gas) {
        Verdict::UnderClear
    } else {
        Verdict::InBand
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmState {
    Normal,
    Pending,
    Alarmed,
    Clearing,
}

impl fmt::Display for AlarmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlarmState::Normal => "Normal",
            AlarmState::Pending => "Pending",
            AlarmState::Alarmed => "Alarmed",
            AlarmState::Clearing => "Clearing",
        })
    }
}

/// Debounced, latching alarm state machine.
///
/// Raising takes `raise_count` consecutive `Over` verdicts; clearing takes
/// `clear_count` consecutive `UnderClear` verdicts. Anything else resets the
/// respective counter, and the latch holds through the hysteresis band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlarmFsm {
    pub state: AlarmState,
    pub over_count: u32,
    pub under_count: u32,
    pub latched_since_ms: Option<u64>,
}

/// Edge flags reported by one [`AlarmFsm::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub raised: bool,
    pub cleared: bool,
}

impl Default for AlarmFsm {
    fn default() -> Self {
        AlarmFsm {
            state: AlarmState::Normal,
            over_count: 0,
            under_count: 0,
            latched_since_ms: None,
        }
    }
}

impl AlarmFsm {
    /// True while the alarm latch (buzzer/LED/SMS eligibility) is held.
    pub fn is_latched(&self) -> bool {
        matches!(self.state, AlarmState::Alarmed | AlarmState::Clearing)
    }

    pub fn step(&mut self, verdict: Verdict, table: &ThresholdTable, now_ms: u64) -> StepOutcome {
        let mut outcome = StepOutcome::default();
        match self.state {
            AlarmState::Normal => {
                if verdict == Verdict::Over {
                    self.over_count = 1;
                    if self.over_count >= table.raise_count {
                        self.enter_alarm(now_ms);
                        outcome.raised = true;
                    } else {
                        self.state = AlarmState::Pending;
                    }
                }
            }
            AlarmState::Pending => {
                if verdict == Verdict::Over {
                    self.over_count += 1;
                    if self.over_count >= table.raise_count {
                        self.enter_alarm(now_ms);
                        outcome.raised = true;
                    }
                } else {
                    self.over_count = 0;
                    self.state = AlarmState::Normal;
                }
            }
            AlarmState::Alarmed => {
                if verdict == Verdict::UnderClear {
                    self.under_count = 1;
                    if self.under_count >= table.clear_count {
                        self.leave_alarm();
                        outcome.cleared = true;
                    } else {
                        self.state = AlarmState::Clearing;
                    }
                }
            }
            AlarmState::Clearing => {
                if verdict == Verdict::UnderClear {
                    self.under_count += 1;
                    if self.under_count >= table.clear_count {
                        self.leave_alarm();
                        outcome.cleared = true;
                    }
                } else {
                    // Anything inside or above the band re-arms the latch.
                    self.under_count = 0;
                    self.state = AlarmState::Alarmed;
                }
            }
        }
        outcome
    }

    fn enter_alarm(&mut self, now_ms: u64) {
        self.state = AlarmState::Alarmed;
        self.over_count = 0;
        self.under_count = 0;
        self.latched_since_ms = Some(now_ms);
    }

    fn leave_alarm(&mut self) {
        self.state = AlarmState::Normal;
        self.over_count = 0;
        self.under_count = 0;
        self.latched_since_ms = None;
    }
}

/// One 16x2 LCD frame; both lines are always exactly [`LCD_COLS`] characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcdFrame {
    pub line1: String,
    pub line2: String,
}

impl LcdFrame {
    fn blank() -> Self {
        LcdFrame {
            line1: " ".repeat(LCD_COLS),
            line2: " ".repeat(LCD_COLS),
        }
    }
}

/// Space-pad or truncate to the panel width.
fn fit_line(mut s: String) -> String {
    if s.len() > LCD_COLS {
        s.truncate(LCD_COLS);
    } else {
        while s.len() < LCD_COLS {
            s.push(' ');
        }
    }
    s
}

/// Render the panel for the current estimate and latch state.
pub fn render_lcd(gas: GasSpecies, estimate_ppm: f64, latched: bool) -> LcdFrame {
    if latched {
        return LcdFrame {
            line1: fit_line("Gas Leakage".to_string()),
            line2: fit_line("Detected".to_string()),
        };
    }
    let rounded = estimate_ppm.round().max(0.0) as u64;
    let digits = if rounded >= 100_000 {
        ".....".to_string()
    } else {
        rounded.to_string()
    };
    let head = format!("{}:", gas.name());
    let width = LCD_COLS.saturating_sub(head.len() + 4); // "ppm" plus one pad space
    LcdFrame {
        line1: fit_line(format!("{head}{digits:>width$}ppm ")),
        line2: fit_line("STATUS: NORMAL".to_string()),
    }
}

/// An SMS the firmware wants sent; the modem assigns the message reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmsRequest {
    pub destination: String,
    pub body: String,
}

/// Outward-visible actions of one tick, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    LcdSet(LcdFrame),
    BuzzerSet(bool),
    LedSet(bool),
    SmsSend(SmsRequest),
    TelemetryEmit(TelemetryRecord),
}

/// Identity and messaging policy of one device instance.
#[derive(Debug, Clone)]
pub struct FirmwareConfig {
    pub device_id: String,
    /// Destination for alert SMS; composing without one is a config error.
    pub emergency_number: Option<String>,
    /// Minimum spacing between alert SMS while the latch is held.
    pub sms_repeat_ms: u64,
}

impl Default for FirmwareConfig {
    fn default() -> Self {
        FirmwareConfig {
            device_id: "dev1".to_string(),
            emergency_number: Some("+15550000911".to_string()),
            sms_repeat_ms: DEFAULT_SMS_REPEAT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FirmwareError {
    /// `tick` was called with a timestamp not after the previous one.
    NonMonotoneTime { last_ms: u64, now_ms: u64 },
    /// An alert SMS was due but no emergency number is configured.
    NoEmergencyNumber,
    /// The sensor model rejected the input.
    Sensor(SensorError),
}

impl fmt::Display for FirmwareError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FirmwareError::NonMonotoneTime { last_ms, now_ms } => {
                write!(f, "tick time went backwards: {last_ms} -> {now_ms}")
            }
            FirmwareError::NoEmergencyNumber => {
                write!(f, "no emergency number configured for alert SMS")
            }
            FirmwareError::Sensor(e) => write!(f, "sensor error: {e}"),
        }
    }
}

impl std::error::Error for FirmwareError {}

impl From<SensorError> for FirmwareError {
    fn from(e: SensorError) -> Self {
        FirmwareError::Sensor(e)
    }
}

/// Everything the control loop remembers between ticks.
#[derive(Debug, Clone)]
pub struct FirmwareState {
    pub fsm: AlarmFsm,
    pub active_gas: GasSpecies,
    /// Last raw sample, as recorded by the harness that owns the sensor.
    pub last_reading: Option<SensorReading>,
    pub last_estimate_ppm: f64,
    /// Completed tick count; the record emitted during tick `k` carries seq `k`.
    pub seq: u64,
    pub buzzer_on: bool,
    pub led_on: bool,
    pub lcd: LcdFrame,
    pub last_sms_ms: Option<u64>,
    last_tick_ms: Option<u64>,
}

impl FirmwareState {
    pub fn new(active_gas: GasSpecies) -> Self {
        FirmwareState {
            fsm: AlarmFsm::default(),
            active_gas,
            last_reading: None,
            last_estimate_ppm: 0.0,
            seq: 0,
            buzzer_on: false,
            led_on: false,
            lcd: LcdFrame::blank(),
            last_sms_ms: None,
            last_tick_ms: None,
        }
    }
}

/// Compose the verbatim alert SMS for a gas.
pub fn compose_sms(gas: GasSpecies, config: &FirmwareConfig) -> Result<SmsRequest, FirmwareError> {
    let destination = config
        .emergency_number
        .clone()
        .ok_or(FirmwareError::NoEmergencyNumber)?;
    Ok(SmsRequest {
        destination,
        body: format!(
            "EMERGENCY ALERT: {} gas leakage found in your home",
            gas.name()
        ),
    })
}

/// Build the telemetry record for the current tick.
pub fn compose_telemetry(
    state: &FirmwareState,
    config: &FirmwareConfig,
    estimate_ppm: f64,
    adc_code: u16,
    now_ms: u64,
) -> TelemetryRecord {
    TelemetryRecord {
        device_id: config.device_id.clone(),
        seq: state.seq,
        timestamp_ms: now_ms,
        gas: state.active_gas,
        ppm: estimate_ppm.round().max(0.0) as u32,
        adc_code,
        alarm: state.fsm.is_latched(),
    }
}

/// Advance the control loop by one sample.
///
/// Effects always come out in the same order: LCD, buzzer/LED (only on a
/// latch change), SMS (on raise or repeat while latched), telemetry.
pub fn tick(
    state: &mut FirmwareState,
    adc_code: u16,
    now_ms: u64,
    table: &ThresholdTable,
    model: &SensorModel,
    config: &FirmwareConfig,
) -> Result<Vec<Effect>, FirmwareError> {
    if let Some(last_ms) = state.last_tick_ms {
        if now_ms <= last_ms {
            return Err(FirmwareError::NonMonotoneTime { last_ms, now_ms });
        }
    }
    state.last_tick_ms = Some(now_ms);

    let gas = state.active_gas;
    let estimate_ppm = match model.estimate_ppm(adc_code, gas) {
        Ok(ppm) => ppm,
        // A pegged converter means "more gas than the curve can express".
        Err(SensorError::Saturated) => 10.0 * model.curve(gas).valid_range.1,
        Err(e) => return Err(e.into()),
    };

    let verdict = evaluate_threshold(estimate_ppm, gas, table);
    let outcome = state.fsm.step(verdict, table, now_ms);
    let latched = state.fsm.is_latched();

    let mut effects = Vec::with_capacity(4);

    let lcd = render_lcd(gas, estimate_ppm, latched);
    state.lcd = lcd.clone();
    effects.push(Effect::LcdSet(lcd));

    if latched != state.buzzer_on {
        state.buzzer_on = latched;
        state.led_on = latched;
        effects.push(Effect::BuzzerSet(latched));
        effects.push(Effect::LedSet(latched));
    }

    // The repeat timer spans alarm episodes: a re-raise shortly after a
    // previous alert stays quiet until the interval has elapsed.
    let sms_due = latched
        && state.last_sms_ms.map_or(outcome.raised, |t| {
            now_ms.saturating_sub(t) >= config.sms_repeat_ms
        });
    if sms_due {
        effects.push(Effect::SmsSend(compose_sms(gas, config)?));
        state.last_sms_ms = Some(now_ms);
    }

    effects.push(Effect::TelemetryEmit(compose_telemetry(
        state,
        config,
        estimate_ppm,
        adc_code,
        now_ms,
    )));

    state.last_estimate_ppm = estimate_ppm;
    state.seq += 1;
    Ok(effects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::SensorModel;

    fn table() -> ThresholdTable {
        ThresholdTable::default()
    }

    #[test]
    fn verdicts_match_the_band_rules() {
        let t = table();
        assert_eq!(
            evaluate_threshold(1200.0, GasSpecies::LPG, &t),
            Verdict::Over
        );
        assert_eq!(
            evaluate_threshold(0.0, GasSpecies::Propane, &t),
            Verdict::UnderClear
        );
        // Boundary equality is not an exceedance.
        assert_eq!(
            evaluate_threshold(1000.0, GasSpecies::LPG, &t),
            Verdict::InBand
        );
        assert_eq!(
            evaluate_threshold(900.0, GasSpecies::LPG, &t),
            Verdict::InBand
        );
        assert_eq!(
            evaluate_threshold(899.9, GasSpecies::LPG, &t),
            Verdict::UnderClear
        );
    }

    #[test]
    fn three_consecutive_overs_raise() {
        let t = table();
        let mut fsm = AlarmFsm::default();
        assert!(!fsm.step(Verdict::Over, &t, 0).raised);
        assert_eq!(fsm.state, AlarmState::Pending);
        assert!(!fsm.step(Verdict::Over, &t, 500).raised);
        let out = fsm.step(Verdict::Over, &t, 1000);
        assert!(out.raised);
        assert_eq!(fsm.state, AlarmState::Alarmed);
        assert_eq!(fsm.latched_since_ms, Some(1000));
    }

    #[test]
    fn an_interruption_resets_the_raise_counter() {
        let t = table();
        let mut fsm = AlarmFsm::default();
        fsm.step(Verdict::Over, &t, 0);
        fsm.step(Verdict::InBand, &t, 500);
        assert_eq!(fsm.state, AlarmState::Normal);
        assert_eq!(fsm.over_count, 0);
        let out = fsm.step(Verdict::Over, &t, 1000);
        assert!(!out.raised);
        assert_eq!(fsm.state, AlarmState::Pending);
        assert_eq!(fsm.over_count, 1);
    }

    #[test]
    fn the_latch_holds_through_the_band() {
        let t = table();
        let mut fsm = AlarmFsm::default();
        for i in 0..3 {
            fsm.step(Verdict::Over, &t, i * 500);
        }
        for i in 0..100 {
            let out = fsm.step(Verdict::InBand, &t, 2000 + i * 500);
            assert!(!out.cleared);
            assert_eq!(fsm.state, AlarmState::Alarmed);
        }
    }

    #[test]
    fn clearing_takes_m_consecutive_under_clear() {
        let t = table();
        let mut fsm = AlarmFsm::default();
        for i in 0..3 {
            fsm.step(Verdict::Over, &t, i * 500);
        }
        for i in 0..4 {
            let out = fsm.step(Verdict::UnderClear, &t, 2000 + i * 500);
            assert!(!out.cleared);
        }
        let out = fsm.step(Verdict::UnderClear, &t, 4000);
        assert!(out.cleared);
        assert_eq!(fsm.state, AlarmState::Normal);
        assert_eq!(fsm.latched_since_ms, None);
    }

    #[test]
    fn raise_count_of_one_raises_immediately() {
        let mut t = table();
        t.raise_count = 1;
        let mut fsm = AlarmFsm::default();
        let out = fsm.step(Verdict::Over, &t, 0);
        assert!(out.raised);
        assert_eq!(fsm.state, AlarmState::Alarmed);
    }

    #[test]
    fn lcd_lines_are_always_sixteen_chars() {
        for gas in GasSpecies::ALL {
            for est in [0.0, 823.0, 12_345.0, 99_999.0, 100_000.0] {
                for latched in [false, true] {
                    let frame = render_lcd(gas, est, latched);
                    assert_eq!(frame.line1.len(), LCD_COLS, "{frame:?}");
                    assert_eq!(frame.line2.len(), LCD_COLS, "{frame:?}");
                }
            }
        }
    }

    #[test]
    fn lcd_golden_strings() {
        let normal = render_lcd(GasSpecies::LPG, 823.0, false);
        assert_eq!(normal.line1, "LPG:     823ppm ");
        assert_eq!(normal.line2, "STATUS: NORMAL  ");

        let wide = render_lcd(GasSpecies::LPG, 12_345.0, false);
        assert_eq!(wide.line1, "LPG:   12345ppm ");

        let zero = render_lcd(GasSpecies::LPG, 0.0, false);
        assert_eq!(zero.line1, "LPG:       0ppm ");
        assert_eq!(zero.line2, "STATUS: NORMAL  ");

        let alarm = render_lcd(GasSpecies::LPG, 5000.0, true);
        assert_eq!(alarm.line1, "Gas Leakage     ");
        assert_eq!(alarm.line2, "Detected        ");
    }

    #[test]
    fn lcd_overflow_renders_dots() {
        let frame = render_lcd(GasSpecies::LPG, 100_000.0, false);
        assert_eq!(frame.line1, "LPG:   .....ppm ");
    }

    #[test]
    fn sms_body_is_verbatim() {
        let config = FirmwareConfig::default();
        let sms = compose_sms(GasSpecies::LPG, &config).unwrap();
        assert_eq!(
            sms.body,
            "EMERGENCY ALERT: LPG gas leakage found in your home"
        );
        let sms = compose_sms(GasSpecies::Methane, &config).unwrap();
        assert_eq!(
            sms.body,
            "EMERGENCY ALERT: Methane gas leakage found in your home"
        );
    }

    #[test]
    fn sms_without_emergency_number_is_a_config_error() {
        let config = FirmwareConfig {
            emergency_number: None,
            ..FirmwareConfig::default()
        };
        assert_eq!(
            compose_sms(GasSpecies::LPG, &config),
            Err(FirmwareError::NoEmergencyNumber)
        );
    }

    fn run_ticks(
        state: &mut FirmwareState,
        codes: impl IntoIterator<Item = u16>,
        table: &ThresholdTable,
        model: &SensorModel,
        config: &FirmwareConfig,
    ) -> Vec<Vec<Effect>> {
        let mut all = Vec::new();
        let mut now = state.seq * DEFAULT_SAMPLE_PERIOD_MS;
        for code in codes {
            all.push(tick(state, code, now, table, model, config).unwrap());
            now += DEFAULT_SAMPLE_PERIOD_MS;
        }
        all
    }

    #[test]
    fn clean_air_stream_is_silent() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let clean = model.sample(0.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let runs = run_ticks(
            &mut state,
            std::iter::repeat_n(clean, 100),
            &table,
            &model,
            &config,
        );
        for effects in &runs {
            for effect in effects {
                assert!(!matches!(effect, Effect::SmsSend(_)));
                assert!(!matches!(effect, Effect::BuzzerSet(true)));
            }
        }
        assert_eq!(state.seq, 100);
        assert!(!state.buzzer_on);
    }

    #[test]
    fn step_input_sends_sms_on_the_third_over_tick() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let clean = model.sample(0.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let hot = model.sample(2000.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let codes: Vec<u16> = std::iter::repeat_n(clean, 5)
            .chain(std::iter::repeat_n(hot, 10))
            .collect();
        let runs = run_ticks(&mut state, codes, &table, &model, &config);
        let sms_ticks: Vec<usize> = runs
            .iter()
            .enumerate()
            .filter(|(_, effects)| effects.iter().any(|e| matches!(e, Effect::SmsSend(_))))
            .map(|(i, _)| i)
            .collect();
        // First over tick is 5; the third consecutive over tick is 7.
        assert_eq!(sms_ticks, vec![7]);
        assert!(state.buzzer_on);
    }

    #[test]
    fn sustained_alarm_repeats_sms_on_the_interval() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let hot = model.sample(2000.0, GasSpecies::LPG, 0).unwrap().adc_code;
        // 65 s at 500 ms per tick.
        let runs = run_ticks(
            &mut state,
            std::iter::repeat_n(hot, 130),
            &table,
            &model,
            &config,
        );
        let sms_count = runs
            .iter()
            .flatten()
            .filter(|e| matches!(e, Effect::SmsSend(_)))
            .count();
        assert_eq!(sms_count, 3);
    }

    #[test]
    fn re_raise_within_the_repeat_interval_is_suppressed() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let clean = model.sample(0.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let hot = model.sample(2000.0, GasSpecies::LPG, 0).unwrap().adc_code;
        // Raise, clear via 5 under-clear ticks, then raise again 10 s later.
        let codes: Vec<u16> = std::iter::repeat_n(hot, 3)
            .chain(std::iter::repeat_n(clean, 17))
            .chain(std::iter::repeat_n(hot, 3))
            .collect();
        let runs = run_ticks(&mut state, codes, &table, &model, &config);
        let sms_count = runs
            .iter()
            .flatten()
            .filter(|e| matches!(e, Effect::SmsSend(_)))
            .count();
        assert_eq!(sms_count, 1);
    }

    #[test]
    fn buzzer_and_led_track_the_latch() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let clean = model.sample(0.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let hot = model.sample(2000.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let codes: Vec<u16> = std::iter::repeat_n(hot, 6)
            .chain(std::iter::repeat_n(clean, 10))
            .collect();
        let mut now = 0;
        for code in codes {
            tick(&mut state, code, now, &table, &model, &config).unwrap();
            assert_eq!(state.buzzer_on, state.fsm.is_latched());
            assert_eq!(state.led_on, state.buzzer_on);
            now += DEFAULT_SAMPLE_PERIOD_MS;
        }
        assert!(!state.buzzer_on);
    }

    #[test]
    fn telemetry_seq_is_gapless() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let clean = model.sample(0.0, GasSpecies::LPG, 0).unwrap().adc_code;
        let runs = run_ticks(
            &mut state,
            std::iter::repeat_n(clean, 1000),
            &table,
            &model,
            &config,
        );
        let seqs: Vec<u64> = runs
            .iter()
            .flatten()
            .filter_map(|e| match e {
                Effect::TelemetryEmit(r) => Some(r.seq),
                _ => None,
            })
            .collect();
        assert_eq!(seqs.len(), 1000);
        for (i, seq) in seqs.iter().enumerate() {
            assert_eq!(*seq, i as u64);
        }
    }

    #[test]
    fn telemetry_alarm_flag_tracks_the_latch() {
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        let record = compose_telemetry(&state, &config, 0.0, 170, 0);
        assert!(!record.alarm);
        state.fsm.state = AlarmState::Alarmed;
        let record = compose_telemetry(&state, &config, 1500.0, 700, 0);
        assert!(record.alarm);
    }

    #[test]
    fn non_monotone_time_is_a_usage_error() {
        let model = SensorModel::default();
        let table = table();
        let config = FirmwareConfig::default();
        let mut state = FirmwareState::new(GasSpecies::LPG);
        tick(&mut state, 170, 1000, &table, &model, &config).unwrap();
        let err = tick(&mut state, 170, 1000, &table, &model, &config).unwrap_err();
        assert_eq!(
            err,
            FirmwareError::NonMonotoneTime {
                last_ms: 1000,
                now_ms: 1000
            }
        );
    }

    #[test]
    fn constant_boundary_input_never_raises() {
        // An estimate pinned exactly at the threshold stays InBand forever.
        let table = table();
        let mut fsm = AlarmFsm::default();
        for i in 0..1000u64 {
            let v = evaluate_threshold(1000.0, GasSpecies::LPG, &table);
            let out = fsm.step(v, &table, i * 500);
            assert!(!out.raised);
            assert_eq!(fsm.state, AlarmState::Normal);
        }
    }
}
