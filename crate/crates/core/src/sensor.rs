//! MQ-6 sensing chain: gas concentration → sensing resistance → divider
//! voltage → ADC code, plus the inverse estimate and load-time calibration.
//!
//! The resistance curve is the standard log-log power law used by MQ-series
//! datasheets: `Rs/R0 = (ppm/ref_ppm)^(-slope)`, capped at `clean_air_ratio`
//! in clean air. All electrical defaults are typical MQ-6 application-circuit
//! values, collected in one place below so a scenario can override them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Default sensing resistance at the calibration reference exposure.
pub const DEFAULT_R0_OHMS: f64 = 10_000.0;
/// Default load resistor of the measurement divider.
pub const DEFAULT_RL_OHMS: f64 = 20_000.0;
/// Circuit rail, shared by the sensor and the ADC reference.
pub const DEFAULT_VC_VOLTS: f64 = 5.0;
/// ADC reference voltage (same 5 V rail by default).
pub const DEFAULT_VREF_VOLTS: f64 = 5.0;
/// ADC resolution in bits.
pub const DEFAULT_ADC_BITS: u32 = 10;
/// Concentration at which `Rs == R0` for every default curve.
pub const DEFAULT_REF_PPM: f64 = 1000.0;
/// `Rs/R0` ceiling in clean air.
pub const DEFAULT_CLEAN_AIR_RATIO: f64 = 10.0;
/// Concentration range the default curves are trusted over.
pub const DEFAULT_VALID_RANGE: (f64, f64) = (200.0, 10_000.0);

/// Datasheet-style curve slopes (not measured values).
pub const DEFAULT_SLOPE_LPG: f64 = 0.42;
pub const DEFAULT_SLOPE_PROPANE: f64 = 0.40;
pub const DEFAULT_SLOPE_BUTANE: f64 = 0.38;
pub const DEFAULT_SLOPE_METHANE: f64 = 0.35;

/// The four combustible species the sensor chain knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GasSpecies {
    LPG,
    Propane,
    Methane,
    Butane,
}

impl GasSpecies {
    pub const ALL: [GasSpecies; 4] = [
        GasSpecies::LPG,
        GasSpecies::Propane,
        GasSpecies::Methane,
        GasSpecies::Butane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GasSpecies::LPG => "LPG",
            GasSpecies::Propane => "Propane",
            GasSpecies::Methane => "Methane",
            GasSpecies::Butane => "Butane",
        }
    }

    fn index(self) -> usize {
        match self {
            GasSpecies::LPG => 0,
            GasSpecies::Propane => 1,
            GasSpecies::Methane => 2,
            GasSpecies::Butane => 3,
        }
    }
}

impl fmt::Display for GasSpecies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GasSpecies {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        for gas in GasSpecies::ALL {
            if s.eq_ignore_ascii_case(gas.name()) {
                return Ok(gas);
            }
        }
        Err(format!("unknown gas species `{s}`"))
    }
}

/// One per-gas sensitivity curve, `Rs/R0 = (ppm/ref_ppm)^(-slope)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityCurve {
    pub gas: GasSpecies,
    /// Power-law exponent; must be positive so resistance falls with ppm.
    pub slope: f64,
    /// Concentration at which `Rs == R0`.
    pub ref_ppm: f64,
    /// Cap on `Rs/R0` in clean air.
    pub clean_air_ratio: f64,
    /// `(ppm_min, ppm_max)` over which the curve is trusted.
    pub valid_range: (f64, f64),
}

impl SensitivityCurve {
    fn with_defaults(gas: GasSpecies, slope: f64) -> Self {
        SensitivityCurve {
            gas,
            slope,
            ref_ppm: DEFAULT_REF_PPM,
            clean_air_ratio: DEFAULT_CLEAN_AIR_RATIO,
            valid_range: DEFAULT_VALID_RANGE,
        }
    }
}

/// Electrical model of the sensor board: curves plus divider and ADC constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// Sensing resistance at the reference exposure of the calibration gas.
    pub r0_ohms: f64,
    /// Load resistor forming the measurement divider.
    pub rl_ohms: f64,
    /// Circuit voltage across sensor + load.
    pub vc_volts: f64,
    /// ADC full-scale reference.
    pub vref_volts: f64,
    /// ADC resolution, 8..=16 bits.
    pub adc_bits: u32,
    curves: [SensitivityCurve; 4],
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            r0_ohms: DEFAULT_R0_OHMS,
            rl_ohms: DEFAULT_RL_OHMS,
            vc_volts: DEFAULT_VC_VOLTS,
            vref_volts: DEFAULT_VREF_VOLTS,
            adc_bits: DEFAULT_ADC_BITS,
            curves: [
                SensitivityCurve::with_defaults(GasSpecies::LPG, DEFAULT_SLOPE_LPG),
                SensitivityCurve::with_defaults(GasSpecies::Propane, DEFAULT_SLOPE_PROPANE),
                SensitivityCurve::with_defaults(GasSpecies::Methane, DEFAULT_SLOPE_METHANE),
                SensitivityCurve::with_defaults(GasSpecies::Butane, DEFAULT_SLOPE_BUTANE),
            ],
        }
    }
}

/// One sampled instant of the full chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub timestamp_ms: u64,
    pub gas: GasSpecies,
    pub true_ppm: f64,
    pub rs_ohms: f64,
    pub vout_volts: f64,
    pub adc_code: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorError {
    /// Concentrations below zero are outside the model's domain.
    NegativePpm(f64),
    /// The divider is undefined for a non-positive sensing resistance.
    NonPositiveResistance(f64),
    /// The ADC cannot quantize a negative voltage.
    NegativeVoltage(f64),
    /// ADC code above full scale for the configured resolution.
    CodeOutOfRange { code: u16, max: u16 },
    /// The reading pegs the converter; the concentration is out of range.
    Saturated,
    /// Calibration needs at least one reading.
    NoReadings,
    /// A model constant violates its constraints.
    InvalidModel(String),
}

impl fmt::Display for SensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensorError::NegativePpm(p) => write!(f, "negative concentration {p} ppm"),
            SensorError::NonPositiveResistance(r) => {
                write!(f, "non-positive sensing resistance {r} ohm")
            }
            SensorError::NegativeVoltage(v) => write!(f, "negative divider voltage {v} V"),
            SensorError::CodeOutOfRange { code, max } => {
                write!(f, "ADC code {code} above full scale {max}")
            }
            SensorError::Saturated => write!(f, "reading saturates the ADC"),
            SensorError::NoReadings => write!(f, "calibration requires at least one reading"),
            SensorError::InvalidModel(msg) => write!(f, "invalid sensor model: {msg}"),
        }
    }
}

impl std::error::Error for SensorError {}

impl SensorModel {
    /// Check the electrical constants and every curve.
    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.r0_ohms.is_finite() && self.r0_ohms > 0.0) {
            return Err(SensorError::InvalidModel(format!("r0 = {}", self.r0_ohms)));
        }
        if !(self.rl_ohms.is_finite() && self.rl_ohms > 0.0) {
            return Err(SensorError::InvalidModel(format!("rl = {}", self.rl_ohms)));
        }
        if !(self.vc_volts.is_finite() && self.vc_volts > 0.0) {
            return Err(SensorError::InvalidModel(format!("vc = {}", self.vc_volts)));
        }
        if !(self.vref_volts.is_finite() && self.vref_volts > 0.0) {
            return Err(SensorError::InvalidModel(format!(
                "vref = {}",
                self.vref_volts
            )));
        }
        if !(8..=16).contains(&self.adc_bits) {
            return Err(SensorError::InvalidModel(format!(
                "adc_bits = {} outside 8..=16",
                self.adc_bits
            )));
        }
        for curve in &self.curves {
            if !(curve.slope.is_finite() && curve.slope > 0.0) {
                return Err(SensorError::InvalidModel(format!(
                    "{} slope = {}",
                    curve.gas, curve.slope
                )));
            }
            if !(curve.ref_ppm.is_finite() && curve.ref_ppm > 0.0)
                || !(curve.clean_air_ratio.is_finite() && curve.clean_air_ratio > 1.0)
            {
                return Err(SensorError::InvalidModel(format!(
                    "{} ref_ppm = {}, clean_air_ratio = {}",
                    curve.gas, curve.ref_ppm, curve.clean_air_ratio
                )));
            }
            let (lo, hi) = curve.valid_range;
            if !(lo > 0.0 && hi > lo) {
                return Err(SensorError::InvalidModel(format!(
                    "{} valid_range = ({lo}, {hi})",
                    curve.gas
                )));
            }
            // The clean-air cap must only bind below the trusted range.
            let ratio_at_min = (lo / curve.ref_ppm).powf(-curve.slope);
            if curve.clean_air_ratio <= ratio_at_min {
                return Err(SensorError::InvalidModel(format!(
                    "{} clean_air_ratio {} binds inside valid_range",
                    curve.gas, curve.clean_air_ratio
                )));
            }
        }
        Ok(())
    }

    pub fn curve(&self, gas: GasSpecies) -> &SensitivityCurve {
        &self.curves[gas.index()]
    }

    pub fn curve_mut(&mut self, gas: GasSpecies) -> &mut SensitivityCurve {
        &mut self.curves[gas.index()]
    }

    /// Full-scale ADC code for the configured resolution.
    pub fn max_code(&self) -> u16 {
        ((1u32 << self.adc_bits) - 1) as u16
    }

    fn code_count(&self) -> f64 {
        (1u64 << self.adc_bits) as f64
    }

    /// Sensing resistance at a given exposure, clean-air cap applied.
    pub fn ppm_to_resistance(&self, ppm: f64, gas: GasSpecies) -> Result<f64, SensorError> {
        if ppm < 0.0 || ppm.is_nan() {
            return Err(SensorError::NegativePpm(ppm));
        }
        let curve = self.curve(gas);
        let cap = curve.clean_air_ratio * self.r0_ohms;
        if ppm == 0.0 {
            return Ok(cap);
        }
        let rs = self.r0_ohms * (ppm / curve.ref_ppm).powf(-curve.slope);
        Ok(rs.min(cap))
    }

    /// Divider node voltage for a given sensing resistance.
    pub fn resistance_to_voltage(&self, rs_ohms: f64) -> Result<f64, SensorError> {
        if !(rs_ohms.is_finite() && rs_ohms > 0.0) {
            return Err(SensorError::NonPositiveResistance(rs_ohms));
        }
        Ok(self.vc_volts * self.rl_ohms / (rs_ohms + self.rl_ohms))
    }

    /// Floor quantization with a full-scale clamp, matching the AVR ADC.
    pub fn adc_quantize(&self, vout_volts: f64) -> Result<u16, SensorError> {
        if vout_volts < 0.0 || vout_volts.is_nan() {
            return Err(SensorError::NegativeVoltage(vout_volts));
        }
        let raw = (vout_volts * self.code_count() / self.vref_volts).floor();
        Ok(raw.min(f64::from(self.max_code())) as u16)
    }

    /// Run the whole chain for one instant.
    pub fn sample(
        &self,
        true_ppm: f64,
        gas: GasSpecies,
        timestamp_ms: u64,
    ) -> Result<SensorReading, SensorError> {
        let rs_ohms = self.ppm_to_resistance(true_ppm, gas)?;
        let vout_volts = self.resistance_to_voltage(rs_ohms)?;
        let adc_code = self.adc_quantize(vout_volts)?;
        Ok(SensorReading {
            timestamp_ms,
            gas,
            true_ppm,
            rs_ohms,
            vout_volts,
            adc_code,
        })
    }

    /// Center voltage of an ADC code, used when inverting the chain.
    ///
    /// Working from the code center instead of its lower edge halves the
    /// worst-case quantization bias.
    pub fn code_center_voltage(&self, code: u16) -> f64 {
        (f64::from(code) + 0.5) * self.vref_volts / self.code_count()
    }

    /// Back-solve the sensing resistance from an ADC code.
    pub fn resistance_from_code(&self, code: u16) -> Result<f64, SensorError> {
        if code > self.max_code() {
            return Err(SensorError::CodeOutOfRange {
                code,
                max: self.max_code(),
            });
        }
        let vmid = self.code_center_voltage(code);
        if vmid >= self.vc_volts {
            return Err(SensorError::Saturated);
        }
        Ok(self.rl_ohms * (self.vc_volts - vmid) / vmid)
    }

    /// Recover a concentration estimate from an ADC code.
    ///
    /// Codes whose back-solved resistance reaches the clean-air cap read as
    /// 0 ppm; everything else is clamped to ten times the curve's trusted
    /// maximum.
    pub fn estimate_ppm(&self, code: u16, gas: GasSpecies) -> Result<f64, SensorError> {
        let rs = self.resistance_from_code(code)?;
        let curve = self.curve(gas);
        if rs >= curve.clean_air_ratio * self.r0_ohms {
            return Ok(0.0);
        }
        let ppm = curve.ref_ppm * (rs / self.r0_ohms).powf(-1.0 / curve.slope);
        Ok(ppm.clamp(0.0, 10.0 * curve.valid_range.1))
    }

    /// Estimate R0 from readings taken at the curve's reference exposure.
    ///
    /// `self.r0_ohms` is ignored; only the divider and ADC constants are
    /// used to back-solve each reading.
    pub fn calibrate_r0(&self, readings: &[SensorReading]) -> Result<f64, SensorError> {
        if readings.is_empty() {
            return Err(SensorError::NoReadings);
        }
        let mut sum = 0.0;
        for reading in readings {
            if reading.adc_code >= self.max_code() {
                return Err(SensorError::Saturated);
            }
            sum += self.resistance_from_code(reading.adc_code)?;
        }
        Ok(sum / readings.len() as f64)
    }
}
