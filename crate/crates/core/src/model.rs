//! Parameter records and the fundamental CCM voltage relations.
//!
//! Everything is in SI base units: duty is a ratio in `[0, 1)`, frequencies are
//! in hertz, inductances in henries and so on.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical parameters of one converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterParams {
    /// Input voltage, V.
    pub vi: f64,
    /// Secondary-to-primary turns ratio.
    pub n: f64,
    /// Reset-winding turns ratio.
    pub nd: f64,
    /// Output filter inductance, H.
    pub l: f64,
    /// Magnetizing inductance referred to the primary, H.
    pub lm: f64,
    /// Output filter capacitance, F.
    pub co: f64,
    /// Switching frequency, Hz.
    pub fsw: f64,
    /// Duty cycle.
    pub d: f64,
}

impl ConverterParams {
    /// The 225 W prototype at its nominal non-shaded operating point
    /// (29.3 V in, 40.4 V out, 50 kHz).
    pub fn reference_design() -> Self {
        ConverterParams {
            vi: 29.3,
            n: 1.0,
            nd: 1.0 / 3.0,
            l: 68e-6,
            lm: 250e-6,
            co: 112e-6,
            fsw: 50e3,
            d: 0.689,
        }
    }

    pub fn with_d(self, d: f64) -> Self {
        ConverterParams { d, ..self }
    }

    pub fn with_vi(self, vi: f64) -> Self {
        ConverterParams { vi, ..self }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.fsw
    }

    /// Ideal CCM output voltage for the stored duty.
    pub fn vo(&self) -> f64 {
        (1.0 + self.n) * self.d * self.vi
    }

    /// Undamped LC resonance of the output filter, rad/s.
    pub fn omega0(&self) -> f64 {
        1.0 / (self.l * self.co).sqrt()
    }

    pub fn validate(&self, load: &LoadModel) -> Vec<Violation> {
        validate_params(self, load)
    }
}

/// Output load seen by the converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadModel {
    /// Resistor, ohms.
    Resistive { rl: f64 },
    /// Constant current sink, amperes (a string bus shared with other modules).
    CurrentSink { io: f64 },
}

impl LoadModel {
    pub fn current(&self, vo: f64) -> f64 {
        match *self {
            LoadModel::Resistive { rl } => vo / rl,
            LoadModel::CurrentSink { io } => io,
        }
    }

    /// Output power drawn at output voltage `vo`.
    pub fn power(&self, vo: f64) -> f64 {
        vo * self.current(vo)
    }

    pub fn resistance(&self) -> Option<f64> {
        match *self {
            LoadModel::Resistive { rl } => Some(rl),
            LoadModel::CurrentSink { .. } => None,
        }
    }
}

/// Conduction parasitics of the built prototype. Only the loss estimator
/// uses them; the switched simulator stays ideal.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parasitics {
    pub rds_on: f64,
    pub vf_d1: f64,
    pub vf_d2: f64,
    pub vf_dd: f64,
    pub dcr_l: f64,
    pub dcr_pri: f64,
    pub dcr_sec: f64,
    pub dcr_ter: f64,
}

impl Parasitics {
    /// Values of the parts selected for the 225 W prototype.
    pub fn reference_design() -> Self {
        Parasitics {
            rds_on: 9.6e-3,
            vf_d1: 1.2,
            vf_d2: 0.33,
            vf_dd: 1.2,
            dcr_l: 27.3e-3,
            dcr_pri: 15e-3,
            dcr_sec: 17.2e-3,
            dcr_ter: 8.5e-3,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("rds_on", self.rds_on),
            ("vf_d1", self.vf_d1),
            ("vf_d2", self.vf_d2),
            ("vf_dd", self.vf_dd),
            ("dcr_l", self.dcr_l),
            ("dcr_pri", self.dcr_pri),
            ("dcr_sec", self.dcr_sec),
            ("dcr_ter", self.dcr_ter),
        ]
    }

    pub fn validate(&self) -> Vec<Violation> {
        self.fields()
            .into_iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(field, _)| Violation::new(field, format!("{field} must be non-negative")))
            .collect()
    }
}

/// One broken invariant: which field, and the bound it violates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks every parameter invariant and returns all violations found.
/// An empty list means the parameters are valid.
pub fn validate_params(p: &ConverterParams, load: &LoadModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let positive = [
        ("vi", p.vi),
        ("n", p.n),
        ("nd", p.nd),
        ("l", p.l),
        ("lm", p.lm),
        ("co", p.co),
        ("fsw", p.fsw),
    ];
    for (field, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            out.push(Violation::new(field, format!("{field} must be positive")));
        }
    }
    if !(p.d.is_finite() && p.d > 0.0 && p.d < 1.0) {
        out.push(Violation::new("d", "d must satisfy 0 < d < 1"));
    }
    match *load {
        LoadModel::Resistive { rl } if !(rl.is_finite() && rl > 0.0) => {
            out.push(Violation::new("rl", "rl must be positive"));
        }
        LoadModel::CurrentSink { io } if !(io.is_finite() && io > 0.0) => {
            out.push(Violation::new("io", "io must be positive"));
        }
        _ => {}
    }
    out
}

/// Ideal CCM output voltage `(1 + n)·d·vi`.
pub fn voltage_transfer(vi: f64, n: f64, d: f64) -> Result<f64> {
    if !(vi >= 0.0) {
        return Err(Error::domain("vi", format!("{vi} is negative")));
    }
    if !(n >= 0.0) {
        return Err(Error::domain("n", format!("{n} is negative")));
    }
    if !(0.0..1.0).contains(&d) {
        return Err(Error::domain("d", format!("{d} is not in [0, 1)")));
    }
    Ok((1.0 + n) * d * vi)
}

/// Duty cycle needed to reach `vo` from `vi`; left inverse of [`voltage_transfer`].
pub fn duty_for_output(vi: f64, vo: f64, n: f64) -> Result<f64> {
    if !(vi > 0.0) {
        return Err(Error::domain("vi", format!("{vi} must be positive")));
    }
    if !(vo >= 0.0) {
        return Err(Error::domain("vo", format!("{vo} is negative")));
    }
    if !(n >= 0.0) {
        return Err(Error::domain("n", format!("{n} is negative")));
    }
    let d = vo / ((1.0 + n) * vi);
    if d >= 1.0 {
        return Err(Error::UnreachableOutput { required: d });
    }
    Ok(d)
}

/// Whether the magnetizing current can return to zero within the off time,
/// i.e. `nd <= (1 - d)/d`.
pub fn reset_feasible(nd: f64, d: f64) -> bool {
    // Written multiplicatively so that d = 0 is feasible and exact equality holds.
    nd * d <= (1.0 - d) * (1.0 + 1e-12)
}
