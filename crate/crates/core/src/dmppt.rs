//! Series strings of panel-level converters (distributed MPPT).
//!
//! Every converter in a string carries the same output current, set by the
//! string power and the bus voltage the inverter imposes. With lossless
//! converters each output voltage is the panel's share of the string power
//! times the bus voltage.
//!
//! Panel counts are real-valued weights so that "25 % of 18 panels" can be
//! modelled directly; set [`StringScenario::integer_counts`] to insist on a
//! physical configuration instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{duty_for_output, reset_feasible};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    /// Maximum power point power, W.
    pub p_mpp: f64,
    /// Maximum power point voltage, V.
    pub v_mpp: f64,
    pub label: String,
}

impl PanelSpec {
    pub fn new(label: impl Into<String>, p_mpp: f64, v_mpp: f64) -> Self {
        PanelSpec { p_mpp, v_mpp, label: label.into() }
    }
}

fn unity() -> f64 {
    1.0
}

/// A group of identical panels (each with its own converter) in the string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringEntry {
    pub p_mpp: f64,
    pub v_mpp: f64,
    pub count: f64,
    #[serde(default)]
    pub label: String,
    /// Converter efficiency; 1 is the lossless case.
    #[serde(default = "unity")]
    pub efficiency: f64,
}

impl StringEntry {
    pub fn new(panel: PanelSpec, count: f64) -> Self {
        StringEntry { p_mpp: panel.p_mpp, v_mpp: panel.v_mpp, count, label: panel.label, efficiency: 1.0 }
    }

    pub fn panel(&self) -> PanelSpec {
        PanelSpec::new(self.label.clone(), self.p_mpp, self.v_mpp)
    }

    /// Power one converter of this entry delivers to the string.
    pub fn delivered_power(&self) -> f64 {
        self.efficiency * self.p_mpp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringScenario {
    /// Bus voltage imposed by the inverter, V.
    pub v_string: f64,
    pub entries: Vec<StringEntry>,
    #[serde(default)]
    pub integer_counts: bool,
}

impl StringScenario {
    /// `count` identical panels on a `v_string` bus.
    pub fn uniform(v_string: f64, panel: PanelSpec, count: f64) -> Self {
        StringScenario { v_string, entries: vec![StringEntry::new(panel, count)], integer_counts: false }
    }

    pub fn total_count(&self) -> f64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn string_power(&self) -> f64 {
        self.entries.iter().map(|e| e.count * e.delivered_power()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !(self.v_string > 0.0 && self.v_string.is_finite()) {
            return bad(format!("v_string must be positive, got {}", self.v_string));
        }
        if self.entries.is_empty() {
            return bad("the string has no entries".into());
        }
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.p_mpp > 0.0 && e.p_mpp.is_finite()) {
                return bad(format!("entry {i}: p_mpp must be positive"));
            }
            if !(e.v_mpp > 0.0 && e.v_mpp.is_finite()) {
                return bad(format!("entry {i}: v_mpp must be positive"));
            }
            if !(e.count >= 0.0 && e.count.is_finite()) {
                return bad(format!("entry {i}: count must be non-negative"));
            }
            if self.integer_counts && e.count.fract() != 0.0 {
                return bad(format!("entry {i}: count {} is not a whole number of panels", e.count));
            }
            if !(e.efficiency > 0.0 && e.efficiency <= 1.0) {
                return bad(format!("entry {i}: efficiency must be in (0, 1]"));
            }
        }
        if !(self.total_count() > 0.0) {
            return bad("total panel count must be positive".into());
        }
        Ok(())
    }
}

/// Converter limits applied to every entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterLimits {
    pub n: f64,
    pub nd: f64,
    pub d_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conversion {
    StepUp,
    StepDown,
    Unity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryResult {
    pub label: String,
    pub count: f64,
    pub p_mpp: f64,
    pub v_mpp: f64,
    /// Converter output voltage, V.
    pub vo: f64,
    /// String current through this converter's output, A.
    pub i_string: f64,
    pub d: f64,
    pub duty_ok: bool,
    pub reset_ok: bool,
    pub conversion: Conversion,
}

impl EntryResult {
    pub fn feasible(&self) -> bool {
        self.duty_ok && self.reset_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub v_string: f64,
    pub p_string: f64,
    pub i_string: f64,
    pub entries: Vec<EntryResult>,
}

pub fn string_current(p_string: f64, v_string: f64) -> f64 {
    p_string / v_string
}

/// Output voltage of one lossless converter: its share of the string power
/// times the bus voltage.
pub fn converter_output_voltage(p_pv: f64, p_string: f64, v_string: f64) -> f64 {
    p_pv / p_string * v_string
}

pub fn evaluate_scenario(sc: &StringScenario, limits: &ConverterLimits) -> Result<ScenarioResult> {
    sc.validate()?;
    let p_string = sc.string_power();
    let i_string = string_current(p_string, sc.v_string);
    let entries = sc
        .entries
        .iter()
        .map(|e| {
            let vo = converter_output_voltage(e.delivered_power(), p_string, sc.v_string);
            let d = duty_for_output(e.v_mpp, vo, limits.n)?;
            let conversion = if vo > e.v_mpp {
                Conversion::StepUp
            } else if vo < e.v_mpp {
                Conversion::StepDown
            } else {
                Conversion::Unity
            };
            Ok(EntryResult {
                label: e.label.clone(),
                count: e.count,
                p_mpp: e.p_mpp,
                v_mpp: e.v_mpp,
                vo,
                i_string,
                d,
                duty_ok: d <= limits.d_max,
                reset_ok: reset_feasible(limits.nd, d),
                conversion,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioResult { v_string: sc.v_string, p_string, i_string, entries })
}
