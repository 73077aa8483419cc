//! Design-level calculations: operating points from a specification,
//! worst-case stress envelopes across operating points, output filter sizing
//! and a conduction-loss estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{duty_for_output, reset_feasible, ConverterParams, Parasitics, Violation};
use crate::steady_state::{device_stresses, inductor_ripple, ResetDutyModel, SteadyStateReport};

/// Input capacitance chosen for the prototype, F. There is no input ripple
/// requirement to derive it from, so it is carried as a documented value.
pub const INPUT_CAPACITOR_MINIMUM: f64 = 183.7e-6;

fn default_margin() -> f64 {
    0.20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub vi_range: [f64; 2],
    pub vo_range: [f64; 2],
    /// Allowed relative deviation around `vo_range`.
    #[serde(default)]
    pub vo_tolerance: f64,
    pub d_range: [f64; 2],
    pub po_range: [f64; 2],
    /// Applied to capacitor voltage ratings, and reported separately for the rest.
    #[serde(default = "default_margin")]
    pub voltage_safety_margin: f64,
}

impl DesignSpec {
    /// 15–29.3 V in, 12–42.2 V ±2 % out, duty up to 0.72, 60–225 W.
    pub fn reference() -> Self {
        DesignSpec {
            vi_range: [15.0, 29.3],
            vo_range: [12.0, 42.2],
            vo_tolerance: 0.02,
            d_range: [0.0, 0.72],
            po_range: [60.0, 225.0],
            voltage_safety_margin: 0.20,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, r) in [("vi_range", self.vi_range), ("vo_range", self.vo_range), ("d_range", self.d_range), ("po_range", self.po_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                out.push(Violation::new(name, format!("{name} must satisfy min <= max")));
            }
        }
        if !(self.vo_tolerance >= 0.0) {
            out.push(Violation::new("vo_tolerance", "vo_tolerance must be non-negative"));
        }
        if !(self.voltage_safety_margin >= 0.0) {
            out.push(Violation::new("voltage_safety_margin", "voltage_safety_margin must be non-negative"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPoint {
    #[serde(default)]
    pub label: String,
    pub vi: f64,
    pub vo: f64,
    pub po: f64,
}

impl OperatingPoint {
    pub fn new(label: impl Into<String>, vi: f64, vo: f64, po: f64) -> Self {
        OperatingPoint { label: label.into(), vi, vo, po }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvedPoint {
    pub label: String,
    pub vi: f64,
    pub vo: f64,
    pub po: f64,
    pub d: f64,
    /// Output (string) current, A; equal to the average inductor current.
    pub i_string: f64,
    pub il: f64,
}

/// Duty and currents for one operating point. The duty limit is checked
/// before reset feasibility and the range checks.
pub fn solve_operating_point(spec: &DesignSpec, vi: f64, vo: f64, po: f64, n: f64, nd: f64) -> Result<SolvedPoint> {
    let d = duty_for_output(vi, vo, n)?;
    if d > spec.d_range[1] {
        return Err(Error::DutyAboveMax { required: d, max: spec.d_range[1] });
    }
    if !reset_feasible(nd, d) {
        return Err(Error::ResetInfeasible { nd, d, limit: (1.0 - d) / d });
    }
    let within = |x: f64, r: [f64; 2]| x >= r[0] * (1.0 - 1e-12) && x <= r[1] * (1.0 + 1e-12);
    if !within(vi, spec.vi_range) {
        return Err(Error::OutOfSpec(format!("vi = {vi} V is outside {:?}", spec.vi_range)));
    }
    let tol = spec.vo_tolerance;
    let vo_band = [spec.vo_range[0] * (1.0 - tol), spec.vo_range[1] * (1.0 + tol)];
    if !within(vo, vo_band) {
        return Err(Error::OutOfSpec(format!("vo = {vo} V is outside {vo_band:?}")));
    }
    if !within(po, spec.po_range) {
        return Err(Error::OutOfSpec(format!("po = {po} W is outside {:?}", spec.po_range)));
    }
    if d < spec.d_range[0] {
        return Err(Error::OutOfSpec(format!("d = {d} is below the minimum duty {}", spec.d_range[0])));
    }
    let i_string = po / vo;
    Ok(SolvedPoint { label: String::new(), vi, vo, po, d, i_string, il: i_string })
}

/// A worst-case value and the operating point where it occurs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeValue {
    pub name: String,
    pub unit: &'static str,
    pub value: f64,
    /// `value·(1 + margin)` for voltages; informative only.
    pub derated: Option<f64>,
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressEnvelope {
    pub model: ResetDutyModel,
    pub voltage_safety_margin: f64,
    pub points: Vec<SolvedPoint>,
    #[serde(skip)]
    pub reports: Vec<SteadyStateReport>,
    pub values: Vec<EnvelopeValue>,
    /// Input capacitor voltage rating with the margin applied.
    pub v_ci_rating: EnvelopeValue,
    /// Output capacitor voltage rating with the margin applied.
    pub v_co_rating: EnvelopeValue,
}

impl StressEnvelope {
    pub fn get(&self, name: &str) -> Option<&EnvelopeValue> {
        self.values.iter().find(|v| v.name == name)
    }
}

/// Builds converter parameters for a solved point on top of `base`.
pub fn params_at(base: &ConverterParams, pt: &SolvedPoint) -> ConverterParams {
    ConverterParams { vi: pt.vi, d: pt.d, ..*base }
}

pub fn stress_envelope(
    spec: &DesignSpec,
    points: &[OperatingPoint],
    base: &ConverterParams,
    model: ResetDutyModel,
) -> Result<StressEnvelope> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidParams(violations));
    }
    if points.is_empty() {
        return Err(Error::OutOfSpec("no operating points given".into()));
    }
    let solved = points
        .iter()
        .map(|op| {
            let mut s = solve_operating_point(spec, op.vi, op.vo, op.po, base.n, base.nd)?;
            s.label = op.label.clone();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<SteadyStateReport> =
        solved.iter().map(|s| device_stresses(&params_at(base, s), s.po, model)).collect();

    let margin = spec.voltage_safety_margin;
    let mut values: Vec<EnvelopeValue> = Vec::new();
    for (report, pt) in reports.iter().zip(&solved) {
        for (i, (name, value, unit)) in report.quantities().into_iter().enumerate() {
            if let Some(slot) = values.get_mut(i) {
                if value > slot.value {
                    slot.value = value;
                    slot.at = pt.label.clone();
                }
            } else {
                values.push(EnvelopeValue { name, unit, value, derated: None, at: pt.label.clone() });
            }
        }
    }
    for v in &mut values {
        if v.unit == "V" {
            v.derated = Some(v.value * (1.0 + margin));
        }
    }

    let rating = |name: &str, pick: fn(&SolvedPoint) -> f64| {
        let best = solved.iter().max_by(|a, b| pick(a).total_cmp(&pick(b))).expect("points is non-empty");
        EnvelopeValue {
            name: name.to_string(),
            unit: "V",
            value: pick(best) * (1.0 + margin),
            derated: None,
            at: best.label.clone(),
        }
    };
    let v_ci_rating = rating("v_ci", |p| p.vi);
    let v_co_rating = rating("v_co", |p| p.vo);

    Ok(StressEnvelope { model, voltage_safety_margin: margin, points: solved, reports, values, v_ci_rating, v_co_rating })
}

/// Smallest output capacitance keeping the switching ripple below `dvo_max`.
pub fn output_capacitor_minimum(p: &ConverterParams, dvo_max: f64) -> f64 {
    inductor_ripple(p) / (8.0 * p.fsw * dvo_max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub po: f64,
    pub switch: f64,
    pub d1: f64,
    pub d2: f64,
    pub dd: f64,
    pub inductor: f64,
    pub winding_pri: f64,
    pub winding_sec: f64,
    pub winding_ter: f64,
    pub total: f64,
    pub efficiency: f64,
}

impl LossReport {
    pub fn components(&self) -> [(&'static str, f64); 8] {
        [
            ("switch", self.switch),
            ("d1", self.d1),
            ("d2", self.d2),
            ("dd", self.dd),
            ("inductor", self.inductor),
            ("winding_pri", self.winding_pri),
            ("winding_sec", self.winding_sec),
            ("winding_ter", self.winding_ter),
        ]
    }

    /// Components sorted from largest to smallest loss.
    pub fn ranked(&self) -> Vec<(&'static str, f64)> {
        let mut c = self.components().to_vec();
        c.sort_by(|a, b| b.1.total_cmp(&a.1));
        c
    }
}

/// Conduction losses only: diode drops times average current and
/// resistances times rms current squared. Switching and snubber losses are
/// not included, so the efficiency is an upper bound.
pub fn conduction_losses(p: &ConverterParams, po: f64, par: &Parasitics, model: ResetDutyModel) -> LossReport {
    let r = device_stresses(p, po, model);
    let switch = par.rds_on * r.switch.rms.powi(2);
    let d1 = par.vf_d1 * r.d1.avg;
    let d2 = par.vf_d2 * r.d2.avg;
    let dd = par.vf_dd * r.dd.avg;
    let inductor = par.dcr_l * r.il_rms.powi(2);
    let winding_pri = par.dcr_pri * r.winding_pri_rms.powi(2);
    let winding_sec = par.dcr_sec * r.winding_sec_rms.powi(2);
    let winding_ter = par.dcr_ter * r.winding_ter_rms.powi(2);
    let total = switch + d1 + d2 + dd + inductor + winding_pri + winding_sec + winding_ter;
    LossReport {
        po,
        switch,
        d1,
        d2,
        dd,
        inductor,
        winding_pri,
        winding_sec,
        winding_ter,
        total,
        efficiency: po / (po + total),
    }
}
