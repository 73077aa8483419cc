//! Closed-form CCM steady state: ripples, averages, reset duty, per-device
//! stresses and the split between magnetically and directly transferred power.
//!
//! Device rms currents are computed from piecewise-linear waveform segments.
//! Every conduction segment is a ramp from `start` to `end` amperes that lasts
//! a fraction `θ` of the period, so its contribution to the mean square is
//! `θ·(start² + start·end + end²)/3`, which is the same as `θ·(M² + R²/12)`
//! written in terms of mean `M` and ripple `R`.

use serde::{Deserialize, Serialize};

use crate::model::{reset_feasible, ConverterParams};

/// Which relation gives the reset duty of the magnetizing inductance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetDutyModel {
    /// `d2 = nd/(1 + nd)·d`, the relation used for the published component table.
    #[default]
    Published,
    /// `d2 = nd·d`, volt-second balance with `vi/nd` across the magnetizing inductance.
    VoltSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResetDuty {
    pub d2: f64,
    /// False when `d2 > 1 - d`: the reset cannot finish within the period.
    pub completes: bool,
}

/// Peak-to-peak ripple of the output inductor current.
pub fn inductor_ripple(p: &ConverterParams) -> f64 {
    p.vi * (1.0 + p.n) * (1.0 - p.d) * p.d / (p.l * p.fsw)
}

/// Average output inductor current for output power `po`; this is also the
/// string current in a series-connected output.
pub fn average_inductor_current(p: &ConverterParams, po: f64) -> f64 {
    po / (p.vi * (1.0 + p.n) * p.d)
}

/// Peak-to-peak (and, since it starts from zero, peak) magnetizing current.
pub fn magnetizing_ripple(p: &ConverterParams) -> f64 {
    p.vi * p.d / (p.lm * p.fsw)
}

pub fn reset_duty(p: &ConverterParams, model: ResetDutyModel) -> ResetDuty {
    let d2 = match model {
        ResetDutyModel::Published => p.nd / (1.0 + p.nd) * p.d,
        ResetDutyModel::VoltSecond => p.nd * p.d,
    };
    ResetDuty { d2, completes: d2 <= (1.0 - p.d) * (1.0 + 1e-12) }
}

/// Average magnetizing current: a triangle of height `ΔI_Lm` spanning `d + d2`.
pub fn magnetizing_average(p: &ConverterParams, model: ResetDutyModel) -> f64 {
    magnetizing_ripple(p) / 2.0 * (p.d + reset_duty(p, model).d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerSplit {
    /// Fraction of the output power that bypasses the magnetic core.
    pub not_mag: f64,
    /// Fraction processed through the autotransformer.
    pub mag: f64,
}

pub fn power_split(n: f64) -> PowerSplit {
    let not_mag = 1.0 / (1.0 + n);
    PowerSplit { not_mag, mag: 1.0 - not_mag }
}

/// Linear current segment: from `start` to `end` amperes over `fraction` of the period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Ramp {
    pub fn mean(&self) -> f64 {
        self.fraction * (self.start + self.end) / 2.0
    }

    pub fn mean_square(&self) -> f64 {
        let (a, b) = (self.start, self.end);
        self.fraction * (a * a + a * b + b * b) / 3.0
    }

    pub fn rms(&self) -> f64 {
        self.mean_square().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.start.max(self.end)
    }
}

/// rms of a trapezoid with mean `mean` and peak-to-peak ripple `ripple`
/// that conducts for `fraction` of the period.
pub fn trapezoid_rms(mean: f64, ripple: f64, fraction: f64) -> f64 {
    (fraction * (mean * mean + ripple * ripple / 12.0)).sqrt()
}

/// Off-state voltage across a device in each switching interval (zero while conducting).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockingVoltages {
    pub ton: f64,
    pub toff1: f64,
    pub toff2: f64,
}

impl BlockingVoltages {
    pub fn max(&self) -> f64 {
        self.ton.max(self.toff1).max(self.toff2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviceStress {
    pub avg: f64,
    pub peak: f64,
    pub rms: f64,
    pub blocking: BlockingVoltages,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateReport {
    pub model: ResetDutyModel,
    pub d: f64,
    pub vo: f64,
    pub po: f64,
    /// Reset duty under `model`.
    pub reset_duty: f64,
    pub reset_completes: bool,
    /// `nd <= (1 - d)/d`.
    pub reset_feasible: bool,
    /// `il_avg > dil/2`; when false every number below is an out-of-regime CCM extrapolation.
    pub ccm: bool,

    pub il_avg: f64,
    pub dil: f64,
    pub il_peak: f64,
    pub il_min: f64,
    pub il_rms: f64,
    pub v_l_on: f64,
    pub v_l_off: f64,

    pub dilm: f64,
    pub ilm_avg: f64,
    pub ilm_peak: f64,
    pub ilm_rms: f64,
    pub v_lm_on: f64,
    pub v_lm_off1: f64,

    pub switch: DeviceStress,
    pub d1: DeviceStress,
    pub d2: DeviceStress,
    pub dd: DeviceStress,
    /// `I_L·(1+n)·d + I_Lm` with the full magnetizing average, as the switch
    /// average is usually quoted. `switch.avg` integrates only the on-time part.
    pub switch_avg_full_magnetizing: f64,
    /// `(ΔI_Lm/nd)·d2` without the triangle factor ½. `dd.avg` is the triangle average.
    pub dd_avg_rectangular: f64,

    /// Primary winding carries `n·il + ilm` during the on time.
    pub winding_pri_rms: f64,
    /// Secondary winding carries `il` during the on time.
    pub winding_sec_rms: f64,
    /// Reset winding carries `ilm/nd` while resetting.
    pub winding_ter_rms: f64,

    pub p_notmag_fraction: f64,
    pub p_mag_fraction: f64,
}

impl SteadyStateReport {
    /// Named scalar quantities with units, in a fixed order.
    pub fn quantities(&self) -> Vec<(String, f64, &'static str)> {
        let mut q: Vec<(String, f64, &'static str)> = [
            ("vo", self.vo, "V"),
            ("d", self.d, "1"),
            ("reset_duty", self.reset_duty, "1"),
            ("il_avg", self.il_avg, "A"),
            ("dil", self.dil, "A"),
            ("il_peak", self.il_peak, "A"),
            ("il_rms", self.il_rms, "A"),
            ("v_l_on", self.v_l_on, "V"),
            ("v_l_off", self.v_l_off.abs(), "V"),
            ("dilm", self.dilm, "A"),
            ("ilm_avg", self.ilm_avg, "A"),
            ("ilm_peak", self.ilm_peak, "A"),
            ("ilm_rms", self.ilm_rms, "A"),
            ("v_lm_on", self.v_lm_on, "V"),
            ("v_lm_off1", self.v_lm_off1, "V"),
        ]
        .into_iter()
        .map(|(k, v, u)| (k.to_string(), v, u))
        .collect();
        for (name, dev) in [("s", &self.switch), ("d1", &self.d1), ("d2", &self.d2), ("dd", &self.dd)] {
            q.push((format!("i_{name}_avg"), dev.avg, "A"));
            q.push((format!("i_{name}_peak"), dev.peak, "A"));
            q.push((format!("i_{name}_rms"), dev.rms, "A"));
            q.push((format!("v_{name}_ton"), dev.blocking.ton, "V"));
            q.push((format!("v_{name}_off1"), dev.blocking.toff1, "V"));
            q.push((format!("v_{name}_off2"), dev.blocking.toff2, "V"));
            q.push((format!("v_{name}_max"), dev.blocking.max(), "V"));
        }
        q.extend(
            [
                ("i_s_avg_full_magnetizing", self.switch_avg_full_magnetizing, "A"),
                ("i_dd_avg_rectangular", self.dd_avg_rectangular, "A"),
                ("winding_pri_rms", self.winding_pri_rms, "A"),
                ("winding_sec_rms", self.winding_sec_rms, "A"),
                ("winding_ter_rms", self.winding_ter_rms, "A"),
            ]
            .into_iter()
            .map(|(k, v, u)| (k.to_string(), v, u)),
        );
        q
    }
}

/// Fills a full [`SteadyStateReport`] for output power `po`.
///
/// The CCM formulas are always evaluated; `ccm`, `reset_completes` and
/// `reset_feasible` flag results that are outside their regime.
pub fn device_stresses(p: &ConverterParams, po: f64, model: ResetDutyModel) -> SteadyStateReport {
    let d = p.d;
    let n = p.n;
    let nd = p.nd;
    let vi = p.vi;
    let vo = p.vo();

    let il = average_inductor_current(p, po);
    let dil = inductor_ripple(p);
    let il_min = il - dil / 2.0;
    let il_peak = il + dil / 2.0;
    let il_ms = il * il + dil * dil / 12.0;

    let dilm = magnetizing_ripple(p);
    let reset = reset_duty(p, model);
    let d2 = reset.d2;
    let ilm_avg = magnetizing_average(p, model);
    let ilm_rms = Ramp { start: 0.0, end: dilm, fraction: d + d2 }.rms();

    let s_ramp = Ramp { start: (1.0 + n) * il_min, end: (1.0 + n) * il_peak + dilm, fraction: d };
    let d1_rms = trapezoid_rms(il, dil, d);
    let dd_ramp = Ramp { start: dilm / nd, end: 0.0, fraction: d2 };
    let pri_ramp = Ramp { start: n * il_min, end: n * il_peak + dilm, fraction: d };

    let split = power_split(n);

    SteadyStateReport {
        model,
        d,
        vo,
        po,
        reset_duty: d2,
        reset_completes: reset.completes,
        reset_feasible: reset_feasible(nd, d),
        ccm: il_min > 0.0,

        il_avg: il,
        dil,
        il_peak,
        il_min,
        il_rms: il_ms.sqrt(),
        v_l_on: (1.0 + n) * vi - vo,
        v_l_off: -vo,

        dilm,
        ilm_avg,
        ilm_peak: dilm,
        ilm_rms,
        v_lm_on: vi,
        v_lm_off1: vi / nd,

        switch: DeviceStress {
            avg: s_ramp.mean(),
            peak: s_ramp.peak(),
            rms: s_ramp.rms(),
            blocking: BlockingVoltages { ton: 0.0, toff1: vi * (1.0 + nd) / nd, toff2: vi },
        },
        d1: DeviceStress {
            avg: il * d,
            peak: il_peak,
            rms: d1_rms,
            blocking: BlockingVoltages { ton: 0.0, toff1: vi * (1.0 + n) / nd, toff2: vo },
        },
        d2: DeviceStress {
            avg: il * (1.0 - d),
            peak: il_peak,
            rms: trapezoid_rms(il, dil, 1.0 - d),
            blocking: BlockingVoltages { ton: vi * (1.0 + n), toff1: 0.0, toff2: 0.0 },
        },
        dd: DeviceStress {
            avg: dd_ramp.mean(),
            peak: dd_ramp.peak(),
            rms: dd_ramp.rms(),
            blocking: BlockingVoltages { ton: vi * (1.0 + nd), toff1: 0.0, toff2: vi },
        },
        switch_avg_full_magnetizing: il * (1.0 + n) * d + ilm_avg,
        dd_avg_rectangular: dilm / nd * d2,

        winding_pri_rms: pri_ramp.rms(),
        winding_sec_rms: d1_rms,
        winding_ter_rms: dd_ramp.rms(),

        p_notmag_fraction: split.not_mag,
        p_mag_fraction: split.mag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Non-shaded panel sharing a 600 V bus with 17 identical panels.
    fn e0() -> ConverterParams {
        let vo = 600.0 / 18.0;
        ConverterParams::reference_design().with_d(vo / 58.6)
    }

    #[test]
    fn ripple_examples() {
        let p = ConverterParams::reference_design().with_d(0.5683);
        assert!(rel(inductor_ripple(&p), 4.227) < 1e-3);
        assert_eq!(inductor_ripple(&p.with_d(0.0)), 0.0);
        assert_eq!(inductor_ripple(&p.with_d(1.0)), 0.0);
        // 29.3·2·0.311·0.689/(68e-6·5e4)
        let t4 = ConverterParams::reference_design();
        assert!((inductor_ripple(&t4) - 3.693162).abs() < 1e-6);
    }

    #[test]
    fn average_current_examples() {
        let p = ConverterParams::reference_design().with_d(0.5683);
        assert!((average_inductor_current(&p, 225.0) - 6.757).abs() < 1e-3);
        let e1 = ConverterParams::reference_design().with_d(0.6895);
        assert!((average_inductor_current(&e1, 225.0) - 5.569).abs() < 1e-3);
        assert_eq!(average_inductor_current(&e1, 0.0), 0.0);
    }

    #[test]
    fn magnetizing_examples() {
        let p = ConverterParams::reference_design();
        assert!((magnetizing_ripple(&p) - 1.615).abs() < 1e-3);
        assert_eq!(magnetizing_ripple(&p.with_d(0.0)), 0.0);
        let doubled = ConverterParams { lm: 2.0 * p.lm, ..p };
        assert!(rel(magnetizing_ripple(&doubled), magnetizing_ripple(&p) / 2.0) < 1e-15);

        assert!((magnetizing_average(&p, ResetDutyModel::Published) - 0.695).abs() < 1e-3);
        assert!((magnetizing_average(&p, ResetDutyModel::VoltSecond) - 0.742).abs() < 1e-3);
        assert_eq!(magnetizing_average(&p.with_d(0.0), ResetDutyModel::Published), 0.0);
    }

    #[test]
    fn reset_duty_examples() {
        let p = ConverterParams::reference_design();
        let r = reset_duty(&p.with_d(0.72), ResetDutyModel::Published);
        assert!((r.d2 - 0.18).abs() < 1e-12);
        assert!(r.completes);
        let v = reset_duty(&p.with_d(0.6895), ResetDutyModel::VoltSecond);
        assert!((v.d2 - 0.2298).abs() < 1e-4);
        for m in [ResetDutyModel::Published, ResetDutyModel::VoltSecond] {
            assert_eq!(reset_duty(&p.with_d(0.0), m).d2, 0.0);
        }
        assert!(!reset_duty(&p.with_d(0.8), ResetDutyModel::VoltSecond).completes);
    }

    #[test]
    fn power_split_examples() {
        let s = power_split(1.0);
        assert_eq!((s.not_mag, s.mag), (0.5, 0.5));
        let s = power_split(0.1);
        assert!((s.not_mag - 0.909).abs() < 5e-4 && (s.mag - 0.091).abs() < 5e-4);
        let s = power_split(0.0);
        assert_eq!((s.not_mag, s.mag), (1.0, 0.0));
    }

    #[test]
    fn e0_device_stresses() {
        let r = device_stresses(&e0(), 225.0, ResetDutyModel::Published);
        assert!(r.ccm && r.reset_completes && r.reset_feasible);
        assert!(rel(r.d1.avg, 3.84) < 2e-3);
        assert!(rel(r.il_peak, 8.864) < 1e-3);
        assert!(rel(r.il_rms, 6.859) < 1e-3);
        assert!(rel(r.switch.rms, 10.895) < 5e-3);
        assert!(rel(r.switch.peak, 19.061) < 1e-3);
        assert!(rel(r.v_l_on, 25.267) < 1e-3);
        assert_eq!(r.il_peak, r.il_avg + r.dil / 2.0);
    }

    #[test]
    fn blocking_voltages() {
        let r = device_stresses(&ConverterParams::reference_design(), 225.0, ResetDutyModel::Published);
        assert!(rel(r.d2.blocking.max(), 58.6) < 1e-12);
        assert!(rel(r.switch.blocking.toff1, 117.288) < 2e-3);
        assert!(rel(r.dd.blocking.ton, 39.057) < 2e-3);
        assert!(rel(r.d1.blocking.toff1, 175.98) < 2e-3);
        assert_eq!(r.switch.blocking.toff2, 29.3);
        assert_eq!(r.dd.blocking.toff2, 29.3);
    }

    #[test]
    fn both_dd_readings_are_reported() {
        let r = device_stresses(&ConverterParams::reference_design(), 225.0, ResetDutyModel::Published);
        assert!(rel(r.dd_avg_rectangular, 2.0 * r.dd.avg) < 1e-12);
        assert!(r.switch_avg_full_magnetizing > r.switch.avg);
    }

    #[test]
    fn ccm_violation_is_flagged() {
        // Light load: 2 W at the reference point leaves the ripple larger than the mean.
        let r = device_stresses(&ConverterParams::reference_design(), 2.0, ResetDutyModel::Published);
        assert!(!r.ccm);
        assert!(r.il_min < 0.0);
    }

    #[test]
    fn ramp_matches_trapezoid_form() {
        let ramp = Ramp { start: 3.0, end: 7.0, fraction: 0.4 };
        assert!(rel(ramp.rms(), trapezoid_rms(5.0, 4.0, 0.4)) < 1e-14);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = ConverterParams> {
            (1.0f64..100.0, 0.05f64..5.0, 0.05f64..3.0, 1e-6f64..1e-3, 1e-5f64..1e-2, 1e-6f64..1e-3, 1e3f64..1e6, 0.01f64..0.99)
                .prop_map(|(vi, n, nd, l, lm, co, fsw, d)| ConverterParams { vi, n, nd, l, lm, co, fsw, d })
        }

        proptest! {
            #[test]
            fn ripple_via_output_voltage(p in params()) {
                let direct = inductor_ripple(&p);
                let via_vo = p.vo() * (1.0 - p.d) / (p.l * p.fsw);
                prop_assert!((direct - via_vo).abs() <= 1e-12 * direct.abs());
            }

            #[test]
            fn split_fractions(n in 1e-3f64..10.0) {
                let s = power_split(n);
                prop_assert_eq!(s.not_mag + s.mag, 1.0);
                prop_assert!((s.mag / s.not_mag - n).abs() <= 1e-12 * n);
            }

            #[test]
            fn report_invariants(p in params(), po in 1.0f64..1000.0, volt_second in any::<bool>()) {
                let model = if volt_second { ResetDutyModel::VoltSecond } else { ResetDutyModel::Published };
                let r = device_stresses(&p, po, model);
                prop_assert_eq!(r.p_mag_fraction + r.p_notmag_fraction, 1.0);
                prop_assert_eq!(r.il_peak, r.il_avg + r.dil / 2.0);
                prop_assert!((r.d1.avg + r.d2.avg - r.il_avg).abs() <= 1e-12 * r.il_avg);
                if r.ccm && r.reset_completes {
                    for dev in [&r.switch, &r.d1, &r.d2, &r.dd] {
                        prop_assert!(dev.rms >= dev.avg.abs() * (1.0 - 1e-12));
                    }
                    prop_assert!(r.il_rms >= r.il_avg);
                }
                if r.reset_completes {
                    prop_assert!(r.ilm_rms >= r.ilm_avg * (1.0 - 1e-12));
                }
            }
        }
    }
}
