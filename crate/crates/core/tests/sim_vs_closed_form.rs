//! The switched simulator and the closed-form CCM expressions are written
//! independently; at steady state they must agree.

use bbmsf_core::steady_state::{device_stresses, power_split, ResetDutyModel};
use bbmsf_core::switched_sim::{find_periodic_steady_state, measure_power_split, ResetVoltageModel, Signal};
use bbmsf_core::{ConverterParams, LoadModel, SimConfig};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn e0() -> (ConverterParams, LoadModel) {
    let vo = 600.0 / 18.0;
    let p = ConverterParams::reference_design().with_d(vo / 58.6);
    (p, LoadModel::Resistive { rl: vo * vo / 225.0 })
}

#[test]
fn reference_point_output_voltage() {
    let p = ConverterParams::reference_design();
    let w = find_periodic_steady_state(&p, &LoadModel::Resistive { rl: 7.255 }, &SimConfig::default()).unwrap();
    assert!(rel(w.metrics(Signal::Vo).avg, 40.404) < 0.005);
}

#[test]
fn e0_waveforms_match_closed_form() {
    let (p, load) = e0();
    let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
    let r = device_stresses(&p, 225.0, ResetDutyModel::VoltSecond);

    let il = w.metrics(Signal::Il);
    assert!(rel(il.peak_to_peak, r.dil) < 0.01);
    assert!(rel(il.rms, r.il_rms) < 0.01);
    assert!(rel(il.avg, r.il_avg) < 0.01);

    let s = w.metrics(Signal::Is);
    assert!(rel(s.rms, r.switch.rms) < 0.01);
    assert!(rel(s.peak, r.switch.peak) < 0.01);
    assert!(rel(s.avg, r.switch.avg) < 0.01);

    assert!(rel(w.metrics(Signal::Id1).avg, r.d1.avg) < 0.01);
    assert!(rel(w.metrics(Signal::Id2).avg, r.d2.avg) < 0.01);
    assert!(rel(w.metrics(Signal::Ilm).peak, r.dilm) < 0.01);
    assert!(rel(w.metrics(Signal::Idd).avg, r.dd.avg) < 0.01);
    assert!(rel(w.metrics(Signal::Idd).rms, r.dd.rms) < 0.01);
}

#[test]
fn reset_model_selects_reset_duty() {
    let (p, load) = e0();
    for (sim_model, closed) in [
        (ResetVoltageModel::ReflectedInput, ResetDutyModel::VoltSecond),
        (ResetVoltageModel::InputPlusReflected, ResetDutyModel::Published),
    ] {
        let cfg = SimConfig { reset_voltage_model: sim_model, ..SimConfig::default() };
        let w = find_periodic_steady_state(&p, &load, &cfg).unwrap();
        let r = device_stresses(&p, 225.0, closed);
        let measured = w.metrics(Signal::Idd).avg;
        assert!(rel(measured, r.dd.avg) < 0.01, "{sim_model:?}");
    }
}

#[test]
fn magnetic_share_follows_turns_ratio() {
    for (n, d) in [(1.0, 0.55), (0.1, 0.6), (0.5, 0.6), (2.0, 0.4)] {
        let p = ConverterParams { n, d, ..ConverterParams::reference_design() };
        let w = find_periodic_steady_state(&p, &LoadModel::Resistive { rl: 7.255 }, &SimConfig::default()).unwrap();
        let split = measure_power_split(&w, &p);
        assert!((split.mag - power_split(n).mag).abs() < 0.02, "n = {n}: {}", split.mag);
    }
}
