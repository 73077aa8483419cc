//! Time-domain simulation of the ideal switched converter.
//!
//! Each switching period runs through three topologies: switch on (`TON`),
//! switch off while the magnetizing inductance resets through the reset
//! winding (`TOFF1`) and switch off after the reset has finished (`TOFF2`).
//! Within a topology the circuit is linear, so a fixed-step RK4 integrator is
//! used with the gate edges placed on step boundaries. The end of the reset
//! is located inside its step by bisection.
//!
//! Nothing here reuses the closed forms from [`crate::steady_state`]; the
//! simulator is the independent check on them. The only analytic input is the
//! warm start, which affects convergence speed but not the answer.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_params, ConverterParams, LoadModel};
use crate::steady_state::PowerSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interval {
    #[serde(rename = "TON")]
    Ton,
    #[serde(rename = "TOFF1")]
    Toff1,
    #[serde(rename = "TOFF2")]
    Toff2,
}

impl Interval {
    pub fn label(self) -> &'static str {
        match self {
            Interval::Ton => "TON",
            Interval::Toff1 => "TOFF1",
            Interval::Toff2 => "TOFF2",
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Circuit state at one instant. `t` is measured from the start of the
/// current switching period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimState {
    pub il: f64,
    pub ilm: f64,
    pub vo: f64,
    pub t: f64,
    pub interval: Interval,
}

impl SimState {
    pub fn zero() -> Self {
        SimState { il: 0.0, ilm: 0.0, vo: 0.0, t: 0.0, interval: Interval::Ton }
    }
}

/// Voltage the reset winding clamps across the magnetizing inductance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetVoltageModel {
    /// `vi/nd`: the input reflected through the reset winding.
    #[default]
    ReflectedInput,
    /// `vi·(1 + nd)/nd`: the value that makes the reset duty equal `nd·d/(1 + nd)`.
    InputPlusReflected,
}

impl ResetVoltageModel {
    pub fn reset_voltage(self, vi: f64, nd: f64) -> f64 {
        match self {
            ResetVoltageModel::ReflectedInput => vi / nd,
            ResetVoltageModel::InputPlusReflected => vi * (1.0 + nd) / nd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyStateMethod {
    /// Newton iteration on the period map from the warm start, then confirmation.
    #[default]
    Shooting,
    /// Plain period-after-period iteration from the warm start.
    CycleIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub steps_per_period: usize,
    /// Defaults to `20·ceil(rl·co·fsw)` for resistive loads and 2000 otherwise.
    pub max_periods: Option<usize>,
    /// Relative state change over one period accepted as periodic.
    pub periodicity_tol: f64,
    /// Magnetizing-current band, in amperes, that counts as reset.
    pub event_tol: f64,
    pub reset_voltage_model: ResetVoltageModel,
    pub method: SteadyStateMethod,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            steps_per_period: 2000,
            max_periods: None,
            periodicity_tol: 1e-6,
            event_tol: 1e-6,
            reset_voltage_model: ResetVoltageModel::ReflectedInput,
            method: SteadyStateMethod::Shooting,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Vec<crate::model::Violation> {
        use crate::model::Violation;
        let mut out = Vec::new();
        if self.steps_per_period < 100 {
            out.push(Violation::new("steps_per_period", "steps_per_period must be at least 100"));
        }
        if !(self.periodicity_tol > 0.0) {
            out.push(Violation::new("periodicity_tol", "periodicity_tol must be positive"));
        }
        if !(self.event_tol > 0.0) {
            out.push(Violation::new("event_tol", "event_tol must be positive"));
        }
        if self.max_periods == Some(0) {
            out.push(Violation::new("max_periods", "max_periods must be positive"));
        }
        out
    }

    fn period_budget(&self, p: &ConverterParams, load: &LoadModel) -> usize {
        self.max_periods.unwrap_or_else(|| match *load {
            LoadModel::Resistive { rl } => 20 * ((rl * p.co * p.fsw).ceil() as usize).max(1),
            LoadModel::CurrentSink { .. } => 2000,
        })
    }
}

/// Time derivatives `(dil/dt, dilm/dt, dvo/dt)` in the state's interval.
pub fn interval_derivatives(s: &SimState, p: &ConverterParams, load: &LoadModel, cfg: &SimConfig) -> (f64, f64, f64) {
    let v_reset = cfg.reset_voltage_model.reset_voltage(p.vi, p.nd);
    let [a, b, c] = derivatives(s.interval, [s.il, s.ilm, s.vo], p.vi, v_reset, 0.0, p, load);
    (a, b, c)
}

#[inline]
fn derivatives(
    interval: Interval,
    x: [f64; 3],
    vi: f64,
    v_reset: f64,
    i_inj: f64,
    p: &ConverterParams,
    load: &LoadModel,
) -> [f64; 3] {
    let [il, _, vo] = x;
    let dvo = (il - load.current(vo) + i_inj) / p.co;
    match interval {
        Interval::Ton => [((1.0 + p.n) * vi - vo) / p.l, vi / p.lm, dvo],
        Interval::Toff1 => [-vo / p.l, -v_reset / p.lm, dvo],
        Interval::Toff2 => [-vo / p.l, 0.0, dvo],
    }
}

/// Time-varying sources. `t` is absolute simulation time.
pub(crate) trait Excitation {
    fn vi(&self, t: f64) -> f64;
    fn injected_current(&self, t: f64) -> f64;
}

pub(crate) struct ConstantInput(pub f64);

impl Excitation for ConstantInput {
    #[inline]
    fn vi(&self, _t: f64) -> f64 {
        self.0
    }
    #[inline]
    fn injected_current(&self, _t: f64) -> f64 {
        0.0
    }
}

pub(crate) struct PeriodEnd {
    pub state: SimState,
    /// Time of the reset event from the start of the period.
    pub reset_time: Option<f64>,
}

/// Steps one switching period. Owns nothing; it just bundles the borrowed inputs.
pub(crate) struct Stepper<'a, E: Excitation> {
    pub p: &'a ConverterParams,
    pub load: &'a LoadModel,
    pub cfg: &'a SimConfig,
    pub exc: &'a E,
    pub dcm_hint: &'static str,
}

impl<E: Excitation> Stepper<'_, E> {
    #[inline]
    fn rk4(&self, interval: Interval, x: [f64; 3], t_abs: f64, h: f64) -> [f64; 3] {
        let f = |t: f64, x: [f64; 3]| {
            let vi = self.exc.vi(t);
            let v_reset = self.cfg.reset_voltage_model.reset_voltage(vi, self.p.nd);
            derivatives(interval, x, vi, v_reset, self.exc.injected_current(t), self.p, self.load)
        };
        let add = |x: [f64; 3], k: [f64; 3], s: f64| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
        let k1 = f(t_abs, x);
        let k2 = f(t_abs + h / 2.0, add(x, k1, h / 2.0));
        let k3 = f(t_abs + h / 2.0, add(x, k2, h / 2.0));
        let k4 = f(t_abs + h, add(x, k3, h));
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if interval == Interval::Toff2 {
            out[1] = 0.0;
        }
        out
    }

    /// Integrates one period of length `period` whose switch conducts for
    /// `t_on`, starting at absolute time `t0` from state `start` (its `t` and
    /// `interval` are ignored). Every sample is passed to `observe`, with
    /// both sides of each topology change reported at the same instant.
    pub fn period(
        &self,
        start: &SimState,
        t0: f64,
        t_on: f64,
        period: f64,
        mut observe: impl FnMut(&SimState),
    ) -> Result<PeriodEnd> {
        let steps = self.cfg.steps_per_period as f64;
        let t_on = t_on.clamp(0.0, period);
        let n_on = if t_on > 0.0 { ((t_on / period * steps) - 1e-9).ceil().max(1.0) as usize } else { 0 };
        let t_off = period - t_on;
        let n_off = if t_off > 0.0 { ((t_off / period * steps) - 1e-9).ceil().max(1.0) as usize } else { 0 };

        let mut x = [start.il, start.ilm, start.vo];
        let mut t = 0.0;
        let state = |x: [f64; 3], t: f64, interval| SimState { il: x[0], ilm: x[1], vo: x[2], t, interval };
        let dcm = |t: f64| Error::Dcm { t, hint: self.dcm_hint };

        if n_on > 0 {
            observe(&state(x, t, Interval::Ton));
            let h = t_on / n_on as f64;
            for k in 1..=n_on {
                x = self.rk4(Interval::Ton, x, t0 + t, h);
                t = if k == n_on { t_on } else { k as f64 * h };
                if x[0] < 0.0 {
                    return Err(dcm(t));
                }
                observe(&state(x, t, Interval::Ton));
            }
        }

        let tol = self.cfg.event_tol;
        let mut interval = if x[1] > tol { Interval::Toff1 } else { Interval::Toff2 };
        let mut reset_time = None;
        if interval == Interval::Toff2 {
            x[1] = 0.0;
            reset_time = Some(t);
        }
        if n_off > 0 {
            observe(&state(x, t, interval));
            let h = t_off / n_off as f64;
            for k in 1..=n_off {
                let t_next = if k == n_off { period } else { t_on + k as f64 * h };
                let h_step = t_next - t;
                let mut next = self.rk4(interval, x, t0 + t, h_step);
                if interval == Interval::Toff1 && next[1] < tol {
                    let (h_event, mut at_event) =
                        if next[1] >= -tol { (h_step, next) } else { self.locate_reset(x, t0 + t, h_step) };
                    at_event[1] = 0.0;
                    let t_event = t + h_event;
                    if at_event[0] < 0.0 {
                        return Err(dcm(t_event));
                    }
                    reset_time = Some(t_event);
                    observe(&state(at_event, t_event, Interval::Toff1));
                    interval = Interval::Toff2;
                    next = if h_event < h_step {
                        observe(&state(at_event, t_event, Interval::Toff2));
                        self.rk4(Interval::Toff2, at_event, t0 + t_event, h_step - h_event)
                    } else {
                        at_event
                    };
                }
                x = next;
                t = t_next;
                if x[0] < 0.0 {
                    return Err(dcm(t));
                }
                observe(&state(x, t, interval));
            }
        }
        Ok(PeriodEnd { state: state(x, t, interval), reset_time })
    }

    /// Bisects the step length until the magnetizing current lands within
    /// `event_tol` of zero.
    fn locate_reset(&self, x: [f64; 3], t_abs: f64, h: f64) -> (f64, [f64; 3]) {
        let tol = self.cfg.event_tol;
        let (mut lo, mut hi) = (0.0, h);
        let mut best = (h, self.rk4(Interval::Toff1, x, t_abs, h));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let y = self.rk4(Interval::Toff1, x, t_abs, mid);
            best = (mid, y);
            if y[1] > tol {
                lo = mid;
            } else if y[1] < -tol {
                hi = mid;
            } else {
                break;
            }
        }
        best
    }
}

/// Result of integrating one period with [`advance_period`].
#[derive(Debug, Clone)]
pub struct PeriodOutcome {
    pub end: SimState,
    pub trajectory: Vec<SimState>,
    /// Time of the reset event from the start of the period, if it happened.
    pub reset_time: Option<f64>,
    /// The magnetizing current was still above `event_tol` at the end of the period.
    pub non_reset: bool,
}

/// Integrates one switching period from `s0`, which is taken to sit at the
/// switch turn-on instant. A failed reset is reported through
/// [`PeriodOutcome::non_reset`]; a negative inductor current is a DCM error.
pub fn advance_period(s0: &SimState, p: &ConverterParams, load: &LoadModel, cfg: &SimConfig) -> Result<PeriodOutcome> {
    let exc = ConstantInput(p.vi);
    let stepper = Stepper { p, load, cfg, exc: &exc, dcm_hint: "" };
    let mut trajectory = Vec::with_capacity(cfg.steps_per_period + 8);
    let end = stepper.period(s0, 0.0, p.d * p.period(), p.period(), |s| trajectory.push(*s))?;
    let non_reset = end.state.ilm > cfg.event_tol;
    Ok(PeriodOutcome { end: end.state, trajectory, reset_time: end.reset_time, non_reset })
}

/// One converged switching period of the ideal circuit.
#[derive(Debug, Clone)]
pub struct PeriodicWaveform {
    pub params: ConverterParams,
    pub load: LoadModel,
    pub reset_voltage_model: ResetVoltageModel,
    /// Samples over `[0, T]`. The grid is uniform within each topology; each
    /// topology change appears twice, once with each label.
    pub samples: Vec<SimState>,
    pub reset_time: Option<f64>,
    /// Largest relative change of `(il, vo)` over the recorded period.
    pub residual: f64,
    /// Periods integrated in total, including Jacobian probes.
    pub periods_run: usize,
}

/// Signals that can be read off a [`PeriodicWaveform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Signal {
    Il,
    Ilm,
    Vo,
    Is,
    Id1,
    Id2,
    Idd,
    Vs,
    Vd1,
    Vd2,
    Vdd,
    /// Voltage across the output inductor.
    Vl,
    /// Voltage across the magnetizing inductance.
    Vlm,
    ILoad,
    /// Output capacitor current.
    Ic,
    /// Net current drawn from the source: switch current minus the reset current
    /// returned through the reset winding.
    Iin,
}

impl Signal {
    pub const ALL: [Signal; 16] = [
        Signal::Il,
        Signal::Ilm,
        Signal::Vo,
        Signal::Is,
        Signal::Id1,
        Signal::Id2,
        Signal::Idd,
        Signal::Vs,
        Signal::Vd1,
        Signal::Vd2,
        Signal::Vdd,
        Signal::Vl,
        Signal::Vlm,
        Signal::ILoad,
        Signal::Ic,
        Signal::Iin,
    ];

    /// Columns of the waveform CSV after `t,interval`.
    pub const CSV: [Signal; 11] = [
        Signal::Il,
        Signal::Ilm,
        Signal::Vo,
        Signal::Is,
        Signal::Id1,
        Signal::Id2,
        Signal::Idd,
        Signal::Vs,
        Signal::Vd1,
        Signal::Vd2,
        Signal::Vdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Il => "il",
            Signal::Ilm => "ilm",
            Signal::Vo => "vo",
            Signal::Is => "i_s",
            Signal::Id1 => "i_d1",
            Signal::Id2 => "i_d2",
            Signal::Idd => "i_dd",
            Signal::Vs => "v_s",
            Signal::Vd1 => "v_d1",
            Signal::Vd2 => "v_d2",
            Signal::Vdd => "v_dd",
            Signal::Vl => "v_l",
            Signal::Vlm => "v_lm",
            Signal::ILoad => "i_load",
            Signal::Ic => "i_c",
            Signal::Iin => "i_in",
        }
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Signal::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::UnknownSignal(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub avg: f64,
    pub rms: f64,
    pub peak: f64,
    pub peak_to_peak: f64,
}

impl PeriodicWaveform {
    pub fn period(&self) -> f64 {
        self.params.period()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn value(&self, signal: Signal, s: &SimState) -> f64 {
        let p = &self.params;
        let vi = p.vi;
        let v_reset = self.reset_voltage_model.reset_voltage(vi, p.nd);
        use Interval::*;
        match (signal, s.interval) {
            (Signal::Il, _) => s.il,
            (Signal::Ilm, _) => s.ilm,
            (Signal::Vo, _) => s.vo,
            (Signal::Is, Ton) => (1.0 + p.n) * s.il + s.ilm,
            (Signal::Is, _) => 0.0,
            (Signal::Id1, Ton) => s.il,
            (Signal::Id1, _) => 0.0,
            (Signal::Id2, Ton) => 0.0,
            (Signal::Id2, _) => s.il,
            (Signal::Idd, Toff1) => s.ilm / p.nd,
            (Signal::Idd, _) => 0.0,
            (Signal::Vs, Ton) => 0.0,
            (Signal::Vs, Toff1) => vi * (1.0 + p.nd) / p.nd,
            (Signal::Vs, Toff2) => vi,
            (Signal::Vd1, Ton) => 0.0,
            (Signal::Vd1, Toff1) => vi * (1.0 + p.n) / p.nd,
            (Signal::Vd1, Toff2) => s.vo,
            (Signal::Vd2, Ton) => vi * (1.0 + p.n),
            (Signal::Vd2, _) => 0.0,
            (Signal::Vdd, Ton) => vi * (1.0 + p.nd),
            (Signal::Vdd, Toff1) => 0.0,
            (Signal::Vdd, Toff2) => vi,
            (Signal::Vl, Ton) => (1.0 + p.n) * vi - s.vo,
            (Signal::Vl, _) => -s.vo,
            (Signal::Vlm, Ton) => vi,
            (Signal::Vlm, Toff1) => -v_reset,
            (Signal::Vlm, Toff2) => 0.0,
            (Signal::ILoad, _) => self.load.current(s.vo),
            (Signal::Ic, _) => s.il - self.load.current(s.vo),
            (Signal::Iin, Ton) => (1.0 + p.n) * s.il + s.ilm,
            (Signal::Iin, Toff1) => -s.ilm * v_reset / vi,
            (Signal::Iin, Toff2) => 0.0,
        }
    }

    pub fn signal(&self, signal: Signal) -> Vec<f64> {
        self.samples.iter().map(|s| self.value(signal, s)).collect()
    }

    /// Trapezoid-rule mean of `f(sample)` over the period.
    pub fn mean_of(&self, f: impl Fn(&SimState) -> f64) -> f64 {
        let integral: f64 = self
            .samples
            .windows(2)
            .map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t))
            .sum();
        integral / self.period()
    }

    pub fn metrics(&self, signal: Signal) -> Metrics {
        let avg = self.mean_of(|s| self.value(signal, s));
        let ms = self.mean_of(|s| self.value(signal, s).powi(2));
        let values = self.signal(signal);
        let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        Metrics { avg, rms: ms.sqrt(), peak, peak_to_peak: peak - min }
    }

    /// Writes `t,interval,il,ilm,vo,i_s,i_d1,i_d2,i_dd,v_s,v_d1,v_d2,v_dd`, one row per sample.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let header: Vec<&str> = ["t", "interval"].into_iter().chain(Signal::CSV.iter().map(|s| s.name())).collect();
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            write!(w, "{},{}", s.t, s.interval)?;
            for sig in Signal::CSV {
                write!(w, ",{}", self.value(sig, s))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Average, rms, peak and peak-to-peak of a named signal.
pub fn waveform_metrics(w: &PeriodicWaveform, signal: &str) -> Result<Metrics> {
    Ok(w.metrics(signal.parse()?))
}

/// Reset duty measured from the time of the reset event.
pub fn measured_reset_duty(w: &PeriodicWaveform) -> Result<f64> {
    let t_on = w.params.d * w.period();
    match w.reset_time {
        Some(t) => Ok((t - t_on) * w.params.fsw),
        None => Err(Error::NonReset { ilm: w.samples.last().map_or(f64::NAN, |s| s.ilm) }),
    }
}

/// Splits the output power into the part carried directly from the input
/// during the on time (`vi·il`) and the remainder, which passes the core.
pub fn measure_power_split(w: &PeriodicWaveform, p: &ConverterParams) -> PowerSplit {
    let direct = w.mean_of(|s| if s.interval == Interval::Ton { p.vi * s.il } else { 0.0 });
    let p_out = w.mean_of(|s| s.vo * w.load.current(s.vo));
    let not_mag = direct / p_out;
    PowerSplit { not_mag, mag: 1.0 - not_mag }
}

/// Finds the periodic steady state and returns one sampled period.
pub fn find_periodic_steady_state(p: &ConverterParams, load: &LoadModel, cfg: &SimConfig) -> Result<PeriodicWaveform> {
    let mut violations = validate_params(p, load);
    violations.extend(cfg.validate());
    if !violations.is_empty() {
        return Err(Error::InvalidParams(violations));
    }

    let exc = ConstantInput(p.vi);
    let stepper = Stepper { p, load, cfg, exc: &exc, dcm_hint: "" };
    let period = p.period();
    let t_on = p.d * period;
    let periods_run = std::cell::Cell::new(0usize);

    // Period map on (il, vo); the magnetizing current starts every period at zero.
    let map = |x: [f64; 2]| -> Result<[f64; 2]> {
        periods_run.set(periods_run.get() + 1);
        let s = SimState { il: x[0], ilm: 0.0, vo: x[1], t: 0.0, interval: Interval::Ton };
        let end = stepper.period(&s, 0.0, t_on, period, |_| {})?;
        if end.state.ilm > cfg.event_tol {
            return Err(Error::NonReset { ilm: end.state.ilm });
        }
        Ok([end.state.il, end.state.vo])
    };

    // Warm start at the ideal valley current and output voltage.
    let vo0 = p.vo();
    let io0 = load.current(vo0);
    let dil = (1.0 + p.n) * p.vi * p.d * (1.0 - p.d) / (p.l * p.fsw);
    let mut x = [(io0 - dil / 2.0).max(0.0), vo0];
    let scale = [io0.abs().max(dil).max(1e-12), vo0.abs().max(1e-12)];
    let residual = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).abs() / scale[0]).max((a[1] - b[1]).abs() / scale[1]);

    let budget = cfg.period_budget(p, load);
    let mut converged = false;
    let mut last_residual = f64::INFINITY;

    if cfg.method == SteadyStateMethod::Shooting {
        for _ in 0..8 {
            let fx = map(x)?;
            last_residual = residual(fx, x);
            if last_residual < cfg.periodicity_tol {
                converged = true;
                break;
            }
            // Finite-difference Jacobian of the period map.
            let mut jac = [[0.0; 2]; 2];
            for j in 0..2 {
                let h = 1e-4 * scale[j];
                let mut xp = x;
                xp[j] += h;
                let fp = map(xp)?;
                for i in 0..2 {
                    jac[i][j] = (fp[i] - fx[i]) / h;
                }
            }
            // Solve (J - I)·dx = x - F(x).
            let a = [[jac[0][0] - 1.0, jac[0][1]], [jac[1][0], jac[1][1] - 1.0]];
            let r = [x[0] - fx[0], x[1] - fx[1]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 || !det.is_finite() {
                break;
            }
            x[0] += (r[0] * a[1][1] - a[0][1] * r[1]) / det;
            x[1] += (a[0][0] * r[1] - a[1][0] * r[0]) / det;
        }
    }

    if !converged {
        let start = periods_run.get();
        while periods_run.get() - start < budget {
            let fx = map(x)?;
            last_residual = residual(fx, x);
            x = fx;
            if last_residual < cfg.periodicity_tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { periods: periods_run.get(), residual: last_residual });
    }

    let mut samples = Vec::with_capacity(cfg.steps_per_period + 8);
    let s0 = SimState { il: x[0], ilm: 0.0, vo: x[1], t: 0.0, interval: Interval::Ton };
    let end = stepper.period(&s0, 0.0, t_on, period, |s| samples.push(*s))?;
    if end.state.ilm > cfg.event_tol {
        return Err(Error::NonReset { ilm: end.state.ilm });
    }
    Ok(PeriodicWaveform {
        params: *p,
        load: *load,
        reset_voltage_model: cfg.reset_voltage_model,
        samples,
        reset_time: end.reset_time,
        residual: residual([end.state.il, end.state.vo], x),
        periods_run: periods_run.get() + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn table4() -> (ConverterParams, LoadModel) {
        (ConverterParams::reference_design(), LoadModel::Resistive { rl: 7.255 })
    }

    #[test]
    fn derivative_examples() {
        let (p, load) = table4();
        let cfg = SimConfig::default();
        let s = SimState { il: 5.0, ilm: 0.5, vo: 40.404, t: 0.0, interval: Interval::Ton };
        let (dil, dilm, _) = interval_derivatives(&s, &p, &load, &cfg);
        assert!(rel(dil, (58.6 - 40.404) / 68e-6) < 1e-12);
        assert!(rel(dil, 2.676e5) < 1e-3);
        assert!(rel(dilm, 1.172e5) < 1e-12);

        let s1 = SimState { interval: Interval::Toff1, ..s };
        let (dil, dilm, _) = interval_derivatives(&s1, &p, &load, &cfg);
        assert!(rel(dil, -40.404 / 68e-6) < 1e-12);
        assert!(rel(dilm, -3.516e5) < 1e-12);

        let s2 = SimState { interval: Interval::Toff2, ..s };
        let (_, dilm, dvo) = interval_derivatives(&s2, &p, &load, &cfg);
        assert_eq!(dilm, 0.0);
        assert!(rel(dvo, (5.0 - 40.404 / 7.255) / 112e-6) < 1e-12);
    }

    #[test]
    fn sink_load_derivative() {
        let (p, _) = table4();
        let load = LoadModel::CurrentSink { io: 2.0 };
        let s = SimState { il: 5.0, ilm: 0.0, vo: 40.0, t: 0.0, interval: Interval::Toff2 };
        let (_, _, dvo) = interval_derivatives(&s, &p, &load, &SimConfig::default());
        assert!(rel(dvo, 3.0 / 112e-6) < 1e-12);
    }

    #[test]
    fn reset_happens_before_period_end() {
        let (p, load) = table4();
        let s0 = SimState { il: 3.7, ilm: 0.0, vo: 40.4, t: 0.0, interval: Interval::Ton };
        let out = advance_period(&s0, &p, &load, &SimConfig::default()).unwrap();
        assert!(!out.non_reset);
        let t_reset = out.reset_time.unwrap();
        assert!(t_reset < p.period());
        assert!(t_reset > p.d * p.period());
        assert_eq!(out.end.ilm, 0.0);
        assert!(out.trajectory.iter().all(|s| s.ilm >= -1e-6));
    }

    #[test]
    fn long_duty_does_not_reset() {
        let (p, load) = table4();
        let p = p.with_d(0.8);
        let s0 = SimState { il: 5.0, ilm: 0.0, vo: 46.9, t: 0.0, interval: Interval::Ton };
        let out = advance_period(&s0, &p, &load, &SimConfig::default()).unwrap();
        assert!(out.non_reset);
        assert!(out.reset_time.is_none());
        match find_periodic_steady_state(&p, &load, &SimConfig::default()) {
            Err(Error::NonReset { .. }) => {}
            other => panic!("expected non-reset, got {other:?}"),
        }
    }

    #[test]
    fn zero_duty_decays_into_dcm() {
        let (p, load) = table4();
        let p = p.with_d(0.0);
        let s0 = SimState { il: 1.0, ilm: 0.0, vo: 5.0, t: 0.0, interval: Interval::Ton };
        let out = advance_period(&s0, &p, &load, &SimConfig::default());
        assert!(matches!(out, Err(Error::Dcm { .. })));
    }

    #[test]
    fn zero_duty_trajectory_has_no_on_phase() {
        let (p, load) = table4();
        let p = p.with_d(0.0);
        // Enough current to stay positive for one period.
        let s0 = SimState { il: 10.0, ilm: 0.0, vo: 5.0, t: 0.0, interval: Interval::Ton };
        let out = advance_period(&s0, &p, &load, &SimConfig::default()).unwrap();
        assert!(out.trajectory.iter().all(|s| s.interval == Interval::Toff2));
        assert!(out.end.il < 10.0);
    }

    #[test]
    fn table4_steady_state() {
        let (p, load) = table4();
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        let vo = w.metrics(Signal::Vo).avg;
        assert!(rel(vo, 40.404) < 5e-3, "vo = {vo}");
        assert!(w.residual < 1e-6);
        let first = w.samples.first().unwrap();
        let last = w.samples.last().unwrap();
        assert!(rel(last.il, first.il) < 1e-6 && rel(last.vo, first.vo) < 1e-6);
    }

    #[test]
    fn cycle_iteration_agrees_with_shooting() {
        let (p, load) = table4();
        let shoot = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        let cfg = SimConfig { method: SteadyStateMethod::CycleIteration, steps_per_period: 400, ..SimConfig::default() };
        let cycle = find_periodic_steady_state(&p, &load, &cfg).unwrap();
        assert!(rel(cycle.metrics(Signal::Vo).avg, shoot.metrics(Signal::Vo).avg) < 1e-4);
    }

    #[test]
    fn sink_load_matches_resistive() {
        let (p, load) = table4();
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        let io = w.metrics(Signal::ILoad).avg;
        let sink = LoadModel::CurrentSink { io };
        let ws = find_periodic_steady_state(&p, &sink, &SimConfig::default()).unwrap();
        assert!(rel(ws.metrics(Signal::Vo).avg, w.metrics(Signal::Vo).avg) < 5e-3);
    }

    #[test]
    fn derived_currents_follow_intervals() {
        let (p, load) = table4();
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        for s in &w.samples {
            let is = w.value(Signal::Is, s);
            let id1 = w.value(Signal::Id1, s);
            let id2 = w.value(Signal::Id2, s);
            let idd = w.value(Signal::Idd, s);
            match s.interval {
                Interval::Ton => {
                    assert_eq!(id1, s.il);
                    assert_eq!(id2, 0.0);
                    assert_eq!(idd, 0.0);
                    assert_eq!(is, 2.0 * s.il + s.ilm);
                }
                Interval::Toff1 => {
                    assert_eq!((is, id1, id2), (0.0, 0.0, s.il));
                    assert_eq!(idd, s.ilm / p.nd);
                }
                Interval::Toff2 => {
                    assert_eq!((is, id1, id2, idd), (0.0, 0.0, s.il, 0.0));
                }
            }
        }
        // Mean reset-diode current is the integral of ilm/nd over TOFF1.
        let m = waveform_metrics(&w, "i_dd").unwrap();
        let direct = w.mean_of(|s| if s.interval == Interval::Toff1 { s.ilm / p.nd } else { 0.0 });
        assert!(m.avg >= 0.0);
        assert_eq!(m.avg, direct);
    }

    #[test]
    fn unknown_signal() {
        let (p, load) = table4();
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        assert!(matches!(waveform_metrics(&w, "i_x"), Err(Error::UnknownSignal(_))));
    }

    #[test]
    fn reset_duty_follows_reset_voltage_model() {
        let (p, load) = table4();
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        assert!(rel(measured_reset_duty(&w).unwrap(), p.nd * p.d) < 1e-2);
        let cfg = SimConfig { reset_voltage_model: ResetVoltageModel::InputPlusReflected, ..SimConfig::default() };
        let w = find_periodic_steady_state(&p, &load, &cfg).unwrap();
        assert!(rel(measured_reset_duty(&w).unwrap(), p.nd * p.d / (1.0 + p.nd)) < 1e-2);
    }

    #[test]
    fn reset_duty_vanishes_with_duty() {
        let (p, _) = table4();
        let p = p.with_d(0.01);
        let load = LoadModel::Resistive { rl: 0.1 };
        let w = find_periodic_steady_state(&p, &load, &SimConfig::default()).unwrap();
        assert!(measured_reset_duty(&w).unwrap() < 0.004);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let (p, load) = table4();
        let cfg = SimConfig { steps_per_period: 10, ..SimConfig::default() };
        assert!(matches!(find_periodic_steady_state(&p, &load, &cfg), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let (p, load) = table4();
        let w = find_periodic_steady_state(&p, &load, &SimConfig { steps_per_period: 100, ..SimConfig::default() }).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,interval,il,ilm,vo,i_s,i_d1,i_d2,i_dd,v_s,v_d1,v_d2,v_dd");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 13);
        assert_eq!(first[1], "TON");
        assert_eq!(text.lines().count(), w.samples.len() + 1);
    }
}
