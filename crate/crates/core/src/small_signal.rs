//! Averaged small-signal transfer functions and their numeric counterparts.
//!
//! The averaged model is a second-order LC low-pass driven by
//! `(1 + n)·vi·d̂ + (1 + n)·d·v̂i`, so all three transfer functions share the
//! denominator `s² + s/(rl·co) + ω₀²`.
//!
//! The numeric path perturbs the switched simulator with a small sinusoid and
//! correlates the output voltage against it over a window that holds an
//! integer number of both switching and perturbation periods.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConverterParams, LoadModel};
use crate::switched_sim::{find_periodic_steady_state, Excitation, SimConfig, SimState, Stepper, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferKind {
    /// Output voltage per unit duty, V.
    Gvd,
    /// Audiosusceptibility, V/V.
    Gvv,
    /// Output impedance, Ω.
    Zo,
}

impl TransferKind {
    pub fn name(self) -> &'static str {
        match self {
            TransferKind::Gvd => "gvd",
            TransferKind::Gvv => "gvv",
            TransferKind::Zo => "zo",
        }
    }
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransferKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gvd" => Ok(TransferKind::Gvd),
            "gvv" => Ok(TransferKind::Gvv),
            "zo" => Ok(TransferKind::Zo),
            _ => Err(Error::domain("kind", format!("'{s}' is not one of gvd, gvv, zo"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analytic,
    Numeric,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Numeric => "numeric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub f: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub kind: TransferKind,
    pub method: Method,
    /// Strictly increasing in frequency.
    pub points: Vec<ResponsePoint>,
}

impl FrequencyResponse {
    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }

    /// `(f, magnitude in dB, unwrapped phase in degrees)` per point.
    ///
    /// The phase is unwrapped along the sweep and then shifted by a whole
    /// number of turns so that the first point lies in (-180, 180]. For
    /// `Gvd` and `Gvv` this keeps the whole curve in (-360, 0].
    pub fn bode(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut prev: Option<f64> = None;
        for pt in &self.points {
            let raw = pt.gain.arg().to_degrees();
            let phase = match prev {
                None => raw,
                Some(q) => raw + 360.0 * ((q - raw) / 360.0).round(),
            };
            prev = Some(phase);
            out.push((pt.f, 20.0 * pt.gain.norm().log10(), phase));
        }
        out
    }
}

/// Writes `f_hz,mag_db,phase_deg,kind,method` rows for each response in turn.
pub fn write_bode_csv(responses: &[FrequencyResponse], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "f_hz,mag_db,phase_deg,kind,method")?;
    for r in responses {
        for (f, mag, phase) in r.bode() {
            writeln!(w, "{},{},{},{},{}", sig9(f), sig9(mag), sig9(phase), r.kind, r.method)?;
        }
    }
    Ok(())
}

/// Rounds to nine significant digits so that printed values are stable.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// `n` logarithmically spaced frequencies from `fmin` to `fmax` inclusive.
pub fn log_space(fmin: f64, fmax: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![fmin],
        _ => {
            let (a, b) = (fmin.ln(), fmax.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignalBlocks {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    /// Output capacitor in parallel with the load, Ω.
    pub zp: Complex64,
}

impl SmallSignalBlocks {
    pub fn gvd(&self) -> Complex64 {
        self.a * self.zp / (1.0 + self.b * self.zp)
    }

    pub fn gvv(&self) -> Complex64 {
        self.c * self.zp / (1.0 + self.b * self.zp)
    }

    pub fn zo(&self) -> Complex64 {
        self.zp / (1.0 + self.b * self.zp)
    }
}

fn s_at(f: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * f)
}

/// Block gains of the averaged model at `f`, with `Z_L = sL`.
pub fn blocks_at(p: &ConverterParams, rl: f64, f: f64) -> Result<SmallSignalBlocks> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain("f", format!("{f} must be positive")));
    }
    let s = s_at(f);
    let zl = s * p.l;
    Ok(SmallSignalBlocks {
        a: (1.0 + p.n) * p.vi / zl,
        b: 1.0 / zl,
        c: (1.0 + p.n) * p.d / zl,
        zp: rl / (1.0 + s * p.co * rl),
    })
}

fn denominator(p: &ConverterParams, rl: f64, s: Complex64) -> Complex64 {
    let w0 = p.omega0();
    s * s + s / (rl * p.co) + w0 * w0
}

/// Duty-to-output transfer function.
pub fn gvd(p: &ConverterParams, rl: f64, f: f64) -> Complex64 {
    let w0 = p.omega0();
    (1.0 + p.n) * p.vi * w0 * w0 / denominator(p, rl, s_at(f))
}

/// Input-to-output transfer function.
pub fn gvv(p: &ConverterParams, rl: f64, f: f64) -> Complex64 {
    let w0 = p.omega0();
    (1.0 + p.n) * p.d * w0 * w0 / denominator(p, rl, s_at(f))
}

/// Output impedance, Ω.
pub fn zo(p: &ConverterParams, rl: f64, f: f64) -> Complex64 {
    let s = s_at(f);
    s / p.co / denominator(p, rl, s)
}

pub fn analytic(p: &ConverterParams, rl: f64, kind: TransferKind, f: f64) -> Complex64 {
    match kind {
        TransferKind::Gvd => gvd(p, rl, f),
        TransferKind::Gvv => gvv(p, rl, f),
        TransferKind::Zo => zo(p, rl, f),
    }
}

fn check_frequencies(f_list: &[f64], upper: f64) -> Result<()> {
    for (i, &f) in f_list.iter().enumerate() {
        if !(f > 0.0 && f.is_finite() && f < upper) {
            return Err(Error::domain("f", format!("{f} Hz must be in (0, {upper}) Hz")));
        }
        if i > 0 && f <= f_list[i - 1] {
            return Err(Error::domain("f", "frequencies must be strictly increasing"));
        }
    }
    Ok(())
}

pub fn analytic_response(p: &ConverterParams, rl: f64, kind: TransferKind, f_list: &[f64]) -> Result<FrequencyResponse> {
    check_frequencies(f_list, f64::INFINITY)?;
    Ok(FrequencyResponse {
        kind,
        method: Method::Analytic,
        points: f_list.iter().map(|&f| ResponsePoint { f, gain: analytic(p, rl, kind, f) }).collect(),
    })
}

/// Perturbation cycles per correlation window.
const WINDOW_CYCLES: usize = 20;
/// Consecutive windows must agree to this relative tolerance.
const SETTLE_TOL: f64 = 1e-3;
const MAX_WINDOWS: usize = 60;

/// Raised-cosine ramp from 0 to 1 over `[0, t_ramp]`.
fn envelope(t: f64, t_ramp: f64) -> f64 {
    if t >= t_ramp {
        1.0
    } else if t <= 0.0 {
        0.0
    } else {
        0.5 * (1.0 - (PI * t / t_ramp).cos())
    }
}

struct Injection {
    vi: f64,
    kind: TransferKind,
    /// Amplitude of the perturbed quantity (duty, volts or amperes).
    amplitude: f64,
    omega: f64,
    t_ramp: f64,
}

impl Injection {
    fn signal(&self, t: f64) -> f64 {
        self.amplitude * envelope(t, self.t_ramp) * (self.omega * t).sin()
    }
}

impl Excitation for Injection {
    #[inline]
    fn vi(&self, t: f64) -> f64 {
        match self.kind {
            TransferKind::Gvv => self.vi + self.signal(t),
            _ => self.vi,
        }
    }

    #[inline]
    fn injected_current(&self, t: f64) -> f64 {
        match self.kind {
            TransferKind::Zo => self.signal(t),
            _ => 0.0,
        }
    }
}

/// Extracts the small-signal response of the switched model by sinusoidal
/// injection, one point per requested frequency. Each frequency is snapped
/// so that the correlation window holds exactly 20 perturbation cycles and a
/// whole number of switching periods; the returned points carry the snapped
/// frequencies.
///
/// `Gvd` modulates the gate width with the perturbation sampled at the
/// trailing edge; `Gvv` modulates the input voltage; `Zo` injects a current
/// into the output node.
pub fn numeric_frequency_response(
    p: &ConverterParams,
    load: &LoadModel,
    cfg: &SimConfig,
    kind: TransferKind,
    f_list: &[f64],
    amplitude_fraction: f64,
) -> Result<FrequencyResponse> {
    check_frequencies(f_list, p.fsw / 2.0)?;
    if !(amplitude_fraction > 0.0 && amplitude_fraction < 1.0) {
        return Err(Error::domain("amplitude_fraction", format!("{amplitude_fraction} must be in (0, 1)")));
    }
    let ss = find_periodic_steady_state(p, load, cfg)?;
    let start = ss.samples[0];
    let io = ss.metrics(Signal::ILoad).avg;

    let points = f_list
        .par_iter()
        .map(|&f| numeric_point(p, load, cfg, kind, f, amplitude_fraction, &start, io))
        .collect::<Result<Vec<_>>>()?;
    if points.windows(2).any(|w| w[1].f <= w[0].f) {
        return Err(Error::domain("f", "requested frequencies are too close to resolve separately"));
    }
    Ok(FrequencyResponse { kind, method: Method::Numeric, points })
}

#[allow(clippy::too_many_arguments)]
fn numeric_point(
    p: &ConverterParams,
    load: &LoadModel,
    cfg: &SimConfig,
    kind: TransferKind,
    f_req: f64,
    amplitude_fraction: f64,
    start: &SimState,
    io: f64,
) -> Result<ResponsePoint> {
    let period = p.period();
    let periods_per_window = ((WINDOW_CYCLES as f64 * p.fsw / f_req).round() as usize).max(1);
    let f = WINDOW_CYCLES as f64 * p.fsw / periods_per_window as f64;
    let omega = 2.0 * PI * f;
    let window = periods_per_window as f64 * period;

    // Ramp the perturbation in over several output-filter time constants, or
    // many resonance cycles when the load provides no damping.
    let settle = match load.resistance() {
        Some(rl) => 6.0 * 2.0 * rl * p.co,
        None => 200.0 * 2.0 * PI / p.omega0(),
    };
    let settle_windows = ((settle / window).ceil() as usize).max(1);
    let t_ramp = settle_windows as f64 * window;

    let amplitude = amplitude_fraction
        * match kind {
            TransferKind::Gvd => p.d,
            TransferKind::Gvv => p.vi,
            TransferKind::Zo => io,
        };
    let exc = Injection { vi: p.vi, kind, amplitude, omega, t_ramp };
    let stepper = Stepper { p, load, cfg, exc: &exc, dcm_hint: "; reduce amplitude_fraction" };

    let mut state = *start;
    let mut period_index = 0usize;
    let mut run_window = |measure: bool| -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut prev: Option<(f64, Complex64)> = None;
        for _ in 0..periods_per_window {
            let t0 = period_index as f64 * period;
            let t_on = match kind {
                TransferKind::Gvd => trailing_edge(p.d, period, t0, &exc),
                _ => p.d * period,
            };
            let end = stepper.period(&state, t0, t_on, period, |s| {
                if measure {
                    let t = t0 + s.t;
                    let v = s.vo * Complex64::from_polar(1.0, -omega * t);
                    if let Some((tp, vp)) = prev {
                        acc += 0.5 * (v + vp) * (t - tp);
                    }
                    prev = Some((t, v));
                }
            })?;
            if end.state.ilm > cfg.event_tol {
                return Err(Error::NonReset { ilm: end.state.ilm });
            }
            state = end.state;
            period_index += 1;
        }
        Ok(acc * 2.0 / window)
    };

    for _ in 0..settle_windows {
        run_window(false)?;
    }
    // Phasor of amplitude·sin(ωt) is -j·amplitude.
    let reference = Complex64::new(0.0, -amplitude);
    let mut last = run_window(true)? / reference;
    for _ in 0..MAX_WINDOWS {
        let next = run_window(true)? / reference;
        if (next - last).norm() <= SETTLE_TOL * next.norm() {
            return Ok(ResponsePoint { f, gain: next });
        }
        last = next;
    }
    Err(Error::NotSettled { f, windows: settle_windows + MAX_WINDOWS + 1 })
}

/// Natural sampling on the trailing edge: the on time `τ` satisfies
/// `τ/T = D + d̂(t0 + τ)`.
fn trailing_edge(d: f64, period: f64, t0: f64, exc: &Injection) -> f64 {
    let mut tau = d * period;
    for _ in 0..20 {
        let next = (d + exc.signal(t0 + tau)) * period;
        if (next - tau).abs() < 1e-15 * period {
            return next;
        }
        tau = next;
    }
    tau
}
