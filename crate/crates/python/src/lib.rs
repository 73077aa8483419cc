//! Python bindings. Reports come back as plain dicts and lists; transfer
//! functions return Python `complex` values.

#[pyo3::pymodule]
mod bbmsf {
    use bbmsf_core::dmppt::{evaluate_scenario as eval_core, ConverterLimits, StringEntry, StringScenario};
    use bbmsf_core::model::validate_params;
    use bbmsf_core::small_signal::{self, TransferKind};
    use bbmsf_core::steady_state::device_stresses;
    use bbmsf_core::switched_sim::{find_periodic_steady_state, ResetVoltageModel, Signal};
    use bbmsf_core::{ConverterParams, Error, LoadModel, ResetDutyModel, SimConfig};
    use num_complex::Complex64;
    use pyo3::create_exception;
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use serde::Serialize;

    create_exception!(bbmsf, ConfigError, PyValueError, "Invalid parameters or configuration.");
    create_exception!(bbmsf, NumericalError, PyRuntimeError, "Simulation failed to produce a valid steady state.");

    #[pymodule_init]
    fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add("ConfigError", m.py().get_type::<ConfigError>())?;
        m.add("NumericalError", m.py().get_type::<NumericalError>())?;
        Ok(())
    }

    fn to_py_err(e: Error) -> PyErr {
        if e.is_numerical() {
            NumericalError::new_err(e.to_string())
        } else {
            ConfigError::new_err(e.to_string())
        }
    }

    fn to_py_obj<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        py.import("json")?.call_method1("loads", (text,))
    }

    fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
        s.parse().map_err(|_| ConfigError::new_err(format!("unknown {what}: {s:?}")))
    }

    fn reset_duty_model(s: &str) -> PyResult<ResetDutyModel> {
        match s {
            "published" => Ok(ResetDutyModel::Published),
            "volt_second" => Ok(ResetDutyModel::VoltSecond),
            _ => Err(ConfigError::new_err(format!("unknown reset duty model: {s:?}"))),
        }
    }

    fn reset_voltage_model(s: &str) -> PyResult<ResetVoltageModel> {
        match s {
            "reflected_input" => Ok(ResetVoltageModel::ReflectedInput),
            "input_plus_reflected" => Ok(ResetVoltageModel::InputPlusReflected),
            _ => Err(ConfigError::new_err(format!("unknown reset voltage model: {s:?}"))),
        }
    }

    fn load_model(rl: Option<f64>, io: Option<f64>) -> PyResult<LoadModel> {
        match (rl, io) {
            (Some(rl), None) => Ok(LoadModel::Resistive { rl }),
            (None, Some(io)) => Ok(LoadModel::CurrentSink { io }),
            _ => Err(ConfigError::new_err("give exactly one of rl or io")),
        }
    }

    /// Converter parameters in SI units.
    #[pyclass(name = "ConverterParams", from_py_object)]
    #[derive(Clone)]
    struct PyParams {
        inner: ConverterParams,
    }

    #[pymethods]
    impl PyParams {
        #[new]
        #[pyo3(signature = (vi, n, nd, l, lm, co, fsw, d))]
        #[allow(clippy::too_many_arguments)]
        fn new(vi: f64, n: f64, nd: f64, l: f64, lm: f64, co: f64, fsw: f64, d: f64) -> Self {
            PyParams { inner: ConverterParams { vi, n, nd, l, lm, co, fsw, d } }
        }

        /// The 225 W, 50 kHz prototype.
        #[staticmethod]
        fn reference_design() -> Self {
            PyParams { inner: ConverterParams::reference_design() }
        }

        #[getter]
        fn vi(&self) -> f64 {
            self.inner.vi
        }
        #[getter]
        fn n(&self) -> f64 {
            self.inner.n
        }
        #[getter]
        fn nd(&self) -> f64 {
            self.inner.nd
        }
        #[getter]
        fn l(&self) -> f64 {
            self.inner.l
        }
        #[getter]
        fn lm(&self) -> f64 {
            self.inner.lm
        }
        #[getter]
        fn co(&self) -> f64 {
            self.inner.co
        }
        #[getter]
        fn fsw(&self) -> f64 {
            self.inner.fsw
        }
        #[getter]
        fn d(&self) -> f64 {
            self.inner.d
        }

        fn with_d(&self, d: f64) -> Self {
            PyParams { inner: self.inner.with_d(d) }
        }

        fn with_vi(&self, vi: f64) -> Self {
            PyParams { inner: self.inner.with_vi(vi) }
        }

        /// Ideal output voltage.
        fn vo(&self) -> f64 {
            self.inner.vo()
        }

        /// All violated invariants, as messages. Empty when valid.
        #[pyo3(signature = (rl=None, io=None))]
        fn validate(&self, rl: Option<f64>, io: Option<f64>) -> PyResult<Vec<String>> {
            let load = load_model(rl, io)?;
            Ok(validate_params(&self.inner, &load).into_iter().map(|v| v.message).collect())
        }

        fn __repr__(&self) -> String {
            let p = &self.inner;
            format!(
                "ConverterParams(vi={}, n={}, nd={}, l={}, lm={}, co={}, fsw={}, d={})",
                p.vi, p.n, p.nd, p.l, p.lm, p.co, p.fsw, p.d
            )
        }
    }

    /// Closed-form steady-state report as a dict.
    #[pyfunction]
    #[pyo3(signature = (params, po, model="published"))]
    fn steady_state<'py>(py: Python<'py>, params: &PyParams, po: f64, model: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py_obj(py, &device_stresses(&params.inner, po, reset_duty_model(model)?))
    }

    /// One period of the simulated periodic steady state: a dict of sample
    /// lists keyed by signal name, plus `t` and `interval`.
    #[pyfunction]
    #[pyo3(signature = (params, rl=None, io=None, steps_per_period=2000, reset_model="reflected_input"))]
    fn simulate<'py>(
        py: Python<'py>,
        params: &PyParams,
        rl: Option<f64>,
        io: Option<f64>,
        steps_per_period: usize,
        reset_model: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let load = load_model(rl, io)?;
        let cfg = SimConfig {
            steps_per_period,
            reset_voltage_model: reset_voltage_model(reset_model)?,
            ..SimConfig::default()
        };
        let w = py.detach(|| find_periodic_steady_state(&params.inner, &load, &cfg)).map_err(to_py_err)?;
        let mut out = serde_json::Map::new();
        out.insert("t".into(), w.times().into());
        out.insert("interval".into(), w.samples.iter().map(|s| s.interval.label()).collect::<Vec<_>>().into());
        for sig in Signal::ALL {
            out.insert(sig.name().into(), w.signal(sig).into());
        }
        out.insert("reset_time".into(), w.reset_time.into());
        out.insert("periods_run".into(), w.periods_run.into());
        to_py_obj(py, &out)
    }

    fn transfer(kind: &str, params: &PyParams, rl: f64, f: f64) -> PyResult<Complex64> {
        let kind: TransferKind = parse("transfer function", kind)?;
        small_signal::blocks_at(&params.inner, rl, f).map_err(to_py_err)?;
        Ok(small_signal::analytic(&params.inner, rl, kind, f))
    }

    /// Control-to-output transfer function at `f` Hz.
    #[pyfunction]
    fn gvd(params: &PyParams, rl: f64, f: f64) -> PyResult<Complex64> {
        transfer("gvd", params, rl, f)
    }

    /// Input-to-output transfer function at `f` Hz.
    #[pyfunction]
    fn gvv(params: &PyParams, rl: f64, f: f64) -> PyResult<Complex64> {
        transfer("gvv", params, rl, f)
    }

    /// Output impedance at `f` Hz, ohms.
    #[pyfunction]
    fn zo(params: &PyParams, rl: f64, f: f64) -> PyResult<Complex64> {
        transfer("zo", params, rl, f)
    }

    /// Frequency response from the switched simulator, as (f, complex gain) pairs.
    #[pyfunction]
    #[pyo3(signature = (params, rl, kind, frequencies, steps_per_period=200, amplitude=0.01))]
    fn numeric_response(
        py: Python<'_>,
        params: &PyParams,
        rl: f64,
        kind: &str,
        frequencies: Vec<f64>,
        steps_per_period: usize,
        amplitude: f64,
    ) -> PyResult<Vec<(f64, Complex64)>> {
        let kind: TransferKind = parse("transfer function", kind)?;
        let cfg = SimConfig { steps_per_period, ..SimConfig::default() };
        let load = LoadModel::Resistive { rl };
        let r = py
            .detach(|| small_signal::numeric_frequency_response(&params.inner, &load, &cfg, kind, &frequencies, amplitude))
            .map_err(to_py_err)?;
        Ok(r.points.into_iter().map(|p| (p.f, p.gain)).collect())
    }

    /// Evaluates a string of panel converters. `entries` holds
    /// `(label, p_mpp, v_mpp, count)` tuples.
    #[pyfunction]
    #[pyo3(signature = (v_string, entries, n=1.0, nd=1.0/3.0, d_max=0.72))]
    fn evaluate_scenario<'py>(
        py: Python<'py>,
        v_string: f64,
        entries: Vec<(String, f64, f64, f64)>,
        n: f64,
        nd: f64,
        d_max: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let sc = StringScenario {
            v_string,
            entries: entries
                .into_iter()
                .map(|(label, p_mpp, v_mpp, count)| StringEntry { p_mpp, v_mpp, count, label, efficiency: 1.0 })
                .collect(),
            integer_counts: false,
        };
        let r = eval_core(&sc, &ConverterLimits { n, nd, d_max }).map_err(to_py_err)?;
        to_py_obj(py, &r)
    }
}
