use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("{name} is outside its domain: {detail}")]
    Domain { name: &'static str, detail: String },

    #[error("unreachable output voltage: required duty {required:.4} >= 1")]
    UnreachableOutput { required: f64 },

    #[error("required duty {required:.4} exceeds the maximum duty {max:.4}")]
    DutyAboveMax { required: f64, max: f64 },

    #[error("reset infeasible: nd = {nd:.4} > (1 - d)/d = {limit:.4} at d = {d:.4}")]
    ResetInfeasible { nd: f64, d: f64, limit: f64 },

    #[error("operating point outside the design specification: {0}")]
    OutOfSpec(String),

    #[error("discontinuous conduction: inductor current crossed zero at t = {t:.6e} s{hint}")]
    Dcm { t: f64, hint: &'static str },

    #[error("magnetizing current not reset by the end of the period (ilm = {ilm:.6e} A)")]
    NonReset { ilm: f64 },

    #[error("no periodic steady state after {periods} periods (residual {residual:.3e})")]
    NonConvergence { periods: usize, residual: f64 },

    #[error("frequency response at {f:.4} Hz did not settle after {windows} windows")]
    NotSettled { f: f64, windows: usize },

    #[error("unknown signal '{0}'")]
    UnknownSignal(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Dcm { .. }
                | Error::NonReset { .. }
                | Error::NonConvergence { .. }
                | Error::NotSettled { .. }
        )
    }

    pub(crate) fn domain(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { name, detail: detail.into() }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
