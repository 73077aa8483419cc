//! Input files. Every document rejects unknown fields so that a misspelt
//! parameter fails loudly instead of silently taking its default.

use std::fs;
use std::path::{Path, PathBuf};

use bbmsf_core::design::{DesignSpec, OperatingPoint};
use bbmsf_core::dmppt::{ConverterLimits, StringEntry, StringScenario};
use bbmsf_core::model::validate_params;
use bbmsf_core::{ConverterParams, LoadModel, Parasitics, ResetDutyModel, SimConfig, Violation};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

/// Presets compiled into the binary, looked up by file name when the path
/// given on the command line does not exist.
pub const PRESETS: &[(&str, &str)] = &[
    ("table4.json", include_str!("../presets/table4.json")),
    ("e0_point.json", include_str!("../presets/e0_point.json")),
    ("scenario_e0.json", include_str!("../presets/scenario_e0.json")),
    ("scenario_e1.json", include_str!("../presets/scenario_e1.json")),
    ("design_table6.json", include_str!("../presets/design_table6.json")),
];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<PathBuf>,
    pub waveform: Option<PathBuf>,
    pub bode: Option<PathBuf>,
}

/// Converter, load and solver settings for a single operating point.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub converter: ConverterParams,
    pub load: LoadModel,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub parasitics: Option<Parasitics>,
    #[serde(default)]
    pub reset_duty_model: ResetDutyModel,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = validate_params(&self.converter, &self.load);
        v.extend(self.sim.validate());
        if let Some(par) = &self.parasitics {
            v.extend(par.validate());
        }
        v
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub v_string: f64,
    pub entries: Vec<StringEntry>,
    pub n: f64,
    pub nd: f64,
    pub d_max: f64,
    #[serde(default)]
    pub integer_counts: bool,
}

impl ScenarioFile {
    pub fn split(&self) -> (StringScenario, ConverterLimits) {
        (
            StringScenario { v_string: self.v_string, entries: self.entries.clone(), integer_counts: self.integer_counts },
            ConverterLimits { n: self.n, nd: self.nd, d_max: self.d_max },
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub spec: DesignSpec,
    /// Base component values; the duty and input voltage are replaced per point.
    pub converter: ConverterParams,
    #[serde(default)]
    pub parasitics: Option<Parasitics>,
    #[serde(default)]
    pub reset_duty_model: ResetDutyModel,
    pub points: Vec<OperatingPoint>,
    /// Allowed peak-to-peak output ripple for sizing the output capacitor, V.
    #[serde(default)]
    pub output_ripple: Option<f64>,
}

impl DesignFile {
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.spec.validate();
        v.extend(self.converter.validate(&LoadModel::CurrentSink { io: 1.0 }));
        if let Some(par) = &self.parasitics {
            v.extend(par.validate());
        }
        if self.points.is_empty() {
            v.push(Violation::new("points", "at least one operating point is required"));
        }
        for (i, pt) in self.points.iter().enumerate() {
            for (name, x) in [("vi", pt.vi), ("vo", pt.vo), ("po", pt.po)] {
                if !(x > 0.0 && x.is_finite()) {
                    v.push(Violation::new(format!("points[{i}].{name}"), format!("points[{i}].{name} must be positive")));
                }
            }
        }
        if let Some(r) = self.output_ripple {
            if !(r > 0.0) {
                v.push(Violation::new("output_ripple", "output_ripple must be positive"));
            }
        }
        v
    }
}

fn read_source(path: &Path) -> Result<String, CliError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) => {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let bundled = PRESETS.iter().find(|(p, _)| *p == name && path.components().count() == 1);
            match bundled {
                Some((_, text)) => Ok(text.to_string()),
                None => Err(CliError::Config(vec![format!("cannot read {}: {e}", path.display())])),
            }
        }
    }
}

/// Parses a JSON document, reporting the path of the offending field.
pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let where_ = if path == "." { String::new() } else { format!(" at `{path}`") };
        CliError::Config(vec![format!("{origin}{where_}: {}", e.inner())])
    })
}

/// Parses a bundled preset regardless of what is on disk.
pub fn bundled<T: DeserializeOwned>(name: &str) -> Result<T, CliError> {
    let text = PRESETS
        .iter()
        .find(|(p, _)| *p == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Config(vec![format!("no bundled preset named {name}")]))?;
    parse(text, name)
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    parse(&read_source(path)?, &path.display().to_string())
}

pub fn check(violations: Vec<Violation>) -> Result<(), CliError> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(violations.into_iter().map(|v| format!("{}: {}", v.field, v.message)).collect()))
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = load(path)?;
    check(cfg.violations())?;
    Ok(cfg)
}
