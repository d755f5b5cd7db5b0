use crate::error::{config_err, CliResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PulsedGate,
    ContinuousGate,
    RabiStarkSpectrum,
    NqrmRun,
    FockPump,
    BsDistribution,
    BsLoss,
    BsRates,
    NvSpectrum,
    PulseDesign,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::PulsedGate => "pulsed-gate",
            Kind::ContinuousGate => "continuous-gate",
            Kind::RabiStarkSpectrum => "rabi-stark-spectrum",
            Kind::NqrmRun => "nqrm-run",
            Kind::FockPump => "fock-pump",
            Kind::BsDistribution => "bs-distribution",
            Kind::BsLoss => "bs-loss",
            Kind::BsRates => "bs-rates",
            Kind::NvSpectrum => "nv-spectrum",
            Kind::PulseDesign => "pulse-design",
        }
    }
}

/// Acceptance window on one summary value, addressed by a JSON pointer such as
/// `/crossover_atomic` or `/points/1/peak`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub pointer: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub long_running: bool,
    #[serde(default)]
    pub params: Map<String, Value>,
    /// Axis name → values; the run covers the Cartesian product, axes in name order.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub targets: Vec<Target>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl ExperimentConfig {
    pub fn parse(text: &str, format: Format) -> CliResult<Self> {
        let cfg: Self = match format {
            Format::Toml => toml::from_str(text).map_err(|e| config_err(e.to_string()))?,
            Format::Json => serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        };
        Self::parse(&text, format)
    }

    fn validate(&self) -> CliResult<()> {
        for (axis, values) in &self.sweep {
            if values.is_empty() {
                return Err(config_err(format!("sweep axis `{axis}` has no values")));
            }
        }
        for t in &self.targets {
            if !t.pointer.starts_with('/') {
                return Err(config_err(format!("target pointer `{}` must start with '/'", t.pointer)));
            }
        }
        Ok(())
    }

    /// Parameter tables of every sweep point, each paired with its axis values.
    pub fn points(&self) -> Vec<(Vec<(String, Value)>, Map<String, Value>)> {
        let mut out = vec![(Vec::new(), self.params.clone())];
        for (axis, values) in &self.sweep {
            out = out
                .into_iter()
                .flat_map(|(coords, params)| {
                    values.iter().map(move |v| {
                        let mut c = coords.clone();
                        c.push((axis.clone(), v.clone()));
                        let mut p = params.clone();
                        p.insert(axis.clone(), v.clone());
                        (c, p)
                    })
                })
                .collect();
        }
        out
    }

    /// SHA-256 of the canonical JSON form (keys sorted) of the effective configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(&serde_json::to_value(self).expect("config serializes")).expect("json");
        Sha256::digest(canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deserializes a kind's parameter table, reporting the offending field.
pub fn parse_params<T: DeserializeOwned>(params: &Map<String, Value>) -> CliResult<T> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| config_err(format!("params: {e}")))
}
