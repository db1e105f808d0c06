//! JSON run configuration.
//!
//! Every field is optional; omitted sections fall back to the built-in
//! calibration. Relative paths resolve against the config file's directory.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "model": { "cylinder": { "combustion": { "soc_deg": 5.0 } } },
//!   "reference": { "temperature": 293.15 },
//!   "property_table": "nasa7.csv",
//!   "fuel_map": "maps/fuel_rate.csv",
//!   "exhaust_map": "maps/exhaust_temperature.csv",
//!   "mean_value_dir": "maps",
//!   "cycles_dir": "cycles",
//!   "grid": { "t0": [293.15], "x_egr": [0.0, 0.2] },
//!   "output_dir": "out"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::maps::{load_maps, synth_maps, EngineMaps};
use crate::mixture::{Composition, ReferenceState};
use crate::model::EngineModel;
use crate::sweep::SweepGrid;
use crate::thermo::PropertyTable;
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceOverrides {
    pub temperature: Option<f64>,
    pub pressure: Option<f64>,
    pub composition: Option<Composition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Partial overrides merged onto the default model.
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub reference: Option<ReferenceOverrides>,
    #[serde(default)]
    pub property_table: Option<PathBuf>,
    #[serde(default)]
    pub fuel_map: Option<PathBuf>,
    #[serde(default)]
    pub exhaust_map: Option<PathBuf>,
    #[serde(default)]
    pub mean_value_dir: Option<PathBuf>,
    #[serde(default)]
    pub cycles_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<SweepGrid>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            model: None,
            reference: None,
            property_table: None,
            fuel_map: None,
            exhaust_map: None,
            mean_value_dir: None,
            cycles_dir: None,
            grid: None,
            output_dir: None,
        }
    }
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// A validated configuration with paths resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: EngineModel,
    pub reference: ReferenceState,
    pub fuel_map: Option<PathBuf>,
    pub exhaust_map: Option<PathBuf>,
    pub mean_value_dir: Option<PathBuf>,
    pub cycles_dir: Option<PathBuf>,
    pub grid: SweepGrid,
    pub output_dir: Option<PathBuf>,
    /// SHA-256 of the config bytes, empty-config hash when none was given.
    pub hash: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok((Self::from_json(&text)?, text))
    }

    /// Builds the model and checks every referenced path and bound.
    pub fn resolve(&self, base_dir: &Path, raw: &str) -> Result<Resolved, Error> {
        let mut value = serde_json::to_value(EngineModel::default())?;
        if let Some(patch) = &self.model {
            merge(&mut value, patch);
        }
        let mut model: EngineModel = serde_json::from_value(value)?;

        let existing = |p: &Option<PathBuf>, what: &str| -> Result<Option<PathBuf>, Error> {
            match p {
                None => Ok(None),
                Some(p) => {
                    let full = base_dir.join(p);
                    if full.exists() {
                        Ok(Some(full))
                    } else {
                        Err(Error::Validation(format!(
                            "{what} '{}' does not exist",
                            full.display()
                        )))
                    }
                }
            }
        };

        if let Some(path) = existing(&self.property_table, "property table")? {
            let file = std::fs::File::open(&path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            model.thermo = PropertyTable::from_csv(file)?;
        }
        model.validate()?;

        let mut reference = ReferenceState::default();
        if let Some(r) = &self.reference {
            if let Some(t) = r.temperature {
                reference.temperature = t;
            }
            if let Some(p) = r.pressure {
                reference.pressure = p;
            }
            if let Some(c) = r.composition {
                reference.composition = c;
            }
        }
        reference.validate()?;

        let fuel_map = existing(&self.fuel_map, "fuel map")?;
        let exhaust_map = existing(&self.exhaust_map, "exhaust map")?;
        if fuel_map.is_some() != exhaust_map.is_some() {
            return Err(Error::Validation(
                "fuel_map and exhaust_map must be given together".into(),
            ));
        }
        let grid = self.grid.clone().unwrap_or_default();
        grid.validate()?;

        let mut h = Sha256::new();
        h.update(raw.as_bytes());
        Ok(Resolved {
            model,
            reference,
            fuel_map,
            exhaust_map,
            mean_value_dir: existing(&self.mean_value_dir, "mean-value map directory")?,
            cycles_dir: existing(&self.cycles_dir, "cycle directory")?,
            grid,
            output_dir: self.output_dir.as_ref().map(|p| base_dir.join(p)),
            hash: hex::encode(h.finalize()),
        })
    }
}

impl Resolved {
    /// Configuration with every default.
    pub fn defaults() -> Self {
        RunConfig::default()
            .resolve(Path::new("."), "")
            .expect("built-in defaults are valid")
    }

    /// Loads the configured maps, or synthesizes them.
    pub fn engine_maps(&self) -> Result<EngineMaps, Error> {
        match (&self.fuel_map, &self.exhaust_map) {
            (Some(f), Some(e)) => Ok(load_maps(f, e)?),
            _ => Ok(synth_maps(
                &self.model.engine,
                &self.model.fuel,
                &self.model.synth,
            )?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = RunConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        let r = cfg.resolve(Path::new("."), "").unwrap();
        assert_eq!(r.model, EngineModel::default());
        assert_eq!(r.grid, SweepGrid::default());
    }

    #[test]
    fn partial_model_override() {
        let cfg = RunConfig::from_json(
            r#"{"schema_version": 1, "model": {"cylinder": {"combustion": {"soc_deg": 2.0}}}}"#,
        )
        .unwrap();
        let r = cfg.resolve(Path::new("."), "").unwrap();
        assert_eq!(r.model.cylinder.combustion.soc_deg, 2.0);
        assert_eq!(
            r.model.cylinder.combustion.duration_deg,
            EngineModel::default().cylinder.combustion.duration_deg
        );
    }

    #[test]
    fn rejections() {
        assert!(RunConfig::from_json(r#"{"schema_version": 2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "bogus": 3}"#).is_err());
        let missing =
            RunConfig::from_json(r#"{"schema_version": 1, "cycles_dir": "/no/such/dir"}"#).unwrap();
        assert!(missing.resolve(Path::new("."), "").is_err());
        let grid = RunConfig::from_json(
            r#"{"schema_version": 1, "grid": {"t0": [400.0], "x_egr": [0.0]}}"#,
        )
        .unwrap();
        assert!(grid.resolve(Path::new("."), "").is_err());
        let bad = RunConfig::from_json(
            r#"{"schema_version": 1, "model": {"cylinder": {"combustion": {"soc_deg": 200.0}}}}"#,
        )
        .unwrap();
        assert!(bad.resolve(Path::new("."), "").is_err());
    }
}
