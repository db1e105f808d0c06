//! The full calibration bundle passed through the pipeline.

use serde::{Deserialize, Serialize};

use crate::cylinder::CylinderModel;
use crate::engine::EngineSpec;
use crate::maps::SynthParams;
use crate::mixture::IntakeState;
use crate::thermo::{FuelThermo, PropertyTable};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineModel {
    pub engine: EngineSpec,
    pub fuel: FuelThermo,
    pub intake: IntakeState,
    pub cylinder: CylinderModel,
    pub synth: SynthParams,
    #[serde(skip)]
    pub thermo: PropertyTable,
}

impl EngineModel {
    pub fn validate(&self) -> Result<(), crate::Error> {
        self.engine.validate().map_err(crate::Error::Validation)?;
        self.fuel.validate()?;
        self.intake.validate()?;
        self.cylinder.validate()?;
        Ok(())
    }
}
